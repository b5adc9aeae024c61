"""
List the runs under an output directory with their final accuracy.

    python list_runs.py [runs]
"""
import sys
from pathlib import Path

import metrics
from config import OUTPUT_DIR, SUMMARY_FILE

root = Path(sys.argv[1]) if len(sys.argv) > 1 else OUTPUT_DIR

print(f"Runs under {root}:")
print("-" * 72)
for summary in sorted(root.rglob(SUMMARY_FILE)):
    for row in metrics.read_summary(summary):
        acc = row["test_accuracy"] or "n/a"
        if acc != "n/a":
            acc = f"{float(acc):.4f}"
        print(f"Run: {str(summary.parent.relative_to(root)):<28} Mode: {row['mode']:<14} "
              f"M: {row['bag_size']:<5} Seed: {row['seed']:<4} Acc: {acc}")
