"""
Validate a bag file against the dataset CSV it was drawn from.

    python check_bag_file.py runs/demo/bags.tsv data/train.csv 4
"""
import sys

import bagging
import synth_data
from core_types import ParseError, ValidationError

if len(sys.argv) != 4:
    print("usage: check_bag_file.py BAGS_FILE DATA_CSV CLASS_COUNT")
    sys.exit(2)

bags_path, data_path, class_count = sys.argv[1], sys.argv[2], int(sys.argv[3])
dataset = synth_data.read_csv_dataset(data_path, class_count)

try:
    bags = bagging.read_bags(bags_path, dataset)
except ParseError as e:
    print(f"Parse error: {e}")
    sys.exit(1)
except ValidationError as e:
    print("Bag file is invalid:")
    for v in e.violations:
        print(f"  - {v}")
    sys.exit(1)

print(f"{bags_path}: {len(bags)} bags of M={bags.bag_size}, dataset {bags.source_dataset_id}")
print("-" * 60)
for i, bag in enumerate(bags.bags[:10]):
    props = " ".join(f"{p:.3f}" for p in bag.proportions)
    print(f"Bag {i:<6} Counts: {str(list(bag.counts)):<24} Proportions: {props}")
if len(bags) > 10:
    print(f"... {len(bags) - 10} more")
