#!/usr/bin/env python3
"""
llp-dew - command-line entry point.

Trains label-proportion classifiers with dual entropy-based pseudo-label
weights and runs the ablation, beta-sensitivity and oracle experiments.

    python app.py train --config run.cfg --set epochs=20 --out runs/demo
    python app.py ablate --bag-sizes 8,32,128 --seeds 0,1,2,3,4 --out runs/ablation
    python app.py sweep-beta --beta-grid 0.1,1,5 --out runs/beta
    python app.py oracle-check --cases 10000
"""

import argparse
import datetime as dt
import json
import logging
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple

import bagging
import metrics
import model
import oracle_utils
import synth_data
import trainer
from config import (
    ABLATION_MODES, ABLATION_TABLE_FILE, APP_NAME, BAGS_FILE, BETA_GRID_FILE,
    CHECKPOINT_FILE, DEFAULT_ABLATION_BAG_SIZES, DEFAULT_BETA_GRID, DEFAULT_ORACLE_CASES,
    DEFAULT_SEED, DEFAULT_SEEDS, LOG_LEVEL, METRICS_FILE, MODE_CHOICES, OUTPUT_DIR,
    RUN_LOG, RUN_TIMEZONE, SUMMARY_FILE, load_train_config, mode_of, parse_set_args,
    render_config, with_mode,
)
from core_types import (
    ConfigError, OutputExistsError, ParseError, TrainConfig, ValidationError,
)

logger = logging.getLogger(APP_NAME)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2


# -------------------- Helper Functions --------------------
def log_event(run: str, action: str, detail: str = "") -> None:
    """Append an event to the run log."""
    ts = dt.datetime.now(RUN_TIMEZONE).isoformat()
    RUN_LOG.parent.mkdir(parents=True, exist_ok=True)
    with RUN_LOG.open("a", encoding="utf-8") as f:
        f.write(f"{ts}\t{run}\t{action}\t{detail}\n")


def prepare_output_dir(path, overwrite: bool) -> Path:
    """Create an empty results directory; refuse to clobber one unless asked."""
    path = Path(path)
    if path.exists() and any(path.iterdir()):
        if not overwrite:
            raise OutputExistsError(f"{path} already holds results; pass --overwrite to replace them")
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _parse_list(text: str, convert, flag: str):
    try:
        return [convert(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError({flag: f"expected a comma-separated list, got {text!r}"})


def parse_int_list(text: str, flag: str = "list") -> List[int]:
    return _parse_list(text, int, flag)


def parse_float_list(text: str, flag: str = "list") -> List[float]:
    return _parse_list(text, float, flag)


def base_config(args) -> TrainConfig:
    """Config file + --set overrides (+ --deterministic)."""
    config = load_train_config(args.config, parse_set_args(args.set))
    if args.deterministic:
        config = replace(config, workers=1)
    return config


def load_datasets(config: TrainConfig):
    """Training and (optional) test datasets described by the config."""
    if config.data_path:
        train = synth_data.read_csv_dataset(config.data_path, config.class_count)
        test = None
        if config.test_data_path:
            test = synth_data.read_csv_dataset(config.test_data_path, config.class_count, split_tag="test")
        return train, test
    return synth_data.generate_blobs(synth_data.BlobSpec.from_config(config))


def run_experiment(config: TrainConfig, mode: str, out_dir: Path, bags_path=None):
    """Train one configuration, writing metrics, checkpoint and bags into out_dir."""
    train_set, test_set = load_datasets(config)
    if bags_path:
        bags = bagging.read_bags(bags_path, train_set)
    else:
        bags = bagging.generate_bags(train_set, config.bag_size, config.seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    bagging.write_bags(bags, out_dir / BAGS_FILE)
    (out_dir / "config.cfg").write_text(render_config(config), encoding="utf-8")

    metrics_path = out_dir / METRICS_FILE
    if metrics_path.exists():
        metrics_path.unlink()
    result = trainer.train(train_set, bags, config, test_dataset=test_set,
                           on_epoch=metrics.MetricsWriter(metrics_path))
    model.save_params(result.params, out_dir / CHECKPOINT_FILE)
    return result, metrics.summary_row(mode, config.bag_size, config.seed, result.history)


# -------------------- Experiment plans --------------------
@dataclass
class ExperimentPlan:
    cells: List[Tuple[str, int, int]]
    base: TrainConfig
    out_dir: Path
    failures: List[str] = field(default_factory=list)

    def __post_init__(self):
        bad = sorted({mode for mode, _, _ in self.cells if mode not in MODE_CHOICES})
        if bad:
            raise ConfigError({"modes": f"unknown mode(s) {bad}; choose from {MODE_CHOICES}"})

    def cell_config(self, mode, bag_size, seed) -> TrainConfig:
        return with_mode(replace(self.base, bag_size=bag_size, seed=seed), mode)

    def cell_dir(self, mode, bag_size, seed) -> Path:
        return self.out_dir / "cells" / f"{mode}-M{bag_size}-s{seed}"


def _run_cell(plan: ExperimentPlan, cell):
    mode, bag_size, seed = cell
    try:
        config = plan.cell_config(mode, bag_size, seed)
        _, row = run_experiment(config, mode, plan.cell_dir(*cell))
        return row
    except Exception as e:
        logger.warning(f"Cell {mode} M={bag_size} seed={seed} failed: {e}")
        plan.failures.append(f"{mode}\t{bag_size}\t{seed}\t{e}")
        return None


def run_plan(plan: ExperimentPlan, jobs: int):
    """Run every cell (optionally concurrently); rows come back in plan order."""
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(lambda c: _run_cell(plan, c), plan.cells))
    else:
        rows = [_run_cell(plan, c) for c in plan.cells]
    if plan.failures:
        (plan.out_dir / "failed_cells.tsv").write_text("\n".join(plan.failures) + "\n", encoding="utf-8")
    return rows


def ablation_table(rows):
    """Mean and std of final test accuracy per (mode, bag size)."""
    cells = {}
    for row in rows:
        if row is None:
            continue
        acc = float(row["test_accuracy"]) if row["test_accuracy"] != "" else None
        cells.setdefault((row["mode"], row["bag_size"]), []).append(acc)
    table = []
    for (mode, bag_size), accs in cells.items():
        mean, std = metrics.mean_std(accs)
        table.append({
            "mode": mode, "bag_size": bag_size, "runs": sum(a is not None for a in accs),
            "test_accuracy_mean": repr(mean), "test_accuracy_std": repr(std),
        })
    return table


# -------------------- Commands --------------------
def cmd_train(args) -> int:
    """Train one model end to end."""
    config = base_config(args)
    if args.mode:
        config = with_mode(config, args.mode)
    out = prepare_output_dir(args.out, args.overwrite)
    mode = args.mode or mode_of(config)
    run = f"train:{out.name}"
    log_event(run, "start", f"mode={mode} M={config.bag_size} seed={config.seed}")
    result, row = run_experiment(config, mode, out, bags_path=args.bags)
    metrics.write_summary(out / SUMMARY_FILE, [row])
    log_event(run, "done", f"epochs={len(result.history)} test_accuracy={row['test_accuracy']}")
    print(f"Finished {mode} run: test accuracy {row['test_accuracy'] or 'n/a'} ({out})")
    return EXIT_OK


def cmd_ablate(args) -> int:
    """Weight-mode x bag-size x seed grid."""
    base = base_config(args)
    modes = args.modes.split(",") if args.modes else ABLATION_MODES
    cells = [(mode, m, s) for mode in modes for m in parse_int_list(args.bag_sizes, "--bag-sizes")
             for s in parse_int_list(args.seeds, "--seeds")]
    plan = ExperimentPlan(cells, base, Path(args.out))
    # every cell config must validate before anything is written
    for mode, m, s in cells:
        plan.cell_config(mode, m, s)
    prepare_output_dir(plan.out_dir, args.overwrite)
    run = f"ablate:{plan.out_dir.name}"
    log_event(run, "start", f"{len(cells)} cells")
    rows = run_plan(plan, 1 if args.deterministic else args.jobs)
    done = [r for r in rows if r is not None]
    metrics.write_summary(plan.out_dir / SUMMARY_FILE, done)
    table = ablation_table(done)
    metrics.write_csv(plan.out_dir / ABLATION_TABLE_FILE,
                      ["mode", "bag_size", "runs", "test_accuracy_mean", "test_accuracy_std"], table)
    for t in table:
        print(f"{t['mode']:<14} M={t['bag_size']:<4} acc={float(t['test_accuracy_mean']):.4f}"
              f" ± {float(t['test_accuracy_std']):.4f} ({t['runs']} runs)")
    log_event(run, "done" if not plan.failures else "failed", f"{len(plan.failures)} failed cells")
    return EXIT_OK if not plan.failures else EXIT_FAILURE


def cmd_sweep_beta(args) -> int:
    """One DEW run per (beta_b, beta_i) pair."""
    base = with_mode(base_config(args), "dew")
    grid = parse_float_list(args.beta_grid, "--beta-grid")
    betas_b = parse_float_list(args.beta_b, "--beta-b") if args.beta_b else grid
    betas_i = parse_float_list(args.beta_i, "--beta-i") if args.beta_i else grid
    pairs = [(bb, bi) for bb in betas_b for bi in betas_i]
    configs = [replace(base, beta_b=bb, beta_i=bi).check() for bb, bi in pairs]
    out = prepare_output_dir(args.out, args.overwrite)
    run = f"sweep-beta:{out.name}"
    log_event(run, "start", f"{len(pairs)} pairs")

    grid_rows, summary_rows, failures = [], [], 0
    for (bb, bi), config in zip(pairs, configs):
        try:
            result, row = run_experiment(config, "dew", out / "cells" / f"beta_b{bb!r}-beta_i{bi!r}")
        except Exception as e:
            failures += 1
            logger.warning(f"beta_b={bb} beta_i={bi} failed: {e}")
            continue
        last = result.history[-1] if result.history else None
        summary_rows.append(row)
        grid_rows.append({
            "beta_b": repr(bb), "beta_i": repr(bi),
            "test_accuracy": row["test_accuracy"],
            "mean_weight": repr(last.mean_weight) if last else "",
            "mean_bag_weight": repr(last.mean_bag_weight) if last else "",
            "mean_instance_weight": repr(last.mean_instance_weight) if last else "",
        })
        print(f"beta_b={bb:<6} beta_i={bi:<6} acc={row['test_accuracy'] or 'n/a'} w={grid_rows[-1]['mean_weight']}")
    metrics.write_csv(out / BETA_GRID_FILE, ["beta_b", "beta_i", "test_accuracy", "mean_weight",
                                             "mean_bag_weight", "mean_instance_weight"], grid_rows)
    metrics.write_summary(out / SUMMARY_FILE, summary_rows)
    log_event(run, "done" if not failures else "failed", f"{failures} failed pairs")
    return EXIT_OK if not failures else EXIT_FAILURE


def cmd_oracle_check(args) -> int:
    """Run the DEW and gradient oracle suites."""
    cases = args.cases
    grad_cases = args.grad_cases if args.grad_cases is not None else min(cases, 100)
    seed = DEFAULT_SEED if args.seed is None else args.seed
    results = [
        oracle_utils.dew_oracle_suite(cases, seed),
        oracle_utils.gradient_oracle_suite(grad_cases, seed),
    ]
    ok = True
    for r in results:
        status = "ok" if r.passed else "FAILED"
        print(f"{r.name:<9} cases={r.cases:<6} worst error={r.worst_error:.3e} "
              f"(tolerance {r.tolerance:.0e}) {status}")
        if not r.passed:
            ok = False
            print(json.dumps({"suite": r.name, "seed": seed, **r.failing_case}))
    log_event("oracle-check", "done" if ok else "failed", f"seed={seed} cases={cases}")
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_gen_data(args) -> int:
    """Write blob train/test CSVs and a bag file for the configured bag size."""
    config = base_config(args)
    out = prepare_output_dir(args.out, args.overwrite)
    train_set, test_set = synth_data.generate_blobs(synth_data.BlobSpec.from_config(config))
    synth_data.write_csv_dataset(train_set, out / "train.csv")
    if test_set is not None:
        synth_data.write_csv_dataset(test_set, out / "test.csv")
    bags = bagging.generate_bags(train_set, config.bag_size, config.seed)
    bagging.write_bags(bags, out / BAGS_FILE)
    print(f"Wrote {len(train_set)} train rows, {len(bags)} bags of M={config.bag_size} to {out}")
    return EXIT_OK


def cmd_export_features(args) -> int:
    """Penultimate-layer features of a checkpoint on a dataset CSV."""
    params = model.load_params(args.checkpoint)
    dataset = synth_data.read_csv_dataset(args.data, args.class_count or params.class_count)
    out = Path(args.out)
    target = out if out.suffix == ".csv" else out / "features.csv"
    if target.exists() and not args.overwrite:
        raise OutputExistsError(f"{target} exists; pass --overwrite to replace it")
    metrics.export_features(params, dataset, target)
    print(f"Wrote {len(dataset)} feature rows to {target}")
    return EXIT_OK


# -------------------- Argument parsing --------------------
def _common(p, with_config=True):
    if with_config:
        p.add_argument("--config", type=Path, help="flat key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="K=V",
                       help="override a config key (repeatable)")
    p.add_argument("--out", default=str(OUTPUT_DIR), help="output directory")
    p.add_argument("--overwrite", action="store_true", help="replace existing results")
    p.add_argument("--deterministic", action="store_true", help="single worker, bit-exact results")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=APP_NAME, description=__doc__.split("\n")[1].strip())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model")
    _common(p)
    p.add_argument("--mode", choices=MODE_CHOICES)
    p.add_argument("--bags", type=Path, help="use this bag file instead of generating bags")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="weight ablation grid")
    _common(p)
    p.add_argument("--bag-sizes", default=",".join(map(str, DEFAULT_ABLATION_BAG_SIZES)))
    p.add_argument("--seeds", default=",".join(map(str, DEFAULT_SEEDS)))
    p.add_argument("--modes", help=f"comma-separated subset of {MODE_CHOICES}")
    p.add_argument("--jobs", type=int, default=1, help="grid cells to run concurrently")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep-beta", help="beta_b x beta_i sensitivity grid")
    _common(p)
    p.add_argument("--beta-grid", default=",".join(map(str, DEFAULT_BETA_GRID)),
                   help="values used for both axes")
    p.add_argument("--beta-b", help="values for beta_b (overrides --beta-grid)")
    p.add_argument("--beta-i", help="values for beta_i (overrides --beta-grid)")
    p.set_defaults(func=cmd_sweep_beta)

    p = sub.add_parser("oracle-check", help="run the brute-force oracle suites")
    p.add_argument("--seed", type=int)
    p.add_argument("--cases", type=int, default=DEFAULT_ORACLE_CASES)
    p.add_argument("--grad-cases", type=int, help="gradient cases (default: min(cases, 100))")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("gen-data", help="write synthetic blobs and bags")
    _common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("export-features", help="export penultimate-layer features")
    _common(p, with_config=False)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--class-count", type=int, default=0)
    p.set_defaults(func=cmd_export_features)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValidationError, ParseError, OutputExistsError, FileNotFoundError) as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        log_event(args.command, "rejected", str(e))
        return EXIT_INVALID
    except Exception as e:
        logger.exception(f"{args.command} failed")
        log_event(args.command, "failed", str(e))
        return EXIT_FAILURE


# -------------------- Run Application --------------------
if __name__ == "__main__":
    sys.exit(main())
