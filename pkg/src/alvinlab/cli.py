"""Command-line interface: gen-data, run, bench-select, report.

Exit codes: 0 success, 2 config error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .baselines import SelectionContext, StrategyId
from .datasets import ShortcutConfig, generate_shortcut_dataset, init_pool, save_embedding_dataset
from .errors import ConfigError, ParseError
from .harness import (
    TAG_DATA,
    TAG_POOL,
    TAG_REF_INIT,
    TAG_REF_TRAIN,
    TAG_SELECT,
    ExperimentConfig,
    config_from_dict,
    run_experiment,
    summarize,
    time_selection,
)
from .model import init_params, train
from .numkit import RngState

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e}") from e


def _cmd_gen_data(args) -> int:
    raw = _load_json(args.config)
    seed = int(raw.pop("seed", 0))
    allowed = set(ShortcutConfig.__dataclass_fields__)
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown gen-data keys: {sorted(unknown)}")
    cfg = ShortcutConfig(**raw)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = generate_shortcut_dataset(cfg, RngState(seed).child(TAG_DATA))
    for split, stem in zip(splits, ("train", "id_test", "ood_test")):
        save_embedding_dataset(split, out / f"{stem}.csv", out / f"{stem}.schema.json")
    print(f"wrote train/id_test/ood_test CSVs to {out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    raw = _load_json(args.config)
    if args.strategy:
        raw["strategy"] = args.strategy
    if args.seeds:
        raw["seeds"] = [int(s) for s in args.seeds.split(",")]
    cfg = config_from_dict(raw)
    results = run_experiment(cfg, out_dir=args.out)
    for seed, rows in results.items():
        final = rows[-1]
        print(
            f"seed {seed}: {len(rows)} rounds, labeled {final.labeled_count}, "
            f"id={final.id_accuracy:.4f} ood={final.ood_accuracy:.4f}"
        )
    return EXIT_OK


def _cmd_bench_select(args) -> int:
    raw = _load_json(args.config)
    cfg = config_from_dict(raw)
    seed = cfg.seeds[0]
    root = RngState(seed)
    from .harness import build_splits

    train_split, _, _ = build_splits(cfg, root.child(TAG_DATA))
    pool = init_pool(train_split, cfg.seed_fraction, root.child(TAG_POOL))
    labeled = [train_split.by_id(i) for i in pool.labeled_ids]
    params0 = init_params(train_split.dimension, train_split.num_classes, root.child(TAG_REF_INIT))
    params, trace = train(params0, labeled, cfg.train, root.child(TAG_REF_TRAIN))

    rows = []
    for idx, strategy in enumerate(StrategyId):
        ctx = SelectionContext(
            params=params,
            dataset=train_split,
            pool=pool,
            trace=trace,
            b=args.n,
            alvin_cfg=cfg.alvin,
            rng=root.child(TAG_SELECT, idx),
        )
        seconds = time_selection(strategy, ctx, n=args.n)
        rows.append((strategy.value, seconds))
        print(f"{strategy.value:>14s}  {seconds:.4f} s")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with out.open("w") as fh:
            fh.write("strategy,seconds\n")
            for name, seconds in rows:
                fh.write(f"{name},{seconds!r}\n")
    return EXIT_OK


def _cmd_report(args) -> int:
    run_dirs = [Path(d) for d in args.inputs]
    for d in run_dirs:
        if not (d / "config.json").exists():
            raise ConfigError(f"{d} is not a run directory (no config.json)")
    summarize(run_dirs, args.out)
    print(f"wrote summary.csv, learning_curve.csv, minority_recall.csv, timing.csv to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alvinlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write synthetic splits as embedding CSVs + schemas")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("run", help="run a multi-round experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", default=None, help="comma-separated seed list override")
    p.add_argument("--strategy", default=None, help="strategy id override")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("bench-select", help="time one selection call per strategy")
    p.add_argument("--config", required=True)
    p.add_argument("--n", type=int, default=100, help="batch size for the timed call")
    p.add_argument("--out", default=None, help="optional CSV output path")
    p.set_defaults(func=_cmd_bench_select)

    p = sub.add_parser("report", help="aggregate run directories into summary CSVs")
    p.add_argument("--in", dest="inputs", required=True, nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ParseError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
