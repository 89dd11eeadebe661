"""Command-line entry point.

Subcommands:
    run     execute (or resume) an experiment from a TOML config
    synth   emit a synthetic embedding dataset in the MSCE format
    eval    re-score the saved checkpoints of a finished run
    report  merge finished runs into a method comparison table

Exit codes: 0 success, 1 usage/configuration error, 2 data or format error.
"""

import argparse
import json
from pathlib import Path
import sys

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .data import FormatError, make_blobs, write_embeddings
from .orchestrator import (ResumeError, config_from_tree, rescore,
                           run_experiment)
from .replay import InvalidStateError

USAGE_ERROR = 1
DATA_ERROR = 2


def _apply_overrides(tree, overrides):
    """Apply `a.b.c=value` overrides onto the parsed config tree; values
    are parsed as TOML scalars so types match the schema."""
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not of the form key=value")
        dotted, raw = item.split("=", 1)
        keys = dotted.strip().split(".")
        node = tree
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ValueError(f"override {dotted!r} traverses a scalar")
        try:
            value = tomllib.loads(f"v = {raw}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw  # bare strings are allowed
        node[keys[-1]] = value
    return tree


def _cmd_run(args):
    path = Path(args.config)
    if not path.exists():
        print(f"error: config file not found: {path}", file=sys.stderr)
        return USAGE_ERROR
    try:
        tree = tomllib.loads(path.read_text())
        tree = _apply_overrides(tree, args.override)
        cfg = config_from_tree(tree)
    except (tomllib.TOMLDecodeError, ValueError, TypeError, KeyError) as err:
        print(f"error: invalid config {path}: {err}", file=sys.stderr)
        return USAGE_ERROR
    try:
        report = run_experiment(cfg)
    except (FormatError, ResumeError, InvalidStateError) as err:
        print(f"error: {err}", file=sys.stderr)
        return DATA_ERROR
    final = report.steps[-1]
    print(f"method={cfg.method} steps={cfg.n_tasks} "
          f"accuracy={final.accuracy:.4f} forgetting={final.forgetting:.4f}")
    print(f"metrics written to {Path(cfg.out_dir) / 'metrics.csv'}")
    return 0


def _cmd_synth(args):
    ds = make_blobs(args.classes, args.per_class, args.dim, args.views,
                    args.center_scale, args.within_std, args.seed)
    write_embeddings(ds, args.out)
    print(f"wrote {ds.n_samples} samples x {ds.n_views} views x "
          f"{ds.dim} dims ({args.classes} classes) to {args.out}")
    return 0


def _cmd_eval(args):
    try:
        row = rescore(args.run_dir)
    except (FormatError, ResumeError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return DATA_ERROR
    print(f"step={row.step} accuracy={row.accuracy:.4f} "
          f"forgetting={row.forgetting:.4f} n_samples={row.n_samples}")
    for t, acc in enumerate(row.per_task_acc, start=1):
        print(f"  task {t}: accuracy={acc:.4f}")
    return 0


def _cmd_report(args):
    rows = []
    for run_dir in args.run_dirs:
        path = Path(run_dir) / "report.json"
        if not path.exists():
            print(f"error: no report.json in {run_dir}", file=sys.stderr)
            return DATA_ERROR
        doc = json.loads(path.read_text())
        final = doc["steps"][-1]
        rows.append((doc["config"]["method"], final["accuracy"],
                     final["forgetting"], run_dir))
    lines = [f"{'method':<14}{'accuracy':>10}{'forgetting':>12}  run"]
    for method, acc, forget, run_dir in rows:
        lines.append(f"{method:<14}{acc:>10.4f}{forget:>12.4f}  {run_dir}")
    text = "\n".join(lines)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="incd",
        description="Multi-step incremental novel-class discovery over "
                    "frozen embeddings.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run or resume an experiment")
    p_run.add_argument("--config", required=True, help="TOML config path")
    p_run.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="override a config key, e.g. experiment.seed=3")
    p_run.set_defaults(func=_cmd_run)

    p_synth = sub.add_parser("synth", help="write a synthetic MSCE dataset")
    p_synth.add_argument("--classes", type=int, required=True)
    p_synth.add_argument("--per-class", type=int, required=True)
    p_synth.add_argument("--dim", type=int, required=True)
    p_synth.add_argument("--views", type=int, default=2)
    p_synth.add_argument("--center-scale", type=float, default=8.0)
    p_synth.add_argument("--within-std", type=float, default=1.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=_cmd_synth)

    p_eval = sub.add_parser("eval", help="re-score a run's saved checkpoints")
    p_eval.add_argument("--run-dir", required=True)
    p_eval.set_defaults(func=_cmd_eval)

    p_report = sub.add_parser("report", help="merge runs into a comparison table")
    p_report.add_argument("run_dirs", nargs="+", metavar="RUN_DIR")
    p_report.add_argument("--out", help="also write the table to this path")
    p_report.set_defaults(func=_cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage problems; fold the
        # latter into our usage-error code.
        return 0 if exc.code == 0 else USAGE_ERROR
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
