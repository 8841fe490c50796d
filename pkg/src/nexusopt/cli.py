"""Command-line entry point: run, validate, plot, sweep.

Exit codes: 0 success, 1 run error or failed theorem check, 2 config error.
NEXUS_OPT_THREADS caps sweep parallelism.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import load_config
from .errors import ConfigError, NexusError
from .harness import run, sweep, write_outputs
from .svgplot import plot
from .validate import SUITES, report_to_dict, validate_theorems


def _parse_override_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw  # bare string


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides({"seed": args.seed})
    out_dir = args.out or cfg["output_dir"] or cfg["name"]
    try:
        record = run(cfg)
    except NexusError as exc:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump({"error": f"{type(exc).__name__}: {exc}"}, fh, indent=2)
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    write_outputs(record, out_dir)
    print(f"wrote {out_dir}/metrics.csv ({len(record.rows)} rows)")
    return 0


def cmd_validate(args) -> int:
    results = validate_theorems(args.suite, gamma_override=args.gamma)
    report = report_to_dict(results)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text)
    for r in results:
        print(f"[{r.status.upper():4}] {r.check_name}: measured={r.measured:.6g} bound={r.bound:.6g}",
              file=sys.stderr)
    return 0 if report["all_passed"] else 1


def cmd_plot(args) -> int:
    fields = [f.strip() for f in args.fields.split(",") if f.strip()]
    out = plot(args.csvs, fields, args.out)
    print(f"wrote {out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides({"seed": args.seed})
    overrides = {}
    for spec in args.set or []:
        if "=" not in spec:
            raise ConfigError(f"--set expects key=v1,v2,... got {spec!r}")
        key, _, values = spec.partition("=")
        overrides[key.strip()] = [_parse_override_value(v) for v in values.split(",")]
    threads = int(os.environ.get("NEXUS_OPT_THREADS", "1"))
    results = sweep(cfg, args.out, overrides, num_seeds=args.num_seeds, max_workers=max(threads, 1))
    print(f"swept {len(results)} runs into {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nexusopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment config")
    p_run.add_argument("--config", required=True, help="path to the experiment config")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.set_defaults(fn=cmd_run)

    p_val = sub.add_parser("validate", help="run theorem-validation suites")
    p_val.add_argument("--suite", default="all", choices=SUITES)
    p_val.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
    p_val.add_argument("--gamma", type=float, default=None,
                       help="override the inner step size fixture (negative controls)")
    p_val.set_defaults(fn=cmd_validate)

    p_plot = sub.add_parser("plot", help="render metrics CSVs to a single SVG")
    p_plot.add_argument("csvs", nargs="+", help="metrics.csv paths sharing the step column")
    p_plot.add_argument("--fields", required=True, help="comma-separated field names")
    p_plot.add_argument("--out", required=True, help="output SVG path")
    p_plot.set_defaults(fn=cmd_plot)

    p_sweep = sub.add_parser("sweep", help="cartesian sweep over config overrides")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", required=True, help="directory for the per-run subdirectories")
    p_sweep.add_argument("--seed", type=int, default=None, help="override the root seed")
    p_sweep.add_argument("--set", action="append", metavar="KEY=V1,V2",
                         help="override axis (repeatable)")
    p_sweep.add_argument("--num-seeds", type=int, default=0,
                         help="add a seed axis of this many derived seeds")
    p_sweep.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NexusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
