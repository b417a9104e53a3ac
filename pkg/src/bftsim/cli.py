"""Command line: ``bftsim run | sweep | check``.

Exit status: 0 when every verdict passed or was inconclusive, 1 when any
property failed, 2 for configuration or input errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import scenario
from .checker import TraceError, any_failed, check_trace, load_trace
from .config import ConfigError, load_any
from .metrics import metrics_report
from .sweep import format_table, parse_seeds, sweep

OUT_DIR_ENV = "BFTSIM_OUT_DIR"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _out_dir(args) -> Path:
    d = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or "bftsim-out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load(args):
    cfg = load_any(args.config)
    if args.disable_backup_qc:
        cfg = cfg.with_overrides(backup_qc=False)
    return cfg


def _print_verdicts(verdicts, stream=None) -> None:
    stream = stream or sys.stdout
    for v in verdicts:
        state = {True: "PASS", False: "FAIL", None: "INCONCLUSIVE"}[v.passed]
        extra = f" witness={v.witness}" if v.witness else ""
        print(f"{state:<13} {v.property}{extra}", file=stream)


def _derived(cfg) -> dict:
    return scenario.meta_record(cfg, cfg.seed)["derived"]


def cmd_run(args) -> int:
    cfg = _load(args)
    if args.print_derived:
        print(json.dumps(_derived(cfg), indent=2, sort_keys=True))
        return EXIT_OK
    seed = cfg.seed if args.seed is None else args.seed
    res = scenario.run(cfg, seed)
    trace = res.trace
    verdicts = check_trace(trace)
    metrics = metrics_report(trace)
    metrics["finished_reason"] = res.finished_reason
    paths = scenario.output_paths(cfg, seed, _out_dir(args))
    scenario.write_trace(paths["trace"], trace)
    scenario.write_json(paths["metrics"], metrics)
    scenario.write_json(paths["verdicts"], [v.to_dict() for v in verdicts])
    print(f"{cfg.name} seed={seed}: {len(trace) - 1} records, end t={res.end_time} "
          f"({res.finished_reason}), TCs={metrics['tc_count']}")
    _print_verdicts(verdicts)
    print(f"trace: {paths['trace']}")
    return EXIT_FAIL if any_failed(verdicts) else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if args.print_derived:
        print(json.dumps(_derived(cfg), indent=2, sort_keys=True))
        return EXIT_OK
    try:
        seeds = parse_seeds(args.seeds)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    summary = sweep(cfg, seeds, jobs=args.jobs)
    out = _out_dir(args) / f"{cfg.name}.sweep.json"
    scenario.write_json(out, summary)
    print(format_table(summary))
    print(f"summary: {out}")
    return EXIT_FAIL if summary["failures"] else EXIT_OK


def cmd_check(args) -> int:
    try:
        trace = load_trace(args.trace)
        verdicts = check_trace(trace)
    except (TraceError, KeyError, TypeError) as e:
        print(f"error: malformed trace: {e}", file=sys.stderr)
        return EXIT_CONFIG
    doc = [v.to_dict() for v in verdicts]
    if args.out:
        scenario.write_json(args.out, doc)
    if args.json:
        print(json.dumps(doc, indent=2))
    else:
        _print_verdicts(verdicts)
    return EXIT_FAIL if any_failed(verdicts) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bftsim", description="Seeded BFT consensus simulator and trace checker.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True,
                        help="scenario JSON file or the name of a bundled scenario")
        sp.add_argument("--out-dir", help=f"output directory (default: ${OUT_DIR_ENV} or ./bftsim-out)")
        sp.add_argument("--print-derived", action="store_true",
                        help="print derived timing constants and exit")
        sp.add_argument("--disable-backup-qc", action="store_true",
                        help="baseline without backup QCs (for comparison only)")

    r = sub.add_parser("run", help="run one simulation, write trace/metrics/verdicts")
    common(r)
    r.add_argument("--seed", type=int, help="network/adversary seed (default: the config's seed)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run many seeds and aggregate verdicts")
    common(s)
    s.add_argument("--seeds", default="0:100", help="N, A:B (half-open), A-B (inclusive) or a,b,c")
    s.add_argument("--jobs", type=int, default=1, help="worker processes")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("check", help="re-run the checkers on a stored trace")
    c.add_argument("trace", help="trace JSONL file")
    c.add_argument("--out", help="write verdict JSON here")
    c.add_argument("--json", action="store_true", help="print verdicts as JSON")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
