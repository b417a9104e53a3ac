"""Running one config over many seeds and aggregating the verdicts."""
from __future__ import annotations

from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from statistics import median
from typing import Iterable

from . import scenario
from .checker import TraceContext, check_trace
from .config import ScenarioConfig
from .metrics import _percentiles, block_latencies


def parse_seeds(text: str) -> list[int]:
    """``"7"``, ``"0:1000"`` (half-open), ``"0-999"`` (inclusive) or ``"1,5,9"``."""
    text = text.strip()
    try:
        if "," in text:
            return [int(x) for x in text.split(",") if x.strip()]
        if ":" in text:
            a, b = text.split(":", 1)
            return list(range(int(a), int(b)))
        if "-" in text:
            a, b = text.split("-", 1)
            return list(range(int(a), int(b) + 1))
        return [int(text)]
    except ValueError:
        raise ValueError(f"cannot parse seeds {text!r}; use N, A:B, A-B or a comma list") from None


def run_one(cfg: ScenarioConfig, seed: int) -> dict:
    """Simulate and check one seed; returns verdicts plus headline numbers."""
    res = scenario.run(cfg, seed)
    ctx = TraceContext(res.trace)
    verdicts = check_trace(res.trace, ctx)
    lat = block_latencies(ctx)
    unit = ctx.delta_max or 1
    spec = [e["spec_commit"] / unit for e in lat.values() if "spec_commit" in e]
    com = [e["commit"] / unit for e in lat.values() if "commit" in e]
    return {
        "seed": seed,
        "verdicts": [v.to_dict() for v in verdicts],
        "spec_latency": median(spec) if spec else None,
        "commit_latency": median(com) if com else None,
        "tc_count": len({r["view"] for _, r in ctx.of_kind("tc_formed")}),
        "reverts": sum(1 for _, r in ctx.of_kind("revert") if r["validator"] in ctx.correct),
    }


def _run_star(args):
    return run_one(*args)


def sweep(cfg: ScenarioConfig, seeds: Iterable[int], jobs: int = 1) -> dict:
    seeds = list(seeds)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_star, [(cfg, s) for s in seeds], chunksize=max(1, len(seeds) // (4 * jobs))))
    else:
        results = [run_one(cfg, s) for s in seeds]
    return aggregate(cfg, results)


def aggregate(cfg: ScenarioConfig, results: list[dict]) -> dict:
    table: dict[str, Counter] = {}
    failures = []
    for r in results:
        for v in r["verdicts"]:
            c = table.setdefault(v["property"], Counter())
            key = {True: "pass", False: "fail", None: "inconclusive"}[v["pass"]]
            c[key] += 1
            if v["pass"] is False:
                failures.append({"seed": r["seed"], "property": v["property"], "witness": v["witness"],
                                 "detail": v["detail"]})
    spec = [r["spec_latency"] for r in results if r["spec_latency"] is not None]
    com = [r["commit_latency"] for r in results if r["commit_latency"] is not None]
    return {
        "config": cfg.name,
        "runs": len(results),
        "properties": {k: dict(sorted(c.items())) for k, c in sorted(table.items())},
        "failures": failures,
        "median_spec_latency_delta": _percentiles(spec),
        "median_commit_latency_delta": _percentiles(com),
        "total_tcs": sum(r["tc_count"] for r in results),
        "total_reverts": sum(r["reverts"] for r in results),
    }


def format_table(summary: dict) -> str:
    lines = [f"{summary['config']}: {summary['runs']} runs"]
    for prop, c in summary["properties"].items():
        lines.append(f"  {prop:<20} pass={c.get('pass', 0):<6} fail={c.get('fail', 0):<6} "
                     f"inconclusive={c.get('inconclusive', 0)}")
    s = summary["median_spec_latency_delta"]
    if s.get("count"):
        lines.append(f"  spec-commit latency (delta units, per-run median): p50={s['p50']} max={s['max']}")
    for f in summary["failures"][:20]:
        lines.append(f"  FAIL seed={f['seed']} {f['property']} witness={f['witness']} {f['detail']}")
    return "\n".join(lines)
