"""Summary statistics derived from a trace."""
from __future__ import annotations

from collections import defaultdict
from statistics import median

from .checker import TraceContext, view_message_counts


def _percentiles(xs: list) -> dict:
    if not xs:
        return {"count": 0}
    s = sorted(xs)

    def pct(p):
        return s[min(len(s) - 1, int(p * (len(s) - 1) + 0.5))]

    return {"count": len(s), "min": s[0], "p50": median(s), "p90": pct(0.9), "max": s[-1]}


def block_latencies(ctx: TraceContext) -> dict[str, dict[str, int]]:
    """For each correct-leader fresh proposal: ticks until every correct
    validator spec-committed / committed it (absent if some never did)."""
    proposed = {}
    for _, r in ctx.of_kind("propose"):
        if r["fresh"] and r["validator"] in ctx.correct and r["block_hash"] not in proposed:
            proposed[r["block_hash"]] = r["t"]
    first: dict[str, dict[str, dict[int, int]]] = {"spec_commit": defaultdict(dict), "commit": defaultdict(dict)}
    for _, r in ctx.of_kind("spec_commit", "commit"):
        if r["validator"] in ctx.correct:
            first[r["kind"]][r["block_hash"]].setdefault(r["validator"], r["t"])
    out: dict[str, dict[str, int]] = {}
    k = len(ctx.correct)
    for bh, t0 in proposed.items():
        entry = {"proposed_at": t0}
        for kind, table in first.items():
            times = table.get(bh, {})
            if len(times) == k:
                entry[kind] = max(times.values()) - t0
        out[bh] = entry
    return out


def metrics_report(trace: list[dict]) -> dict:
    ctx = TraceContext(trace)
    per_validator = {v: {"commits": 0, "spec_commits": 0, "reverts": 0, "max_view": 0}
                     for v in range(1, ctx.n + 1)}
    field = {"commit": "commits", "spec_commit": "spec_commits", "revert": "reverts"}
    tcs, necs = set(), set()
    for _, r in ctx.of_kind("commit", "spec_commit", "revert", "enter_view", "tc_formed", "nec_formed"):
        k = r["kind"]
        v = r["validator"]
        if k in field:
            per_validator[v][field[k]] += 1
        elif k == "enter_view":
            per_validator[v]["max_view"] = max(per_validator[v]["max_view"], r["view"])
        elif k == "tc_formed":
            tcs.add(r["view"])
        else:
            necs.add(r["view"])

    durations = {}
    for w in range(1, ctx.end_view):
        a, b = ctx.first_entry(w), ctx.first_entry(w + 1)
        if a is not None and b is not None:
            durations[w] = b - a

    lat = block_latencies(ctx)
    spec = [e["spec_commit"] for e in lat.values() if "spec_commit" in e]
    com = [e["commit"] for e in lat.values() if "commit" in e]
    unit = ctx.delta_max if ctx.delta_max > 0 else 1
    counts = view_message_counts(ctx)
    return {
        "n": ctx.n,
        "f": ctx.f,
        "byzantine": sorted(ctx.byzantine),
        "end_time": trace[-1]["t"] if len(trace) > 1 else 0,
        "end_view": ctx.end_view,
        "per_validator": {str(k): v for k, v in per_validator.items()},
        "tc_count": len(tcs),
        "tc_views": sorted(tcs),
        "nec_count": len(necs),
        "nec_views": sorted(necs),
        "view_durations": {str(k): v for k, v in durations.items()},
        "view_messages": {str(k): v for k, v in sorted(counts.items())},
        "latency_unit_ticks": unit,
        "spec_commit_latency_ticks": _percentiles(spec),
        "commit_latency_ticks": _percentiles(com),
        "spec_commit_latency_delta": _percentiles([x / unit for x in spec]),
        "commit_latency_delta": _percentiles([x / unit for x in com]),
    }
