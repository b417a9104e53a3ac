"""Trace oracles for safety, tail-forking resistance, reversion discipline,
QC uniqueness, liveness, fault isolation and message complexity.

Every check is a pure function of the trace.  A trace is the list of
records as written to the JSONL file: line 0 is the ``meta`` header, and
witnesses are line indices into that list.  ``pass`` is ``None`` when the
trace is too short to decide (inconclusive).
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

from .codec import DecodeError, decode_hex
from .crypto import make_keys
from .pacemaker import TimingConfig, liveness_threshold
from .types import Proposal
from .validation import Committee


class TraceError(ValueError):
    """The trace file cannot be parsed or lacks a meta header."""


@dataclass
class Verdict:
    property: str
    passed: Optional[bool]
    witness: list = field(default_factory=list)
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"property": self.property, "pass": self.passed, "witness": self.witness, "detail": self.detail}

    @classmethod
    def from_dict(cls, d: dict) -> "Verdict":
        return cls(d["property"], d["pass"], list(d.get("witness", [])), dict(d.get("detail", {})))


def load_trace(path) -> list[dict]:
    records = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as e:
                    raise TraceError(f"line {lineno}: not JSON ({e})") from None
                if not isinstance(rec, dict) or "kind" not in rec:
                    raise TraceError(f"line {lineno}: not a trace record")
                records.append(rec)
    except OSError as e:
        raise TraceError(f"cannot read trace {path}: {e}") from None
    validate_trace(records)
    return records


def validate_trace(trace: list[dict]) -> None:
    if not trace or trace[0].get("kind") != "meta":
        raise TraceError("trace must start with a meta record")
    meta = trace[0]
    for key in ("config", "byzantine", "key_seed", "derived"):
        if key not in meta:
            raise TraceError(f"meta record lacks {key!r}")
    for i, rec in enumerate(trace[1:], 1):
        for key in ("t", "validator", "kind", "view"):
            if key not in rec:
                raise TraceError(f"record {i} lacks {key!r}")


class TraceContext:
    """Run parameters recovered from the meta header."""

    def __init__(self, trace: list[dict]):
        validate_trace(trace)
        meta = trace[0]
        cfg = meta["config"]
        timing = cfg["timing"]
        self.trace = trace
        self.n = cfg["n"]
        self.f = cfg["f"]
        self.byzantine = frozenset(meta["byzantine"])
        self.correct = frozenset(i for i in range(1, self.n + 1) if i not in self.byzantine)
        self.key_seed = meta["key_seed"]
        self.gst = timing["gst"]
        self.big_delta = timing["big_delta"]
        self.delta_min, self.delta_max = timing["delta_range"]
        d = meta["derived"]
        self.timing = TimingConfig(self.big_delta, d["theta_interval"], d["kappa"], d["theta_recovery"],
                                   d["theta_view"])
        self.threshold = liveness_threshold(self.gst, self.f, self.timing, self.big_delta)
        checker = cfg.get("checker", {})
        self.c = checker.get("c", 6)
        self.c_prime = checker.get("c_prime", 8)

    def leader(self, view: int) -> int:
        return (view - 1) % self.n + 1

    @cached_property
    def committee(self) -> Committee:
        keys = make_keys(self.key_seed, self.n)
        return Committee(self.n, self.f, {i: k.public for i, k in keys.items()})

    @cached_property
    def _by_kind(self) -> dict[str, list]:
        index: dict[str, list] = defaultdict(list)
        for i, rec in enumerate(self.trace):
            index[rec["kind"]].append((i, rec))
        return index

    def of_kind(self, *kinds: str) -> list:
        """(line index, record) pairs of the given kinds, in trace order."""
        idx = self._by_kind
        if len(kinds) == 1:
            return idx.get(kinds[0], [])
        return sorted((x for k in kinds for x in idx.get(k, ())), key=lambda x: x[0])

    @cached_property
    def parents(self) -> dict[str, str]:
        return {r["block_hash"]: r["parent"] for _, r in self.of_kind("propose")}

    def is_ancestor(self, ancestor: str, block: str) -> bool:
        parents = self.parents
        seen = 0
        h = block
        while h is not None:
            if h == ancestor:
                return True
            h = parents.get(h)
            seen += 1
            if seen > len(parents) + 1:
                return False
        return False

    @cached_property
    def entries(self) -> dict[int, list[tuple[int, int]]]:
        """Per correct validator, the (view, time) of each view entry, in order."""
        out: dict[int, list] = {v: [] for v in self.correct}
        for _, r in self.of_kind("enter_view"):
            if r["validator"] in self.correct:
                out[r["validator"]].append((r["view"], r["t"]))
        return out

    @cached_property
    def end_view(self) -> int:
        """Highest view reached by every correct validator."""
        return min((e[-1][0] if e else 0) for e in self.entries.values())

    def first_entry(self, view: int) -> Optional[int]:
        ts = [t for e in self.entries.values() for v, t in e if v == view]
        return min(ts) if ts else None

    def all_past(self, view: int) -> Optional[int]:
        """Time by which every correct validator is in a view above ``view``."""
        latest = 0
        for e in self.entries.values():
            t = next((t for v, t in e if v > view), None)
            if t is None:
                return None
            latest = max(latest, t)
        return latest


def check_safety(ctx: TraceContext) -> Verdict:
    by_height: dict[int, tuple[str, int]] = {}
    commits = 0
    for i, r in ctx.of_kind("commit"):
        if r["validator"] not in ctx.correct:
            continue
        commits += 1
        h = r["height"]
        prev = by_height.get(h)
        if prev is None:
            by_height[h] = (r["block_hash"], i)
        elif prev[0] != r["block_hash"]:
            return Verdict("safety", False, [prev[1], i], {"height": h})
    return Verdict("safety", True, [], {"commits": commits, "max_height": max(by_height, default=0)})


def equivocating_views(ctx: TraceContext) -> dict[int, list[int]]:
    """Views whose leader sent two distinct proposals, with their record indices."""
    seen: dict[int, dict[str, int]] = defaultdict(dict)
    for i, r in ctx.of_kind("propose"):
        if r["validator"] == ctx.leader(r["view"]):
            seen[r["view"]].setdefault(r["proposal_id"], i)
    return {v: sorted(p.values()) for v, p in seen.items() if len(p) > 1}


def check_tail_forking(ctx: TraceContext) -> Verdict:
    voters: dict[str, set] = defaultdict(set)
    for _, r in ctx.of_kind("vote"):
        if r["validator"] in ctx.correct:
            voters[r["proposal_id"]].add(r["validator"])
    head = None
    head_height = -1
    for i, r in ctx.of_kind("commit"):
        if r["validator"] in ctx.correct and r["height"] > head_height:
            head, head_height = (r["block_hash"], i), r["height"]
    equivocated = equivocating_views(ctx)
    checked = exempt = 0
    for i, r in ctx.of_kind("propose"):
        if not r["fresh"] or r["validator"] != ctx.leader(r["view"]):
            continue
        if len(voters.get(r["proposal_id"], ())) < ctx.f + 1:
            continue
        if r["view"] in equivocated:
            exempt += 1
            continue
        checked += 1
        if head is None:
            continue
        b = r["block_hash"]
        if not (ctx.is_ancestor(b, head[0]) or ctx.is_ancestor(head[0], b)):
            return Verdict("tail_forking", False, [i, head[1]], {"view": r["view"], "block_hash": b})
    return Verdict("tail_forking", True, [], {"checked": checked, "exempt_equivocations": exempt})


def _valid_proposals_before(ctx: TraceContext, view: int, before: int) -> dict[str, int]:
    leader = ctx.leader(view)
    found: dict[str, int] = {}
    for i, r in ctx.of_kind("propose"):
        if i >= before:
            break
        if r["view"] != view or r["validator"] != leader or r["proposal_id"] in found:
            continue
        try:
            p = decode_hex(r["wire"])
        except (DecodeError, ValueError, KeyError):
            continue
        if type(p) is Proposal and p.view == view and p.sig.signer == leader \
                and p.proposal_id.hex() == r["proposal_id"] and ctx.committee.valid_proposal(p):
            found[r["proposal_id"]] = i
    return found


def check_spec_reversion(ctx: TraceContext) -> Verdict:
    reverts = 0
    proofs: dict[int, list] = {}
    for i, r in ctx.of_kind("revert"):
        if r["validator"] not in ctx.correct:
            continue
        reverts += 1
        view = r["view"]
        found = _valid_proposals_before(ctx, view, i)
        if len(found) < 2:
            return Verdict("spec_reversion", False, [i], {"view": view, "reason": "no equivocation proof"})
        proofs[view] = sorted(found.values())[:2]
    return Verdict("spec_reversion", True, [], {"reverts": reverts,
                                                 "proofs": {str(k): v for k, v in sorted(proofs.items())}})


def check_qc_uniqueness(ctx: TraceContext) -> Verdict:
    """Any two QCs of the same view certify the same proposal.

    Sources: QCs formed by correct validators and the parent QCs carried by
    proposals of correct leaders (which those leaders validated).
    """
    by_view: dict[int, tuple[str, int]] = {}
    for i, r in ctx.of_kind("qc_formed", "propose"):
        if r["validator"] not in ctx.correct:
            continue
        if r["kind"] == "qc_formed":
            view, pid = r["view"], r["proposal_id"]
        else:
            view, pid = r["qc_view"], r["qc_proposal_id"]
            if view == 0:
                continue
        prev = by_view.get(view)
        if prev is None:
            by_view[view] = (pid, i)
        elif prev[0] != pid:
            return Verdict("qc_uniqueness", False, [prev[1], i], {"view": view})
    return Verdict("qc_uniqueness", True, [], {"views_with_qc": len(by_view)})


def check_liveness(ctx: TraceContext) -> Verdict:
    budget = 3 * ctx.f + 3
    last_view = ctx.end_view - budget
    committed: dict[int, set] = {v: set() for v in ctx.correct}
    for _, r in ctx.of_kind("commit"):
        if r["validator"] in ctx.correct:
            committed[r["validator"]].add(r["block_hash"])
    candidates = 0
    for i, r in ctx.of_kind("propose"):
        if r["validator"] not in ctx.correct or r["t"] < ctx.threshold or r["view"] > last_view:
            continue
        candidates += 1
        missing = sorted(v for v in ctx.correct if r["block_hash"] not in committed[v])
        if missing:
            return Verdict("liveness", False, [i], {"view": r["view"], "not_committed_by": missing})
    detail = {"threshold": ctx.threshold, "end_view": ctx.end_view, "checked": candidates}
    if candidates == 0:
        detail["reason"] = "horizon does not reach past the liveness threshold"
        return Verdict("liveness", None, [], detail)
    return Verdict("liveness", True, [], detail)


def check_fault_isolation(ctx: TraceContext) -> Verdict:
    bound = ctx.timing.theta_view + ctx.c * ctx.delta_max
    measured = {}
    for w in range(2, ctx.end_view):
        if ctx.leader(w) in ctx.correct or ctx.leader(w - 1) in ctx.byzantine or ctx.leader(w + 1) in ctx.byzantine:
            continue
        before = ctx.first_entry(w - 1)
        start = ctx.first_entry(w)
        end = ctx.all_past(w)
        if before is None or start is None or end is None or before < ctx.gst:
            continue
        duration = end - start
        measured[w] = duration
        if duration > bound:
            idx = next(i for i, r in ctx.of_kind("enter_view") if r["view"] == w and r["t"] == start)
            return Verdict("fault_isolation", False, [idx], {"view": w, "duration": duration, "bound": bound})
    detail = {"bound": bound, "c": ctx.c, "durations": {str(k): v for k, v in measured.items()}}
    if not measured:
        detail["reason"] = "no Byzantine view between two correct-leader views after GST"
        return Verdict("fault_isolation", None, [], detail)
    return Verdict("fault_isolation", True, [], detail)


def view_message_counts(ctx: TraceContext) -> dict[int, int]:
    """Point-to-point messages sent by correct validators, keyed by message view."""
    counts: dict[int, int] = defaultdict(int)
    for _, r in ctx.of_kind("send"):
        if r["validator"] in ctx.correct and r["view"] is not None:
            counts[r["view"]] += r["to"]
    return dict(counts)


def check_message_complexity(ctx: TraceContext) -> Verdict:
    if ctx.byzantine:
        return Verdict("message_complexity", None, [], {"reason": "only evaluated in all-correct runs"})
    bound = ctx.c_prime * ctx.n
    counts = view_message_counts(ctx)
    checked = []
    for v in range(1, ctx.end_view):
        start = ctx.first_entry(v)
        if start is None or start < ctx.threshold:
            continue
        checked.append(v)
        if counts.get(v, 0) > bound:
            return Verdict("message_complexity", False, [],
                           {"view": v, "messages": counts[v], "bound": bound})
    tcs = sum(1 for _, r in ctx.of_kind("tc_formed") if r["t"] >= ctx.threshold)
    detail = {"bound": bound, "c_prime": ctx.c_prime, "views_checked": len(checked),
              "max_messages": max((counts.get(v, 0) for v in checked), default=0),
              "tcs_after_threshold": tcs}
    if not checked:
        detail["reason"] = "no complete view after the liveness threshold"
        return Verdict("message_complexity", None, [], detail)
    return Verdict("message_complexity", True, [], detail)


CHECKS = (check_safety, check_tail_forking, check_spec_reversion, check_qc_uniqueness,
          check_liveness, check_fault_isolation, check_message_complexity)


def check_trace(trace, ctx: Optional[TraceContext] = None) -> list[Verdict]:
    ctx = ctx or TraceContext(trace)
    return [check(ctx) for check in CHECKS]


def any_failed(verdicts) -> bool:
    return any(v.passed is False for v in verdicts)
