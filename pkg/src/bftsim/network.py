"""Seeded discrete-event simulator for a partially synchronous network.

Time is an integer tick count.  Events are ordered by (time, insertion
sequence), so identical configuration and seed give identical runs.

Delivery model for a message sent at time ``t``:

* to oneself: ``t`` (zero delay);
* at or after GST: ``t + d`` with ``d`` uniform in [delta_min, delta_max];
* before GST: an adversarial delay in [delta_min, gst + big_delta - t],
  chosen by the first matching network rule, uniformly otherwise.

Messages sent by Byzantine validators follow the same model unless a rule
says otherwise; for them rules may also drop messages or ignore GST.
"""
from __future__ import annotations

import heapq
import random
from dataclasses import dataclass
from typing import Optional, Sequence

from .types import Proposal, TimeoutMessage, Vote, message_kind, message_view

_DELIVER = 0
_TIMER = 1


@dataclass(frozen=True)
class NetworkConfig:
    gst: int
    big_delta: int
    delta_min: int
    delta_max: int
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.delta_min <= self.delta_max <= self.big_delta:
            raise ValueError("need 0 <= delta_min <= delta_max <= big_delta")
        if self.gst < 0:
            raise ValueError("gst must be >= 0")


def _as_set(x) -> Optional[frozenset]:
    if x is None:
        return None
    if isinstance(x, (int, str)):
        return frozenset([x])
    return frozenset(x)


def _view_range(x) -> Optional[tuple[int, int]]:
    if x is None:
        return None
    if isinstance(x, int):
        return (x, x)
    lo, hi = x
    return (lo, hi)


@dataclass(frozen=True)
class NetworkRule:
    """Adversarial scheduling rule.

    ``delay`` is ``"max"`` (latest legal delivery), ``"min"``, an integer
    tick count or ``"drop"`` (Byzantine senders only).  For correct senders
    the rule applies only before GST and the result is clamped to the
    legal window.
    """
    senders: Optional[frozenset] = None
    receivers: Optional[frozenset] = None
    kinds: Optional[frozenset] = None
    views: Optional[tuple[int, int]] = None
    delay: object = "max"

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkRule":
        unknown = set(d) - {"from", "to", "kind", "views", "delay"}
        if unknown:
            raise ValueError(f"unknown network rule keys: {sorted(unknown)}")
        delay = d.get("delay", "max")
        if not (delay in ("max", "min", "drop") or (isinstance(delay, int) and delay >= 0)):
            raise ValueError(f"bad network rule delay {delay!r}")
        return cls(_as_set(d.get("from")), _as_set(d.get("to")), _as_set(d.get("kind")),
                   _view_range(d.get("views")), delay)

    def matches(self, sender: int, receiver: int, kind: str, view: Optional[int]) -> bool:
        if self.senders is not None and sender not in self.senders:
            return False
        if self.receivers is not None and receiver not in self.receivers:
            return False
        if self.kinds is not None and kind not in self.kinds:
            return False
        if self.views is not None:
            if view is None or not self.views[0] <= view <= self.views[1]:
                return False
        return True


class Simulator:
    """Runs a set of nodes (honest validators or Byzantine wrappers) to a horizon."""

    def __init__(self, nodes: dict, committee, net: NetworkConfig, correct: Sequence[int],
                 rules: Sequence[NetworkRule] = (), horizon_views: Optional[int] = None,
                 max_ticks: Optional[int] = None, trace_deliveries: bool = False):
        self.nodes = nodes
        self.committee = committee
        self.net = net
        self.correct = frozenset(correct)
        self.rules = tuple(rules)
        self.horizon_views = horizon_views
        self.max_ticks = max_ticks
        self.trace_deliveries = trace_deliveries
        self.rng = random.Random(f"net:{net.seed}")
        self._random = self.rng.random
        self.now = 0
        self._seq = 0
        self._queue: list = []
        self.trace: list[dict] = []
        self._proposed: set = set()
        self._voted: set = set()
        self._timed_out: set = set()
        self._done: set = set()
        self.finished_reason = ""

    # -------------------------------------------------------------- tracing

    def record(self, vid: int, kind: str, view, detail: dict) -> None:
        rec = {"t": self.now, "validator": vid, "kind": kind, "view": view}
        if detail:
            rec.update(detail)
        self.trace.append(rec)
        if kind == "enter_view" and self.horizon_views is not None and vid in self.correct \
                and view >= self.horizon_views:
            self._done.add(vid)

    # -------------------------------------------------------------- scheduling

    def _push(self, time: int, kind: int, target: int, a, b) -> None:
        self._seq += 1
        heapq.heappush(self._queue, (time, self._seq, kind, target, a, b))

    def delay(self, sender: int, receiver: int, kind: str, view: Optional[int]) -> Optional[int]:
        net = self.net
        now = self.now
        byz = sender not in self.correct
        pre_gst = now < net.gst
        if self.rules and (pre_gst or byz):
            for rule in self.rules:
                if rule.matches(sender, receiver, kind, view):
                    return self._rule_delay(rule, byz, pre_gst)
        lo = net.delta_min
        hi = max(lo, net.gst + net.big_delta - now) if pre_gst else net.delta_max
        return lo + int(self._random() * (hi - lo + 1))

    def _rule_delay(self, rule: NetworkRule, byz: bool, pre_gst: bool) -> Optional[int]:
        net = self.net
        lo = net.delta_min
        hi = max(lo, net.gst + net.big_delta - self.now) if pre_gst else net.delta_max
        d = rule.delay
        if d == "drop":
            return None if byz else hi
        if d == "max":
            return hi
        if d == "min":
            return lo
        if byz:
            return d
        return min(max(d, lo), hi)

    def send(self, sender: int, msg, targets, extra_delay: Optional[int] = None) -> None:
        kind = message_kind(msg)
        view = message_view(msg)
        self._note_send(sender, msg, kind, targets)
        remote = 0
        for t in targets:
            if t == sender:
                self._push(self.now, _DELIVER, t, msg, sender)
                continue
            remote += 1
            d = self.delay(sender, t, kind, view)
            if d is None:
                continue
            if extra_delay:
                d += extra_delay
            self._push(self.now + d, _DELIVER, t, msg, sender)
        if remote:
            self.trace.append({"t": self.now, "validator": sender, "kind": "send", "view": view,
                               "msg": kind, "to": remote})

    def _note_send(self, sender: int, msg, kind: str, targets) -> None:
        """Derived records for protocol-level events, as observed on the wire."""
        t = type(msg)
        if t is Proposal:
            key = (sender, msg.proposal_id)
            if key not in self._proposed and sender == self.committee.leader(msg.view):
                self._proposed.add(key)
                b = msg.block
                self.trace.append({
                    "t": self.now, "validator": sender, "kind": "propose", "view": msg.view,
                    "proposal_id": msg.proposal_id.hex(), "block_hash": b.block_hash.hex(),
                    "block_view": b.block_view, "parent": b.qc.block_hash.hex(), "qc_view": b.qc.view,
                    "qc_proposal_id": b.qc.proposal_id.hex(),
                    "fresh": b.block_view == msg.view, "tc": msg.tc is not None,
                    "nec": msg.nec is not None, "wire": msg.encoded.hex(),
                })
        elif t is Vote:
            key = (sender, msg.proposal_id)
            if key not in self._voted and msg.sig.signer == sender:
                self._voted.add(key)
                self.trace.append({"t": self.now, "validator": sender, "kind": "vote", "view": msg.view,
                                   "proposal_id": msg.proposal_id.hex(),
                                   "block_hash": msg.block_hash.hex()})
        elif t is TimeoutMessage:
            key = (sender, msg.view)
            if key not in self._timed_out and msg.sig.signer == sender:
                self._timed_out.add(key)
                self.trace.append({"t": self.now, "validator": sender, "kind": "timeout", "view": msg.view,
                                   "tip_view": msg.tip.view if msg.tip is not None else None,
                                   "qc_view": msg.tip.header.qc.view if msg.tip is not None else msg.qc.view})

    def apply(self, vid: int, actions) -> None:
        all_ids = self.committee.ids
        for a in actions:
            k = a.kind
            if k == "broadcast":
                self.send(vid, a.msg, all_ids, a.delay)
            elif k == "send":
                self.send(vid, a.msg, a.targets, a.delay)
            elif k == "timer":
                self._push(a.deadline, _TIMER, vid, a.timer, a.view)
            elif k == "commit" or k == "spec_commit" or k == "revert":
                b = a.block
                self.trace.append({"t": self.now, "validator": vid, "kind": k, "view": b.block_view,
                                   "height": a.height, "block_hash": b.block_hash.hex()})

    # -------------------------------------------------------------- main loop

    def run(self) -> None:
        for vid in sorted(self.nodes):
            self.apply(vid, self.nodes[vid].start(0))
        queue = self._queue
        nodes = self.nodes
        n_correct = len(self.correct)
        pop = heapq.heappop
        while queue:
            if self.horizon_views is not None and len(self._done) >= n_correct:
                self.finished_reason = "horizon_views"
                return
            time, _, kind, target, a, b = pop(queue)
            if self.max_ticks is not None and time > self.max_ticks:
                self.finished_reason = "max_ticks"
                return
            self.now = time
            node = nodes[target]
            if kind == _DELIVER:
                if self.trace_deliveries:
                    self.trace.append({"t": time, "validator": target, "kind": "deliver",
                                       "view": message_view(a), "msg": message_kind(a), "from": b})
                actions = node.handle(a, b, time)
            else:
                actions = node.on_timer(a, b, time, time)
            if actions:
                self.apply(target, actions)
        self.finished_reason = "queue_empty"
