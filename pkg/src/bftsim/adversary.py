"""Byzantine behaviour as filters around an honest validator core.

A ``ByzantineNode`` runs the normal state machine and passes every incoming
message and every outgoing action through its strategy.  Strategies can
only sign with the node's own key, so they cannot forge messages of correct
validators.  Broadcasts are expanded to explicit target lists before the
strategy sees them.
"""
from __future__ import annotations

import random
from typing import Optional

from .config import ConfigError
from .crypto import sign
from .types import (
    GENESIS_QC, Block, Proposal, TimeoutMessage, Vote, message_kind, message_view,
    proposal_id_of, proposal_message, timeout_message, vote_message,
)
from .validator import Action, Validator

STRATEGIES = ("offline", "equivocate", "tail_fork", "withhold_votes", "silent_leader_then_honest", "custom")


def _view_set(spec) -> Optional[frozenset]:
    """``None`` (all views), an int, a list of ints or {"from": a, "to": b}."""
    if spec is None:
        return None
    if isinstance(spec, int):
        return frozenset([spec])
    if isinstance(spec, dict):
        return frozenset(range(spec["from"], spec["to"] + 1))
    return frozenset(spec)


class ByzantineNode:
    def __init__(self, core: Validator, strategy: "Strategy"):
        self.core = core
        self.strategy = strategy
        self.id = core.id
        self.now = 0
        strategy.bind(self)

    @property
    def cur_view(self) -> int:
        return self.core.cur_view

    def _out(self, actions: list[Action]) -> list[Action]:
        ids = self.core.c.ids
        result = []
        for a in actions:
            if a.kind == "broadcast":
                a = Action("send", a.msg, ids, delay=a.delay)
            if a.kind == "send":
                result.extend(self.strategy.outgoing(a))
            else:
                result.append(a)
        return result

    def start(self, now: int) -> list[Action]:
        self.now = now
        return self._out(self.core.start(now))

    def handle(self, msg, sender: int, now: int) -> list[Action]:
        self.now = now
        if sender != self.id and not self.strategy.incoming(msg, sender):
            return []
        return self._out(self.core.handle(msg, sender, now))

    def on_timer(self, name: str, view: int, deadline: int, now: int) -> list[Action]:
        self.now = now
        return self._out(self.core.on_timer(name, view, deadline, now))


class Strategy:
    """Base: behave honestly."""

    def __init__(self, params: dict, rng: random.Random):
        self.params = params
        self.rng = rng
        self.node: Optional[ByzantineNode] = None

    def bind(self, node: ByzantineNode) -> None:
        self.node = node

    @property
    def core(self) -> Validator:
        return self.node.core

    def leads(self, view: int) -> bool:
        return self.core.c.leader(view) == self.node.id

    def incoming(self, msg, sender: int) -> bool:
        return True

    def outgoing(self, a: Action) -> list[Action]:
        return [a]

    # helpers shared by strategies

    def _sign_proposal(self, view: int, block: Block, tc, nec) -> Proposal:
        pid = proposal_id_of(block.block_hash, view)
        return Proposal(view, pid, block, sign(self.core.key, proposal_message(view, pid)), tc, nec)

    def _vote(self, view: int, block_hash: bytes) -> Vote:
        pid = proposal_id_of(block_hash, view)
        return Vote(view, block_hash, pid, sign(self.core.key, vote_message(view, block_hash, pid)))


class Offline(Strategy):
    """Sends nothing (optionally only while in ``views``)."""

    def __init__(self, params, rng):
        super().__init__(params, rng)
        self.views = _view_set(params.get("views"))

    def outgoing(self, a):
        if self.views is None or self.core.cur_view in self.views:
            return []
        return [a]


class SilentLeaderThenHonest(Strategy):
    """Silent while in a view it leads, up to ``until_view``; honest afterwards."""

    def __init__(self, params, rng):
        super().__init__(params, rng)
        self.until_view = params.get("until_view")

    def bind(self, node):
        super().bind(node)
        if self.until_view is None:
            n = self.core.c.n
            self.until_view = next(v for v in range(1, n + 1) if self.leads(v))

    def outgoing(self, a):
        v = self.core.cur_view
        if v <= self.until_view and self.leads(v):
            return []
        return [a]


class WithholdVotes(Strategy):
    """Never sends votes (optionally only for ``views``)."""

    def __init__(self, params, rng):
        super().__init__(params, rng)
        self.views = _view_set(params.get("views"))

    def outgoing(self, a):
        if type(a.msg) is Vote and (self.views is None or a.msg.view in self.views):
            return []
        return [a]


class Equivocate(Strategy):
    """Signs two fresh proposals in its led views and splits the recipients.

    params: ``views`` (default all led views); ``groups`` either
    ``[[ids getting the honest proposal], [ids getting the twin]]`` or
    ``"random"`` (fresh seeded split per view; default); ``cross_after``
    (ticks after which each group also receives the other proposal; default
    none); ``double_vote`` (also vote for the twin; default true).
    """

    def __init__(self, params, rng):
        super().__init__(params, rng)
        self.views = _view_set(params.get("views"))
        self.groups = params.get("groups", "random")
        self.cross_after = params.get("cross_after")
        self.double_vote = params.get("double_vote", True)
        self.twins: dict[int, Proposal] = {}

    def _split(self, view: int):
        others = [i for i in self.core.c.ids if i != self.node.id]
        if self.groups == "random":
            shuffled = others[:]
            self.rng.shuffle(shuffled)
            k = self.rng.randint(1, len(shuffled) - 1)
            return set(shuffled[:k]), set(shuffled[k:])
        a, b = self.groups
        return set(a), set(b)

    def make_twin(self, p: Proposal) -> Proposal:
        twin_payload = b"twin:" + p.block.payload
        block = Block.build(p.view, twin_payload, p.block.qc)
        return self._sign_proposal(p.view, block, p.tc, p.nec)

    def outgoing(self, a):
        msg = a.msg
        t = type(msg)
        if t is Proposal and msg.view == msg.block.block_view and self.leads(msg.view) \
                and (self.views is None or msg.view in self.views) and msg.view not in self.twins:
            twin = self.make_twin(msg)
            self.twins[msg.view] = twin
            group_a, group_b = self._split(msg.view)
            me = self.node.id
            to_a = tuple(i for i in a.targets if i in group_a or i == me)
            to_b = tuple(i for i in a.targets if i in group_b)
            out = [Action("send", msg, to_a), Action("send", twin, to_b)]
            if self.cross_after is not None:
                out.append(Action("send", twin, to_a, delay=self.cross_after))
                out.append(Action("send", msg, to_b, delay=self.cross_after))
            return out
        if t is Vote and self.double_vote:
            twin = self.twins.get(msg.view)
            if twin is not None and msg.proposal_id != twin.proposal_id:
                return [a, Action("send", self._vote(msg.view, twin.block.block_hash), a.targets)]
        return [a]


class TailFork(Strategy):
    """Tries to abandon its predecessor's block.

    Never votes for the view before one it leads, ignores votes addressed to
    it as next leader, only sends QC-branch timeouts (never a tip vote), and
    replaces every proposal it makes with one that skips the predecessor.
    """

    def incoming(self, msg, sender):
        if type(msg) is Vote and self.leads(msg.view + 1) and not self.leads(msg.view):
            return False
        return True

    def _fork(self, p: Proposal) -> Proposal:
        core = self.core
        if p.tc is None:
            qc = p.block.qc
            if qc.view == 0:
                return p
            parent = core.blocks.get(qc.block_hash)
            older = parent.qc if parent is not None and parent.block_view > 0 else GENESIS_QC
        elif p.tc.high_tip is not None:
            older = p.tc.high_tip.header.qc
        else:
            parent = core.blocks.get(p.tc.high_qc.block_hash)
            older = parent.qc if parent is not None and parent.block_view > 0 else GENESIS_QC
        block = Block.build(p.view, b"fork:" + p.block.payload, older)
        return self._sign_proposal(p.view, block, p.tc, None)

    def outgoing(self, a):
        msg = a.msg
        t = type(msg)
        if t is Vote and self.leads(msg.view + 1):
            return []
        if t is TimeoutMessage and msg.tip is not None:
            qc = self.core.last_qc
            hidden = TimeoutMessage(msg.view, None, None, qc, msg.last_cer,
                                    sign(self.core.key, timeout_message(msg.view, None, qc.view)))
            return [Action("send", hidden, a.targets, delay=a.delay)]
        if t is Proposal and self.leads(msg.view):
            forked = self._fork(msg)
            return [Action("send", forked, a.targets, delay=a.delay)]
        return [a]


class CustomScript(Strategy):
    """Ordered (trigger, action) rules; the first matching rule decides.

    Rule fields: ``dir`` ("out" default, or "in"), ``kind`` (message kind or
    list), ``views`` (see ``_view_set``, matched against the message view),
    ``to`` / ``from`` (validator ids), ``leading`` (only while leading the
    current view), and ``do``:

    * ``pass`` / ``drop``: keep or discard (for "out" only the matched
      targets are affected);
    * ``delay``: add ``ticks`` to the matched targets;
    * ``equivocate``: twin a fresh proposal as in the equivocate strategy
      (``groups``, ``cross_after``, ``double_vote``);
    * ``hide_tip``: resend a tip-branch timeout as a QC-branch timeout.
    """

    ACTIONS = ("pass", "drop", "delay", "equivocate", "hide_tip")

    def __init__(self, params, rng):
        super().__init__(params, rng)
        rules = params.get("rules")
        if not isinstance(rules, list):
            raise ConfigError("custom strategy needs a 'rules' list")
        self.rules = []
        for r in rules:
            do = r.get("do", "pass")
            if do not in self.ACTIONS:
                raise ConfigError(f"unknown custom rule action {do!r}")
            kinds = r.get("kind")
            self.rules.append({
                "dir": r.get("dir", "out"),
                "kinds": None if kinds is None else frozenset([kinds] if isinstance(kinds, str) else kinds),
                "views": _view_set(r.get("views")),
                "to": None if r.get("to") is None else frozenset(r["to"]),
                "from": None if r.get("from") is None else frozenset(r["from"]),
                "leading": r.get("leading"),
                "do": do,
                "raw": r,
            })
        self.equivocators: dict[int, Equivocate] = {}

    def bind(self, node):
        super().bind(node)
        for idx, r in enumerate(self.rules):
            if r["do"] == "equivocate":
                eq = Equivocate({k: v for k, v in r["raw"].items() if k in ("groups", "cross_after", "double_vote")},
                                self.rng)
                eq.bind(node)
                self.equivocators[idx] = eq

    def _match(self, r, direction, msg, peer=None) -> bool:
        if r["dir"] != direction:
            return False
        if r["kinds"] is not None and message_kind(msg) not in r["kinds"]:
            return False
        if r["views"] is not None:
            v = message_view(msg)
            if v is None or v not in r["views"]:
                return False
        if direction == "in" and r["from"] is not None and peer not in r["from"]:
            return False
        if r["leading"] is not None and self.leads(self.core.cur_view) != r["leading"]:
            return False
        return True

    def incoming(self, msg, sender):
        for r in self.rules:
            if self._match(r, "in", msg, sender):
                return r["do"] != "drop"
        return True

    def outgoing(self, a):
        remaining = tuple(a.targets)
        out: list[Action] = []
        for idx, r in enumerate(self.rules):
            if not remaining:
                break
            if not self._match(r, "out", a.msg):
                continue
            hit = remaining if r["to"] is None else tuple(i for i in remaining if i in r["to"])
            if not hit:
                continue
            remaining = tuple(i for i in remaining if i not in hit)
            do = r["do"]
            if do == "pass":
                out.append(Action("send", a.msg, hit, delay=a.delay))
            elif do == "delay":
                out.append(Action("send", a.msg, hit, delay=(a.delay or 0) + int(r["raw"].get("ticks", 0))))
            elif do == "equivocate":
                out.extend(self.equivocators[idx].outgoing(Action("send", a.msg, hit, delay=a.delay)))
            elif do == "hide_tip":
                msg = a.msg
                if type(msg) is TimeoutMessage and msg.tip is not None:
                    qc = self.core.last_qc
                    msg = TimeoutMessage(msg.view, None, None, qc, msg.last_cer,
                                         sign(self.core.key, timeout_message(msg.view, None, qc.view)))
                out.append(Action("send", msg, hit, delay=a.delay))
        if remaining:
            # Votes may still need twin votes from an equivocating rule.
            extra = []
            if type(a.msg) is Vote:
                for eq in self.equivocators.values():
                    extra = eq.outgoing(Action("send", a.msg, remaining, delay=a.delay))
                    if len(extra) > 1:
                        break
                else:
                    extra = [Action("send", a.msg, remaining, delay=a.delay)]
            else:
                extra = [Action("send", a.msg, remaining, delay=a.delay)]
            out.extend(extra)
        return out


_CLASSES = {
    "offline": Offline,
    "equivocate": Equivocate,
    "tail_fork": TailFork,
    "withhold_votes": WithholdVotes,
    "silent_leader_then_honest": SilentLeaderThenHonest,
    "custom": CustomScript,
}


def make_strategy(name: str, params: Optional[dict], rng: random.Random) -> Strategy:
    cls = _CLASSES.get(name)
    if cls is None:
        raise ConfigError(f"unknown strategy {name!r}; expected one of {', '.join(STRATEGIES)}")
    return cls(dict(params or {}), rng)
