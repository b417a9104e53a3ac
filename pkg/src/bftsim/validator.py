"""Per-validator consensus state machine.

A ``Validator`` owns its state and exposes ``start``, ``handle`` and
``on_timer``.  Each call records the current time, mutates only this
validator's state and returns the list of ``Action`` objects produced; the
simulator is responsible for delivering messages and scheduling timers.
"""
from __future__ import annotations

from typing import Callable, Optional

from .crypto import KeyPair, aggregate, sign
from .pacemaker import TimingConfig, build_tc
from .recovery import GOT_NEC, GOT_PROPOSAL, RecoverySession, request_order
from .types import (
    GENESIS_BLOCK, GENESIS_PROPOSAL, GENESIS_QC, GENESIS_TIP, Block, NERequest, NoEndorsement,
    Proposal, ProposalRequest, ProposalResponse, QuorumCertificate, SyncRequest,
    TimeoutCertificate, TimeoutMessage, Vote, conflicting, get_tip, ne_message,
    proposal_id_of, proposal_message, timeout_message, vote_message,
)
from .validation import Committee

TraceFn = Callable[[int, str, int, dict], None]
PayloadFn = Callable[[int, int, int], bytes]


class Action:
    """Output of a handler.

    kinds: ``broadcast`` (msg to everyone including self), ``send`` (msg to
    ``targets``), ``timer`` (``timer`` name, ``view``, ``deadline``),
    ``commit`` / ``spec_commit`` / ``revert`` (``block``, ``height``) and
    ``start_recovery`` (``msg`` is the TC).  ``delay`` adds ticks on top of
    the network delay; only Byzantine strategies set it.
    """
    __slots__ = ("kind", "msg", "targets", "block", "height", "timer", "view", "deadline", "delay")

    def __init__(self, kind, msg=None, targets=(), block=None, height=None, timer="", view=0, deadline=0,
                 delay=None):
        self.kind = kind
        self.msg = msg
        self.targets = targets
        self.block = block
        self.height = height
        self.timer = timer
        self.view = view
        self.deadline = deadline
        self.delay = delay

    def __repr__(self) -> str:
        return f"Action({self.kind}, {type(self.msg).__name__ if self.msg is not None else ''}, {self.targets})"


def default_payload(view: int, leader: int, seq: int) -> bytes:
    return view.to_bytes(8, "big") + leader.to_bytes(2, "big") + seq.to_bytes(4, "big")


def _no_trace(vid, kind, view, detail):
    pass


class Validator:
    def __init__(self, vid: int, committee: Committee, key: KeyPair, timing: TimingConfig,
                 payload_fn: Optional[PayloadFn] = None, trace: Optional[TraceFn] = None,
                 backup_qc: bool = True):
        self.id = vid
        self.c = committee
        self.key = key
        self.timing = timing
        self.backup_qc = backup_qc
        self.payload_fn = payload_fn or default_payload
        self._trace = trace or _no_trace
        self.now = 0
        self.out: list[Action] = []

        self.cur_view = 0
        self.highest_voted_view = 0
        self.local_tip = GENESIS_TIP
        self.last_qc = GENESIS_QC
        self.last_tc: Optional[TimeoutCertificate] = None
        self.timer_view: Optional[int] = None
        self.timer_deadline: Optional[int] = None

        self.votes: dict[bytes, dict[int, Vote]] = {}
        self.qcs_built: set[bytes] = set()
        self.voted_pids: set[bytes] = set()
        self.timeouts: dict[int, dict[int, TimeoutMessage]] = {}
        self.tc_built: set[int] = set()
        self.premature: set[int] = set()
        self.timed_out: set[int] = set()
        self.tc_relayed: set[int] = set()
        self.issued_proposal_views: set[int] = set()
        self.backup_broadcast: set[int] = set()
        self.qc_sent: set[tuple[int, int]] = set()
        self.forwarded_next: set[int] = set()
        self.ne_sent_views: set[int] = set()
        self.payload_seq = 0

        g = GENESIS_BLOCK.block_hash
        self.proposal_cache: dict[bytes, Proposal] = {GENESIS_PROPOSAL.proposal_id: GENESIS_PROPOSAL}
        self.blocks: dict[bytes, Block] = {g: GENESIS_BLOCK}
        self.by_block: dict[bytes, Proposal] = {g: GENESIS_PROPOSAL}
        self.committed: dict[bytes, int] = {g: 0}
        self.committed_log: list[Block] = [GENESIS_BLOCK]
        self.spec_log: dict[bytes, Block] = {}
        self.pending_qcs: dict[bytes, QuorumCertificate] = {}
        self.sync_requested: set[bytes] = set()
        self.recovery: Optional[RecoverySession] = None

    # ------------------------------------------------------------------ plumbing

    @property
    def head(self) -> Block:
        return self.committed_log[-1]

    def _note(self, kind: str, view: int, **detail) -> None:
        self._trace(self.id, kind, view, detail)

    def _flush(self) -> list[Action]:
        out = self.out
        self.out = []
        return out

    def _broadcast(self, msg) -> None:
        self.out.append(Action("broadcast", msg))

    def _send(self, msg, *targets: int) -> None:
        self.out.append(Action("send", msg, tuple(targets)))

    def _leader(self, view: int) -> int:
        return self.c.leader(view)

    # ------------------------------------------------------------------ entry points

    def start(self, now: int) -> list[Action]:
        self.now = now
        self.increment_view(GENESIS_QC)
        self.create_proposal_from_qc(GENESIS_QC)
        return self._flush()

    def handle(self, msg, sender: int, now: int) -> list[Action]:
        self.now = now
        handler = _DISPATCH.get(type(msg))
        if handler is not None:
            handler(self, msg, sender)
        return self._flush()

    def on_timer(self, name: str, view: int, deadline: int, now: int) -> list[Action]:
        self.now = now
        if name == "view":
            if view == self.cur_view and self.timer_view == view and self.timer_deadline == deadline:
                self.timer_view = None
                self.on_local_timeout()
        elif name == "recovery":
            s = self.recovery
            if s is not None and s.pending and s.view == view and s.next_batch_deadline == deadline:
                self._recovery_batch()
        return self._flush()

    # ------------------------------------------------------------------ pacemaker

    def increment_view(self, cer) -> bool:
        if cer.view < self.cur_view:
            return False
        self.cur_view = cer.view + 1
        is_qc = type(cer) is QuorumCertificate
        if is_qc:
            if cer.view >= self.last_qc.view:
                self.last_qc = cer
        else:
            self.last_tc = cer
        self.timer_view = self.cur_view
        self.timer_deadline = self.now + self.timing.theta_view
        self.out.append(Action("timer", timer="view", view=self.cur_view, deadline=self.timer_deadline))
        self._note("enter_view", self.cur_view, cert="qc" if is_qc else "tc", cert_view=cer.view)
        s = self.recovery
        if s is not None and s.pending and s.view < self.cur_view:
            s.abort()
            self._note("recovery", s.view, phase="aborted")
        return True

    def on_local_timeout(self) -> None:
        v = self.cur_view
        if v in self.timed_out:
            return
        self.timed_out.add(v)
        if self.highest_voted_view < v:
            self.highest_voted_view = v
        self._broadcast(self.create_timeout_message(v))

    def create_timeout_message(self, v: int) -> TimeoutMessage:
        tip = self.local_tip
        if tip.view > self.last_qc.view:
            tip_vote = self._make_vote(v, tip.header.block_hash)
            qc = None
            signed = timeout_message(v, tip.view, tip.header.qc.view)
        else:
            tip = tip_vote = None
            qc = self.last_qc
            signed = timeout_message(v, None, qc.view)
        cer = self.last_qc if self.last_qc.view == v - 1 else self.last_tc
        return TimeoutMessage(v, tip, tip_vote, qc, cer, sign(self.key, signed))

    def handle_timeout(self, m: TimeoutMessage):
        """Pool a validated timeout for the current view; returns (qc, tc)."""
        v = m.view
        if v != self.cur_view:
            return None, None
        if m.tip is not None and self.backup_qc:
            qc = self.handle_vote(m.tip_vote, via="tip_vote")
            if qc is not None:
                return qc, None
        if v in self.tc_built:
            return None, None
        pool = self.timeouts.setdefault(v, {})
        signer = m.sig.signer
        if signer in pool:
            return None, None
        pool[signer] = m
        k = len(pool)
        if k == self.c.f + 1 and v not in self.premature:
            self.premature.add(v)
            self.on_local_timeout()
        if k == self.c.quorum:
            self.tc_built.add(v)
            tc = build_tc(v, pool)
            self._note("tc_formed", v,
                       high_tip_view=tc.high_tip.view if tc.high_tip is not None else None,
                       high_qc_view=tc.high_qc.view if tc.high_qc is not None else None)
            return None, tc
        return None, None

    # ------------------------------------------------------------------ votes and QCs

    def _make_vote(self, view: int, block_hash: bytes) -> Vote:
        pid = proposal_id_of(block_hash, view)
        self.voted_pids.add(pid)
        return Vote(view, block_hash, pid, sign(self.key, vote_message(view, block_hash, pid)))

    def handle_vote(self, vote: Vote, via: str = "votes") -> Optional[QuorumCertificate]:
        pool = self.votes.get(vote.proposal_id)
        if pool is None:
            pool = self.votes[vote.proposal_id] = {}
        signer = vote.sig.signer
        if signer in pool:
            return None
        pool[signer] = vote
        if len(pool) != self.c.quorum or vote.proposal_id in self.qcs_built:
            return None
        self.qcs_built.add(vote.proposal_id)
        qc = QuorumCertificate(vote.view, vote.block_hash, vote.proposal_id,
                               aggregate(x.sig for x in pool.values()))
        self._note("qc_formed", vote.view, proposal_id=vote.proposal_id.hex(),
                   block_hash=vote.block_hash.hex(), via=via)
        return qc

    def _broadcast_backup_qc(self, qc: QuorumCertificate) -> None:
        if self.backup_qc and qc.view not in self.backup_broadcast:
            self.backup_broadcast.add(qc.view)
            self._broadcast(qc)

    def _send_qc_once(self, qc: QuorumCertificate, target: int) -> None:
        if not self.backup_qc:
            return
        key = (qc.view, target)
        if key not in self.qc_sent:
            self.qc_sent.add(key)
            self._send(qc, target)

    def _forward_to_next_leader(self, qc: QuorumCertificate) -> None:
        if self.backup_qc and qc.view not in self.forwarded_next:
            self.forwarded_next.add(qc.view)
            self._send(qc, self._leader(qc.view + 1))

    # ------------------------------------------------------------------ handlers

    def on_proposal(self, p: Proposal, sender: int) -> None:
        c = self.c
        if sender != c.leader(p.view):
            self._note("invalid", p.view, sender=sender, msg="proposal", reason="sender is not the view leader")
            return
        reason = c.proposal_reason(p)
        if reason is not None:
            self._note("invalid", p.view, sender=sender, msg="proposal", reason=reason)
            return
        self._cache_proposal(p)
        if p.view < self.cur_view:
            return
        self.increment_view(p.tc if p.tc is not None else p.block.qc)
        qc = p.block.qc
        if qc.view == p.view - 1 and qc.view > 0:
            if c.leader(qc.view) == self.id:
                self._broadcast_backup_qc(qc)
            self._send_qc_once(qc, c.leader(qc.view))
        self.commit_and_spec_commit(qc)
        if p.view > self.highest_voted_view and p.view == self.cur_view:
            self.local_tip = get_tip(p)
            v = self.cur_view
            vote = self._make_vote(v, self.local_tip.header.block_hash)
            if self.backup_qc:
                a, b = c.leader(v), c.leader(v + 1)
                self._send(vote, *((a,) if a == b else (a, b)))
            else:
                self._send(vote, c.leader(v + 1))
            self.highest_voted_view = v

    def on_vote(self, vote: Vote, sender: int) -> None:
        if vote.view < self.cur_view:
            return
        c = self.c
        if self.id != c.leader(vote.view) and self.id != c.leader(vote.view + 1):
            return
        reason = c.vote_reason(vote)
        if reason is not None:
            self._note("invalid", vote.view, sender=sender, msg="vote", reason=reason)
            return
        qc = self.handle_vote(vote)
        if qc is None:
            return
        self.increment_view(qc)
        self.commit_and_spec_commit(qc)
        if c.leader(qc.view) == self.id:
            self._broadcast_backup_qc(qc)
        else:
            self.create_proposal_from_qc(qc)

    def on_qc(self, qc: QuorumCertificate, sender: int) -> None:
        if qc.view < self.cur_view:
            return
        c = self.c
        reason = c.qc_reason(qc)
        if reason is not None:
            self._note("invalid", qc.view, sender=sender, msg="qc", reason=reason)
            return
        lead = c.leader(qc.view)
        if sender == lead:
            self.increment_view(qc)
            self.commit_and_spec_commit(qc)
            self._forward_to_next_leader(qc)
        if self.id == lead:
            self._broadcast_backup_qc(qc)
        if self.id == c.leader(qc.view + 1):
            self.increment_view(qc)
            self.commit_and_spec_commit(qc)
            self.create_proposal_from_qc(qc)

    def on_timeout_message(self, m: TimeoutMessage, sender: int) -> None:
        if m.view < self.cur_view:
            return
        c = self.c
        if m.sig.signer != sender:
            self._note("invalid", m.view, sender=sender, msg="timeout", reason="signer is not the sender")
            return
        reason = c.timeout_reason(m)
        if reason is not None:
            self._note("invalid", m.view, sender=sender, msg="timeout", reason=reason)
            return
        cer = m.last_cer
        is_qc = type(cer) is QuorumCertificate
        if not is_qc and cer.view not in self.timed_out and cer.view not in self.tc_relayed:
            self.tc_relayed.add(cer.view)
            self._broadcast(cer)
        self.increment_view(cer)
        nxt = cer.view + 1
        if c.leader(nxt) == self.id and nxt not in self.issued_proposal_views:
            if is_qc:
                self.create_proposal_from_qc(cer)
            else:
                self.create_proposal_from_tc(cer)
        if is_qc and cer.view > 0:
            if c.leader(cer.view) == self.id:
                self._broadcast_backup_qc(cer)
            self._send_qc_once(cer, c.leader(cer.view))
            self._send_qc_once(cer, c.leader(nxt))
            self.commit_and_spec_commit(cer)
        qc, tc = self.handle_timeout(m)
        if qc is not None:
            self.increment_view(qc)
            self.commit_and_spec_commit(qc)
            if c.leader(qc.view + 1) == self.id:
                self.create_proposal_from_qc(qc)
        if tc is not None:
            self.increment_view(tc)
            if c.leader(tc.view + 1) == self.id:
                self.create_proposal_from_tc(tc)

    def on_tc(self, tc: TimeoutCertificate, sender: int) -> None:
        if tc.view < self.cur_view:
            return
        reason = self.c.tc_reason(tc)
        if reason is not None:
            self._note("invalid", tc.view, sender=sender, msg="tc", reason=reason)
            return
        self.increment_view(tc)
        if tc.view not in self.timed_out and tc.view not in self.tc_relayed:
            self.tc_relayed.add(tc.view)
            self._broadcast(tc)
        if self.c.leader(tc.view + 1) == self.id:
            self.create_proposal_from_tc(tc)

    def _recovery_request_ok(self, tc: TimeoutCertificate, sender: int) -> bool:
        if tc.view + 1 < self.cur_view:
            return False
        if tc.high_tip is None or sender != self.c.leader(tc.view + 1) or sender == self.id:
            return False
        reason = self.c.tc_reason(tc)
        if reason is not None:
            self._note("invalid", tc.view, sender=sender, msg="recovery_request", reason=reason)
            return False
        self.increment_view(tc)
        return True

    def on_proposal_request(self, req: ProposalRequest, sender: int) -> None:
        tc = req.tc
        if not self._recovery_request_ok(tc, sender):
            return
        p = self.proposal_cache.get(tc.high_tip.proposal_id)
        if p is not None:
            self._send(ProposalResponse(p), sender)

    def on_ne_request(self, req: NERequest, sender: int) -> None:
        tc = req.tc
        if not self._recovery_request_ok(tc, sender):
            return
        v = tc.view + 1
        if tc.high_tip.proposal_id in self.voted_pids or v in self.ne_sent_views:
            return
        self.ne_sent_views.add(v)
        qv = tc.high_tip.header.qc.view
        self._send(NoEndorsement(v, qv, sign(self.key, ne_message(v, qv))), sender)

    def on_proposal_response(self, resp: ProposalResponse, sender: int) -> None:
        p = resp.proposal
        reason = self.c.proposal_reason(p)
        if reason is not None:
            self._note("invalid", p.view, sender=sender, msg="proposal_response", reason=reason)
            return
        self._cache_proposal(p)
        s = self.recovery
        if s is not None and s.on_proposal(p):
            self._note("recovery", s.view, phase="resolved", result="proposal")
            self._recovery_resolved()

    def on_ne(self, ne: NoEndorsement, sender: int) -> None:
        s = self.recovery
        if s is None or not s.pending:
            return
        if ne.view != s.view or ne.high_tip_qc_view != s.high_tip_qc_view or ne.sig.signer != sender:
            return
        if not self.c.valid_ne(ne):
            self._note("invalid", ne.view, sender=sender, msg="ne", reason="signature invalid")
            return
        self._add_ne(ne.sig)

    def on_sync_request(self, req: SyncRequest, sender: int) -> None:
        p = self.by_block.get(req.block_hash)
        if p is not None and p.view > 0:
            self._send(ProposalResponse(p), sender)

    # ------------------------------------------------------------------ proposing

    def _next_payload(self, view: int) -> bytes:
        self.payload_seq += 1
        return self.payload_fn(view, self.id, self.payload_seq)

    def _propose(self, block: Block, tc, nec) -> Proposal:
        v = self.cur_view
        self.issued_proposal_views.add(v)
        pid = proposal_id_of(block.block_hash, v)
        p = Proposal(v, pid, block, sign(self.key, proposal_message(v, pid)), tc, nec)
        self._cache_proposal(p)
        self._broadcast(p)
        return p

    def create_proposal_from_qc(self, qc: QuorumCertificate) -> None:
        v = self.cur_view
        if self.c.leader(v) != self.id or v != qc.view + 1 or v in self.issued_proposal_views:
            return
        self._propose(Block.build(v, self._next_payload(v), qc), None, None)

    def create_proposal_from_tc(self, tc: TimeoutCertificate) -> None:
        v = self.cur_view
        if self.c.leader(v) != self.id or v != tc.view + 1 or v in self.issued_proposal_views:
            return
        if tc.high_qc is not None:
            self._propose(Block.build(v, self._next_payload(v), tc.high_qc), tc, None)
            return
        block = self.blocks.get(tc.high_tip.header.block_hash)
        if block is not None:
            self._propose(block, tc, None)
            return
        s = self.recovery
        if s is not None and s.view == v:
            return
        self.recover(tc)

    # ------------------------------------------------------------------ block recovery

    def recover(self, tc: TimeoutCertificate) -> None:
        v = tc.view + 1
        s = RecoverySession(tc, v, self.c.quorum, request_order(tc, self.id, self.c.ids), self.now)
        self.recovery = s
        self._note("recovery", v, phase="start", high_tip_view=tc.high_tip.view)
        self.out.append(Action("start_recovery", tc))
        if tc.high_tip.proposal_id not in self.voted_pids and v not in self.ne_sent_views:
            self.ne_sent_views.add(v)
            qv = s.high_tip_qc_view
            self._add_ne(sign(self.key, ne_message(v, qv)))
            if not s.pending:
                return
        self._recovery_batch()
        others = tuple(i for i in self.c.ids if i != self.id)
        self._send(NERequest(tc), *others)

    def _recovery_batch(self) -> None:
        s = self.recovery
        batch = s.next_batch(self.timing.kappa)
        if batch:
            self._send(ProposalRequest(s.tc), *batch)
        if s.exhausted:
            s.next_batch_deadline = None
            return
        s.next_batch_deadline = self.now + self.timing.theta_interval
        self.out.append(Action("timer", timer="recovery", view=s.view, deadline=s.next_batch_deadline))

    def _add_ne(self, sig) -> None:
        s = self.recovery
        nec = s.on_ne(sig)
        if nec is not None:
            self._note("nec_formed", nec.view, high_tip_qc_view=nec.high_tip_qc_view)
            self._note("recovery", s.view, phase="resolved", result="nec")
            self._recovery_resolved()

    def _recovery_resolved(self) -> None:
        s = self.recovery
        v = s.view
        if v != self.cur_view or v in self.issued_proposal_views:
            return
        if s.status == GOT_PROPOSAL:
            self._propose(s.result.block, s.tc, None)
        elif s.status == GOT_NEC:
            block = Block.build(v, self._next_payload(v), s.tc.high_tip.header.qc)
            self._propose(block, s.tc, s.result)

    # ------------------------------------------------------------------ storage and commits

    def _cache_proposal(self, p: Proposal) -> None:
        pid = p.proposal_id
        if pid in self.proposal_cache:
            return
        self.proposal_cache[pid] = p
        bh = p.block.block_hash
        if bh not in self.blocks:
            self.blocks[bh] = p.block
            self.by_block[bh] = p
            if self.pending_qcs:
                self._retry_pending()

    def _retry_pending(self) -> None:
        for pid, qc in sorted(self.pending_qcs.items(), key=lambda kv: kv[1].view):
            if pid in self.pending_qcs and self._try_commit(qc):
                del self.pending_qcs[pid]

    def _request_sync(self, block_hash: bytes) -> None:
        if block_hash in self.sync_requested:
            return
        self.sync_requested.add(block_hash)
        self._note("sync", self.cur_view, block_hash=block_hash.hex())
        self._send(SyncRequest(block_hash), *(i for i in self.c.ids if i != self.id))

    def commit_and_spec_commit(self, qc: QuorumCertificate) -> None:
        if qc.proposal_id in self.pending_qcs:
            return
        if not self._try_commit(qc):
            self.pending_qcs[qc.proposal_id] = qc
            self._note("commit_deferred", qc.view, proposal_id=qc.proposal_id.hex())

    def _try_commit(self, qc: QuorumCertificate) -> bool:
        parent = self.blocks.get(qc.block_hash)
        if parent is None:
            self._request_sync(qc.block_hash)
            return False
        if parent.block_view == qc.view:
            self._spec_commit(parent)
        if qc.view == parent.qc.view + 1:
            grandparent = self.blocks.get(parent.qc.block_hash)
            if grandparent is None:
                self._request_sync(parent.qc.block_hash)
                return False
            return self._commit(grandparent)
        return True

    def height_of(self, block: Block) -> Optional[int]:
        dist = 0
        b = block
        while b.block_hash not in self.committed:
            b = self.blocks.get(b.qc.block_hash)
            if b is None:
                return None
            dist += 1
        return self.committed[b.block_hash] + dist

    def _commit(self, block: Block) -> bool:
        chain = []
        b = block
        while b.block_hash not in self.committed:
            chain.append(b)
            parent = self.blocks.get(b.qc.block_hash)
            if parent is None:
                self._request_sync(b.qc.block_hash)
                return False
            b = parent
        if not chain:
            return True
        h = self.committed[b.block_hash]
        for blk in reversed(chain):
            h += 1
            self.committed[blk.block_hash] = h
            self.committed_log.append(blk)
            self.spec_log.pop(blk.block_hash, None)
            self.out.append(Action("commit", block=blk, height=h))
        head = self.head
        for s in list(self.spec_log.values()):
            if conflicting(self.blocks, s, head):
                self._revert(s)
        return True

    def _spec_commit(self, block: Block) -> None:
        h = block.block_hash
        if h in self.committed or h in self.spec_log:
            return
        if conflicting(self.blocks, block, self.head):
            return
        self.spec_log[h] = block
        self.out.append(Action("spec_commit", block=block, height=self.height_of(block)))
        for s in list(self.spec_log.values()):
            if s is not block and conflicting(self.blocks, s, block):
                self._revert(s)

    def _revert(self, block: Block) -> None:
        del self.spec_log[block.block_hash]
        self.out.append(Action("revert", block=block, height=self.height_of(block)))


_DISPATCH = {
    Proposal: Validator.on_proposal,
    Vote: Validator.on_vote,
    QuorumCertificate: Validator.on_qc,
    TimeoutMessage: Validator.on_timeout_message,
    TimeoutCertificate: Validator.on_tc,
    ProposalRequest: Validator.on_proposal_request,
    ProposalResponse: Validator.on_proposal_response,
    NERequest: Validator.on_ne_request,
    NoEndorsement: Validator.on_ne,
    SyncRequest: Validator.on_sync_request,
}
