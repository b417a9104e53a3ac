"""Validity predicates for every protocol object.

Each ``check_*`` function returns ``None`` when the object is valid and a
short reason string otherwise.  ``Committee.valid_*`` are the boolean views,
memoized per object identity: objects are immutable and shared by reference
inside one simulation, so a certificate is verified once per run no matter
how many validators receive it.
"""
from __future__ import annotations

from typing import Mapping, Optional, Union

from .crypto import PublicKey, verify, verify_aggregate
from .types import (
    Block, BlockHeader, NoEndorsement, NoEndorsementCertificate, Proposal, QuorumCertificate,
    TimeoutCertificate, TimeoutMessage, Tip, Vote, digest, hash_block, is_fresh_proposal,
    is_genesis_qc, is_genesis_tip, ne_message, proposal_id_of, proposal_message, timeout_message,
    vote_message,
)

Reason = Optional[str]


class Committee:
    """Static membership: size, keys, leader schedule, plus a verification memo."""

    def __init__(self, n: int, f: int, publics: Mapping[int, PublicKey], memo: bool = True):
        if n != 3 * f + 1:
            raise ValueError(f"n must equal 3f+1 (n={n}, f={f})")
        self.n = n
        self.f = f
        self.quorum = 2 * f + 1
        self.publics = dict(publics)
        self.ids = tuple(range(1, n + 1))
        self.memo = memo
        self._cache: dict[tuple[str, int], tuple[object, Reason]] = {}

    def leader(self, view: int) -> int:
        """Round-robin schedule: view 1 is led by validator 1."""
        return (view - 1) % self.n + 1

    def _memoized(self, kind: str, fn, obj) -> Reason:
        if not self.memo:
            return fn(self, obj)
        key = (kind, id(obj))
        hit = self._cache.get(key)
        if hit is not None and hit[0] is obj:
            return hit[1]
        reason = fn(self, obj)
        self._cache[key] = (obj, reason)
        return reason

    def qc_reason(self, qc) -> Reason:
        return self._memoized("qc", check_qc, qc)

    def tc_reason(self, tc) -> Reason:
        return self._memoized("tc", check_tc, tc)

    def nec_reason(self, nec) -> Reason:
        return self._memoized("nec", check_nec, nec)

    def tip_reason(self, tip) -> Reason:
        return self._memoized("tip", check_fresh_tip, tip)

    def proposal_reason(self, p) -> Reason:
        return self._memoized("proposal", check_proposal, p)

    def vote_reason(self, v) -> Reason:
        return self._memoized("vote", check_vote, v)

    def timeout_reason(self, m) -> Reason:
        return self._memoized("timeout", check_timeout_message, m)

    def valid_qc(self, qc) -> bool:
        return self.qc_reason(qc) is None

    def valid_tc(self, tc) -> bool:
        return self.tc_reason(tc) is None

    def valid_nec(self, nec) -> bool:
        return self.nec_reason(nec) is None

    def valid_fresh_tip(self, tip) -> bool:
        return self.tip_reason(tip) is None

    def valid_proposal(self, p) -> bool:
        return self.proposal_reason(p) is None

    def valid_vote(self, v) -> bool:
        return self.vote_reason(v) is None

    def valid_timeout(self, m) -> bool:
        return self.timeout_reason(m) is None

    def valid_ne(self, ne: NoEndorsement) -> bool:
        pub = self.publics.get(ne.sig.signer)
        return pub is not None and verify(pub, ne_message(ne.view, ne.high_tip_qc_view), ne.sig)


def _sig_ok(c: Committee, signer: int, msg: bytes, sig) -> bool:
    if sig is None or sig.signer != signer:
        return False
    pub = c.publics.get(signer)
    return pub is not None and verify(pub, msg, sig)


def check_block(c: Committee, b: Union[Block, BlockHeader]) -> Reason:
    if isinstance(b, Block) and b.payload_hash != digest(b.payload):
        return "payload_hash mismatch"
    if b.block_hash != hash_block(b.block_view, b.payload_hash, b.qc):
        return "block_hash mismatch"
    r = c.qc_reason(b.qc)
    if r:
        return f"block qc: {r}"
    return None


def check_vote(c: Committee, v: Vote) -> Reason:
    if v.view < 1:
        return "vote view < 1"
    if v.proposal_id != proposal_id_of(v.block_hash, v.view):
        return "vote proposal_id mismatch"
    if not _sig_ok(c, v.sig.signer, vote_message(v.view, v.block_hash, v.proposal_id), v.sig):
        return "vote signature invalid"
    return None


def check_qc(c: Committee, qc: QuorumCertificate) -> Reason:
    if is_genesis_qc(qc):
        return None
    if qc.view < 1:
        return "qc view < 1"
    if qc.proposal_id != proposal_id_of(qc.block_hash, qc.view):
        return "qc proposal_id mismatch"
    if len(qc.agg) != c.quorum:
        return f"qc has {len(qc.agg)} signers, need {c.quorum}"
    if not verify_aggregate(c.publics, qc.agg, vote_message(qc.view, qc.block_hash, qc.proposal_id)):
        return "qc aggregate invalid"
    return None


def check_fresh_tip(c: Committee, t: Tip) -> Reason:
    if is_genesis_tip(t):
        return None
    h = t.header
    r = check_block(c, h)
    if r:
        return r
    if t.proposal_id != proposal_id_of(h.block_hash, t.view):
        return "tip proposal_id mismatch"
    if not _sig_ok(c, c.leader(t.view), proposal_message(t.view, t.proposal_id), t.sig):
        return "tip leader signature invalid"
    if h.block_view != t.view:
        return "tip block_view != view"
    if t.view <= h.qc.view:
        return "tip view <= qc view"
    if t.view == h.qc.view + 1:
        if t.tc is not None or t.nec is not None:
            return "happy-path tip carries tc or nec"
        return None
    if t.nec is not None:
        r = c.nec_reason(t.nec)
        if r:
            return f"tip nec: {r}"
        if t.view != t.nec.view:
            return "tip view != nec view"
        if h.qc.view != t.nec.high_tip_qc_view:
            return "tip qc view != nec high_tip_qc_view"
        if t.tc is not None:
            r = c.tc_reason(t.tc)
            if r:
                return f"tip tc: {r}"
            if t.view != t.tc.view + 1:
                return "tip view != tc view + 1"
        return None
    if t.tc is None:
        return "tip has neither consecutive qc, tc nor nec"
    r = c.tc_reason(t.tc)
    if r:
        return f"tip tc: {r}"
    if t.view != t.tc.view + 1:
        return "tip view != tc view + 1"
    if t.tc.high_qc is None:
        return "tip tc has no high_qc"
    if h.qc.encoded != t.tc.high_qc.encoded:
        return "tip qc != tc high_qc"
    return None


def check_proposal(c: Committee, p: Proposal) -> Reason:
    b = p.block
    r = check_block(c, b)
    if r:
        return r
    if p.proposal_id != proposal_id_of(b.block_hash, p.view):
        return "proposal_id mismatch"
    if not _sig_ok(c, c.leader(p.view), proposal_message(p.view, p.proposal_id), p.sig):
        return "leader signature invalid"
    if p.view < b.block_view:
        return "view < block_view"
    if p.view <= b.qc.view:
        return "view <= qc view"
    if is_fresh_proposal(p):
        if p.nec is not None and p.tc is None:
            return "nec proposal without tc"
        r = check_fresh_tip(c, p.tip())
        return f"fresh: {r}" if r else None
    if p.view == b.block_view:
        return "new block justified by neither the previous view's qc, a tc high_qc nor an nec"
    if p.tc is None:
        return "reproposal without tc"
    r = c.tc_reason(p.tc)
    if r:
        return f"reproposal tc: {r}"
    if p.view != p.tc.view + 1:
        return "reproposal view != tc view + 1"
    if p.tc.high_tip is None:
        return "reproposal tc has no high_tip"
    if b.header.encoded != p.tc.high_tip.header.encoded:
        return "reproposed block != tc high_tip"
    return None


def check_timeout_message(c: Committee, m: TimeoutMessage) -> Reason:
    if m.view < 1:
        return "timeout view < 1"
    cer = m.last_cer
    r = c.qc_reason(cer) if isinstance(cer, QuorumCertificate) else c.tc_reason(cer)
    if r:
        return f"last_cer: {r}"
    if cer.view != m.view - 1:
        return "last_cer not from previous view"
    if (m.tip is None) == (m.qc is None):
        return "timeout must carry exactly one of tip or qc"
    signer = m.sig.signer
    if m.tip is not None:
        if m.tip_vote is None:
            return "tip without tip_vote"
        r = c.vote_reason(m.tip_vote)
        if r:
            return f"tip_vote: {r}"
        if m.tip_vote.view != m.view:
            return "tip_vote view != timeout view"
        r = c.tip_reason(m.tip)
        if r:
            return f"tip: {r}"
        if m.tip.view > m.view:
            return "tip view > timeout view"
        msg = timeout_message(m.view, m.tip.view, m.tip.header.qc.view)
    else:
        if m.tip_vote is not None:
            return "qc branch carries tip_vote"
        r = c.qc_reason(m.qc)
        if r:
            return f"qc: {r}"
        if m.qc.view >= m.view:
            return "qc view >= timeout view"
        msg = timeout_message(m.view, None, m.qc.view)
    if not _sig_ok(c, signer, msg, m.sig):
        return "timeout signature invalid"
    return None


def check_tc(c: Committee, tc: TimeoutCertificate) -> Reason:
    if (tc.high_tip is None) == (tc.high_qc is None):
        return "tc must carry exactly one of high_tip or high_qc"
    signers = tc.agg.signers
    if len(signers) != c.quorum:
        return f"tc has {len(signers)} signers, need {c.quorum}"
    tip_ids = [i for i, _ in tc.tips_views]
    qc_ids = [i for i, _ in tc.qcs_views]
    if tip_ids != list(signers) or qc_ids != list(signers):
        return "tc view maps do not match signers"
    tips = tc.tips_map
    qcs = tc.qcs_map
    if not verify_aggregate(c.publics, tc.agg, lambda i: timeout_message(tc.view, tips[i], qcs[i])):
        return "tc aggregate invalid"
    max_tip = max((v for v in tips.values() if v is not None), default=0)
    max_qc = max(qcs.values())
    if tc.high_qc is not None:
        r = c.qc_reason(tc.high_qc)
        if r:
            return f"high_qc: {r}"
        hv = tc.high_qc.view
        if not (max_tip <= hv == max_qc < tc.view):
            return "high_qc view inconsistent with reported views"
        return None
    t = tc.high_tip
    r = c.tip_reason(t)
    if r:
        return f"high_tip: {r}"
    if t.view > tc.view:
        return "high_tip view > tc view"
    for i, tv in tips.items():
        if tv is None:
            continue
        if tv <= qcs[i]:
            return "reported tip not newer than its qc"
        if tv > t.view:
            return "a reported tip is newer than high_tip"
        if tv == t.view and qcs[i] > t.header.qc.view:
            return "tie not broken by qc view"
    if t.view <= max_qc:
        return "high_tip not newer than max qc"
    return None


def check_nec(c: Committee, nec: NoEndorsementCertificate) -> Reason:
    if nec.high_tip_qc_view >= nec.view - 1:
        return "nec high_tip_qc_view >= view - 1"
    if len(nec.agg) != c.quorum:
        return f"nec has {len(nec.agg)} signers, need {c.quorum}"
    if not verify_aggregate(c.publics, nec.agg, ne_message(nec.view, nec.high_tip_qc_view)):
        return "nec aggregate invalid"
    return None
