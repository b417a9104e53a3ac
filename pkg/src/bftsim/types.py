"""Protocol data structures, canonical encoding and hashing.

Every type is an immutable value.  ``encoded`` is the canonical byte form:
fixed field order, big-endian integers, length-prefixed byte strings and a
presence byte in front of optional fields.  The same bytes are used for
hashing, as the simulator wire format and (hex) in traces.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Optional, Union

_U8 = struct.Struct(">B")
_U16 = struct.Struct(">H")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def u16(x: int) -> bytes:
    return _U16.pack(x)


def u64(x: int) -> bytes:
    return _U64.pack(x)


def lp(data: bytes) -> bytes:
    """Length-prefixed byte string."""
    return _U32.pack(len(data)) + data


def opt_view(v: Optional[int]) -> bytes:
    return b"\x00" if v is None else b"\x01" + _U64.pack(v)


def _opt(obj) -> bytes:
    return b"\x00" if obj is None else b"\x01" + obj.encoded


# Signed-message layouts.  Each starts with a domain tag so a signature for
# one message type can never be replayed as another.

def vote_message(view: int, block_hash: bytes, proposal_id: bytes) -> bytes:
    return b"vote" + _U64.pack(view) + block_hash + proposal_id


def proposal_message(view: int, proposal_id: bytes) -> bytes:
    return b"prop" + _U64.pack(view) + proposal_id


def timeout_message(view: int, tip_view: Optional[int], qc_view: int) -> bytes:
    return b"tmo" + _U64.pack(view) + opt_view(tip_view) + _U64.pack(qc_view)


def ne_message(view: int, high_tip_qc_view: int) -> bytes:
    return b"ne" + _U64.pack(view) + _U64.pack(high_tip_qc_view)


@dataclass(frozen=True)
class Signature:
    signer: int
    tag: bytes

    @cached_property
    def encoded(self) -> bytes:
        return _U16.pack(self.signer) + lp(self.tag)


@dataclass(frozen=True)
class AggregateSignature:
    """Signer-sorted list of individual tags.

    What each signer signed is not stored: verifiers rebuild it from the
    certificate fields (identical for QCs and NECs, per-signer for TCs).
    """
    signers: tuple[int, ...]
    tags: tuple[bytes, ...]

    @cached_property
    def encoded(self) -> bytes:
        parts = [_U16.pack(len(self.signers))]
        for s, t in zip(self.signers, self.tags):
            parts.append(_U16.pack(s))
            parts.append(lp(t))
        return b"".join(parts)

    def __len__(self) -> int:
        return len(self.signers)


EMPTY_AGG = AggregateSignature((), ())


@dataclass(frozen=True)
class QuorumCertificate:
    view: int
    block_hash: bytes
    proposal_id: bytes
    agg: AggregateSignature

    @cached_property
    def encoded(self) -> bytes:
        return b"Q" + _U64.pack(self.view) + self.block_hash + self.proposal_id + self.agg.encoded


def hash_block(block_view: int, payload_hash: bytes, qc: QuorumCertificate) -> bytes:
    return digest(b"block" + _U64.pack(block_view) + payload_hash + qc.encoded)


def proposal_id_of(block_hash: bytes, view: int) -> bytes:
    return digest(b"pid" + block_hash + _U64.pack(view))


@dataclass(frozen=True)
class BlockHeader:
    block_view: int
    payload_hash: bytes
    qc: QuorumCertificate
    block_hash: bytes

    @cached_property
    def encoded(self) -> bytes:
        return b"H" + _U64.pack(self.block_view) + self.payload_hash + self.qc.encoded + self.block_hash


@dataclass(frozen=True)
class Block:
    block_view: int
    payload: bytes
    payload_hash: bytes
    qc: QuorumCertificate
    block_hash: bytes

    @classmethod
    def build(cls, block_view: int, payload: bytes, qc: QuorumCertificate) -> "Block":
        ph = digest(payload)
        return cls(block_view, payload, ph, qc, hash_block(block_view, ph, qc))

    @cached_property
    def header(self) -> BlockHeader:
        return BlockHeader(self.block_view, self.payload_hash, self.qc, self.block_hash)

    @cached_property
    def encoded(self) -> bytes:
        return (b"B" + _U64.pack(self.block_view) + lp(self.payload) + self.payload_hash
                + self.qc.encoded + self.block_hash)


@dataclass(frozen=True)
class Tip:
    view: int
    proposal_id: bytes
    header: BlockHeader
    sig: Optional[Signature]
    tc: Optional["TimeoutCertificate"]
    nec: Optional["NoEndorsementCertificate"]

    @cached_property
    def encoded(self) -> bytes:
        return (b"T" + _U64.pack(self.view) + self.proposal_id + self.header.encoded
                + _opt(self.sig) + _opt(self.tc) + _opt(self.nec))


@dataclass(frozen=True)
class TimeoutCertificate:
    view: int
    tips_views: tuple[tuple[int, Optional[int]], ...]
    high_tip: Optional[Tip]
    qcs_views: tuple[tuple[int, int], ...]
    high_qc: Optional[QuorumCertificate]
    agg: AggregateSignature

    @cached_property
    def encoded(self) -> bytes:
        parts = [b"C", _U64.pack(self.view), _U16.pack(len(self.tips_views))]
        for i, v in self.tips_views:
            parts.append(_U16.pack(i) + opt_view(v))
        parts.append(_opt(self.high_tip))
        parts.append(_U16.pack(len(self.qcs_views)))
        for i, v in self.qcs_views:
            parts.append(_U16.pack(i) + _U64.pack(v))
        parts.append(_opt(self.high_qc))
        parts.append(self.agg.encoded)
        return b"".join(parts)

    @cached_property
    def tips_map(self) -> dict[int, Optional[int]]:
        return dict(self.tips_views)

    @cached_property
    def qcs_map(self) -> dict[int, int]:
        return dict(self.qcs_views)


@dataclass(frozen=True)
class NoEndorsementCertificate:
    view: int
    high_tip_qc_view: int
    agg: AggregateSignature

    @cached_property
    def encoded(self) -> bytes:
        return b"N" + _U64.pack(self.view) + _U64.pack(self.high_tip_qc_view) + self.agg.encoded


@dataclass(frozen=True)
class Proposal:
    view: int
    proposal_id: bytes
    block: Block
    sig: Optional[Signature]
    tc: Optional[TimeoutCertificate]
    nec: Optional[NoEndorsementCertificate]

    @cached_property
    def encoded(self) -> bytes:
        return (b"P" + _U64.pack(self.view) + self.proposal_id + self.block.encoded
                + _opt(self.sig) + _opt(self.tc) + _opt(self.nec))

    @property
    def is_fresh(self) -> bool:
        return is_fresh_proposal(self)

    def tip(self) -> Tip:
        """Exact header projection; ``attach_payload`` inverts it."""
        return Tip(self.view, self.proposal_id, self.block.header, self.sig, self.tc, self.nec)


def attach_payload(tip: Tip, payload: bytes) -> Proposal:
    h = tip.header
    block = Block(h.block_view, payload, h.payload_hash, h.qc, h.block_hash)
    return Proposal(tip.view, tip.proposal_id, block, tip.sig, tip.tc, tip.nec)


def is_fresh_proposal(p: Union[Proposal, Tip]) -> bool:
    qc = p.block.qc if isinstance(p, Proposal) else p.header.qc
    if qc.view == p.view - 1 or p.nec is not None:
        return True
    return p.tc is not None and p.tc.high_qc is not None


def compact_tip(p: Proposal) -> Tip:
    """Tip of a proposal with the recursive TC reference removed.

    A tip carrying an NEC drops its TC; otherwise any carried TC has a high
    QC (fresh proposals built from a high-tip TC always carry an NEC).
    """
    tc = None if p.nec is not None else p.tc
    return Tip(p.view, p.proposal_id, p.block.header, p.sig, tc, p.nec)


def get_tip(p: Proposal) -> Tip:
    if is_fresh_proposal(p):
        return compact_tip(p)
    return p.tc.high_tip


@dataclass(frozen=True)
class Vote:
    view: int
    block_hash: bytes
    proposal_id: bytes
    sig: Signature

    @cached_property
    def encoded(self) -> bytes:
        return b"V" + _U64.pack(self.view) + self.block_hash + self.proposal_id + self.sig.encoded


Certificate = Union[QuorumCertificate, TimeoutCertificate]


@dataclass(frozen=True)
class TimeoutMessage:
    view: int
    tip: Optional[Tip]
    tip_vote: Optional[Vote]
    qc: Optional[QuorumCertificate]
    last_cer: Certificate
    sig: Signature

    @cached_property
    def encoded(self) -> bytes:
        cer = self.last_cer
        tag = b"\x01" if isinstance(cer, QuorumCertificate) else b"\x02"
        return (b"M" + _U64.pack(self.view) + _opt(self.tip) + _opt(self.tip_vote)
                + _opt(self.qc) + tag + cer.encoded + self.sig.encoded)


# Recovery and sync messages.

@dataclass(frozen=True)
class ProposalRequest:
    tc: TimeoutCertificate

    @cached_property
    def encoded(self) -> bytes:
        return b"R" + self.tc.encoded


@dataclass(frozen=True)
class ProposalResponse:
    proposal: Proposal

    @cached_property
    def encoded(self) -> bytes:
        return b"S" + self.proposal.encoded


@dataclass(frozen=True)
class NERequest:
    tc: TimeoutCertificate

    @cached_property
    def encoded(self) -> bytes:
        return b"E" + self.tc.encoded


@dataclass(frozen=True)
class NoEndorsement:
    view: int
    high_tip_qc_view: int
    sig: Signature

    @cached_property
    def encoded(self) -> bytes:
        return b"X" + _U64.pack(self.view) + _U64.pack(self.high_tip_qc_view) + self.sig.encoded


@dataclass(frozen=True)
class SyncRequest:
    block_hash: bytes

    @cached_property
    def encoded(self) -> bytes:
        return b"Y" + self.block_hash


Message = Union[Proposal, Vote, QuorumCertificate, TimeoutMessage, TimeoutCertificate,
                ProposalRequest, ProposalResponse, NERequest, NoEndorsement, SyncRequest]

MESSAGE_KINDS = {
    Proposal: "proposal",
    Vote: "vote",
    QuorumCertificate: "qc",
    TimeoutMessage: "timeout",
    TimeoutCertificate: "tc",
    ProposalRequest: "proposal_request",
    ProposalResponse: "proposal_response",
    NERequest: "ne_request",
    NoEndorsement: "ne",
    SyncRequest: "sync_request",
}


def message_kind(msg) -> str:
    return MESSAGE_KINDS[type(msg)]


def message_view(msg) -> Optional[int]:
    """View a message is attributed to for accounting purposes."""
    t = type(msg)
    if t is ProposalRequest or t is NERequest:
        return msg.tc.view + 1
    if t is ProposalResponse:
        return None
    if t is SyncRequest:
        return None
    return msg.view


# Genesis.  The null QC is the parent pointer of the genesis block only.
NULL_QC = QuorumCertificate(0, ZERO_DIGEST, ZERO_DIGEST, EMPTY_AGG)
GENESIS_BLOCK = Block.build(0, b"", NULL_QC)
GENESIS_PROPOSAL_ID = proposal_id_of(GENESIS_BLOCK.block_hash, 0)
GENESIS_QC = QuorumCertificate(0, GENESIS_BLOCK.block_hash, GENESIS_PROPOSAL_ID, EMPTY_AGG)
GENESIS_PROPOSAL = Proposal(0, GENESIS_PROPOSAL_ID, GENESIS_BLOCK, None, None, None)
GENESIS_TIP = GENESIS_PROPOSAL.tip()


def is_genesis_qc(qc: QuorumCertificate) -> bool:
    return qc.view == 0 and qc.encoded == GENESIS_QC.encoded


def is_genesis_tip(tip: Tip) -> bool:
    return tip.view == 0 and tip.encoded == GENESIS_TIP.encoded


# Ancestry over a block store (block_hash -> Block or BlockHeader).

def _as_header(x):
    if isinstance(x, Proposal):
        return x.block
    if isinstance(x, Tip):
        return x.header
    return x


def is_ancestor(store: Mapping[bytes, Union[Block, BlockHeader]], ancestor, descendant) -> Optional[bool]:
    """True if ``descendant`` equals or extends ``ancestor``.

    Accepts blocks, headers, proposals or tips.  Returns None when the parent
    chain cannot be resolved from ``store``.  Relies on parents having
    strictly smaller block views.
    """
    ancestor = _as_header(ancestor)
    b = _as_header(descendant)
    target_view = ancestor.block_view
    while b.block_view > target_view:
        parent = store.get(b.qc.block_hash)
        if parent is None:
            return None
        b = parent
    return b.block_hash == ancestor.block_hash


def extends(store, descendant, ancestor) -> Optional[bool]:
    return is_ancestor(store, ancestor, descendant)


def strictly_extends(store, descendant, ancestor) -> Optional[bool]:
    if _as_header(descendant).block_hash == _as_header(ancestor).block_hash:
        return False
    return is_ancestor(store, ancestor, descendant)


def conflicting(store, a, b) -> Optional[bool]:
    """Neither block extends the other; None if undecidable from ``store``."""
    a, b = _as_header(a), _as_header(b)
    lo, hi = (a, b) if a.block_view <= b.block_view else (b, a)
    r = is_ancestor(store, lo, hi)
    return None if r is None else not r
