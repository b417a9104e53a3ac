"""Decoding of the canonical encoding produced by ``bftsim.types``."""
from __future__ import annotations

import struct

from .types import (
    AggregateSignature, Block, BlockHeader, NERequest, NoEndorsement, NoEndorsementCertificate,
    Proposal, ProposalRequest, ProposalResponse, QuorumCertificate, Signature, SyncRequest,
    TimeoutCertificate, TimeoutMessage, Tip, Vote, DIGEST_SIZE,
)


class DecodeError(ValueError):
    pass


class _Reader:
    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, k: int) -> bytes:
        end = self.pos + k
        if end > len(self.buf):
            raise DecodeError("truncated input")
        out = self.buf[self.pos:end]
        self.pos = end
        return out

    def tag(self, expected: bytes) -> None:
        got = self.take(len(expected))
        if got != expected:
            raise DecodeError(f"expected tag {expected!r}, got {got!r}")

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def digest(self) -> bytes:
        return self.take(DIGEST_SIZE)

    def blob(self) -> bytes:
        return self.take(self.u32())

    def present(self) -> bool:
        b = self.u8()
        if b not in (0, 1):
            raise DecodeError(f"bad presence byte {b}")
        return b == 1

    def opt_view(self):
        return self.u64() if self.present() else None


def _sig(r: _Reader) -> Signature:
    return Signature(r.u16(), r.blob())


def _agg(r: _Reader) -> AggregateSignature:
    count = r.u16()
    signers, tags = [], []
    for _ in range(count):
        signers.append(r.u16())
        tags.append(r.blob())
    return AggregateSignature(tuple(signers), tuple(tags))


def _qc(r: _Reader) -> QuorumCertificate:
    r.tag(b"Q")
    return QuorumCertificate(r.u64(), r.digest(), r.digest(), _agg(r))


def _header(r: _Reader) -> BlockHeader:
    r.tag(b"H")
    return BlockHeader(r.u64(), r.digest(), _qc(r), r.digest())


def _block(r: _Reader) -> Block:
    r.tag(b"B")
    return Block(r.u64(), r.blob(), r.digest(), _qc(r), r.digest())


def _tip(r: _Reader) -> Tip:
    r.tag(b"T")
    view, pid, header = r.u64(), r.digest(), _header(r)
    sig = _sig(r) if r.present() else None
    tc = _tc(r) if r.present() else None
    nec = _nec(r) if r.present() else None
    return Tip(view, pid, header, sig, tc, nec)


def _tc(r: _Reader) -> TimeoutCertificate:
    r.tag(b"C")
    view = r.u64()
    tips = tuple((r.u16(), r.opt_view()) for _ in range(r.u16()))
    high_tip = _tip(r) if r.present() else None
    qcs = tuple((r.u16(), r.u64()) for _ in range(r.u16()))
    high_qc = _qc(r) if r.present() else None
    return TimeoutCertificate(view, tips, high_tip, qcs, high_qc, _agg(r))


def _nec(r: _Reader) -> NoEndorsementCertificate:
    r.tag(b"N")
    return NoEndorsementCertificate(r.u64(), r.u64(), _agg(r))


def _proposal(r: _Reader) -> Proposal:
    r.tag(b"P")
    view, pid, block = r.u64(), r.digest(), _block(r)
    sig = _sig(r) if r.present() else None
    tc = _tc(r) if r.present() else None
    nec = _nec(r) if r.present() else None
    return Proposal(view, pid, block, sig, tc, nec)


def _vote(r: _Reader) -> Vote:
    r.tag(b"V")
    return Vote(r.u64(), r.digest(), r.digest(), _sig(r))


def _timeout(r: _Reader) -> TimeoutMessage:
    r.tag(b"M")
    view = r.u64()
    tip = _tip(r) if r.present() else None
    tip_vote = _vote(r) if r.present() else None
    qc = _qc(r) if r.present() else None
    kind = r.u8()
    if kind == 1:
        cer = _qc(r)
    elif kind == 2:
        cer = _tc(r)
    else:
        raise DecodeError(f"bad certificate kind {kind}")
    return TimeoutMessage(view, tip, tip_vote, qc, cer, _sig(r))


def _proposal_request(r):
    r.tag(b"R")
    return ProposalRequest(_tc(r))


def _proposal_response(r):
    r.tag(b"S")
    return ProposalResponse(_proposal(r))


def _ne_request(r):
    r.tag(b"E")
    return NERequest(_tc(r))


def _ne(r):
    r.tag(b"X")
    return NoEndorsement(r.u64(), r.u64(), _sig(r))


def _sync(r):
    r.tag(b"Y")
    return SyncRequest(r.digest())


_BY_TAG = {
    b"Q": _qc, b"H": _header, b"B": _block, b"T": _tip, b"C": _tc, b"N": _nec, b"P": _proposal,
    b"V": _vote, b"M": _timeout, b"R": _proposal_request, b"S": _proposal_response,
    b"E": _ne_request, b"X": _ne, b"Y": _sync,
}


def decode(data: bytes):
    """Decode any top-level encoded value; the leading tag selects the type."""
    if not data:
        raise DecodeError("empty input")
    fn = _BY_TAG.get(data[:1])
    if fn is None:
        raise DecodeError(f"unknown tag {data[:1]!r}")
    r = _Reader(data)
    obj = fn(r)
    if r.pos != len(data):
        raise DecodeError("trailing bytes")
    return obj


def decode_hex(text: str):
    return decode(bytes.fromhex(text))
