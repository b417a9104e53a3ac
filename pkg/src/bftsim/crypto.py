"""Deterministic test signature scheme.

Tags are HMAC-SHA256 under a per-validator secret derived from a key seed.
The "public" half carries the same key: this is an idealized PKI in which the
simulator, not the math, keeps Byzantine code from touching correct
validators' secrets.  Aggregation is a signer-sorted concatenation, and
verifying an aggregate is the conjunction of member verifications.
"""
from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Union

from .types import AggregateSignature, Signature


@dataclass(frozen=True)
class PublicKey:
    validator: int
    key: bytes


@dataclass(frozen=True)
class KeyPair:
    validator: int
    secret: bytes
    public: PublicKey


def keygen(key_seed: int, validator: int) -> KeyPair:
    secret = hashlib.sha256(b"bftsim-key" + key_seed.to_bytes(8, "big") + validator.to_bytes(2, "big")).digest()
    return KeyPair(validator, secret, PublicKey(validator, secret))


def make_keys(key_seed: int, n: int) -> dict[int, KeyPair]:
    return {i: keygen(key_seed, i) for i in range(1, n + 1)}


def sign(key: KeyPair, msg: bytes) -> Signature:
    return Signature(key.validator, hmac.digest(key.secret, msg, "sha256"))


def verify(public: PublicKey, msg: bytes, sig: Signature) -> bool:
    if sig.signer != public.validator:
        return False
    return hmac.compare_digest(hmac.digest(public.key, msg, "sha256"), sig.tag)


def aggregate(sigs: Iterable[Signature]) -> AggregateSignature:
    """Combine individual signatures; a repeated signer raises ValueError."""
    by_signer: dict[int, bytes] = {}
    for s in sigs:
        if s.signer in by_signer:
            raise ValueError(f"duplicate signer {s.signer} in aggregate")
        by_signer[s.signer] = s.tag
    order = sorted(by_signer)
    return AggregateSignature(tuple(order), tuple(by_signer[i] for i in order))


MessageFor = Union[bytes, Mapping[int, bytes], Callable[[int], bytes]]


def verify_aggregate(publics: Mapping[int, PublicKey], agg: AggregateSignature, messages: MessageFor) -> bool:
    """Check every member tag; ``messages`` gives what each signer signed."""
    signers = agg.signers
    if len(signers) != len(agg.tags) or len(set(signers)) != len(signers):
        return False
    for signer, tag in zip(signers, agg.tags):
        pub = publics.get(signer)
        if pub is None:
            return False
        if isinstance(messages, bytes):
            msg = messages
        elif callable(messages):
            msg = messages(signer)
        else:
            msg = messages.get(signer)
            if msg is None:
                return False
        if not hmac.compare_digest(hmac.digest(pub.key, msg, "sha256"), tag):
            return False
    return True
