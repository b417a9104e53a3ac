"""Leader-side state for fetching a missing high-tip block or proving nobody endorsed it."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .crypto import aggregate
from .types import NoEndorsementCertificate, Proposal, Signature, TimeoutCertificate

PENDING = "pending"
GOT_PROPOSAL = "got_proposal"
GOT_NEC = "got_nec"
ABORTED = "aborted"


def request_order(tc: TimeoutCertificate, self_id: int, ids) -> list[int]:
    """Validators that reported the high tip first, then the rest by id; never self."""
    tip_view = tc.high_tip.view
    reporters = [i for i, v in tc.tips_views if v == tip_view and i != self_id]
    rest = [i for i in ids if i != self_id and i not in reporters]
    return sorted(reporters) + rest


@dataclass
class RecoverySession:
    tc: TimeoutCertificate
    view: int
    quorum: int
    order: list[int]
    started_at: int
    requested: list[int] = field(default_factory=list)
    ne_set: dict[int, Signature] = field(default_factory=dict)
    next_batch_deadline: Optional[int] = None
    status: str = PENDING
    result: Optional[object] = None

    @property
    def pending(self) -> bool:
        return self.status == PENDING

    @property
    def target_pid(self) -> bytes:
        return self.tc.high_tip.proposal_id

    @property
    def high_tip_qc_view(self) -> int:
        return self.tc.high_tip.header.qc.view

    def next_batch(self, kappa: int) -> list[int]:
        start = len(self.requested)
        batch = self.order[start:start + kappa]
        self.requested.extend(batch)
        return batch

    @property
    def exhausted(self) -> bool:
        return len(self.requested) >= len(self.order)

    def on_proposal(self, p: Proposal) -> bool:
        """Accept a response only if it is exactly the high-tip proposal."""
        if not self.pending or p.proposal_id != self.target_pid:
            return False
        self.status = GOT_PROPOSAL
        self.result = p
        return True

    def on_ne(self, sig: Signature) -> Optional[NoEndorsementCertificate]:
        """Count one NE per signer; the quorum-th distinct one yields the NEC."""
        if not self.pending or sig.signer in self.ne_set:
            return None
        self.ne_set[sig.signer] = sig
        if len(self.ne_set) < self.quorum:
            return None
        nec = NoEndorsementCertificate(self.view, self.high_tip_qc_view, aggregate(self.ne_set.values()))
        self.status = GOT_NEC
        self.result = nec
        return nec

    def abort(self) -> None:
        if self.pending:
            self.status = ABORTED
