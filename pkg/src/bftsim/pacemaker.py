"""Timing constants and timeout-certificate construction."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

from .crypto import aggregate
from .types import TimeoutCertificate, TimeoutMessage


@dataclass(frozen=True)
class TimingConfig:
    big_delta: int
    theta_interval: int
    kappa: int
    theta_recovery: int
    theta_view: int

    @classmethod
    def derive(cls, n: int, big_delta: int, kappa: int = 2, theta_interval: Optional[int] = None,
               theta_recovery: Optional[int] = None, theta_view: Optional[int] = None) -> "TimingConfig":
        """Fill unset durations from the standard formulas.

        recovery = (ceil(n / kappa) - 1) * interval + 2*Delta
        view     = 3*Delta + recovery + 3*Delta
        """
        if kappa < 1:
            raise ValueError("kappa must be >= 1")
        interval = 2 * big_delta if theta_interval is None else theta_interval
        recovery = ((math.ceil(n / kappa) - 1) * interval + 2 * big_delta
                    if theta_recovery is None else theta_recovery)
        view = 6 * big_delta + recovery if theta_view is None else theta_view
        return cls(big_delta, interval, kappa, recovery, view)

    def as_dict(self) -> dict:
        return {
            "big_delta": self.big_delta,
            "theta_interval": self.theta_interval,
            "kappa": self.kappa,
            "theta_recovery": self.theta_recovery,
            "theta_view": self.theta_view,
        }


def liveness_threshold(gst: int, f: int, timing: TimingConfig, delta: int) -> int:
    """Time after which every correct-leader block must get committed."""
    return gst + (f + 1) * (2 * timing.theta_view + 2 * delta) + 4 * delta + timing.theta_recovery


def timeout_views(m: TimeoutMessage) -> tuple[Optional[int], int]:
    """(tip view or None, qc view) exactly as covered by the timeout signature."""
    if m.tip is not None:
        return m.tip.view, m.tip.header.qc.view
    return None, m.qc.view


def build_tc(view: int, msgs: Mapping[int, TimeoutMessage]) -> TimeoutCertificate:
    """Aggregate a quorum of timeout messages for ``view``.

    If the highest reported tip is newer than every reported QC, the TC
    embeds that tip (ties: higher QC view, then lower validator id);
    otherwise it embeds the highest QC.
    """
    ids = sorted(msgs)
    tips: dict[int, Optional[int]] = {}
    qcs: dict[int, int] = {}
    for i in ids:
        tips[i], qcs[i] = timeout_views(msgs[i])
    max_tip = max((v for v in tips.values() if v is not None), default=0)
    max_qc = max(qcs.values(), default=0)
    high_tip = high_qc = None
    if max_tip > max_qc:
        best = min((i for i in ids if tips[i] == max_tip), key=lambda i: (-qcs[i], i))
        high_tip = msgs[best].tip
    else:
        best = min(i for i in ids if msgs[i].qc is not None and qcs[i] == max_qc)
        high_qc = msgs[best].qc
    agg = aggregate(msgs[i].sig for i in ids)
    return TimeoutCertificate(
        view=view,
        tips_views=tuple((i, tips[i]) for i in ids),
        high_tip=high_tip,
        qcs_views=tuple((i, qcs[i]) for i in ids),
        high_qc=high_qc,
        agg=agg,
    )
