"""Programmatic scenario configs used by sweeps and the acceptance suite."""
from __future__ import annotations

from typing import Optional

from .config import ScenarioConfig, from_dict

STRATEGY_PARAMS: dict[str, dict] = {
    "offline": {},
    "equivocate": {"groups": "random", "cross_after": 3},
    "tail_fork": {},
    "withhold_votes": {},
    "silent_leader_then_honest": {},
    "custom": {"rules": [
        {"kind": "proposal", "leading": True, "to": [1], "do": "drop"},
        {"kind": "vote", "do": "delay", "ticks": 7},
        {"kind": "timeout", "do": "hide_tip"},
        {"dir": "in", "kind": "qc", "do": "drop"},
    ]},
}

SWEEP_STRATEGIES = tuple(STRATEGY_PARAMS)


def byzantine_ids(n: int) -> list[int]:
    """Validators 2, 5, 8, ... up to f of them (each has correct neighbours)."""
    f = (n - 1) // 3
    return [2 + 3 * k for k in range(f)]


def sweep_config(n: int, strategy: Optional[str], *, horizon_views: int = 40, gst: int = 200,
                 big_delta: int = 10, delta_range=(1, 10), single: bool = False,
                 params: Optional[dict] = None, name: Optional[str] = None) -> ScenarioConfig:
    """Random-delay config with ``strategy`` on every Byzantine id (or just the first)."""
    advs = []
    if strategy is not None:
        ids = byzantine_ids(n)[:1] if single else byzantine_ids(n)
        p = STRATEGY_PARAMS.get(strategy, {}) if params is None else params
        advs = [{"validator": i, "strategy": strategy, "params": p} for i in ids]
    return from_dict({
        "name": name or f"sweep_n{n}_{strategy or 'all_correct'}",
        "n": n,
        "timing": {"gst": gst, "big_delta": big_delta, "delta_range": list(delta_range)},
        "horizon": {"views": horizon_views},
        "adversaries": advs,
    })
