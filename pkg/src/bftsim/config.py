"""Scenario configuration: JSON loading and validation."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .pacemaker import TimingConfig


class ConfigError(ValueError):
    """Raised for any invalid scenario configuration."""


DEFAULT_OUTPUTS = {
    "trace": "{name}-seed{seed}.trace.jsonl",
    "metrics": "{name}-seed{seed}.metrics.json",
    "verdicts": "{name}-seed{seed}.verdicts.json",
    "trace_deliveries": False,
}

_TOP_KEYS = {
    "name", "description", "n", "f", "seed", "key_seed", "timing", "horizon", "adversaries",
    "network_rules", "payload_size", "leader_schedule", "backup_qc", "outputs", "checker",
}
_TIMING_KEYS = {"gst", "big_delta", "delta_range", "kappa", "theta_interval", "theta_recovery", "theta_view"}


@dataclass(frozen=True)
class AdversarySpec:
    validator: int
    strategy: str
    params: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"validator": self.validator, "strategy": self.strategy, "params": self.params}


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    n: int
    f: int
    gst: int
    big_delta: int
    delta_min: int
    delta_max: int
    timing: TimingConfig
    horizon_views: Optional[int]
    horizon_ticks: Optional[int]
    adversaries: tuple[AdversarySpec, ...] = ()
    network_rules: tuple[dict, ...] = ()
    payload_size: int = 32
    backup_qc: bool = True
    seed: int = 0
    key_seed: Optional[int] = None
    outputs: dict = field(default_factory=lambda: dict(DEFAULT_OUTPUTS))
    checker_c: int = 6
    checker_c_prime: int = 8
    description: str = ""

    @property
    def byzantine(self) -> tuple[int, ...]:
        return tuple(sorted(a.validator for a in self.adversaries))

    @property
    def correct(self) -> tuple[int, ...]:
        byz = set(self.byzantine)
        return tuple(i for i in range(1, self.n + 1) if i not in byz)

    def key_seed_for(self, seed: int) -> int:
        return seed if self.key_seed is None else self.key_seed

    def with_overrides(self, **changes) -> "ScenarioConfig":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(changes)
        return ScenarioConfig(**d)

    def as_dict(self) -> dict:
        """Normalized JSON form; ``from_dict(as_dict())`` is the identity."""
        return {
            "name": self.name,
            "description": self.description,
            "n": self.n,
            "f": self.f,
            "seed": self.seed,
            "key_seed": self.key_seed,
            "timing": {
                "gst": self.gst,
                "big_delta": self.big_delta,
                "delta_range": [self.delta_min, self.delta_max],
                **{k: v for k, v in self.timing.as_dict().items() if k != "big_delta"},
            },
            "horizon": {"views": self.horizon_views, "max_ticks": self.horizon_ticks},
            "adversaries": [a.as_dict() for a in self.adversaries],
            "network_rules": [dict(r) for r in self.network_rules],
            "payload_size": self.payload_size,
            "leader_schedule": "round_robin",
            "backup_qc": self.backup_qc,
            "outputs": dict(self.outputs),
            "checker": {"c": self.checker_c, "c_prime": self.checker_c_prime},
        }


def _int(d: dict, key: str, default=None, minimum: Optional[int] = 0, where: str = "") -> Optional[int]:
    v = d.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}{key} must be an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{where}{key} must be >= {minimum}, got {v}")
    return v


def from_dict(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    n = _int(raw, "n", minimum=1)
    if n is None:
        raise ConfigError("n is required")
    f = _int(raw, "f", default=(n - 1) // 3)
    if n != 3 * f + 1:
        raise ConfigError(f"n must equal 3f+1 (n={n}, f={f})")

    timing = raw.get("timing", {})
    if not isinstance(timing, dict):
        raise ConfigError("timing must be an object")
    unknown = set(timing) - _TIMING_KEYS
    if unknown:
        raise ConfigError(f"unknown timing keys: {sorted(unknown)}")
    big_delta = _int(timing, "big_delta", minimum=1, where="timing.")
    if big_delta is None:
        raise ConfigError("timing.big_delta is required")
    gst = _int(timing, "gst", default=0, where="timing.")
    dr = timing.get("delta_range", [1, big_delta])
    if (not isinstance(dr, list) or len(dr) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) for x in dr)):
        raise ConfigError("timing.delta_range must be [delta_min, delta_max]")
    dmin, dmax = dr
    if not 0 <= dmin <= dmax <= big_delta:
        raise ConfigError(f"need 0 <= delta_min <= delta_max <= big_delta, got {dr} with big_delta={big_delta}")
    try:
        tcfg = TimingConfig.derive(
            n, big_delta,
            kappa=_int(timing, "kappa", default=2, minimum=1, where="timing."),
            theta_interval=_int(timing, "theta_interval", minimum=1, where="timing."),
            theta_recovery=_int(timing, "theta_recovery", minimum=1, where="timing."),
            theta_view=_int(timing, "theta_view", minimum=1, where="timing."),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from None

    horizon = raw.get("horizon", {"views": 40})
    if not isinstance(horizon, dict):
        raise ConfigError("horizon must be an object with 'views' and/or 'max_ticks'")
    hv = _int(horizon, "views", minimum=1, where="horizon.")
    ht = _int(horizon, "max_ticks", minimum=1, where="horizon.")
    if hv is None and ht is None:
        raise ConfigError("horizon needs 'views' or 'max_ticks'")

    advs = []
    seen = set()
    for a in raw.get("adversaries", []):
        if not isinstance(a, dict) or "validator" not in a or "strategy" not in a:
            raise ConfigError("each adversary needs 'validator' and 'strategy'")
        vid = _int(a, "validator", minimum=1, where="adversary.")
        if vid > n:
            raise ConfigError(f"adversary validator {vid} out of range 1..{n}")
        if vid in seen:
            raise ConfigError(f"validator {vid} has two adversary specs")
        seen.add(vid)
        params = a.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("adversary params must be an object")
        advs.append(AdversarySpec(vid, str(a["strategy"]), copy.deepcopy(params)))
    if len(advs) > f:
        raise ConfigError(f"at most f={f} adversaries allowed, got {len(advs)}")

    rules = raw.get("network_rules", [])
    if not isinstance(rules, list) or not all(isinstance(r, dict) for r in rules):
        raise ConfigError("network_rules must be a list of objects")

    schedule = raw.get("leader_schedule", "round_robin")
    if schedule != "round_robin":
        raise ConfigError("leader_schedule must be 'round_robin'")

    backup = raw.get("backup_qc", True)
    if not isinstance(backup, bool):
        raise ConfigError("backup_qc must be a boolean")

    outputs = dict(DEFAULT_OUTPUTS)
    outputs.update(raw.get("outputs", {}))
    checker = raw.get("checker", {})

    payload_size = _int(raw, "payload_size", default=32, minimum=14)
    return ScenarioConfig(
        name=str(raw.get("name", "scenario")),
        description=str(raw.get("description", "")),
        n=n, f=f, gst=gst, big_delta=big_delta, delta_min=dmin, delta_max=dmax, timing=tcfg,
        horizon_views=hv, horizon_ticks=ht,
        adversaries=tuple(advs), network_rules=tuple(copy.deepcopy(rules)),
        payload_size=payload_size, backup_qc=backup,
        seed=_int(raw, "seed", default=0), key_seed=_int(raw, "key_seed"),
        outputs=outputs,
        checker_c=_int(checker, "c", default=6, where="checker."),
        checker_c_prime=_int(checker, "c_prime", default=8, where="checker."),
    )


def load(path) -> ScenarioConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from None
    return from_dict(raw)


def load_any(source: Any) -> ScenarioConfig:
    """Accepts a path, a dict, an already-built config or a bundled scenario name."""
    if isinstance(source, ScenarioConfig):
        return source
    if isinstance(source, dict):
        return from_dict(source)
    p = Path(source)
    if p.exists():
        return load(p)
    from .scenarios import bundled_path
    bp = bundled_path(str(source))
    if bp is None:
        raise ConfigError(f"no such config file or bundled scenario: {source}")
    return load(bp)
