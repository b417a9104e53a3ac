"""Assembling and running one simulation from a scenario config."""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .adversary import ByzantineNode, make_strategy
from .config import ConfigError, ScenarioConfig
from .crypto import make_keys
from .network import NetworkConfig, NetworkRule, Simulator
from .pacemaker import liveness_threshold
from .validation import Committee
from .validator import Validator


def make_payload_fn(size: int, seed: int):
    """Payload = view | leader | sequence number, padded with seed-derived filler."""
    def payload(view: int, leader: int, seq: int) -> bytes:
        head = view.to_bytes(8, "big") + leader.to_bytes(2, "big") + seq.to_bytes(4, "big")
        need = size - len(head)
        if need <= 0:
            return head
        filler = hashlib.shake_256(b"payload" + seed.to_bytes(8, "big", signed=True) + head).digest(need)
        return head + filler
    return payload


def meta_record(cfg: ScenarioConfig, seed: int) -> dict:
    return {
        "t": 0, "validator": None, "kind": "meta", "view": None,
        "seed": seed,
        "key_seed": cfg.key_seed_for(seed),
        "byzantine": list(cfg.byzantine),
        "config": cfg.as_dict(),
        "derived": {
            **cfg.timing.as_dict(),
            "quorum": 2 * cfg.f + 1,
            "liveness_threshold": liveness_threshold(cfg.gst, cfg.f, cfg.timing, cfg.big_delta),
        },
    }


@dataclass
class RunResult:
    config: ScenarioConfig
    seed: int
    meta: dict
    records: list
    finished_reason: str
    end_time: int

    @property
    def trace(self) -> list:
        """Meta header followed by the event records."""
        return [self.meta] + self.records


def build(cfg: ScenarioConfig, seed: Optional[int] = None) -> Simulator:
    seed = cfg.seed if seed is None else seed
    keys = make_keys(cfg.key_seed_for(seed), cfg.n)
    committee = Committee(cfg.n, cfg.f, {i: k.public for i, k in keys.items()})
    try:
        net = NetworkConfig(cfg.gst, cfg.big_delta, cfg.delta_min, cfg.delta_max, seed)
        rules = [NetworkRule.from_dict(r) for r in cfg.network_rules]
    except (ValueError, TypeError, KeyError) as e:
        raise ConfigError(str(e)) from None
    sim = Simulator({}, committee, net, cfg.correct, rules, horizon_views=cfg.horizon_views,
                    max_ticks=cfg.horizon_ticks, trace_deliveries=bool(cfg.outputs.get("trace_deliveries")))
    payload_fn = make_payload_fn(cfg.payload_size, seed)
    specs = {a.validator: a for a in cfg.adversaries}
    for vid in range(1, cfg.n + 1):
        core = Validator(vid, committee, keys[vid], cfg.timing, payload_fn=payload_fn, trace=sim.record,
                         backup_qc=cfg.backup_qc)
        spec = specs.get(vid)
        if spec is None:
            sim.nodes[vid] = core
            continue
        rng = random.Random(f"adversary:{seed}:{vid}")
        try:
            strategy = make_strategy(spec.strategy, spec.params, rng)
            sim.nodes[vid] = ByzantineNode(core, strategy)
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError, StopIteration) as e:
            raise ConfigError(f"bad params for {spec.strategy} at validator {vid}: {e}") from None
    return sim


def run(cfg: ScenarioConfig, seed: Optional[int] = None) -> RunResult:
    seed = cfg.seed if seed is None else seed
    sim = build(cfg, seed)
    sim.run()
    return RunResult(cfg, seed, meta_record(cfg, seed), sim.trace, sim.finished_reason, sim.now)


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"))


def write_trace(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(dumps_record(rec))
            fh.write("\n")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def output_paths(cfg: ScenarioConfig, seed: int, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    fmt = {"name": cfg.name, "seed": seed}
    return {k: out / str(cfg.outputs[k]).format(**fmt) for k in ("trace", "metrics", "verdicts")}
