"""End-to-end acceptance criteria, each reported as one PASS/FAIL line."""
import time

import pytest

from bftsim import cli, scenario
from bftsim.checker import TraceContext, check_trace
from bftsim.codec import decode
from bftsim.config import load_any
from bftsim.metrics import block_latencies
from bftsim.network import Simulator
from bftsim.presets import SWEEP_STRATEGIES, sweep_config
from bftsim.sweep import sweep
from bftsim.types import (
    NERequest, NoEndorsement, Proposal, ProposalRequest, ProposalResponse, QuorumCertificate, SyncRequest,
    TimeoutCertificate, TimeoutMessage, Vote,
)

from conftest import ACCEPTANCE_LINES

SEEDS = 1000
SAFETY_BUDGET_S = 300


def report(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def safety_sweep():
    start = time.perf_counter()
    summaries = {(n, s): sweep(sweep_config(n, s), range(SEEDS)) for n in (4, 7) for s in SWEEP_STRATEGIES}
    return summaries, time.perf_counter() - start


def _failures(summaries, prop):
    return [(k, f) for k, s in summaries.items() for f in s["failures"] if f["property"] == prop]


def test_01_safety(safety_sweep):
    summaries, elapsed = safety_sweep
    runs = sum(s["runs"] for s in summaries.values())
    bad = _failures(summaries, "safety")
    report(1, "safety sweep", not bad and elapsed < SAFETY_BUDGET_S,
           f"{runs} runs over n in (4, 7) x {len(SWEEP_STRATEGIES)} strategies, {len(bad)} failures, "
           f"{elapsed:.0f}s (budget {SAFETY_BUDGET_S}s)")


def test_02_tail_forking(safety_sweep):
    summaries, _ = safety_sweep
    bad = _failures(summaries, "tail_forking")
    checked = sum(s["properties"]["tail_forking"].get("pass", 0) for s in summaries.values())
    report(2, "tail-forking resistance", not bad, f"{checked} passing runs, {len(bad)} failures")


def test_03_reversions(safety_sweep):
    summaries, _ = safety_sweep
    bad = _failures(summaries, "spec_reversion")
    reverts = sum(s["total_reverts"] for s in summaries.values())
    equiv = scenario.run(load_any("equivocation_revert"))
    v = next(v for v in check_trace(equiv.trace) if v.property == "spec_reversion")
    ok = not bad and v.passed is True and v.detail["reverts"] == 1
    report(3, "reversion discipline", ok,
           f"{reverts} sweep reverts, {len(bad)} without proof; equivocation scenario reverts={v.detail['reverts']} "
           f"proof records={v.detail['proofs']}")


LIVENESS_SEEDS = 100
LIVENESS_VIEWS = 120


def test_04_liveness():
    outcomes = {}
    for n in (4, 7):
        for label, strategy in (("all_correct", None), ("single_offline", "offline")):
            cfg = sweep_config(n, strategy, single=True, horizon_views=LIVENESS_VIEWS)
            s = sweep(cfg, range(LIVENESS_SEEDS))
            outcomes[(n, label)] = s["properties"]["liveness"]
    ok = all(c == {"pass": LIVENESS_SEEDS} for c in outcomes.values())
    report(4, "liveness", ok, ", ".join(f"n={n} {k}: {c}" for (n, k), c in outcomes.items()))


@pytest.mark.parametrize("n,delta", [(4, 5), (4, 1), (7, 3), (7, 10)])
def test_05_latency_exact(n, delta):
    cfg = sweep_config(n, None, gst=0, delta_range=(delta, delta), horizon_views=40)
    ctx = TraceContext(scenario.run(cfg, 0).trace)
    lat = sorted(block_latencies(ctx).values(), key=lambda e: e["proposed_at"])
    body = lat[:-2]
    wrong = [e for e in body if e.get("spec_commit") != 3 * delta or e.get("commit") != 5 * delta]
    report(5, f"latency n={n} delta={delta}", len(body) >= 30 and not wrong,
           f"{len(body)} blocks at spec +{3 * delta} / commit +{5 * delta}, {len(wrong)} off")


def test_06_linear_communication():
    worst, tcs, verdicts = 0, 0, {}
    for n in (4, 7):
        cfg = sweep_config(n, None, horizon_views=160)
        for seed in range(50):
            trace = scenario.run(cfg, seed).trace
            v = next(v for v in check_trace(trace) if v.property == "message_complexity")
            verdicts[v.passed] = verdicts.get(v.passed, 0) + 1
            if v.passed is not None:
                worst = max(worst, v.detail["max_messages"] / n)
                tcs += v.detail["tcs_after_threshold"]
    ok = set(verdicts) == {True} and tcs == 0 and worst <= 8
    report(6, "linear communication", ok,
           f"verdicts={verdicts}, max messages/view = {worst:.2f}n (bound 8n), TCs after threshold={tcs}")


def test_07_fault_isolation():
    res = scenario.run(load_any("fig3_offline_leader"))
    ctx = TraceContext(res.trace)
    delta = ctx.delta_max
    duration = ctx.all_past(2) - ctx.first_entry(2)
    bound = ctx.timing.theta_view + 6 * delta
    tcs = {r["view"] for _, r in ctx.of_kind("tc_formed")}
    p1 = next(r for _, r in ctx.of_kind("propose") if r["view"] == 1)
    committed = all(any(r["validator"] == v and r["block_hash"] == p1["block_hash"]
                        for _, r in ctx.of_kind("commit")) for v in ctx.correct)
    report(7, "leader fault isolation", duration <= bound and len(tcs) == 1 and committed,
           f"faulty view lasted {duration} ticks (bound {bound}), TC views={sorted(tcs)}, P1 committed={committed}")


@pytest.mark.parametrize("gst,delta_range", [(0, (5, 5)), (0, (2, 2)), (200, (1, 10))])
def test_08_responsiveness(gst, delta_range):
    delta = delta_range[1]
    d = 100 * delta
    cfg = sweep_config(4, None, gst=gst, delta_range=delta_range, horizon_views=200)
    ctx = TraceContext(scenario.run(cfg, 1).trace)
    t1 = gst if gst == 0 else ctx.threshold
    need = d // (3 * delta) - 2
    per = {v: sum(1 for _, r in ctx.of_kind("commit")
                  if r["validator"] == v and t1 <= r["t"] <= t1 + d) for v in ctx.correct}
    report(8, f"responsiveness gst={gst} delta={delta_range}", min(per.values()) >= need,
           f"commits in [{t1}, {t1 + d}] per validator {sorted(per.values())} (need >= {need})")


def test_09_recovery():
    one = scenario.run(load_any("recovery_single_holder"))
    ctx = TraceContext(one.trace)
    start = next(r for _, r in ctx.of_kind("recovery") if r["phase"] == "start")
    p1 = next(r for _, r in ctx.of_kind("propose") if r["view"] == 1)
    repro = next(r for _, r in ctx.of_kind("propose") if r["view"] == start["view"])
    took = repro["t"] - start["t"]
    ok_one = repro["block_hash"] == p1["block_hash"] and not repro["fresh"] and took <= ctx.timing.theta_recovery

    none = scenario.run(load_any("recovery_nec"))
    ctx2 = TraceContext(none.trace)
    necs = [r for _, r in ctx2.of_kind("nec_formed")]
    q1 = next(r for _, r in ctx2.of_kind("propose") if r["view"] == 1)
    fresh = next(r for _, r in ctx2.of_kind("propose") if r["view"] == 2)
    ok_none = bool(necs) and fresh["fresh"] and fresh["nec"] and fresh["parent"] == q1["parent"] \
        and fresh["qc_view"] == q1["qc_view"]
    report(9, "block recovery", ok_one and ok_none,
           f"single holder: reproposed {took} ticks after recovery start (budget {ctx.timing.theta_recovery}); "
           f"no holder: NEC formed={bool(necs)}, fresh proposal on high tip's parent QC={ok_none}")


ROUNDTRIPS = 10_000


def _predicate(c, m):
    t = type(m)
    if t is Proposal:
        return c.valid_proposal(m)
    if t is Vote:
        return c.valid_vote(m)
    if t is QuorumCertificate:
        return c.valid_qc(m)
    if t is TimeoutMessage:
        return c.valid_timeout(m)
    if t is TimeoutCertificate:
        return c.valid_tc(m)
    if t in (ProposalRequest, NERequest):
        return c.valid_tc(m.tc)
    if t is ProposalResponse:
        return c.valid_proposal(m.proposal)
    if t is NoEndorsement:
        return c.valid_ne(m)
    if t is SyncRequest:
        return len(m.block_hash) == 32
    raise AssertionError(t)


def test_10_structural_fuzz(monkeypatch):
    captured = []
    real_send = Simulator.send

    def spy(self, sender, msg, targets, extra_delay=None):
        if sender in self.correct:
            captured.append((self.committee, msg))
        return real_send(self, sender, msg, targets, extra_delay)

    monkeypatch.setattr(Simulator, "send", spy)
    uniq_fail = 0
    seed = 0
    while len(captured) < ROUNDTRIPS:
        n = 4 if seed % 2 else 7
        strat = SWEEP_STRATEGIES[seed % len(SWEEP_STRATEGIES)]
        trace = scenario.run(sweep_config(n, strat, horizon_views=20), seed).trace
        uniq_fail += next(v for v in check_trace(trace) if v.property == "qc_uniqueness").passed is False
        seed += 1
    monkeypatch.undo()
    bad = []
    kinds = set()
    for committee, msg in captured[:ROUNDTRIPS]:
        back = decode(msg.encoded)
        kinds.add(type(msg).__name__)
        if back != msg or not _predicate(committee, back):
            bad.append(type(msg).__name__)
    report(10, "structural invariants", not bad and not uniq_fail,
           f"{ROUNDTRIPS} honest messages of {len(kinds)} kinds from {seed} runs: {len(bad)} rejected; "
           f"same-view QC conflicts: {uniq_fail}")


@pytest.mark.parametrize("config,seed", [("equivocation_revert", 0), ("all_correct", 11), ("fig3_offline_leader", 5)])
def test_11_determinism(tmp_path, capsys, config, seed):
    for d in ("a", "b"):
        cli.main(["run", "--config", config, "--seed", str(seed), "--out-dir", str(tmp_path / d)])
    capsys.readouterr()
    a = {p.name: p.read_bytes() for p in (tmp_path / "a").iterdir()}
    b = {p.name: p.read_bytes() for p in (tmp_path / "b").iterdir()}
    report(11, f"determinism {config} seed={seed}", a == b and len(a) == 3,
           f"{len(a)} files, identical={a == b}")
