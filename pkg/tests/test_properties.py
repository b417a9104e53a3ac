"""Randomised invariants over hand-built objects and whole simulated runs."""
from functools import lru_cache

from hypothesis import HealthCheck, given, settings, strategies as st

from bftsim import scenario
from bftsim.checker import TraceContext
from bftsim.codec import decode_hex
from bftsim.crypto import aggregate, sign, verify, verify_aggregate
from bftsim.presets import sweep_config
from bftsim.types import GENESIS_BLOCK, GENESIS_QC, Proposal, conflicting, extends

from factory import Factory

FX = Factory(4)
FX7 = Factory(7)
quick = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def block_trees(draw):
    """Blocks where block i certifies a random earlier block as its parent."""
    parents = draw(st.lists(st.integers(min_value=0), min_size=1, max_size=12))
    blocks = [GENESIS_BLOCK]
    views = [0]
    for i, p in enumerate(parents):
        parent = p % len(blocks)
        view = views[-1] + 1 + draw(st.integers(0, 2))
        qc = GENESIS_QC if parent == 0 else FX.qc(views[parent], blocks[parent].block_hash)
        blocks.append(FX.block(view, qc, payload=f"b{i}".encode()))
        views.append(view)
    return blocks


@quick
@given(block_trees(), st.data())
def test_extends_is_reflexive_and_transitive(blocks, data):
    store = {b.block_hash: b for b in blocks}
    a, b, c = (data.draw(st.sampled_from(blocks)) for _ in range(3))
    assert extends(store, a, a)
    assert extends(store, a, GENESIS_BLOCK)
    if extends(store, c, b) and extends(store, b, a):
        assert extends(store, c, a)
    assert conflicting(store, a, b) == (not extends(store, a, b) and not extends(store, b, a))


@quick
@given(block_trees())
def test_parent_views_strictly_decrease(blocks):
    store = {b.block_hash: b for b in blocks}
    for b in blocks[1:]:
        parent = store[b.qc.block_hash]
        assert parent.block_view < b.block_view


@quick
@given(st.lists(st.tuples(st.integers(1, 7), st.binary(max_size=16)), min_size=1, max_size=7,
                unique_by=lambda x: x[0]), st.sets(st.integers(1, 7)))
def test_aggregate_verifies_iff_every_member_does(entries, corrupt):
    msgs = dict(entries)
    sigs = [sign(FX7.keys[s], m) for s, m in entries]
    publics = FX7.committee.publics
    claimed = {s: (m + b"!" if s in corrupt else m) for s, m in msgs.items()}
    expected = all(verify(publics[s.signer], claimed[s.signer], s) for s in sigs)
    assert verify_aggregate(publics, aggregate(sigs), claimed) == expected
    assert len(aggregate(sigs)) == len(set(msgs))


@quick
@given(st.sets(st.integers(1, 4), min_size=1))
def test_qc_needs_exactly_a_quorum_of_distinct_signers(signers):
    p1 = FX.chain(1)[0]
    qc = FX.qc_for(p1, sorted(signers))
    assert FX.committee.valid_qc(qc) == (len(signers) == FX.quorum)


@quick
@given(st.lists(st.sampled_from(["qc", "tip_p1", "tip_p2"]), min_size=3, max_size=3), st.permutations([1, 2, 3, 4]))
def test_locally_built_tcs_validate(kinds, order):
    p1, p2 = FX.chain(2)
    qc1 = FX.qc_for(p1)
    msgs = []
    for kind, signer in zip(kinds, order):
        if kind == "qc":
            msgs.append(FX.timeout(2, signer, qc1, qc=qc1))
        else:
            tip = (p1 if kind == "tip_p1" else p2).tip()
            msgs.append(FX.timeout(2, signer, qc1, tip=tip))
    tc = FX.tc(2, msgs)
    assert FX.committee.valid_tc(tc)
    if "tip_p2" in kinds:
        assert tc.high_tip is not None and tc.high_tip.view == 2


# whole-run invariants --------------------------------------------------------------

STRATS = ["offline", "silent_leader_then_honest", "withhold_votes", "equivocate", "tail_fork"]


@lru_cache(maxsize=None)
def _trace(n, strategy, seed):
    return scenario.run(sweep_config(n, strategy, horizon_views=15, gst=150), seed).trace


runs = st.tuples(st.sampled_from([4, 7]), st.sampled_from(STRATS), st.integers(0, 10_000))


@settings(max_examples=25, deadline=None)
@given(runs)
def test_run_invariants_of_correct_validators(run):
    trace = _trace(*run)
    ctx = TraceContext(trace)
    views, timeouts, votes = {}, set(), {}
    for r in trace[1:]:
        v = r["validator"]
        if v not in ctx.correct:
            continue
        if r["kind"] == "enter_view":
            assert r["view"] > views.get(v, 0)
            assert r["view"] == r["cert_view"] + 1 and r["cert"] in ("qc", "tc")
            views[v] = r["view"]
        elif r["kind"] == "timeout":
            assert (v, r["view"]) not in timeouts
            timeouts.add((v, r["view"]))
        elif r["kind"] == "vote":
            assert votes.setdefault((v, r["view"]), r["proposal_id"]) == r["proposal_id"]


@settings(max_examples=15, deadline=None)
@given(runs)
def test_correct_proposals_are_valid(run):
    trace = _trace(*run)
    ctx = TraceContext(trace)
    invalid_from_correct = 0
    for r in trace[1:]:
        if r["kind"] == "propose" and r["validator"] in ctx.correct:
            p = decode_hex(r["wire"])
            assert type(p) is Proposal and ctx.committee.valid_proposal(p)
        if r["kind"] == "invalid" and r.get("sender") in ctx.correct:
            invalid_from_correct += 1
    assert invalid_from_correct == 0
