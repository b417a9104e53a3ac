import math

import pytest

from bftsim.pacemaker import TimingConfig, build_tc, liveness_threshold, timeout_views
from bftsim.types import GENESIS_QC, QuorumCertificate


def test_derived_timing_n4():
    # interval = 2*10, recovery = (ceil(4/2)-1)*20 + 20 = 40, view = 30 + 40 + 30 = 100
    t = TimingConfig.derive(4, 10)
    assert (t.theta_interval, t.theta_recovery, t.theta_view, t.kappa) == (20, 40, 100, 2)


@pytest.mark.parametrize("n,kappa,delta", [(4, 1, 10), (7, 2, 10), (7, 3, 5), (10, 4, 7), (13, 2, 1)])
def test_derived_timing_formula(n, kappa, delta):
    t = TimingConfig.derive(n, delta, kappa=kappa)
    rec = (math.ceil(n / kappa) - 1) * 2 * delta + 2 * delta
    assert t.theta_recovery == rec
    assert t.theta_view == 3 * delta + rec + 3 * delta


def test_timing_overrides_and_validation():
    t = TimingConfig.derive(4, 10, theta_interval=5, theta_view=77)
    assert t.theta_interval == 5 and t.theta_recovery == 25 and t.theta_view == 77
    with pytest.raises(ValueError):
        TimingConfig.derive(4, 10, kappa=0)


def test_liveness_threshold():
    t = TimingConfig.derive(4, 10)
    # 0 + 2*(200+20) + 40 + 40
    assert liveness_threshold(0, 1, t, 10) == 520
    assert liveness_threshold(1000, 1, t, 10) == 1520


def _three_tips(fx):
    """Tips at views {5,5,4}; the two view-5 tips carry qc views 4 and 3."""
    chain = fx.chain(5)
    qcs = {p.view: fx.qc_for(p) for p in chain}
    p4, p5 = chain[3], chain[4]
    tc3 = fx.tc(3, [fx.timeout(3, s, qcs[2], qc=qcs[2]) for s in fx.signers()])
    tc4 = fx.tc(4, [fx.timeout(4, s, tc3, tip=p4.tip()) for s in fx.signers()])
    # a view-5 proposal on the view-3 qc is valid through a TC for view 4 whose high_qc is qc3
    tc4q = fx.tc(4, [fx.timeout(4, s, qcs[3], qc=qcs[3]) for s in fx.signers()])
    p5_low = fx.fresh(5, qcs[3], tc=tc4q, payload=b"low")
    assert fx.committee.valid_proposal(p5_low) and fx.committee.valid_proposal(p5)
    last = qcs[4]
    msgs = {
        1: fx.timeout(5, 1, last, tip=p5_low.tip()),
        2: fx.timeout(5, 2, last, tip=p5.tip()),
        3: fx.timeout(5, 3, last, tip=p4.tip()),
    }
    assert fx.committee.valid_tc(tc4)
    return msgs, p5


def test_build_tc_tie_break_prefers_higher_qc(fx):
    msgs, p5 = _three_tips(fx)
    assert timeout_views(msgs[1]) == (5, 3)
    tc = build_tc(5, msgs)
    assert tc.high_tip == p5.tip()
    assert tc.tips_map == {1: 5, 2: 5, 3: 4}
    assert tc.qcs_map == {1: 3, 2: 4, 3: 3}
    assert fx.committee.valid_tc(tc)


def test_build_tc_high_qc_branch(fx):
    chain = fx.chain(8)
    qcs = {p.view: fx.qc_for(p) for p in chain}
    msgs = {
        1: fx.timeout(8, 1, qcs[7], qc=qcs[7]),
        2: fx.timeout(8, 2, qcs[7], qc=qcs[6]),
        3: fx.timeout(8, 3, qcs[7], tip=chain[7].tip()),
    }
    # tip view 8 > qc 7: tip branch.  Replace validator 3 by a qc-7 report to get the qc branch.
    assert build_tc(8, msgs).high_tip is not None
    msgs[3] = fx.timeout(8, 3, qcs[7], qc=qcs[7])
    tc = build_tc(8, msgs)
    assert tc.high_tip is None and tc.high_qc.view == 7
    assert fx.committee.valid_tc(tc)


def test_build_tc_equal_tip_and_qc_views_chooses_qc(fx):
    chain = fx.chain(7)
    qcs = {p.view: fx.qc_for(p) for p in chain}
    msgs = {1: fx.timeout(8, 1, qcs[7], qc=qcs[7]),
            2: fx.timeout(8, 2, qcs[7], qc=qcs[6]),
            4: fx.timeout(8, 4, qcs[7], qc=qcs[6])}
    tc = build_tc(8, msgs)
    assert tc.high_qc.view == 7 and tc.high_tip is None


# validator-level pacemaker behaviour -----------------------------------------

def test_increment_view_rules(fx):
    v = fx.validator(3)
    v.start(0)
    assert v.cur_view == 1
    chain = fx.chain(5)
    qc5 = fx.qc_for(chain[4])
    v.cur_view = 5
    assert v.increment_view(qc5) and v.cur_view == 6 and v.last_qc is qc5
    tc9 = fx.tc(9, [fx.timeout(9, s, qc5, qc=qc5) for s in fx.signers()])
    assert v.increment_view(tc9) and v.cur_view == 10 and v.last_tc is tc9
    qc3 = fx.qc_for(chain[2])
    assert not v.increment_view(qc3)
    assert v.cur_view == 10 and v.last_qc is qc5


def test_timer_fires_only_for_current_deadline(fx):
    v = fx.validator(3)
    acts = v.start(0)
    timer = next(a for a in acts if a.kind == "timer")
    assert timer.deadline == 100 and timer.view == 1
    out = v.on_timer("view", 1, 100, 100)
    assert [a.kind for a in out] == ["broadcast"]
    assert v.highest_voted_view == 1
    # second firing for the same view: nothing
    assert v.on_timer("view", 1, 100, 100) == []


def test_timer_cancelled_by_view_change(fx):
    v = fx.validator(3)
    v.start(0)
    p1 = fx.chain(1)[0]
    qc1 = fx.qc_for(p1)
    v.now = 10
    v.increment_view(qc1)
    out = v.on_timer("view", 1, 100, 100)
    assert not any(a.kind == "broadcast" for a in out)
    assert 1 not in v.timed_out


def test_bracha_amplification(fx):
    v = fx.validator(3)
    v.start(0)
    m1 = fx.timeout(1, 1, GENESIS_QC, qc=GENESIS_QC)
    m2 = fx.timeout(1, 2, GENESIS_QC, qc=GENESIS_QC)
    assert v.handle(m1, 1, 5) == []
    out = v.handle(m2, 2, 6)
    assert any(a.kind == "broadcast" and type(a.msg).__name__ == "TimeoutMessage" for a in out)
    assert 1 in v.timed_out
    # the deadline timer no longer produces a second timeout
    assert v.on_timer("view", 1, 100, 100) == []


def test_tc_formed_at_quorum(fx):
    rec = []
    v = fx.validator(2, records=rec)
    v.start(0)
    for s in (1, 3, 4):
        v.handle(fx.timeout(1, s, GENESIS_QC, qc=GENESIS_QC), s, 5)
    assert v.cur_view == 2
    assert v.last_tc is not None and v.last_tc.view == 1
    assert [r for r in rec if r[0] == "tc_formed"] == [("tc_formed", 1, {"high_tip_view": None, "high_qc_view": 0})]
    # validator 2 leads view 2: fresh proposal on the tc's high qc
    props = [p for p in v.proposal_cache.values() if p.view == 2]
    assert len(props) == 1 and props[0].tc is v.last_tc and props[0].block.qc == GENESIS_QC


def test_tip_votes_form_qc_before_tc(fx):
    # validator 2 leads view 2; receives one regular vote and two tip votes for P1.
    p1 = fx.chain(1)[0]
    v = fx.validator(2)
    v.start(0)
    v.handle(p1, 1, 5)
    v.handle(fx.vote(1, p1.block.block_hash, 1), 1, 6)
    for s in (3, 4):
        v.handle(fx.timeout(1, s, GENESIS_QC, tip=p1.tip()), s, 100)
    assert v.cur_view == 2 and v.last_tc is None and v.last_qc.view == 1
    props = [p for p in v.proposal_cache.values() if p.view == 2]
    assert len(props) == 1 and props[0].block.qc.proposal_id == p1.proposal_id


def test_surplus_timeouts_ignored(fx):
    v = fx.validator(2)
    v.start(0)
    for s in (1, 3, 4):
        v.handle(fx.timeout(1, s, GENESIS_QC, qc=GENESIS_QC), s, 5)
    tc = v.last_tc
    v.handle(fx.timeout(1, 2, GENESIS_QC, qc=GENESIS_QC), 2, 6)
    assert v.last_tc is tc
    assert isinstance(v.last_qc, QuorumCertificate)
