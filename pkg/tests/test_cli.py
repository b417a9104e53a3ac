import json

import pytest

from bftsim import cli
from bftsim.sweep import parse_seeds


def run(capsys, *argv):
    code = cli.main(list(argv))
    return code, capsys.readouterr()


def test_run_writes_outputs_and_passes(tmp_path, capsys):
    code, out = run(capsys, "run", "--config", "fig3_offline_leader", "--seed", "7", "--out-dir", str(tmp_path))
    assert code == 0
    assert "TCs=1" in out.out
    names = sorted(p.name for p in tmp_path.iterdir())
    assert any(n.endswith(".jsonl") for n in names) and len(names) == 3
    metrics = json.loads(next(tmp_path.glob("*metrics*")).read_text())
    assert metrics["tc_count"] == 1


def test_out_dir_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("BFTSIM_OUT_DIR", str(tmp_path / "env"))
    assert run(capsys, "run", "--config", "high_tip_repropose")[0] == 0
    assert len(list((tmp_path / "env").iterdir())) == 3


def test_disable_backup_qc_costs_a_second_timeout(tmp_path, capsys):
    _, out = run(capsys, "run", "--config", "fig2_baseline_off", "--disable-backup-qc", "--out-dir", str(tmp_path))
    assert "TCs=2" in out.out


def test_reruns_are_byte_identical(tmp_path, capsys):
    for d in ("a", "b"):
        run(capsys, "run", "--config", "equivocation_revert", "--seed", "3", "--out-dir", str(tmp_path / d))
    a = {p.name: p.read_bytes() for p in (tmp_path / "a").iterdir()}
    b = {p.name: p.read_bytes() for p in (tmp_path / "b").iterdir()}
    assert a == b and len(a) == 3


def test_print_derived(capsys):
    code, out = run(capsys, "run", "--config", "all_correct", "--print-derived")
    d = json.loads(out.out)
    assert code == 0
    assert (d["theta_interval"], d["theta_recovery"], d["theta_view"]) == (20, 40, 100)


def test_check_stored_trace(tmp_path, capsys):
    run(capsys, "run", "--config", "equivocation_revert", "--out-dir", str(tmp_path))
    trace = next(tmp_path.glob("*.jsonl"))
    code, out = run(capsys, "check", str(trace), "--json", "--out", str(tmp_path / "v.json"))
    assert code == 0
    assert json.loads(out.out) == json.loads((tmp_path / "v.json").read_text())


def test_check_detects_tampering(tmp_path, capsys):
    run(capsys, "run", "--config", "all_correct", "--out-dir", str(tmp_path))
    trace = next(tmp_path.glob("*.jsonl"))
    lines = trace.read_text().splitlines()
    recs = [json.loads(x) for x in lines]
    i = next(i for i, r in enumerate(recs) if r["kind"] == "commit" and r["validator"] == 2 and r["height"] == 1)
    recs[i]["block_hash"] = "00" * 32
    trace.write_text("".join(json.dumps(r) + "\n" for r in recs))
    code, out = run(capsys, "check", str(trace))
    assert code == 1 and "FAIL" in out.out and "safety" in out.out


def test_check_malformed_trace_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.jsonl"
    p.write_text("not json\n")
    code, out = run(capsys, "check", str(p))
    assert code == 2 and "malformed" in out.err


def test_bad_config_exit_2(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"n": 5, "timing": {"big_delta": 10}}))
    assert run(capsys, "run", "--config", str(p))[0] == 2
    assert run(capsys, "run", "--config", "no_such")[0] == 2
    assert run(capsys, "sweep", "--config", "all_correct", "--seeds", "x:y")[0] == 2


def test_sweep_summary(tmp_path, capsys):
    code, out = run(capsys, "sweep", "--config", "fig3_offline_leader", "--seeds", "0:3", "--out-dir", str(tmp_path))
    assert code == 0
    summary = json.loads((tmp_path / "fig3_offline_leader.sweep.json").read_text())
    assert summary["runs"] == 3 and summary["failures"] == []
    assert summary["properties"]["safety"] == {"pass": 3}


@pytest.mark.parametrize("text,expected", [
    ("3", [3]), ("0:3", [0, 1, 2]), ("2-4", [2, 3, 4]), ("1,5, 9", [1, 5, 9]),
])
def test_parse_seeds(text, expected):
    assert parse_seeds(text) == expected


def test_parse_seeds_rejects_garbage():
    with pytest.raises(ValueError):
        parse_seeds("a-b")
