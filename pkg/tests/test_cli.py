import json
import math
from pathlib import Path

import numpy as np
import pytest

from cqstein.channel import hull_family, make_channel, pure, random_channel, replacer
from cqstein.cli import main
from cqstein.divergence import channel_divergence

jsonschema = pytest.importorskip("jsonschema")
SCHEMA = json.loads((Path(__file__).parent.parent / "docs" / "report_schema.json").read_text())

KET0 = np.diag([1.0, 0.0]).astype(complex)
KET1 = np.diag([0.0, 1.0]).astype(complex)


@pytest.fixture
def files(tmp_path):
    rng = np.random.default_rng(0)
    chans = {
        "orth": make_channel([KET0, KET1]),
        "bb": make_channel([KET0, pure([1, 1])]),
        "rep": replacer(np.diag([0.7, 0.3]), ["0", "1"]),
        "rand": random_channel(2, 2, rng),
    }
    out = {}
    for name, ch in chans.items():
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(ch.to_dict()))
        out[name] = str(p)
    gens = [random_channel(2, 2, rng) for _ in range(2)]
    hull = tmp_path / "hull.json"
    hull.write_text(json.dumps({"generators": [g.to_dict() for g in gens]}))
    out["hull"] = str(hull)
    out["gens"] = gens
    out["channels"] = chans
    return out


def run(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    rep = json.loads(out)
    jsonschema.validate(rep, SCHEMA)
    return code, rep


def test_capacity(capsys, files):
    code, rep = run_json(capsys, "capacity", "--channel", files["orth"])
    assert code == 0
    assert rep["value"] == pytest.approx(math.log(2), abs=1e-9)


def test_beta_family(capsys, files):
    code, rep = run_json(capsys, "beta", "--null", files["orth"], "--family", "replacer", "--eps", "0.1", "--copies", "1")
    assert code == 0
    assert rep["value"] == pytest.approx(0.45, abs=1e-6)


def test_text_format(capsys, files):
    code, out, _ = run(capsys, "capacity", "--channel", files["orth"], "--format", "text")
    assert code == 0
    assert "quantity: holevo_capacity" in out.splitlines()
    assert out.splitlines() == sorted(out.splitlines())


def test_beta_channel(capsys, files):
    code, rep = run_json(capsys, "beta", "--null", files["bb"], "--alt", files["rep"], "--eps", "0.2")
    assert code == 0 and rep["quantity"] == "beta_channel"


def test_divergence_pair_matches_library(capsys, files):
    code, rep = run_json(capsys, "divergence", "--a", files["rand"], "--b", files["rep"], "--alpha", "2")
    ch = files["channels"]
    assert code == 0
    assert rep["value"] == pytest.approx(channel_divergence(ch["rand"], ch["rep"], 2.0).value, rel=1e-11)


def test_divergence_infinite(capsys, files):
    code, rep = run_json(capsys, "divergence", "--a", files["rep"], "--b", files["orth"])
    assert rep["value"] == "inf" and rep["support_ok"] is False


def test_divergence_family_hull(capsys, files):
    code, rep = run_json(capsys, "divergence", "--channel", files["rand"], "--family", "hull:" + files["hull"])
    assert code == 0 and rep["quantity"] == "D_family"
    assert rep["gap"] <= 1e-6


def test_robustness(capsys, files):
    code, rep = run_json(capsys, "robustness", "--channel", files["orth"])
    assert code == 0
    assert rep["value"] == pytest.approx(1.0, abs=1e-6)


def test_stein_scan_replacer_zero(capsys, files):
    code, rep = run_json(capsys, "stein-scan", "--channel", files["rep"], "--max-copies", "2", "--alpha", "2")
    assert code == 0
    for row in rep["rows"]:
        assert abs(row["reference"]) <= 1e-8


def test_stein_scan_csv_deterministic(capsys, files):
    args = ("stein-scan", "--channel", files["bb"], "--max-copies", "1", "--alpha", "1.5", "--format", "csv")
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args)
    assert a == b
    lines = a.splitlines()
    assert lines[0] == "n,lower,upper,reference,beta_upper,beta_lower,minimax_gap,flagged"
    assert len(lines) == 2


def test_stein_scan_guard(capsys, files):
    code, _, err = run(capsys, "stein-scan", "--channel", files["bb"], "--max-copies", "5")
    assert code == 1 and "at most 4" in err


def test_verify_single_suite(capsys):
    code, out, _ = run(capsys, "verify", "--suite", "pinching", "--seed", "3")
    lines = out.splitlines()
    assert code == 0
    assert lines[0].startswith("pinching") and "PASS" in lines[0]
    assert lines[-1] == "ALL PASS" and len(lines) == 2


def test_verify_json_schema(capsys):
    code, rep = run_json(capsys, "verify", "--suite", "rounding", "--format", "json")
    assert code == 0 and rep["passed"]


def test_verify_unknown_suite(capsys):
    code, _, err = run(capsys, "verify", "--suite", "nope")
    assert code == 1 and "unknown suite" in err


def test_verify_thread_independent(capsys, monkeypatch):
    args = ("verify", "--suite", "capacity", "--seed", "5")
    monkeypatch.setenv("CQSTEIN_THREADS", "1")
    _, a, _ = run(capsys, *args)
    monkeypatch.setenv("CQSTEIN_THREADS", "4")
    _, b, _ = run(capsys, *args)
    assert a == b


def test_corrupted_file(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"inputs": ["0"], "dim": 2, "outputs": {"0": [[1, 0], [0, 1]]}}))
    code, _, err = run(capsys, "capacity", "--channel", str(bad))
    assert code == 1
    assert str(bad) in err and "outputs['0']" in err


def test_unparsable_file(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    code, _, err = run(capsys, "capacity", "--channel", str(bad))
    assert code == 1 and "line 1" in err


def test_missing_file(capsys):
    code, _, err = run(capsys, "capacity", "--channel", "/nonexistent/x.json")
    assert code == 1


def test_bad_alpha(capsys, files):
    code, _, err = run(capsys, "divergence", "--a", files["orth"], "--b", files["rep"], "--alpha", "0.5")
    assert code == 1 and "--alpha" in err


def test_bad_family(capsys, files):
    code, _, err = run(capsys, "divergence", "--channel", files["orth"], "--family", "other")
    assert code == 1 and "unknown family" in err


def test_unknown_command():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_out_file(capsys, files, tmp_path):
    target = tmp_path / "report.json"
    code, out, _ = run(capsys, "capacity", "--channel", files["orth"], "--out", str(target))
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["quantity"] == "holevo_capacity"


def test_convert_identical(capsys, files):
    code, rep = run_json(capsys, "convert", "--a", files["bb"], "--b", files["bb"], "--copies", "1")
    assert code == 0
    assert rep["rate_formula"] == pytest.approx(1.0, abs=1e-9)


def test_convert_orth_to_bb(capsys, files):
    code, rep = run_json(capsys, "convert", "--a", files["orth"], "--b", files["bb"], "--copies", "1")
    assert rep["rate_formula"] == pytest.approx(1.6640, abs=1e-3)


def test_convert_refuses_replacer_target(capsys, files):
    code, _, err = run(capsys, "convert", "--a", files["orth"], "--b", files["rep"])
    assert code == 1 and "zero resource" in err


def test_flag_exit_code(capsys, files, monkeypatch):
    import cqstein.cli as cli

    def flagged(cfg):
        return {"quantity": "holevo_capacity"}, True

    monkeypatch.setitem(cli.COMMANDS, "capacity", flagged)
    code, _, _ = run(capsys, "capacity", "--channel", files["orth"])
    assert code == 2


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "cqstein", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "stein-scan" in res.stdout
