import csv
import json
import logging
import subprocess
import sys

import numpy as np
import pytest

from magjacobi import flow
from magjacobi.cli import dumps, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_curvature_kahler(capsys):
    code, out, _ = run(capsys, "curvature", "--model", "flat4d_kahler", "--u0", "1")
    assert code == 0
    rep = json.loads(out)
    assert rep["rho_bb"] == 1.0
    assert np.allclose(rep["Rcc_eigenvalues"], [0.25, 0.25])
    assert rep["regularity"]["Jp_norm"] == 1.0
    assert len(rep["frame"]["c_basis"]) == 2


def test_curvature_degenerate_exit3(capsys):
    code, _, err = run(capsys, "curvature", "--model", "flat2d", "--B", "0")
    assert code == 3
    assert "not D-regular: J_q p = 0" in err


def test_malformed_config_exit2(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{model: flat2d")
    assert run(capsys, "curvature", "--config", str(bad))[0] == 2
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]")
    assert run(capsys, "curvature", "--config", str(arr))[0] == 2
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"model": "flat2d", "T": "soon"}))
    assert run(capsys, "curvature", "--config", str(wrong))[0] == 2


def test_config_errors_exit2(capsys):
    assert run(capsys, "curvature", "--model", "torus")[0] == 2
    assert run(capsys, "curvature")[0] == 2
    assert run(capsys, "flow", "--model", "flat2d", "--T", "-1")[0] == 2
    assert run(capsys, "curvature", "--model", "flat2d", "--x", "0", "0", "0")[0] == 2
    assert run(capsys, "curvature", "--model", "flat2d", "--p", "0", "0")[0] == 2
    assert run(capsys, "no-such-command")[0] == 2


def test_config_file_and_flag_override(capsys, tmp_path):
    cfg = tmp_path / "scn.json"
    cfg.write_text(json.dumps({"model": "sphere2d", "params": {"B": 2.0}, "u0": 0.5,
                               "x": [1.2, 0.0], "p": [0.0, 1.0]}))
    code, out, _ = run(capsys, "curvature", "--config", str(cfg))
    assert code == 0
    rep = json.loads(out)
    assert rep["scenario"]["params"] == {"B": 2.0}
    assert rep["rho_bb"] == pytest.approx(1 + 0.25 * 4.0, abs=1e-12)
    code, out, _ = run(capsys, "curvature", "--config", str(cfg), "--u0", "1")
    assert json.loads(out)["rho_bb"] == pytest.approx(1 + 4.0, abs=1e-12)


def test_p_renormalized_with_warning(capsys, caplog):
    with caplog.at_level(logging.WARNING):
        code, out, _ = run(capsys, "curvature", "--model", "flat2d", "--p", "3", "4")
    assert code == 0
    assert any("renormalized" in r.message for r in caplog.records)
    assert np.allclose(json.loads(out)["scenario"]["p"], [0.6, 0.8])


def test_identical_config_bit_identical_output(capsys, tmp_path):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for pth in paths:
        assert run(capsys, "curvature", "--model", "flat2d_varfield", "--p", "0.6", "0.8",
                   "--output", str(pth))[0] == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_dumps_format():
    s = dumps({"b": 0.1, "a": [1, np.float64(1 / 3)], "c": None, "d": True})
    assert s.index('"a"') < s.index('"b"')
    assert "0.33333333333333331" in s
    assert json.loads(s)["d"] is True


def test_flow_csv(capsys, tmp_path):
    path = tmp_path / "traj.csv"
    code, out, _ = run(capsys, "flow", "--model", "sphere2d", "--T", "2", "--dt", "0.5", "--csv", str(path))
    assert code == 0
    rows = list(csv.reader(open(path)))
    assert rows[0][:3] == ["t", "x0", "x1"] and len(rows) == 6
    assert json.loads(out)["h_drift"] < 1e-10


def test_conjugate_heisenberg(capsys, tmp_path):
    path = tmp_path / "det.csv"
    code, out, _ = run(capsys, "conjugate", "--model", "flat2d", "--T", "10", "--csv", str(path))
    assert code == 0
    rep = json.loads(out)
    assert [round(r["t"], 5) for r in rep["jacobi"]] == [6.28319, 8.98682]
    assert rep["agree"] and rep["max_time_discrepancy"] < 1e-5
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "d", "D"] and len(rows) > 900


def test_conjugate_kahler(capsys):
    code, out, _ = run(capsys, "conjugate", "--model", "flat4d_kahler", "--T", "7")
    assert code == 0
    rep = json.loads(out)
    assert len(rep["jacobi"]) == 1 and rep["jacobi"][0]["mult"] == 3
    assert rep["jacobi"][0]["t"] == pytest.approx(2 * np.pi, abs=1e-5)


def test_conjugate_short_horizon(capsys):
    code, out, _ = run(capsys, "conjugate", "--model", "flat2d", "--T", "1")
    assert code == 0
    rep = json.loads(out)
    assert rep["jacobi"] == [] and rep["oracle"] == []


def test_conjugate_disagreement_exit4(capsys, monkeypatch):
    from magjacobi import cli
    real = cli.oracle_conjugate_times

    def shifted(*a, **k):
        rep = real(*a, **k)
        rep.times = [t + 1e-3 for t in rep.times]
        return rep

    monkeypatch.setattr(cli, "oracle_conjugate_times", shifted)
    code, out, _ = run(capsys, "conjugate", "--model", "flat2d", "--T", "7")
    assert code == 4
    assert json.loads(out)["agree"] is False


def test_comparison_heisenberg(capsys):
    code, out, _ = run(capsys, "comparison", "--model", "flat2d", "--T", "10")
    assert code == 0
    rep = json.loads(out)
    assert (rep["lower"], rep["observed"], rep["upper"], rep["pass"]) == (2, 2, 2, True)


def test_comparison_sphere(capsys):
    code, out, _ = run(capsys, "comparison", "--model", "sphere2d", "--T", "5")
    assert code == 0
    rep = json.loads(out)
    assert rep["pass"] and rep["observed"] >= 1
    assert rep["conjugate_times"][0]["t"] == pytest.approx(4.44288, abs=1e-5)


def test_comparison_scope_exit5(capsys):
    code, _, err = run(capsys, "comparison", "--model", "flat2d_varfield")
    assert code == 5
    assert "comparison requires ∇J = 0" in err


def test_list_models(capsys):
    code, out, _ = run(capsys, "list-models")
    assert code == 0
    models = json.loads(out)
    assert set(models) == {"flat2d", "sphere2d", "hyperbolic2d", "flat4d_kahler", "flat2d_varfield"}
    assert models["flat4d_kahler"]["dim"] == 4


def test_console_script():
    r = subprocess.run([sys.executable, "-m", "magjacobi.cli", "list-models"], capture_output=True, text=True)
    assert r.returncode == 0 and "flat2d" in r.stdout


@pytest.mark.slow
def test_selftest_clean(capsys):
    code, out, _ = run(capsys, "selftest")
    assert code == 0
    assert "FAIL" not in out


@pytest.mark.slow
def test_selftest_detects_lorentz_sign_flip(capsys, monkeypatch):
    monkeypatch.setattr(flow, "LORENTZ_SIGN", -flow.LORENTZ_SIGN)
    code, out, _ = run(capsys, "selftest")
    assert code != 0
    assert "FAIL" in out
