import json

import pytest

from latvol.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def test_bondvol_json(capsys):
    code, out = run_cli(
        capsys, "bondvol",
        "--tet", "0", "0", "1", "1", "0", "1", "0", "1", "1", "0", "0", "2",
        "--r", "0", "0", "1", "--oracle",
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["len"] == pytest.approx(0.25, abs=1e-12)
    assert payload["abs_diff"] <= 1e-9
    assert payload["format"] == "latvol-output/1"
    assert "config" in payload


def test_bondvol_degenerate_and_gcd(capsys):
    code, out = run_cli(
        capsys, "bondvol",
        "--tet", "0", "0", "0", "1", "0", "0", "0", "1", "0", "1", "1", "0",
        "--r", "1", "1", "1",
    )
    assert code == 0
    assert json.loads(out)["len"] == 0.0
    _, out1 = run_cli(capsys, "bondvol", "--tet",
                      "0", "0", "0", "3", "1", "0", "1", "4", "1", "2", "2", "5",
                      "--r", "1", "-1", "2")
    _, out2 = run_cli(capsys, "bondvol", "--tet",
                      "0", "0", "0", "3", "1", "0", "1", "4", "1", "2", "2", "5",
                      "--r", "2", "-2", "4")
    assert json.loads(out1)["len"] == json.loads(out2)["len"]


def test_bondvol_rejects_zero_direction(capsys):
    code, _ = run_cli(
        capsys, "bondvol",
        "--tet", "0", "0", "0", "1", "0", "0", "0", "1", "0", "0", "0", "1",
        "--r", "0", "0", "0",
    )
    assert code == 2


def test_patchtest_command(capsys):
    code, out = run_cli(capsys, "patchtest", "--n", "4", "--k", "2")
    assert code == 0
    payload = json.loads(out)
    assert payload["relative"] <= 1e-10
    code, out = run_cli(capsys, "patchtest", "--n", "4", "--k", "2", "--cauchy-born")
    assert code == 0
    assert json.loads(out)["relative"] >= 1e-3


def test_patchtest_invalid_geometry(capsys):
    code, _ = run_cli(capsys, "patchtest", "--n", "4", "--k", "4")
    assert code == 2


def test_converge_command_deterministic(capsys):
    args = ["converge", "--n", "4", "--k", "2", "3", "--tol", "1e-10"]
    code1, out1 = run_cli(capsys, *args)
    code2, out2 = run_cli(capsys, *args)
    assert code1 == code2 == 0
    assert out1 == out2
    lines = [ln for ln in out1.splitlines() if ln and not ln.startswith("#")]
    assert lines[0] == "n,k,dof,w1inf_error,energy_error"
    assert len(lines) == 3
    errs = [float(ln.split(",")[3]) for ln in lines[1:]]
    assert errs[1] < errs[0]  # error decreases in K at fixed N


def test_stability_command_small(capsys, tmp_path):
    args = ["stability", "--n", "4", "--k", "2", "--step", "0.2",
            "--fourier-grid", "8", "--assert"]
    code1, out1 = run_cli(capsys, *args)
    code2, out2 = run_cli(capsys, *args)
    assert code1 == code2 == 0
    assert out1 == out2  # verdicts identical under re-running
    lines = [ln for ln in out1.splitlines() if ln and not ln.startswith("#")]
    assert lines[0] == "t,s,stable,source"
    assert len(lines) == 1 + 2 * 3 * 3
    assert {ln.split(",")[3] for ln in lines[1:]} == {"coupled", "fourier"}


def test_config_file_and_out(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"tets": 1}))
    out_path = tmp_path / "res.txt"
    code = main(["selftest", "--tets", "5", "--config", str(cfg),
                 "--out", str(out_path)])
    assert code == 0


def test_selftest_quick(capsys):
    code, out = run_cli(capsys, "selftest", "--tets", "2")
    assert code == 0
    assert "selftest passed" in out
