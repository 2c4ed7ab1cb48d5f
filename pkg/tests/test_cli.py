import json

import pytest
from click.testing import CliRunner

from torus_renorm.cli import main

# the default rho is raised by the schedule
pytestmark = pytest.mark.filterwarnings("ignore:rho=.*raised to:UserWarning")


@pytest.fixture
def runner(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return CliRunner()


def _config(tmp_path, **over):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(over))
    return str(path)


def test_missing_config_exits_1(runner):
    res = runner.invoke(main, ["cf", "--config", "nope.json"])
    assert res.exit_code == 1


@pytest.mark.parametrize("over, cmd, code", [
    ({"bogus": 1}, "cf", 1),
    ({"depth": {"n_max": 6, "t_max": 0}}, "cf", 2),
    ({"omega": {"alpha": "1/2"}}, "cf", 2),
    ({"perturbation": {"kind": "additive", "amplitude": 0.1}}, "renorm", 3),
])
def test_exit_codes(runner, tmp_path, over, cmd, code):
    res = runner.invoke(main, [cmd, "--config", _config(tmp_path, **over)])
    assert res.exit_code == code, res.output


def test_cf_csv_and_json(runner, tmp_path):
    res = runner.invoke(main, ["cf"])
    assert res.exit_code == 0
    lines = res.output.splitlines()
    assert lines[0] == "n,t_n,norm_P_n,gamma_n,delta_n,A_n"
    assert len(lines) > 7
    rec = json.loads((tmp_path / "expansion.cf.json").read_text())
    assert isinstance(rec, dict)


def test_renorm_defaults_and_determinism(runner, tmp_path):
    first = runner.invoke(main, ["renorm", "--no-fields"])
    assert first.exit_code == 0, first.output
    blob = (tmp_path / "trace.json").read_bytes()
    assert json.loads(blob)["verdict"] == "converging"
    again = runner.invoke(main, ["renorm", "--no-fields", "--out", "second.json"])
    assert again.exit_code == 0
    assert (tmp_path / "second.json").read_bytes() == blob


def test_conjugacy_defaults(runner, tmp_path):
    res = runner.invoke(main, ["conjugacy", "--no-fields"])
    assert res.exit_code == 0, res.output
    assert res.output.startswith("residual 0.0")
    rec = json.loads((tmp_path / "chain.json").read_text())
    assert "maps" not in rec


def test_rotate_small_horizon(runner, tmp_path):
    cfg = _config(tmp_path, tolerances={"rotation_T": 200.0, "rotation_samples": 2, "rotation": 1e-4})
    res = runner.invoke(main, ["rotate", "--config", cfg])
    assert res.exit_code == 0, res.output
    rec = json.loads((tmp_path / "rotation.json").read_text())
    assert rec["error"] < 1e-4


def test_rotate_failure_exits_5(runner, tmp_path):
    cfg = _config(tmp_path, perturbation={"kind": "additive", "amplitude": 0.05},
                  tolerances={"rotation_T": 50.0, "rotation_samples": 2, "rotation": 1e-12})
    assert runner.invoke(main, ["rotate", "--config", cfg]).exit_code == 5


def test_check_passes(runner):
    res = runner.invoke(main, ["check", "--threads", "1"])
    assert res.exit_code == 0, res.output
    assert all(line.startswith("PASS") for line in res.output.splitlines())
