"""Command line driver: exit codes, validation and byte-stable reports."""

import json
from pathlib import Path

import pytest

from hodge_neck import cli
from hodge_neck.harmonic import SolverError

ROOT = Path(__file__).resolve().parents[1]
BLOWUP_CFG = (ROOT / "configs" / "blowup-scaling.cfg").read_text()


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run_cli(tmp_path, experiment, text, out="out", extra=()):
    cfg = write(tmp_path, text)
    code = cli.main([experiment, "--config", str(cfg), "--out", str(tmp_path / out), *extra])
    return code, tmp_path / out


def read_all(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_blowup_scaling_passes_and_is_deterministic(tmp_path, capsys):
    code1, out1 = run_cli(tmp_path, "blowup-scaling", BLOWUP_CFG, "a")
    code2, out2 = run_cli(tmp_path, "blowup-scaling", BLOWUP_CFG, "b")
    assert code1 == code2 == cli.EXIT_OK
    a, b = read_all(out1), read_all(out2)
    assert set(a) == {"algebra.json", "blowup_fits.json", "blowup_sweep.csv", "summary.txt"}
    assert a == b
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS ") for line in lines)


def test_reports_carry_provenance(tmp_path):
    code, out = run_cli(tmp_path, "blowup-scaling", BLOWUP_CFG)
    assert code == 0
    csv_text = (out / "blowup_sweep.csv").read_text().splitlines()
    header = [l for l in csv_text if l.startswith("# ")]
    keys = {l[2:].split(":")[0] for l in header}
    assert keys == {"config_sha256", "experiment", "mesh_checksums", "seed", "tool"}
    doc = json.loads((out / "blowup_fits.json").read_text())
    assert doc["provenance"]["experiment"] == "blowup-scaling"
    assert len(doc["provenance"]["config_sha256"]) == 64


def test_seed_changes_provenance(tmp_path):
    run_cli(tmp_path, "blowup-scaling", BLOWUP_CFG, "a")
    run_cli(tmp_path, "blowup-scaling", BLOWUP_CFG, "b", extra=("--seed", "99"))
    sa = json.loads((tmp_path / "a" / "algebra.json").read_text())["provenance"]
    sb = json.loads((tmp_path / "b" / "algebra.json").read_text())["provenance"]
    assert sa["seed"] == "1" and sb["seed"] == "99"
    assert sa["config_sha256"] != sb["config_sha256"]


def test_assertion_failure_exit_code(tmp_path, capsys):
    code, out = run_cli(tmp_path, "spectrum", "[spectrum]\nlevel = 1\n")
    assert code == cli.EXIT_ASSERT
    assert "FAIL spectrum-ordering" in capsys.readouterr().out
    # failing checks still leave complete reports
    assert (out / "spectrum.csv").exists() and (out / "summary.txt").exists()


@pytest.mark.parametrize("text", [
    "[blowup]\nunknown_key = 1\n",
    "[nonsense]\nlevel = 1\n",
    "[blowup]\nlevel = three\n",
    "[blowup]\nlevel = 9\n",
    "[blowup]\ncap_resolution = 2, 4\n",
    "[blowup]\nepsilon = nan\n",
    "level = 2\n",
    "[blowup]\nlevel = 1\nlevel = 2\n",
])
def test_malformed_config_leaves_nothing(tmp_path, capsys, text):
    code, out = run_cli(tmp_path, "blowup-scaling", text)
    assert code == cli.EXIT_USAGE
    assert not out.exists()
    assert "config error" in capsys.readouterr().err


def test_error_names_the_key(tmp_path, capsys):
    run_cli(tmp_path, "blowup-scaling", "[blowup]\nepsilon = 0.9\n")
    assert "blowup.epsilon" in capsys.readouterr().err


def test_cross_field_check():
    with pytest.raises(cli.ConfigError, match="calibration.inner"):
        cli.parse_config("[calibration]\ninner = 5\nouter = 3\n", "period-jacobian")
    with pytest.raises(cli.ConfigError, match="neck.s_values"):
        cli.parse_config("[neck]\nlayers = 8\nlayer_length = 0.25\ns_values = 0, 2\n", "neck-decay")


def test_usage_errors(tmp_path):
    cfg = write(tmp_path, BLOWUP_CFG)
    assert cli.main(["no-such-experiment", "--config", str(cfg)]) == cli.EXIT_USAGE
    assert cli.main(["blowup-scaling"]) == cli.EXIT_USAGE
    assert cli.main(["blowup-scaling", "--config", str(tmp_path / "missing.cfg")]) == cli.EXIT_USAGE
    assert cli.main(["blowup-scaling", "--config", str(cfg), "--seed", "-1"]) == cli.EXIT_USAGE
    assert cli.main(["blowup-scaling", "--config", str(cfg), "--seed", str(2 ** 64)]) == cli.EXIT_USAGE
    assert cli.main(["blowup-scaling", "--config", str(cfg), "--seed", "abc"]) == cli.EXIT_USAGE


def test_solver_error_exit_code(tmp_path, monkeypatch):
    def broken(cfg, seed):
        raise SolverError("eigensolver stalled")

    monkeypatch.setitem(cli.EXPERIMENTS, "blowup-scaling", broken)
    code, out = run_cli(tmp_path, "blowup-scaling", BLOWUP_CFG)
    assert code == cli.EXIT_SOLVER
    assert not out.exists()


def test_defaults_fill_in():
    cfg = cli.parse_config("", "theorem-demo")
    assert cfg["demo"]["decay_T"] == [1.0, 2.0, 3.0]
    assert cfg["run"]["seed"] == 1
    assert cli.canonical(cfg) == cli.canonical(cli.parse_config("[run]\nseed = 1\n", "theorem-demo"))


def test_shipped_configs_parse():
    for name in cli.SCHEMA:
        cli.parse_config((ROOT / "configs" / f"{name}.cfg").read_text(), name)
