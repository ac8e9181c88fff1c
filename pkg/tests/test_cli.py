import json

import pytest

from denjoy_twist.cli import main
from denjoy_twist.config import ConfigError, load_config, parse_float_list
from denjoy_twist.reporting import deterministic_dump

FAST = ["--set", "params.M=32", "--set", "verify.rotation_n=500",
        "--set", "verify.invariance_samples=500",
        "--set", "verify.roundtrip_samples=300",
        "--set", "verify.det_samples=60",
        "--set", "verify.jump_scan_samples=500"]


def run(args, tmp_path, sub):
    return main(args + ["--out", str(tmp_path / sub)])


def test_build_writes_summary_and_csvs(tmp_path):
    code = run(["build", "--set", "params.M=32"], tmp_path, "b")
    assert code == 0
    rep = json.loads((tmp_path / "b" / "build.json").read_text())
    assert 0.0 < rep["summary"]["residual_mass"] < 1.0
    for name in ("sequences.csv", "gaps.csv", "profiles.csv"):
        assert (tmp_path / "b" / name).exists()


def test_build_minimal_truncation(tmp_path):
    code = run(["build", "--set", "params.M=8"], tmp_path, "m8")
    assert code == 0
    lines = (tmp_path / "m8" / "sequences.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + 17


def test_build_rejects_bad_delta(tmp_path):
    assert run(["build", "--set", "params.delta=-1"], tmp_path, "bad") == 2


def test_verify_passes_and_is_deterministic(tmp_path):
    assert run(["verify"] + FAST, tmp_path, "v1") == 0
    assert run(["verify"] + FAST, tmp_path, "v2") == 0
    a = json.loads((tmp_path / "v1" / "verify.json").read_text())
    b = json.loads((tmp_path / "v2" / "verify.json").read_text())
    assert deterministic_dump(a) == deterministic_dump(b)
    assert a["pass"] and all(c["pass"] for c in a["checks"])


def test_verify_unattainable_tolerance_fails(tmp_path):
    code = run(["verify"] + FAST
               + ["--set", "tolerances.invariance_residual=1e-20"],
               tmp_path, "vf")
    assert code == 1
    rep = json.loads((tmp_path / "vf" / "verify.json").read_text())
    failing = [c for c in rep["checks"] if not c["pass"]]
    assert {c["name"] for c in failing} == {"invariance_residual",
                                           "invariance_residual_translated"}
    assert all(c["measured"] > 0.0 for c in failing)


def test_verify_rigid_rotation_mode(tmp_path):
    code = run(["verify", "--set", "params.mode=rigid_rotation"], tmp_path, "vr")
    assert code == 0
    rep = json.loads((tmp_path / "vr" / "verify.json").read_text())
    names = [c["name"] for c in rep["checks"]]
    assert "phi_identically_zero" in names


def test_regularity_csv_row_contract(tmp_path):
    code = run(["regularity", "--set", "params.M=16"], tmp_path, "r")
    assert code == 0
    lines = (tmp_path / "r" / "regularity.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + 2 * 16 - 1


def test_portrait_row_contract(tmp_path):
    code = run(["portrait", "--set", "params.M=16",
                "--set", "portrait.orbits=2", "--set", "portrait.steps=30",
                "--set", "portrait.curve_samples=8"], tmp_path, "p")
    assert code == 0
    lines = (tmp_path / "p" / "portrait.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + 8 + 2 * 31


def test_manifolds_cmd(tmp_path):
    assert run(["manifolds", "--set", "params.M=32"], tmp_path, "mf") == 0
    rep = json.loads((tmp_path / "mf" / "manifolds.json").read_text())
    assert rep["pass"]


def test_diffusion_cmd_deterministic(tmp_path):
    args = ["diffusion", "--set", "params.M=16", "--set", "diffusion.n=300"]
    assert run(args, tmp_path, "d1") == 0
    assert run(args, tmp_path, "d2") == 0
    a = (tmp_path / "d1" / "diffusion.json").read_text()
    b = (tmp_path / "d2" / "diffusion.json").read_text()
    assert a == b
    rep = json.loads(a)
    assert len(rep["probes"]) == 2
    assert rep["probes"][0]["max_excursion"] <= 2e-3


def test_config_file_roundtrip(tmp_path):
    cfg_path = tmp_path / "run.ini"
    cfg_path.write_text("[params]\nM = 16\ndelta = 0.5\n\n[verify]\n"
                        "rotation_n = 100\n")
    cfg = load_config(str(cfg_path))
    assert cfg["params"]["M"] == 16
    assert cfg["verify"]["rotation_n"] == 100


def test_config_rejects_unknown(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[params]\nnot_a_key = 3\n")
    with pytest.raises(ConfigError):
        load_config(str(bad))
    bad.write_text("[nonsense]\nM = 3\n")
    with pytest.raises(ConfigError):
        load_config(str(bad))
    with pytest.raises(ConfigError):
        load_config(None, ["params.M"])
    with pytest.raises(ConfigError):
        load_config(None, ["params.unknown=3"])
    with pytest.raises(ConfigError):
        load_config(None, ["params.mode=sideways"])


def test_parse_float_list():
    assert parse_float_list("-1e-3, 2.5,") == [-1e-3, 2.5]
