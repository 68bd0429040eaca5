import filecmp
import json

import pytest

from stochdual import cli, verify

SIP_TOML = """
[run]
seed = 3

[model]
family = "SIP"
L = 3
shape = 1.0
alpha = 2.0
gamma = 3.0
delta = 1.0
beta = 2.0

[simulate]
samples = 400
replicas = 2
burn_in = 10.0
"""


@pytest.fixture
def sip_config(tmp_path):
    p = tmp_path / "sip.toml"
    p.write_text(SIP_TOML)
    return p


def _read(path):
    return path.read_text().splitlines()


def test_simulate_writes_profile_summary_and_manifest(tmp_path, sip_config):
    out = tmp_path / "out"
    assert cli.run(["simulate", "--config", str(sip_config), "--out-dir", str(out), "--trajectory"]) == 0
    assert _read(out / "profile.csv")[0] == "i,mean,mean_se,closed_form"
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "simulate" and man["seed"] == 3
    assert man["config"]["model"]["family"] == "SIP"
    assert "--config" not in man["argv"] and "--out-dir" not in man["argv"]
    assert (out / "samples_r1.csv").exists()
    assert len(_read(out / "samples_r0.csv")) == 401


def test_replay_is_byte_identical(tmp_path, sip_config):
    out = tmp_path / "first"
    assert cli.run(["simulate", "--config", str(sip_config), "--out-dir", str(out), "--samples", "2e2"]) == 0
    again = tmp_path / "again"
    assert cli.run(["--replay", str(out / "manifest.json"), "--out-dir", str(again)]) == 0
    for name in ("profile.csv", "summary.json"):
        assert filecmp.cmp(out / name, again / name, shallow=False)


def test_flag_overrides_config_and_seed_changes_output(tmp_path, sip_config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(["simulate", "--config", str(sip_config), "--out-dir", str(a)]) == 0
    assert cli.run(["simulate", "--config", str(sip_config), "--out-dir", str(b), "--seed", "4",
                    "--samples", "300"]) == 0
    man = json.loads((b / "manifest.json").read_text())
    assert man["seed"] == 4 and man["resolved"]["simulate"]["samples"] == 300
    assert json.loads((b / "summary.json").read_text())["plan"]["n_samples"] == 300
    assert not filecmp.cmp(a / "profile.csv", b / "profile.csv", shallow=False)


@pytest.mark.parametrize("argv", [
    ["simulate", "--family", "SIP", "--L", "3"],  # simulate needs a config
    ["stationary", "--family", "FOO", "--L", "3"],
    ["stationary", "--family", "SEP", "--L", "2", "--shape", "1.5", "--alpha", "1", "--gamma", "1",
     "--delta", "1", "--beta", "1"],
    ["verify", "nonsense"],
    ["absorption", "--bogus"],
    [],
])
def test_usage_errors_exit_2(tmp_path, argv, capsys):
    assert cli.run(argv + ["--out-dir", str(tmp_path)] if argv else argv) == 2
    assert "error" in capsys.readouterr().err


def test_config_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[model]\nfamily = \n")
    assert cli.run(["stationary", "--config", str(bad)]) == 2
    unknown = tmp_path / "unknown.toml"
    unknown.write_text(SIP_TOML + "\nflavour = 1\n")
    assert cli.run(["simulate", "--config", str(unknown), "--out-dir", str(tmp_path)]) == 2
    assert cli.run(["stationary", "--config", str(tmp_path / "missing.toml")]) == 2


def test_verify_passes_and_reports_json(tmp_path):
    assert cli.run(["verify", "absorption", "--out-dir", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "verify_absorption.json").read_text())
    assert rep["passed"] and rep["n_checks"] > 0


def test_verify_failure_exits_1(tmp_path, monkeypatch, capsys):
    bad = verify.Check("forced", {}, 1.0, 0.0, 1.0, 1e-12, False)
    monkeypatch.setattr(verify, "run_suite", lambda name, seed=0: [bad])
    assert cli.run(["verify", "duality", "--out-dir", str(tmp_path)]) == 1
    assert "forced" in capsys.readouterr().err


def test_stationary_with_generator_export_and_json_format(tmp_path):
    argv = ["stationary", "--family", "SEP", "--L", "2", "--shape", "1", "--alpha", "1", "--gamma", "1",
            "--delta", "1", "--beta", "1", "--export-generator", "--format", "json", "--out-dir", str(tmp_path)]
    assert cli.run(argv) == 0
    prof = json.loads((tmp_path / "profile.json").read_text())
    assert len(prof) == 2 and abs(prof[0]["deviation"]) < 1e-12
    assert _read(tmp_path / "generator.coo")[0] == "# states: 4"
    assert len(_read(tmp_path / "pi.csv")) == 5


def test_absorption_command(tmp_path):
    argv = ["absorption", "--family", "IRW", "--L", "2", "--alpha", "1", "--gamma", "1", "--delta", "1",
            "--beta", "1", "--xi", "0,1,1,0", "--out-dir", str(tmp_path)]
    assert cli.run(argv) == 0
    rows = _read(tmp_path / "absorption.csv")
    assert rows[0] == "m,probability,std_error" and len(rows) == 4
    assert cli.run(argv[:-4] + ["--xi", "0,1,0", "--out-dir", str(tmp_path)]) == 2


def test_mft_command(tmp_path):
    argv = ["mft", "--family", "SEP", "--shape", "1", "--rho-a", "0.8", "--rho-b", "0.2", "--perturb", "0.1",
            "--grid", "201", "--out-dir", str(tmp_path)]
    assert cli.run(argv) == 0
    res = json.loads((tmp_path / "mft.json").read_text())
    assert res["functional"] > 0 and res["correlations"]["two_point"] < 0
    assert len(_read(tmp_path / "auxiliary_profile.csv")) == 202
    assert cli.run(["mft", "--family", "SEP", "--shape", "1", "--rho-a", "1.5", "--out-dir", str(tmp_path)]) == 2


def test_reproduce_covariances_and_mft(tmp_path):
    assert cli.run(["reproduce", "covariances", "--family", "SEP", "--L-list", "4", "--out-dir",
                    str(tmp_path)]) == 0
    rows = _read(tmp_path / "covariances_sep.csv")
    assert len(rows) == 1 + 6
    assert all(abs(float(r.split(",")[-1])) < 1e-12 for r in rows[1:])
    assert cli.run(["reproduce", "mft", "--family", "BEP", "--L-list", "20,40", "--out-dir", str(tmp_path)]) == 0
    assert len(_read(tmp_path / "mft_bep.csv")) == 3


def test_reproduce_fig1_rows(tmp_path, monkeypatch):
    from stochdual import analysis

    # a 5-site lattice keeps the exact solves quick; the row layout is the same
    small = analysis.fig1_specs(5)
    monkeypatch.setattr(analysis, "fig1_specs", lambda L=6: small[:2])
    assert cli.run(["reproduce", "fig1", "--out-dir", str(tmp_path)]) == 0
    rows = _read(tmp_path / "fig1.csv")
    assert rows[0] == "j,i,d_i,e_i"
    assert len(rows) == 1 + 2 * 3
