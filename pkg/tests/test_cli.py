import json

from logzyg.cli import main

SMALL_TOML = """n = 128
probe_n = 128
lemma_n = 64
comm_n = 256
theorem_ns = [128]
J = 8
J_b = 5
"""


def test_bad_theta_exits_with_config_error(tmp_path, capsys):
    p = tmp_path / "c.toml"
    p.write_text("theta = 0.6\n")
    assert main(["--config", str(p), "verify-lp"]) == 2
    assert "theta" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["verify-lp", "--config", str(tmp_path / "none.toml")]) == 2


def test_single_stage_pass(tmp_path, capsys):
    p = tmp_path / "c.toml"
    p.write_text(SMALL_TOML)
    out = tmp_path / "reports"
    # global flags before the subcommand must survive
    assert main(["--config", str(p), "--out", str(out), "--threads", "1", "verify-lp"]) == 0
    summ = json.loads((out / "lp_summary.json").read_text())
    assert summ["status"] == "pass"
    assert "PASS" in capsys.readouterr().out


def test_failing_stage_exit_code(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(SMALL_TOML + "Lambda0 = 1.05\n")
    assert main(["analyze-coefficient", "--config", str(p), "--out", str(tmp_path)]) == 1


def test_seed_override(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(SMALL_TOML)
    assert main(["analyze-coefficient", "--config", str(p), "--seed", "7",
                 "--out", str(tmp_path)]) in (0, 1)
    summ = json.loads((tmp_path / "coefficient_summary.json").read_text())
    assert summ["key_metrics"]["seed"] == 7
