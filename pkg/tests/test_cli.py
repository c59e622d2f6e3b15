import json

import pytest
from click.testing import CliRunner

from yamabe_lab.cli import SCHEMA, ConfigError, RunConfig, main
from yamabe_lab.io import read_fields, read_json, read_table


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(main, [str(a) for a in args], catch_exceptions=False)


def test_constants(runner, tmp_path):
    res = invoke(runner, "constants", "--n", "3..8", "--out", tmp_path)
    assert res.exit_code == 0
    header, rows = read_table(tmp_path / "constants.csv")
    assert header[:4] == ["n", "a", "p", "T"] and "ratio_residual" in header
    assert [r[0] for r in rows] == ["3", "4", "5", "6", "7", "8"]
    man = read_json(tmp_path / "manifest.json")
    assert man["exit_status"] == 0 and man["config"]["n"] == [3, 4, 5, 6, 7, 8]
    # every stdout line is recorded in the manifest
    assert man["stdout"] == res.output.strip().splitlines()


def test_quotient_scan_reports_failure(runner, tmp_path):
    res = invoke(runner, "quotient-scan", "--n", 5, "--r", 0.1, "--beta", -1, "--out", tmp_path)
    header, rows = read_table(tmp_path / "quotient_scan.csv")
    assert header == ["epsilon", "Q", "T", "margin"]
    assert len(rows) == 3
    margins = [float(r[3]) for r in rows]
    # the margin column is negative here, so the run must signal failure
    assert any(m <= 0 for m in margins)
    assert res.exit_code == 1
    assert read_json(tmp_path / "manifest.json")["failures"]


def test_config_errors_are_exhaustive(runner, tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"grid": {"m": "x", "n": 2}, "bogus": 1, "curvature.kind": "weird", "tol": -1}))
    res = runner.invoke(main, ["global-solve", "--config", str(cfg)])
    assert res.exit_code == 2
    for key in ("bogus", "tol", "grid.m", "curvature.kind", "grid.n"):
        assert f"config error: {key}" in res.output


def test_build_collects_every_error():
    with pytest.raises(ConfigError) as exc:
        RunConfig.build("continuation", {"schedule.beta0": 0.3, "schedule.steps": 1, "kappa": "a"})
    msgs = " ".join(exc.value.errors)
    assert "kappa" in msgs and "schedule.beta0" in msgs and "schedule.steps" in msgs


def test_flags_override_config(tmp_path):
    cfg = RunConfig.build("prescribe", {"r": 0.3, "grid": {"m": 16}}, {"r": 0.2})
    assert cfg["r"] == 0.2 and cfg["grid.m"] == 16


def test_every_subcommand_has_common_keys():
    for sub, schema in SCHEMA.items():
        assert {"out", "tol", "seed"} <= set(schema), sub


def test_prescribe_deterministic_and_replayable(runner, tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert invoke(runner, "prescribe", "--m", 16, "--r", 0.45, "--out", a).exit_code == 0
    assert invoke(runner, "prescribe", "--m", 16, "--r", 0.45, "--out", b).exit_code == 0
    assert (a / "fields.csv").read_bytes() == (b / "fields.csv").read_bytes()
    # a manifest is itself a config; only the output directory changes
    assert invoke(runner, "prescribe", "--config", a / "manifest.json", "--out", c).exit_code == 0
    assert (a / "fields.csv").read_bytes() == (c / "fields.csv").read_bytes()
    fields = read_fields(a / "fields.csv")
    assert set(fields) == {"u", "H", "F"}
    summ = read_json(a / "summary.json")
    assert summ["H_q"] < 0 and summ["band_ok"]


def test_eigen(runner, tmp_path):
    res = invoke(runner, "eigen", "--m", 9, "--out", tmp_path)
    assert res.exit_code == 0
    assert read_json(tmp_path / "summary.json")["sign"] == "negative"


@pytest.mark.parametrize("case,value", [("negative", -1.0), ("positive", 1.0)])
def test_local_solve(runner, tmp_path, case, value):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"curvature.value": value, "grid.m": 101}))
    res = invoke(runner, "local-solve", "--case", case, "--config", cfg, "--out", tmp_path / "o")
    assert res.exit_code == 0, res.output
    header, rows = read_table(tmp_path / "o" / "trace.csv")
    assert header == ["step", "residual", "min", "max", "monotone"]
    assert float(rows[-1][1]) <= 1e-8


def test_global_solve_negative(runner, tmp_path):
    res = invoke(runner, "global-solve", "--m", 17, "--out", tmp_path)
    assert res.exit_code == 0, res.output
    summ = read_json(tmp_path / "summary.json")
    assert summ["sign_ok"] and summ["lambda"] < 0
    assert all(c["ok"] for c in summ["certificates"].values())


def test_global_solve_positive_fails_without_sandwich(runner, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"curvature": {"kind": "well", "value": 50.0, "amplitude": -800.0},
                               "pipeline.radius": 0.25, "beta": -0.1}))
    res = invoke(runner, "global-solve", "--m", 13, "--config", cfg, "--out", tmp_path / "o")
    assert res.exit_code == 1
    assert "FAIL" in res.output


def test_continuation_small(runner, tmp_path):
    res = invoke(runner, "continuation", "--beta0", -0.2, "--steps", 2, "--m", 13, "--out", tmp_path)
    assert res.exit_code == 0, res.output
    header, rows = read_table(tmp_path / "continuation.csv")
    assert "lambda_beta" in header and len(rows) == 2
    assert res.output.strip().splitlines()[-1].startswith("final residual=")
    assert float(res.output.strip().splitlines()[-1].split("=")[1]) <= 1e-7
