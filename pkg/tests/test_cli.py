import io
import csv
import json
import math

import pandas as pd
import pytest

from convlab import COMMAND_CLASS_MAPPINGS, __version__
from convlab.cli import build_parser, main, render, RunManifest
from convlab.commands.common import CommandOutput


def _summary(text):
    lines = text.splitlines()
    start = lines.index("# summary")
    rows = list(csv.reader(lines[start + 1:]))
    assert rows[0] == ["key", "value"]
    return {key: value for key, value in rows[1:]}


def _json_summary(text):
    records = [json.loads(line) for line in text.splitlines() if line.strip()]
    summary = [r for r in records if r["table"] == "summary"]
    assert len(summary) == 1
    return summary[0]


def _files(directory, names):
    return {name: (directory / name).read_bytes() for name in names}


def test_every_command_has_a_subparser():
    parser = build_parser()
    for name in COMMAND_CLASS_MAPPINGS:
        assert parser.parse_args([name] + (["--out", "x"] if name == "simulate" else [])
                                 + (["--input", "x"] if name == "estimate" else [])).command == name


def test_abbreviations_are_rejected():
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args(["analyze", "--alph", "1"])
    assert info.value.code == 2


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_no_command_is_a_usage_error():
    assert main([]) == 2


def test_analyze(capsys):
    code = main(["analyze", "--alpha", "1", "--sigma", str(math.sqrt(2.0)), "--gamma", "1", "--S", "0", "1"])
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("# curve\nS,phi,psi,L,U\n")
    summary = _summary(out)
    assert float(summary["optimum_L"]) == pytest.approx(math.pi / (4.0 * math.log(2.0)), rel=1e-10)
    assert float(summary["optimum_U"]) == pytest.approx(0.45203, abs=1e-4)
    assert float(summary["Sigma"]) == pytest.approx(1.0)


def test_doubling_gamma_halves_the_leverage(tmp_path):
    for gamma in ("1", "2"):
        assert main(["analyze", "--gamma", gamma, "--S", "0", "0.005", "0.01", "--out", str(tmp_path / gamma)]) == 0
    one = pd.read_csv(tmp_path / "1" / "curve.csv")
    two = pd.read_csv(tmp_path / "2" / "curve.csv")
    pd.testing.assert_series_equal(two["L"] * 2.0, one["L"], rtol=1e-10)
    assert (tmp_path / "1" / "manifest.json").exists()


def test_analyze_for_a_kelly_investor(capsys):
    assert main(["analyze", "--gamma", "0", "--format", "json"]) == 0
    out = capsys.readouterr().out
    curve = [json.loads(line) for line in out.splitlines() if json.loads(line)["table"] == "curve"]
    assert curve[0]["L"] is None and curve[0]["U"] is None
    summary = _json_summary(out)
    assert "unbounded" in summary["note"]
    assert summary["linear_growth"] == pytest.approx(1e-3)
    assert summary["linear_long_run_variance"] == pytest.approx(2e-6)


def test_out_of_range_inputs():
    assert main(["analyze", "--alpha", "0"]) == 2
    assert main(["analyze", "--alpha", "nan"]) == 2
    assert main(["analyze", "--S", "-0.01"]) == 2
    assert main(["backtest", "--beta", "1.0"]) == 2


def test_simulate_is_reproducible(tmp_path):
    args = ["simulate", "--policy", "threshold", "--steps", "500", "--cost", "0.001", "--seed", "3"]
    names = ["mispricing.csv", "wealth.csv", "prices.csv"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert _files(tmp_path / "a", names) == _files(tmp_path / "b", names)
    assert main(args[:-1] + ["4", "--out", str(tmp_path / "c")]) == 0
    assert _files(tmp_path / "a", names) != _files(tmp_path / "c", names)

    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["master_seed"] == 3
    assert manifest["version"] == __version__


def test_seed_from_the_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("CONVLAB_SEED", "5")
    assert main(["simulate", "--steps", "100", "--policy", "linear", "--out", str(tmp_path / "env")]) == 0
    monkeypatch.delenv("CONVLAB_SEED")
    assert main(["simulate", "--steps", "100", "--policy", "linear", "--seed", "5",
                 "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env" / "wealth.csv").read_bytes() == (tmp_path / "flag" / "wealth.csv").read_bytes()
    assert json.loads((tmp_path / "env" / "manifest.json").read_text())["master_seed"] == 5


def test_zero_policy_wealth(tmp_path, capsys):
    assert main(["simulate", "--steps", "50", "--policy", "zero", "--cost", "0.01", "--out", str(tmp_path)]) == 0
    wealth = pd.read_csv(tmp_path / "wealth.csv")
    assert len(wealth) == 51
    assert (wealth["u"] == 0.0).all()
    summary = _summary(capsys.readouterr().out)
    assert summary["transactions"] == "0"
    assert float(summary["growth_stderr"]) == 0.0


def test_simulate_then_estimate(tmp_path, capsys):
    Sigma = 1e-4 / 0.75
    sigma = math.sqrt(2.0 * math.log(2.0) * Sigma)
    assert main(["simulate", "--alpha", str(math.log(2.0)), "--sigma", str(sigma), "--steps", "3000",
                 "--stationary", "--seed", "8", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    assert main(["estimate", "--input", str(tmp_path / "prices.csv"), "--format", "json"]) == 0
    summary = _json_summary(capsys.readouterr().out)
    assert summary["n"] == 3001
    assert abs(summary["beta_hat"] - 0.5) <= 4.0 * summary["beta_stderr"]
    assert summary["sigma_hat"] == pytest.approx(0.01, rel=0.1)
    assert summary["alpha"] == pytest.approx(math.log(2.0), rel=0.2)


def test_estimate_degenerate_series_still_reports_the_summary(tmp_path, capsys):
    path = tmp_path / "flat.csv"
    path.write_text("date,price,nav\n" + "".join(f"2020-01-0{d},100,100\n" for d in range(1, 8)))
    assert main(["estimate", "--input", str(path)]) == 2
    summary = _summary(capsys.readouterr().out)
    assert summary["n"] == "7"
    assert float(summary["mean"]) == 0.0
    assert "beta_hat" not in summary


def test_estimate_input_errors(tmp_path, caplog):
    path = tmp_path / "bad.csv"
    path.write_text("date,price,nav\n2020-01-01,100,100\n2020-01-02,-5,100\n")
    assert main(["estimate", "--input", str(path)]) == 2
    assert "line 3" in caplog.text
    assert main(["estimate", "--input", str(tmp_path / "absent.csv")]) == 4


def test_unwritable_output_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["analyze", "--out", str(blocker / "sub")]) == 4


def test_backtest_outputs(tmp_path, capsys):
    args = ["backtest", "--realizations", "3", "--horizon", "60", "--S-min", "0.005", "--S-max", "0.00625"]
    assert main(args + ["--out", str(tmp_path / "one")]) == 0
    names = ["grid.csv", "contour_mean.csv", "contour_std.csv", "contour_sharpe.csv"]
    for name in names + ["manifest.json"]:
        assert (tmp_path / "one" / name).exists()
    contour = pd.read_csv(tmp_path / "one" / "contour_mean.csv")
    assert list(contour.columns) == ["S_pct", "Sms_pct", "value"]
    assert len(contour) == 11
    summary = _summary(capsys.readouterr().out)
    assert summary["cells"] == "11"

    assert main(args + ["--threads", "3", "--out", str(tmp_path / "three")]) == 0
    assert _files(tmp_path / "one", names) == _files(tmp_path / "three", names)


def test_backtest_single_realization_has_no_sharpe(tmp_path):
    assert main(["backtest", "--realizations", "1", "--horizon", "60", "--S-min", "0.01", "--S-max", "0.01",
                 "--metric", "sharpe", "--out", str(tmp_path)]) == 0
    assert not (tmp_path / "contour_mean.csv").exists()
    contour = pd.read_csv(tmp_path / "contour_sharpe.csv")
    assert contour["value"].isna().all()


def test_manifest_replay(tmp_path):
    assert main(["simulate", "--policy", "tanh", "--steps", "300", "--seed", "12",
                 "--out", str(tmp_path / "first")]) == 0
    manifest = tmp_path / "first" / "manifest.json"
    assert main(["--manifest", str(manifest), "--replay-out", str(tmp_path / "again")]) == 0
    names = ["mispricing.csv", "wealth.csv", "prices.csv"]
    assert _files(tmp_path / "first", names) == _files(tmp_path / "again", names)
    loaded = RunManifest.load(manifest)
    assert loaded.command == "simulate"
    assert loaded.params["seed"] == 12


def test_bad_manifests(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert main(["--manifest", str(broken)]) == 2
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"command": "explode", "params": {}}))
    assert main(["--manifest", str(unknown)]) == 2
    assert main(["--manifest", str(tmp_path / "absent.json")]) == 4


def test_verify_quick(capsys):
    assert main(["verify-appendix", "--quick"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# checks\nname,achieved,required,passed\n")
    assert _summary(out)["failed"] == "0"


def test_verify_negative_control(capsys):
    assert main(["verify-appendix", "--quick", "--hermite-normalization", "factorial"]) == 3
    out = capsys.readouterr().out
    assert "orthonormality" in out
    assert int(_summary(out)["failed"]) >= 2


def test_verify_tolerance_overrides():
    assert main(["verify-appendix", "--quick", "--tol", "nonsense=1"]) == 2
    assert main(["verify-appendix", "--quick", "--tol", "orthonormality"]) == 2
    assert main(["verify-appendix", "--quick", "--tol", "orthonormality=1.0"]) == 0


def test_verify_report_is_reproducible(tmp_path):
    for name in ("a", "b"):
        assert main(["verify-appendix", "--quick", "--seed", "3", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "checks.csv").read_bytes() == (tmp_path / "b" / "checks.csv").read_bytes()


def test_failed_run_can_be_replayed(tmp_path):
    out = tmp_path / "failed"
    assert main(["verify-appendix", "--quick", "--hermite-normalization", "factorial", "--out", str(out)]) == 3
    assert (out / "checks.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["params"]["hermite_normalization"] == "factorial"
    assert main(["--manifest", str(out / "manifest.json"), "--replay-out", str(tmp_path / "again")]) == 3
    assert (out / "checks.csv").read_bytes() == (tmp_path / "again" / "checks.csv").read_bytes()


def test_degenerate_estimate_keeps_its_manifest(tmp_path):
    path = tmp_path / "flat.csv"
    path.write_text("date,price,nav\n" + "".join(f"2020-01-0{d},100,100\n" for d in range(1, 8)))
    assert main(["estimate", "--input", str(path), "--out", str(tmp_path / "out")]) == 2
    assert json.loads((tmp_path / "out" / "manifest.json").read_text())["command"] == "estimate"


def test_json_output_has_no_infinities():
    output = CommandOutput()
    output.add_table("checks", pd.DataFrame({"name": ["a", "b"], "achieved": [math.inf, 0.5]}))
    output.summary.update({"worst": -math.inf, "missing": math.nan, "n": 2})
    stream = io.StringIO()
    render(output, "json", None, stream)
    text = stream.getvalue()
    assert "Infinity" not in text and "NaN" not in text
    records = [json.loads(line) for line in text.splitlines()]
    assert records[0] == {"table": "checks", "name": "a", "achieved": None}
    assert records[1]["achieved"] == 0.5
    assert records[2] == {"table": "summary", "worst": None, "missing": None, "n": 2}


def test_simulate_reports_the_expected_growth_at_its_step(tmp_path, capsys):
    assert main(["simulate", "--policy", "linear", "--k", "20", "--steps", "100",
                 "--out", str(tmp_path / "daily")]) == 0
    summary = _summary(capsys.readouterr().out)
    assert float(summary["expected_growth"]) == pytest.approx(20.0 * 1e-4 * (1.0 - math.exp(-0.5)), rel=1e-10)
    assert main(["simulate", "--policy", "linear", "--steps", "100", "--cost", "0.001",
                 "--out", str(tmp_path / "costly")]) == 0
    assert "expected_growth" not in _summary(capsys.readouterr().out)
