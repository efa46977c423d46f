import json
import math

import numpy as np
import pytest

from regcb.cli import (CSV_HEADER, ConfigError, fit_rate_slope, main,
                       parse_config, run_and_emit, sweep_grid)


def _write_cfg(tmp_path, **kw):
    base = {"beta": [0.5], "T": [400], "reps": 1, "regime": "fast",
            "seed": 3, "lambda": "const:0.5",
            "out": str(tmp_path / "out.csv")}
    base.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(base))
    return str(path)


# ------------------------------------------------------------- validation

def test_beta_out_of_range_rejected(tmp_path):
    with pytest.raises(ConfigError, match="beta"):
        parse_config(_write_cfg(tmp_path, beta=[1.5]))


def test_missing_T_rejected(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"beta": [0.5]}))
    with pytest.raises(ConfigError, match="'T'"):
        parse_config(str(path))


def test_empty_T_list_rejected_without_output(tmp_path):
    cfg = _write_cfg(tmp_path, T=[])
    with pytest.raises(ConfigError, match="T"):
        parse_config(cfg)
    assert not (tmp_path / "out.csv").exists()


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError, match="warp_factor"):
        parse_config(_write_cfg(tmp_path, warp_factor=9))


def test_bad_regime_rejected(tmp_path):
    with pytest.raises(ConfigError, match="regime"):
        parse_config(_write_cfg(tmp_path, regime="warp"))


def test_flag_overrides_file(tmp_path):
    spec = parse_config(_write_cfg(tmp_path), {"seed": 99})
    assert spec.seed == 99
    assert "seed" in spec.overridden


def test_exit_code_validation_error(tmp_path, capsys):
    code = main(["run", "--config", str(tmp_path / "nope.json")])
    assert code == 1
    assert "config error" in capsys.readouterr().err


# -------------------------------------------------------------- slope fits

def test_slope_exact_power_law():
    Ts = [10 ** 4, 2 * 10 ** 4, 4 * 10 ** 4, 8 * 10 ** 4]
    means = [3.0 * t ** -0.5 for t in Ts]
    slope, stderr = fit_rate_slope(Ts, means)
    assert slope == pytest.approx(-0.5, abs=1e-10)
    assert stderr == pytest.approx(0.0, abs=1e-9)


def test_slope_log_factor_bias():
    Ts = np.logspace(4, 5, 6)
    means = [2.0 * t ** -0.5 * math.log(t) ** 2 for t in Ts]
    slope, _ = fit_rate_slope(Ts, means)
    assert -0.5 < slope < -0.3


def test_slope_drops_nonpositive_with_warning():
    Ts = [10, 100, 1000, 10000]
    means = [1.0, -0.1, -0.5, 0.001]
    with pytest.warns(UserWarning, match="nonpositive"):
        with pytest.raises(ValueError):
            fit_rate_slope(Ts, means)
    Ts = [10, 100, 1000, 10000]
    means = [1.0, 0.1, 0.01, -0.5]
    with pytest.warns(UserWarning):
        slope, _ = fit_rate_slope(Ts, means)
    assert slope == pytest.approx(-1.0, abs=1e-10)


def test_slope_needs_three_points():
    with pytest.raises(ValueError):
        fit_rate_slope([10, 100], [1.0, 0.1])


# ------------------------------------------------------------ CSV emission

def test_csv_header_and_schema(tmp_path):
    cfg = _write_cfg(tmp_path)
    assert main(["run", "--config", cfg]) == 0
    lines = (tmp_path / "out.csv").read_bytes().decode("utf-8").split("\n")
    data_lines = [ln for ln in lines if ln and not ln.startswith("#")]
    assert data_lines[0] == CSV_HEADER
    row = data_lines[1].split(",")
    assert len(row) == 11
    # Row self-consistency: regret_times_T and normalized_regret are
    # recomputable from the row's own fields.
    beta, T = float(row[0]), int(row[1])
    regret = float(row[5])
    assert float(row[6]) == pytest.approx(regret * T, rel=1e-12)
    norm = (T / math.log(T) ** 2) ** (-2 * beta / (2 * beta + 1))
    assert float(row[7]) == pytest.approx(regret / norm, rel=1e-12)
    # LF endings, no CR.
    assert b"\r" not in (tmp_path / "out.csv").read_bytes()


def test_byte_determinism_across_runs_and_parallelism(tmp_path, monkeypatch):
    cfg = _write_cfg(tmp_path, T=[300, 400], reps=2)
    main(["run", "--config", cfg])
    first = (tmp_path / "out.csv").read_bytes()
    monkeypatch.setenv("REGCB_WORKERS", "4")
    main(["run", "--config", cfg])
    second = (tmp_path / "out.csv").read_bytes()
    assert first == second


def test_seed_override_echoed_in_header(tmp_path):
    cfg = _write_cfg(tmp_path)
    main(["run", "--config", cfg, "--seed", "11"])
    head = (tmp_path / "out.csv").read_text().splitlines()[0]
    assert head == "# seed=11 (flag override)"


def test_summary_reports_negative_slopes(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, T=[600, 1200, 2400], reps=2)
    assert main(["run", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert "summary:" in out and "rate slope" in out


def test_failed_rows_yield_exit_code_2(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, T=[400, 500], bins=400)
    code = main(["run", "--config", cfg])
    assert code == 2
    body = (tmp_path / "out.csv").read_text()
    assert "# error" in body


def test_sweep_grid_cardinality(tmp_path):
    spec = parse_config(_write_cfg(tmp_path, beta=[0.3, 0.5],
                                   T=[400, 500], reps=3))
    assert len(sweep_grid(spec)) == 12


def test_probe_margin_cli(tmp_path):
    cfg = _write_cfg(tmp_path, **{"lambda": "linear:0.0,1.0",
                                  "out": str(tmp_path / "probe.csv")})
    assert main(["probe-margin", "--config", cfg]) == 0
    lines = (tmp_path / "probe.csv").read_text().splitlines()
    assert lines[0].startswith("# lambda_exponent=")
    assert lines[2].startswith("delta") or lines[2].split(",")[0]
