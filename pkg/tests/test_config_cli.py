import json
from pathlib import Path

import pytest

from blebsheet.cli import main, run_sweep, sweep_point
from blebsheet.config import (
    ConfigError,
    ScenarioConfig,
    parse_config,
    parse_config_dict,
)
from blebsheet.model import ModelParams


def write_config(tmp_path: Path, doc: dict, name="config.json") -> Path:
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def test_minimal_config_fills_defaults():
    cfg = parse_config_dict({"scenario": "stationary_state"})
    assert cfg.n == 64
    assert cfg.tau == 1e-6
    assert cfg.final_time == 1e-4
    assert cfg.scheme == "ImplicitRipping"
    assert cfg.params == ModelParams()
    assert cfg.pressure["kind"] == "pulse"
    assert cfg.pressure["peak"] == 100.0
    assert cfg.snapshot_steps == (1, 2, 50, 100)


def test_disruption_defaults():
    cfg = parse_config_dict({"scenario": "disruption"})
    assert cfg.pressure == {"kind": "constant", "value": 1.0}
    assert cfg.snapshot_steps == (1, 50, 75, 100)
    assert cfg.disruption_ramp == "min"
    assert cfg.disruption_rho_hat == 10.0


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="grdi_size"):
        parse_config_dict({"scenario": "disruption", "grdi_size": 32})
    with pytest.raises(ConfigError, match="kapa"):
        parse_config_dict({"scenario": "disruption", "params": {"kapa": 1.0}})


def test_range_validation():
    with pytest.raises(ConfigError):
        parse_config_dict({"scenario": "stationary_state", "tau": 0.0})
    with pytest.raises(ConfigError):
        parse_config_dict({"scenario": "stationary_state", "n": 1})
    with pytest.raises(ConfigError):
        parse_config_dict({"scenario": "stationary_state", "scheme": "LeapFrog"})
    with pytest.raises(ConfigError):
        parse_config_dict({"scenario": "nonsense"})
    with pytest.raises(ConfigError):
        parse_config_dict({"scenario": "pressure_sweep", "sweep": {"min": 5.0, "max": 1.0}})
    with pytest.raises(ConfigError):
        parse_config_dict({"scenario": "disruption", "disruption_ramp": "clamp"})


def test_parse_config_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="malformed"):
        parse_config(bad)


def test_manifest_roundtrip():
    cfg = parse_config_dict({
        "scenario": "disruption",
        "n": 12,
        "params": {"kappa": 50.0, "eta_a": 0.3},
        "disruption_ramp": "max",
    })
    echoed = parse_config_dict(cfg.to_dict())
    assert echoed == cfg


def test_cli_config_error_exit_2(tmp_path, capsys):
    path = write_config(tmp_path, {"scenario": "stationary_state", "tau": 0.0,
                                   "output_dir": str(tmp_path / "out")})
    code = main(["run", "--config", str(path)])
    assert code == 2
    assert "config error" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_cli_run_writes_outputs(tmp_path):
    out = tmp_path / "run_out"
    path = write_config(tmp_path, {
        "scenario": "stationary_state",
        "n": 8,
        "final_time": 2e-5,
        "snapshot_steps": [1, 20],
        "fit_window": [2, 20],
        "output_dir": str(out),
    })
    assert main(["run", "--config", str(path)]) == 0
    diag = (out / "diagnostics.csv").read_text().splitlines()
    assert diag[0].startswith("step,t,max_h,")
    assert len(diag) == 21  # header + final_time / tau rows
    assert (out / "snapshot_step1.csv").exists()
    assert (out / "snapshot_step20.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["library_version"]
    assert manifest["config"]["scenario"] == "stationary_state"
    echoed = parse_config_dict(manifest["config"])
    assert echoed.n == 8


def test_cli_determinism_byte_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        path = write_config(tmp_path, {
            "scenario": "disruption",
            "n": 8,
            "final_time": 1e-5,
            "snapshot_steps": [10],
            "output_dir": str(out),
        }, name=f"{name}.json")
        assert main(["run", "--config", str(path)]) == 0
        outs.append(out)
    a = (outs[0] / "diagnostics.csv").read_bytes()
    b = (outs[1] / "diagnostics.csv").read_bytes()
    assert a == b
    sa = (outs[0] / "snapshot_step10.csv").read_bytes()
    sb = (outs[1] / "snapshot_step10.csv").read_bytes()
    assert sa == sb


def test_cli_overrides(tmp_path):
    out = tmp_path / "o"
    path = write_config(tmp_path, {"scenario": "stationary_state", "final_time": 5e-6,
                                   "snapshot_steps": [], "fit_window": [1, 5]})
    assert main(["run", "--config", str(path), "--out", str(out), "--n", "6"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["n"] == 6


def test_sweep_zero_peak_is_flat():
    cfg = parse_config_dict({"scenario": "pressure_sweep", "n": 8})
    assert sweep_point(0.0, cfg) == 0.0


def test_sweep_linearity_below_threshold():
    cfg = parse_config_dict({"scenario": "pressure_sweep", "n": 8})
    h1 = sweep_point(20.0, cfg)
    h2 = sweep_point(40.0, cfg)
    assert h2 / h1 == pytest.approx(2.0, abs=1e-6)


def test_sweep_monotone_and_detector(tmp_path):
    cfg = parse_config_dict({
        "scenario": "pressure_sweep",
        "n": 8,
        "sweep": {"min": 0.0, "max": 500.0, "samples": 6, "bisect_tol": 2.0},
    })
    rows, critical = run_sweep(cfg)
    values = [v for _, v in rows]
    assert all(v2 >= v1 - 1e-12 for v1, v2 in zip(values, values[1:]))
    assert critical is not None
    # the detector agrees with the exactly linear subcritical response
    gain = sweep_point(1.0, cfg)
    assert critical == pytest.approx(cfg.params.h_star / gain, abs=2.5)


def test_sweep_cli_with_detection(tmp_path, capsys):
    out = tmp_path / "sweepfull"
    path = write_config(tmp_path, {
        "scenario": "pressure_sweep",
        "n": 8,
        "sweep": {"min": 0.0, "max": 500.0, "samples": 5, "bisect_tol": 5.0},
        "output_dir": str(out),
    })
    assert main(["sweep", "--config", str(path)]) == 0
    assert "critical pressure" in capsys.readouterr().out
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["critical_pressure_found"] is True
    assert 0.0 < manifest["critical_pressure"] < 500.0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert len(rows) == 6


def test_sweep_no_crossing_reported(tmp_path, capsys):
    out = tmp_path / "sweep"
    path = write_config(tmp_path, {
        "scenario": "pressure_sweep",
        "n": 8,
        "sweep": {"min": 0.0, "max": 5.0, "samples": 3, "bisect_tol": 1.0},
        "output_dir": str(out),
    })
    assert main(["sweep", "--config", str(path)]) == 0
    assert "no critical pressure in range" in capsys.readouterr().out
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["critical_pressure_found"] is False
    assert (out / "sweep.csv").read_text().startswith("peak_pressure,max_h")


def test_sweep_worker_neutrality(tmp_path):
    doc = {
        "scenario": "pressure_sweep",
        "n": 6,
        "sweep": {"min": 0.0, "max": 100.0, "samples": 4, "bisect_tol": 5.0},
    }
    rows1, crit1 = run_sweep(parse_config_dict({**doc, "workers": 1}))
    rows2, crit2 = run_sweep(parse_config_dict({**doc, "workers": 2}))
    assert rows1 == rows2
    assert crit1 == crit2


def test_cli_solver_failure_exit_1(tmp_path, capsys):
    out = tmp_path / "fail"
    path = write_config(tmp_path, {
        "scenario": "stationary_state",
        "n": 8,
        "final_time": 5e-6,
        "max_iterations": 2,
        "output_dir": str(out),
    })
    assert main(["run", "--config", str(path)]) == 1
    assert "solver failure" in capsys.readouterr().err


def test_stationary_result_serializes_like_snapshots(tmp_path):
    from blebsheet.grid import build_grid
    from blebsheet.model import ModelParams, pressure_pulse
    from blebsheet.output import write_snapshot
    from blebsheet.stationary import stationary_fixed_point

    grid = build_grid(8)
    result = stationary_fixed_point(
        ModelParams(), pressure_pulse(grid, peak=50.0), m0=1.0, grid=grid
    )
    write_snapshot(tmp_path / "stationary.csv", grid, result)
    lines = (tmp_path / "stationary.csv").read_text().splitlines()
    assert lines[0] == "x,y,h,rho_a,rho_i"
    assert len(lines) == grid.num_nodes + 1


def test_cli_geometry_report(tmp_path):
    out = tmp_path / "geo"
    assert main(["verify-geometry", "--out", str(out)]) == 0
    text = (out / "geometry_report.csv").read_text()
    assert text.startswith("kind,variant,R,l,formula,fd_value,rel_err,stability")
    assert "WillmoreInt" in text


def test_cli_gamma_ladder(tmp_path):
    out = tmp_path / "gamma"
    path = write_config(tmp_path, {
        "scenario": "gamma_limit",
        "theta_ladder": [1e-2, 1e-3],
        "pressure": {"kind": "pulse", "peak": 150.0, "center": [0.5, 0.5], "radius": 0.4},
        "output_dir": str(out),
    })
    assert main(["run", "--config", str(path)]) == 0
    lines = (out / "gamma_ladder.csv").read_text().splitlines()
    assert lines[0] == "theta,J_theta,J0,gap,minimizer_distance"
    assert len(lines) == 3
