import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from fracball import thresholds as TH
from fracball.config import ExperimentConfig, default_config
from fracball.errors import DomainError, InfeasibleConfigError
from fracball.experiments import (ExperimentReport, emit_plot_data, fmt, growth_ratios,
                                  run_experiment, write_csv)
from fracball.geometry import ProblemParams


def _csvs(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).glob("*.csv"))}


def test_fmt():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(True) == "true" and fmt(np.bool_(False)) == "false"
    assert fmt(np.int64(3)) == "3" and fmt("x") == "x"


def test_write_csv_header_always_present(tmp_path):
    write_csv(tmp_path / "a.csv", ["x", "y"], [])
    assert (tmp_path / "a.csv").read_text() == "x,y\n"


def test_growth_ratios():
    assert np.allclose(growth_ratios([1.0, 2.0, 6.0]), [2.0, 3.0])


def test_emit_plot_data(tmp_path):
    rep = ExperimentReport("E4_constants", True, {}, {},
                           series={"s": (np.array([0.9, 0.99]), np.array([1.2, 1.27]),
                                         "alpha", "ratio", "linear")})
    files = emit_plot_data(rep, "s", tmp_path)
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "alpha,ratio"
    assert "scale = linear" in (tmp_path / "s.axes.txt").read_text()
    assert len(files) == 2
    with pytest.raises(DomainError):
        emit_plot_data(rep, "missing", tmp_path)


def test_subcritical_e1_rejected_before_solving(tmp_path):
    cfg = ExperimentConfig("E1_exponent", ProblemParams(2, 0.5, 1.4, 0.0, 64),
                           s_list=TH.SWEEP_S, output_dir=str(tmp_path))
    t = time.perf_counter()
    with pytest.raises(InfeasibleConfigError, match="1.5"):
        run_experiment(cfg)
    assert time.perf_counter() - t < 1.0
    assert not any(tmp_path.iterdir())


def test_e2_small_is_deterministic(tmp_path):
    base = replace(default_config("E2_blowup"), params=ProblemParams(2, 0.5, 1.2, 0.0, 12))
    r1 = run_experiment(replace(base, output_dir=str(tmp_path / "a")))
    r2 = run_experiment(replace(base, output_dir=str(tmp_path / "b")))
    c1, c2 = _csvs(tmp_path / "a"), _csvs(tmp_path / "b")
    assert c1 == c2 and "metrics.csv" in c1 and "probe_growth.csv" in c1
    assert r1.checks == r2.checks
    assert r1.checks["refused"]
    assert (tmp_path / "a" / "probe_growth.axes.txt").exists()


def test_e5_small(tmp_path):
    cfg = replace(default_config("E5_kernel_identities", tmp_path),
                  options={"torsion_resolution": "16"})
    rep = run_experiment(cfg)
    assert set(rep.checks) == {"torsion_sup", "torsion_center", "torsion_drop", "poisson_green"}
    assert rep.metrics["torsion_sup_err"] < TH.TORSION_SUP_REL_TOL
    assert "torsion_convergence.csv" in _csvs(tmp_path)


def test_e3_needs_three_dimensions(tmp_path):
    cfg = ExperimentConfig("E3_alpha_vanishing", ProblemParams(2, 0.6, 5.0, 0.0, 8),
                           alpha_list=(0.6, 0.8), output_dir=str(tmp_path))
    with pytest.raises(InfeasibleConfigError):
        run_experiment(cfg)


def test_e3_small_runs(tmp_path):
    cfg = ExperimentConfig("E3_alpha_vanishing", ProblemParams(3, 0.6, 5.0, 0.0, 8),
                           alpha_list=(0.6, 0.9), output_dir=str(tmp_path))
    rep = run_experiment(cfg)
    assert rep.checks["converged"]
    assert "bound" in rep.checks
    assert rep.series["supK_vs_alpha"][0].tolist() == [0.6, 0.9]
