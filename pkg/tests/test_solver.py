import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracball.constants import normalization_constant
from fracball.errors import DomainError, InfeasibleConfigError
from fracball.geometry import ProblemParams
from fracball.greenop import Field, apply
from fracball.kernels import gamma_source, torsion_exact
from fracball.solver import (Bump, SolveOptions, axis_trace, axis_values, default_bumps,
                             limit_solution, node_scale, solve_exterior_dirac, solve_semilinear,
                             subcell_rule, sweep_s, symmetry_check, threshold_message, weak_residual)

OPTS = SolveOptions(tol_residual=1e-9, tol_sandwich=1e-9)


def _src(mesh, s, cN, p=3.0):
    return Field.on(mesh, gamma_source(mesh.nodes, s, ProblemParams(2, 0.5, p), cN))


def test_linear_case_matches_direct_solve(small2, cN2):
    mesh, K = small2
    f = _src(mesh, 0.5, cN2)
    u, rep = solve_semilinear(mesh, K, f, 1.0, OPTS)
    ref = np.linalg.solve(np.eye(mesh.n) + K.entries, K.entries @ f.values)
    assert rep.converged
    assert np.max(np.abs(u.values - ref)) <= 1e-8 * np.max(ref)


def test_p_none_and_p_zero(small2, cN2):
    mesh, K = small2
    f = _src(mesh, 0.5, cN2)
    u, _ = solve_semilinear(mesh, K, f, None)
    assert np.allclose(u.values, apply(K, f).values)
    u0, _ = solve_semilinear(mesh, K, f, 0)
    assert np.allclose(u0.values, K.entries @ (f.values - 1.0))


@pytest.mark.parametrize("s", [0.4, 0.1, 0.02])
def test_fixed_point_and_sandwich(small2, cN2, s):
    mesh, K = small2
    f = _src(mesh, s, cN2)
    u, rep = solve_semilinear(mesh, K, f, 3.0, OPTS)
    assert rep.converged
    Gf = apply(K, f).values
    v = u.values
    assert np.all(v >= 0) and np.all(v <= Gf + 1e-12)
    F = v + K.entries @ v ** 3 - Gf
    assert np.max(np.abs(F) / node_scale(Gf)) < 1e-8


@settings(max_examples=10, deadline=None)
@given(lam=st.floats(1.05, 4.0), s=st.sampled_from([0.1, 0.3]))
def test_comparison_principle(small2, cN2, lam, s):
    mesh, K = small2
    f = _src(mesh, s, cN2)
    u1, _ = solve_semilinear(mesh, K, f, 3.0, OPTS)
    u2, _ = solve_semilinear(mesh, K, Field.on(mesh, lam * f.values), 3.0, OPTS)
    assert np.all(u2.values >= u1.values - 1e-8 * node_scale(apply(K, f).values))


def test_picard_and_newton_agree(small2, cN2):
    mesh, K = small2
    f = _src(mesh, 0.4, cN2)
    a, ra = solve_semilinear(mesh, K, f, 3.0, OPTS)
    b, rb = solve_semilinear(mesh, K, f, 3.0, SolveOptions(scheme="damped_picard", max_iters=5000,
                                                            tol_residual=1e-9, tol_sandwich=1e-9))
    assert ra.converged and rb.converged
    assert np.max(np.abs(a.values - b.values)) < 1e-7


def test_two_initialisations(small2, cN2):
    mesh, K = small2
    u, rep = solve_exterior_dirac(mesh, K, ProblemParams(2, 0.5, 3.0, 0.2, 16), cN2, OPTS)
    assert rep.extra["two_init_converged"]
    assert rep.extra["two_init_distance_scaled"] <= 10 * OPTS.tol_residual


def test_exterior_dirac_needs_positive_s(small2, cN2):
    mesh, K = small2
    with pytest.raises(DomainError):
        solve_exterior_dirac(mesh, K, ProblemParams(2, 0.5, 3.0, 0.0, 16), cN2)


def test_negative_source_rejected(small2):
    mesh, K = small2
    with pytest.raises(DomainError):
        solve_semilinear(mesh, K, Field.on(mesh, -np.ones(mesh.n)), 3.0)


def test_sweep_is_monotone(small2, cN2):
    mesh, K = small2
    out = sweep_s(mesh, K, ProblemParams(2, 0.5, 3.0, 0.0, 16), [0.4, 0.2, 0.1, 0.05], cN2, OPTS)
    assert [s for s, _, _ in out] == [0.4, 0.2, 0.1, 0.05]
    assert all(r.converged for _, _, r in out)
    assert sum(r.extra["monotone_violations"] for _, _, r in out) == 0


@pytest.mark.parametrize("bad", [[0.1, 0.2], [0.2, 0.2], [], [0.1, 0.0]])
def test_sweep_rejects_bad_lists(small2, cN2, bad):
    mesh, K = small2
    with pytest.raises(DomainError):
        sweep_s(mesh, K, ProblemParams(2, 0.5, 3.0), bad, cN2)


@pytest.mark.parametrize("p", [1.2, 1.4, 1.5])
def test_limit_refused_below_threshold(small2, cN2, p):
    mesh, K = small2
    with pytest.raises(InfeasibleConfigError, match="1.5"):
        limit_solution(mesh, K, ProblemParams(2, 0.5, p), cN2)
    assert "1 + 2*alpha/N = 1.5" in threshold_message(ProblemParams(2, 0.5, p))


def test_limit_solution_reports_certificate(small2, cN2):
    mesh, K = small2
    u, rep = limit_solution(mesh, K, ProblemParams(2, 0.5, 3.0, 0.0, 16), cN2, OPTS)
    assert rep.converged
    assert rep.extra["certificate_margin"] >= 0
    assert rep.extra["sigma0"] == pytest.approx(1.0)
    assert rep.extra["certified_k"] == pytest.approx(cN2 ** (1 / 3), rel=2e-2)


def test_symmetry_of_solution(small2, cN2):
    mesh, K = small2
    u, _ = solve_semilinear(mesh, K, _src(mesh, 0.2, cN2), 3.0, OPTS)
    i, j = mesh.reflection_pairs()
    assert np.max(np.abs(u.values[i] - u.values[j])) <= 1e-6 * np.max(u.values)
    rep = symmetry_check(mesh, u)
    assert rep.symmetry_defect <= 0.05 * rep.field_max
    assert rep.radial_fraction <= 0.01


def test_axis_values_and_trace(small2):
    mesh, _ = small2
    # a field even in the first coordinate and linear along the axis
    vals = 1.0 + mesh.nodes[:, 1] + 0.0 * mesh.nodes[:, 0] ** 2
    t, v = axis_values(mesh, vals)
    assert np.allclose(v, 1.0 + t, rtol=1e-3)
    tr = axis_trace(mesh, vals, [0.5, 1e-6])
    assert tr.values[0] == pytest.approx(1.5, rel=1e-2)
    assert np.isnan(tr.values[1]) and not tr.resolved[1]
    with pytest.raises(DomainError):
        axis_trace(mesh, vals, [2.5])


def test_subcell_rule_integrates_volume(small2):
    mesh, _ = small2
    pts, w = subcell_rule(mesh)
    assert w.sum() == pytest.approx(math.pi, rel=1e-10)
    # second moment about the center: pi/2 for the unit disc
    r2 = np.sum((pts - mesh.domain.c) ** 2, axis=-1)
    assert np.sum(w * r2) == pytest.approx(math.pi / 2, rel=1e-8)


def test_bump_is_smooth_and_supported():
    b = Bump((0.0, 1.0), 0.5)
    assert b(np.array([[0.0, 1.0]]))[0] == pytest.approx(math.exp(-1.0))
    assert b(np.array([[0.0, 1.6]]))[0] == 0.0
    assert len(default_bumps(3)) == 3


def test_weak_residual_of_torsion(small2, cN2):
    mesh, _ = small2
    u = torsion_exact(mesh.nodes, mesh.domain, 0.5)
    wr = weak_residual(mesh, u, None, lambda x: np.ones(len(x)), default_bumps(2)[1:2], 0.5, cN2)
    assert max(wr) < 0.05


def test_weak_residual_rejects_leaking_test_function(small2, cN2):
    mesh, _ = small2
    with pytest.raises(DomainError):
        weak_residual(mesh, np.zeros(mesh.n), None, lambda x: np.ones(len(x)),
                      [Bump((0.0, 0.2), 0.5)], 0.5, cN2)


@pytest.mark.parametrize("kw", [dict(scheme="x"), dict(damping=0.0), dict(tol_residual=0.0),
                                dict(max_iters=0)])
def test_solve_options_validation(kw):
    with pytest.raises(DomainError):
        SolveOptions(**kw)


def test_mollifier_limit_does_not_depend_on_bump(small2, cN2):
    from fracball.kernels import mollified_transform
    mesh, K = small2
    pr = ProblemParams(2, 0.5, 3.0, 0.5, 16)
    ref, _ = solve_semilinear(mesh, K, _src(mesh, 0.5, cN2), 3.0, OPTS)
    sols = {}
    for kind in ("poly", "gauss"):
        g = mollified_transform(mesh.nodes, 32, 0.5, pr, cN2, kind=kind)
        sols[kind], _ = solve_semilinear(mesh, K, Field.on(mesh, g), 3.0, OPTS)
    scale = np.max(ref.values)
    assert np.max(np.abs(sols["poly"].values - sols["gauss"].values)) < 1e-3 * scale
    assert np.max(np.abs(sols["gauss"].values - ref.values)) < 3e-3 * scale
