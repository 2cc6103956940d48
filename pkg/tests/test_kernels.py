import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from fracball.constants import normalization_constant
from fracball.errors import DomainError
from fracball.geometry import BallDomain, ProblemParams, centered_ball, unit_ball
from fracball.kernels import (SourceSpec, g0, gamma_source, green_constant, green_inner_integral,
                              green_inner_integral_quad, green_kernel, green_ring_kernel,
                              mollified_transform, mollifier, mollifier_constant, poisson_kernel,
                              torsion_exact)

from oracles import torsion_center

P2 = ProblemParams(2, 0.5, 3.0)


@settings(max_examples=40, deadline=None)
@given(r0=st.floats(1e-4, 1e4), alpha=st.floats(0.1, 0.9), N=st.sampled_from([2, 3]))
def test_green_inner_integral_two_ways(r0, alpha, N):
    a = float(green_inner_integral(r0, alpha, N))
    b = green_inner_integral_quad(r0, alpha, N)
    assert a == pytest.approx(b, rel=1e-8)


def test_green_inner_integral_infinite_argument():
    from scipy.special import beta
    assert float(green_inner_integral(np.inf, 0.5, 3)) == pytest.approx(beta(0.5, 1.0))


def test_green_constant_frozen():
    # Gamma(1) / (2 pi Gamma(1/2)^2) = 1 / (2 pi^2)
    assert green_constant(2, 0.5) == pytest.approx(1.0 / (2.0 * math.pi ** 2))


@settings(max_examples=40, deadline=None)
@given(st.tuples(st.floats(-0.6, 0.6), st.floats(0.3, 1.6), st.floats(-0.6, 0.6), st.floats(0.3, 1.6)))
def test_green_symmetric(pts):
    x, y = np.array(pts[:2]), np.array(pts[2:])
    b = unit_ball(2)
    if not (b.contains(x) and b.contains(y)) or np.allclose(x, y):
        return
    assert green_kernel(x, y) == pytest.approx(green_kernel(y, x), rel=1e-12)
    assert green_kernel(x, y) > 0


def test_green_integrates_to_torsion_at_center():
    # int_B G(0, y) dy in polar coordinates around the center (N = 2, alpha = 1/2)
    b = centered_ball(2)
    f = lambda r, th: float(green_kernel(np.zeros(2), r * np.array([math.cos(th), math.sin(th)]),
                                         b, 0.5)) * r
    v, _ = integrate.dblquad(f, 0.0, 2 * math.pi, 0.0, 1.0, epsabs=1e-10, epsrel=1e-8)
    assert v == pytest.approx(torsion_center(2, 0.5), rel=1e-6)
    assert v == pytest.approx(2 / math.pi, rel=1e-6)


def test_green_kernel_errors():
    with pytest.raises(DomainError):
        green_kernel([0.0, 1.0], [0.0, 1.0])
    with pytest.raises(DomainError):
        green_kernel([0.0, 1.0], [0.0, 2.5])


def test_green_scaling_with_radius():
    b = BallDomain(2, center=(0.0, 0.0), radius=2.0)
    x, y = np.array([0.2, 0.1]), np.array([-0.4, 0.3])
    ref = green_kernel(x / 2, y / 2, centered_ball(2), 0.5)
    assert green_kernel(x, y, b, 0.5) == pytest.approx(ref * 2.0 ** (2 * 0.5 - 2))


def test_ring_kernel_is_azimuthal_mean():
    b = unit_ball(3)
    x = np.array([0.3, 0.0, 1.1])
    ry, zy = 0.45, 0.8
    psi = np.linspace(0, 2 * math.pi, 4001)[:-1]
    ys = np.stack([ry * np.cos(psi), ry * np.sin(psi), np.full_like(psi, zy)], -1)
    ref = float(np.mean(green_kernel(x, ys, b, 0.5)))
    got = float(green_ring_kernel(0.3, 1.1, ry, zy, b, 0.5))
    assert got == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("x", [[0.0, 0.3], [0.4, 1.0], [-0.2, 1.7]])
def test_poisson_kernel_has_unit_mass(x):
    # int over the exterior of the ball of P(x, z) dz = 1 (N = 2, alpha = 1/2)
    b = unit_ball(2)
    c = b.c
    f = lambda rho, th: float(poisson_kernel(np.array(x), c + rho * np.array([math.cos(th), math.sin(th)]),
                                             b, 0.5)) * rho
    v, _ = integrate.dblquad(f, 0, 2 * math.pi, 1.0, np.inf, epsabs=1e-9, epsrel=1e-7)
    assert v == pytest.approx(1.0, rel=1e-5)


def test_poisson_kernel_errors():
    with pytest.raises(DomainError):
        poisson_kernel([0.0, 3.0], [0.0, -1.0])
    with pytest.raises(DomainError):
        poisson_kernel([0.0, 1.0], [0.0, 1.5])


def test_torsion_exact_values():
    assert float(torsion_exact(np.array([0.0, 1.0]))) == pytest.approx(2 / math.pi)
    assert float(torsion_exact(np.array([0.0, 3.0]))) == 0.0
    for N, a in ((2, 0.25), (3, 0.5), (3, 0.75)):
        assert float(torsion_exact(np.zeros(N), centered_ball(N), a)) == pytest.approx(torsion_center(N, a))


def test_gamma_source():
    cN = normalization_constant(2, 0.5)
    v = gamma_source(np.array([[0.0, 0.5], [0.3, 0.4]]), 0.5, P2, cN)
    assert v[0] == pytest.approx(cN)
    assert v[1] == pytest.approx(cN * (0.09 + 0.81) ** -1.5)
    with pytest.raises(DomainError):
        gamma_source(np.array([0.0, -0.5]), 0.5, P2, cN)


@pytest.mark.parametrize("N", [2, 3])
@pytest.mark.parametrize("kind", ["poly", "gauss"])
def test_mollifier_unit_mass(N, kind):
    from fracball.constants import surface_area
    A = mollifier_constant(N, kind)
    prof = lambda r: float(g0(np.r_[np.zeros(N - 1), r], kind)) * r ** (N - 1)
    m, _ = integrate.quad(prof, 0, 0.5)
    assert surface_area(N) * m == pytest.approx(1.0, rel=1e-10)
    assert A > 0


def test_mollifier_support_and_scaling():
    x = np.array([[0.0, -0.5], [0.0, -0.5 + 0.07]])
    v = mollifier(x, 8, 0.5)
    assert v[0] == pytest.approx(64 * g0(np.zeros(2)))
    assert v[1] == 0.0
    with pytest.raises(DomainError):
        mollifier(x, 0, 0.5)


def test_mollified_transform_converges_to_gamma():
    cN = normalization_constant(2, 0.5)
    pts = np.array([[0.0, 0.2], [0.3, 0.8], [0.0, 1.8]])
    gam = gamma_source(pts, 0.5, P2, cN)
    errs = [np.max(np.abs(mollified_transform(pts, n, 0.5, P2, cN) - gam)) for n in (4, 8, 16)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-2 * np.max(gam)


def test_mollified_transform_rejects_touching_support():
    cN = normalization_constant(2, 0.5)
    with pytest.raises(DomainError):
        mollified_transform(np.array([[0.0, 0.5]]), 1, 0.5, P2, cN)
    with pytest.raises(DomainError):
        mollified_transform(np.array([[0.0, 0.5]]), 8, 0.0, P2, cN)


def test_source_spec_validation():
    SourceSpec("dirac_transform", s=0.1)
    for kw in (dict(kind="other"), dict(kind="constant", cN_alpha=0.0),
               dict(kind="constant", s=-1.0), dict(kind="mollified", n=0, s=0.5)):
        with pytest.raises(DomainError):
            SourceSpec(**kw)
