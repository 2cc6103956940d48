r"""Analytic constants of the fractional Laplacian.

Two constants are computed from their integral definitions:

* the normalisation

  .. math:: c_{N,\alpha} = \Big(\int_{\mathbb R^N} \frac{1-\cos z_1}{|z|^{N+2\alpha}}\,dz\Big)^{-1},

* the radial-power symbol :math:`c(\sigma,\alpha)` defined by
  :math:`(-\Delta)^\alpha |x|^{-\sigma} = c(\sigma,\alpha)|x|^{-\sigma-2\alpha}`.

Both integrals are reduced to one or two dimensions by rotational symmetry
and evaluated with adaptive quadrature.  Closed Gamma-function forms exist
for both; they live in the test-suite as oracles only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import DomainError, QuadratureError


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-6
    max_subdivisions: int = 200
    outer_cutoff: float = 64.0

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be >= 1")
        if not self.outer_cutoff > 2:
            raise DomainError("outer_cutoff must exceed 2")


DEFAULT_QUADRATURE = QuadratureSpec()


@dataclass(frozen=True)
class SymbolValue:
    sigma: float
    alpha: float
    dim: int
    value: float
    est_error: float


def _check_dim(N):
    if int(N) != N or N < 2:
        raise DomainError(f"dimension must be an integer >= 2, got {N}")


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def _quad(f, a, b, q, what, **kw):
    """scipy quad with failures turned into QuadratureError."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(f, a, b, epsabs=q.abs_tol, epsrel=q.rel_tol,
                             limit=q.max_subdivisions, full_output=1, **kw)
    val, err, info = out[0], out[1], out[2]
    ier = out[3] if len(out) > 3 and isinstance(out[3], int) else 0
    # ier=2 (roundoff) with a small error estimate is a usable result
    if ier not in (0, 2) or not np.isfinite(val):
        raise QuadratureError(f"{what}: quadrature did not converge", val, err)
    if err > 100 * max(q.abs_tol, q.rel_tol * abs(val)):
        raise QuadratureError(f"{what}: error estimate {err:.3g} too large", val, err)
    return val, err


def surface_area(N: int) -> float:
    """Measure of the unit sphere S^{N-1}: 2 pi^{N/2} / Gamma(N/2)."""
    _check_dim(N)
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


def _sphere_factor(N):
    # |S^{N-2}|, with |S^0| = 2 (two points)
    return 2.0 if N == 2 else surface_area(N - 1)


def _cos_tail(a, R, terms=10):
    """Asymptotic value of int_R^inf cos(r) r^{-a} dr from repeated integration by parts."""
    # int_R^inf e^{ir} r^{-a} dr = i e^{iR} sum_k (-i)^k (a)_k R^{-a-k}
    total = 0j
    poch = 1.0
    for k in range(terms):
        total += (-1j) ** k * poch * R ** (-a - k)
        poch *= a + k
    return (1j * np.exp(1j * R) * total).real


def normalization_constant(N: int, alpha: float, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Return c_{N,alpha} from its defining integral.

    In polar coordinates the integral factorises as
    |S^{N-2}| * A(alpha) * J(alpha) with
    A = int_0^pi |cos t|^{2 alpha} sin^{N-2} t dt and
    J = int_0^inf (1 - cos r) r^{-1-2 alpha} dr.
    J is split at r = 1 (quadratic Taylor term removed and integrated in
    closed form) and at r = outer_cutoff (tail integrated analytically).
    """
    return _normalization(N, alpha, q)[0]


def _normalization(N, alpha, q):
    _check_dim(N)
    _check_alpha(alpha)
    a = 2.0 * alpha

    ang, ang_err = _quad(lambda t: np.cos(t) ** a * np.sin(t) ** (N - 2),
                         0.0, 0.5 * math.pi, q, "angular factor")
    ang, ang_err = 2.0 * ang, 2.0 * ang_err

    def near(r):
        # (1 - cos r) - r^2/2, evaluated without cancellation for small r
        if r < 0.1:
            r2 = r * r
            s = 0.0
            term = -r2 * r2 / 24.0
            k = 2
            while abs(term) > 1e-18 * r2 * r2:
                s += term
                term *= -r2 / ((2 * k + 1) * (2 * k + 2))
                k += 1
            return s * r ** (-1.0 - a)
        return ((1.0 - math.cos(r)) - 0.5 * r * r) * r ** (-1.0 - a)

    j0, e0 = _quad(near, 0.0, 1.0, q, "J near zero")
    j0 += 0.5 / (2.0 - a)
    R = q.outer_cutoff
    j1, e1 = _quad(lambda r: (1.0 - math.cos(r)) * r ** (-1.0 - a), 1.0, R, q,
                   "J middle")
    tail = R ** (-a) / a - _cos_tail(1.0 + a, R)
    J = j0 + j1 + tail
    # truncation of the asymptotic cosine tail is far below quad noise at R >= 2
    J_err = e0 + e1 + 1e-14 * abs(J)

    integral = _sphere_factor(N) * ang * J
    rel = ang_err / ang + J_err / J
    return 1.0 / integral, rel / integral


def normalization_limit(N: int) -> float:
    """lim_{alpha -> 1-} c_{N,alpha}/(1-alpha) = 4N/|S^{N-1}|."""
    return 4.0 * N / surface_area(N)


def _hyp_coeffs(sigma, N, terms):
    # Taylor coefficients (in eps^2) of the spherical mean of |omega + eps e_N|^{-sigma}
    a, b, c = 0.5 * sigma, 0.5 * sigma - 0.5 * N + 1.0, 0.5 * N
    out = [1.0]
    for k in range(1, terms):
        out.append(out[-1] * (a + k - 1) * (b + k - 1) / ((c + k - 1) * k))
    return out


def symbol_constant(sigma: float, N: int, alpha: float,
                    q: QuadratureSpec = DEFAULT_QUADRATURE) -> SymbolValue:
    r"""Return c(sigma, alpha) with (-Delta)^alpha |x|^{-sigma} = c |x|^{-sigma-2alpha}.

    The value is evaluated at x = e_N from the symmetrised form

    .. math:: c(\sigma,\alpha) = -\frac{c_{N,\alpha}}{2}\int_{\mathbb R^N}
              \frac{|z+e_N|^{-\sigma}+|z-e_N|^{-\sigma}-2}{|z|^{N+2\alpha}}\,dz .

    Radial shells r < 1/2 use the symmetric sum with its quadratic Taylor
    term subtracted (that term is integrated exactly); shells
    1/2 < r < outer_cutoff are integrated numerically with a break at the
    singular shell r = 1; the tail uses the series of the spherical mean of
    |e_N + r w|^{-sigma} in 1/r.
    """
    _check_dim(N)
    _check_alpha(alpha)
    if not 0.0 <= sigma < N:
        raise DomainError(f"sigma must lie in [0, N) = [0, {N}), got {sigma}")
    if sigma == 0.0:
        return SymbolValue(sigma, alpha, N, 0.0, 0.0)

    cN, cN_rel = _normalization(N, alpha, q)
    a = 2.0 * alpha
    S = surface_area(N)
    S2 = _sphere_factor(N)
    h = -0.5 * sigma
    inner_q = QuadratureSpec(abs_tol=q.abs_tol * 1e-3, rel_tol=q.rel_tol * 1e-2,
                             max_subdivisions=q.max_subdivisions,
                             outer_cutoff=q.outer_cutoff)
    # largest inner-quadrature error density seen in the current region
    density = [0.0]

    def sym_remainder(theta, r):
        c = math.cos(theta)
        xp = r * r + 2 * r * c
        xm = r * r - 2 * r * c
        tot = math.expm1(h * math.log1p(xp)) + math.expm1(h * math.log1p(xm))
        quad_term = r * r * sigma * ((sigma + 2.0) * c * c - 1.0)
        return (tot - quad_term) * math.sin(theta) ** (N - 2)

    def shell_near(r):
        # symmetric in cos(theta): integrate half the range
        v, e = _quad(sym_remainder, 0.0, 0.5 * math.pi, inner_q, "inner shell", args=(r,))
        density[0] = max(density[0], 2.0 * S2 * e * r ** (-1.0 - a))
        return 2.0 * S2 * v * r ** (-1.0 - a)

    def one_sided(phi, r):
        # phi is the angle measured from -e_N, where |e_N + r w| is smallest
        x = (1.0 - r) ** 2 + 4.0 * r * math.sin(0.5 * phi) ** 2
        return math.expm1(h * math.log(x)) * math.sin(phi) ** (N - 2)

    def shell_mid(r):
        # breakpoints resolve the near-singular pole when r is close to 1
        d = abs(1.0 - r)
        cuts = [0.0] + [c for c in (d, 8.0 * d) if 0.0 < c < 0.5 * math.pi] + [math.pi]
        v = e = 0.0
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            vi, ei = _quad(one_sided, lo, hi, inner_q, "inner shell", args=(r,))
            v += vi
            e += ei
        density[0] = max(density[0], 2.0 * S2 * e * r ** (-1.0 - a))
        return 2.0 * S2 * v * r ** (-1.0 - a)

    r0 = 0.5
    R = q.outer_cutoff
    parts = []
    errs = []

    v, e = _quad(shell_near, 0.0, r0, q, "near shells")
    parts.append(v)
    errs.append(e + density[0] * r0)
    parts.append(sigma * (sigma + 2.0 - N) * S / N * r0 ** (2.0 - a) / (2.0 - a))

    for lo, hi in ((r0, 1.0), (1.0, 2.0), (2.0, R)):
        density[0] = 0.0
        v, e = _quad(shell_mid, lo, hi, q, "middle shells")
        parts.append(v)
        errs.append(e + density[0] * (hi - lo))

    coeffs = _hyp_coeffs(sigma, N, 12)
    tail = sum(ck * R ** (-a - sigma - 2 * k) / (a + sigma + 2 * k)
               for k, ck in enumerate(coeffs))
    tail = 2.0 * S * (tail - R ** (-a) / a)
    parts.append(tail)
    trunc = abs(coeffs[-1]) * R ** (-a - sigma - 2 * len(coeffs)) * 2 * S

    integral = math.fsum(parts)
    value = -0.5 * cN * integral
    err_int = sum(errs) + trunc
    est = 0.5 * cN * err_int + abs(value) * cN_rel
    return SymbolValue(float(sigma), float(alpha), int(N), float(value), float(est))


def symbol_constant_limit(sigma: float, N: int) -> float:
    """lim_{alpha -> 1-} c(sigma, alpha) = (N - 2 - sigma) sigma."""
    _check_dim(N)
    if not 0.0 <= sigma < N:
        raise DomainError(f"sigma must lie in [0, N), got {sigma}")
    return (N - 2.0 - sigma) * sigma
