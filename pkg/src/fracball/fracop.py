"""Pointwise fractional Laplacian and the barrier functions built from it.

The operator is evaluated at a point x as

    c_{N,a} [ -1/2 int_{|z|<eps} (f(x+z) + f(x-z) - 2 f(x)) |z|^{-N-2a} dz
              + int_{|z|>eps} (f(x) - f(x+z)) |z|^{-N-2a} dz ]

with eps half the declared smoothness radius.  The inner integral uses a
Gauss-Jacobi radial rule for the weight r^{1-2a}; the outer one uses
geometric shells about x.  On each shell the admissible directions form a
polar cap about a pole aimed at the declared singular point (whose small
ball is cut out and integrated separately, about the singular point) or at
the center of the declared support, so every piece has a smooth integrand
on an exactly described domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .constants import DEFAULT_QUADRATURE, QuadratureSpec, surface_area, symbol_constant
from .errors import DomainError, MeshMismatchError, QuadratureError
from .geometry import Mesh, ProblemParams, centered_ball, gauss_jacobi01, gauss_legendre01
from .kernels import torsion_exact


@dataclass
class EvaluableFunction:
    """A vectorised callable f(points (M, N)) -> (M,) defined on all of R^N.

    smoothness: radius (float, or callable of x) inside which f is C^2
    around the evaluation point.  Optional: point singularities
    (point, exponent beta) with f ~ |y - point|^{-beta}; compact support
    (center, radius); algebraic decay exponent at infinity.
    """
    func: Callable
    smoothness: float | Callable = 0.1
    singular_points: list = field(default_factory=list)
    support: tuple | None = None
    decay: float | None = None

    def __call__(self, pts):
        return np.asarray(self.func(np.asarray(pts, float)), float)

    def radius_at(self, x):
        r = self.smoothness(x) if callable(self.smoothness) else self.smoothness
        return float(r)


def _sphere_rule(N, n):
    """Directions and weights integrating over S^{N-1} (weights sum to |S|)."""
    if N == 2:
        m = 4 * n
        th = (np.arange(m) + 0.5) * 2.0 * math.pi / m
        return np.stack([np.cos(th), np.sin(th)], -1), np.full(m, 2.0 * math.pi / m)
    if N == 3:
        c, wc = np.polynomial.legendre.leggauss(n)
        m = 2 * n
        ph = (np.arange(m) + 0.5) * 2.0 * math.pi / m
        C, P = np.meshgrid(c, ph, indexing="ij")
        S = np.sqrt(1.0 - C * C)
        d = np.stack([S * np.cos(P), S * np.sin(P), C], -1).reshape(-1, 3)
        w = (wc[:, None] * np.full(m, 2.0 * math.pi / m)[None, :]).ravel()
        return d, w
    raise DomainError("pointwise evaluation is implemented for N = 2, 3")


def _half_sphere_rule(N, n):
    d, w = _sphere_rule(N, n)
    keep = d[:, -1] > 0 if N == 3 else d[:, 1] > 0
    return d[keep], 2.0 * w[keep]


def _frame(pole):
    """Orthonormal matrix whose last column is the unit vector ``pole``."""
    N = pole.size
    e = pole / np.linalg.norm(pole)
    Q, _ = np.linalg.qr(np.column_stack([e, np.eye(N)]))
    Q = Q[:, :N]
    if Q[:, 0] @ e < 0:
        Q = -Q
    return np.column_stack([Q[:, 1:], Q[:, 0]])


def _cap_rule(N, n, lo, hi):
    """Directions with polar angle in [lo, hi] about e_N, and weights (area measure)."""
    g, w = gauss_legendre01(n)
    th = lo + (hi - lo) * g
    wt = (hi - lo) * w
    if N == 2:
        d = np.concatenate([np.stack([np.sin(th), np.cos(th)], -1),
                            np.stack([-np.sin(th), np.cos(th)], -1)])
        return d, np.concatenate([wt, wt])
    m = 2 * n
    ph = (np.arange(m) + 0.5) * 2.0 * math.pi / m
    T, P = np.meshgrid(th, ph, indexing="ij")
    S = np.sin(T)
    d = np.stack([S * np.cos(P), S * np.sin(P), np.cos(T)], -1).reshape(-1, 3)
    ww = (wt[:, None] * np.sin(th)[:, None] * np.full(m, 2.0 * math.pi / m)[None, :]).ravel()
    return d, ww


def _cap_angle(r, D, rad):
    """Polar angle (about the direction to a ball center at distance D) of the
    boundary of B_rad on the sphere of radius r; nan when they do not meet."""
    c = (r * r + D * D - rad * rad) / (2.0 * r * D)
    return np.arccos(np.clip(c, -1.0, 1.0)), c


def _estimate(f: EvaluableFunction, x, alpha, level):
    N = x.size
    a2 = 2.0 * alpha
    S = surface_area(N)
    fx = float(f(x[None])[0])
    eps = 0.5 * f.radius_at(x)
    if not eps > 0:
        raise DomainError("smoothness radius must be positive")
    if len(f.singular_points) > 1:
        raise DomainError("at most one declared singular point is supported")
    nr = 8 * 2 ** level
    nang = 8 * 2 ** level

    # inner symmetrised part, radial weight r^{1-2a}
    u, wu = gauss_jacobi01(nr, 1.0 - a2)
    dirs, wd = _half_sphere_rule(N, nang)
    r = eps * u
    z = r[:, None, None] * dirs[None, :, :]
    fp = f((x + z).reshape(-1, N)).reshape(len(r), len(dirs))
    fm = f((x - z).reshape(-1, N)).reshape(len(r), len(dirs))
    d2 = (fp + fm - 2.0 * fx) / (r * r)[:, None]
    inner = -0.5 * eps ** (2.0 - a2) * float(wu @ (d2 @ wd))
    big = max(abs(fx), float(np.max(np.abs(fp))), float(np.max(np.abs(fm))))
    noise = 2.0 * np.finfo(float).eps * big * eps ** (2.0 - a2) * float(wu @ (1.0 / (r * r))) * float(wd.sum())

    # Outer shells about x.  The angular pole points at the singular point
    # (excluded ball B_delta(p)) or at the support center (kept ball), so the
    # admissible directions on each shell form a polar cap.
    sing = None
    supp = None
    breaks = []
    if f.singular_points:
        p, beta = f.singular_points[0]
        p = np.asarray(p, float)
        D = float(np.linalg.norm(p - x))
        if D <= 2 * eps:
            raise DomainError("smoothness radius reaches a declared singular point")
        if not beta < N:
            raise DomainError("singular exponent must be < N")
        delta = 0.5 * D
        sing = (p, float(beta), D, delta)
        pole = p - x
        breaks += [D - delta, D + delta]
    if f.support is not None:
        c, rad = f.support
        c = np.asarray(c, float)
        Dc = float(np.linalg.norm(c - x))
        supp = (Dc, float(rad))
        if sing is None:
            pole = c - x if Dc > 0 else np.eye(N)[-1]
        breaks += [abs(Dc - rad), Dc + rad]
        R = max(Dc + rad, 2 * eps)
    else:
        R = 1e3 * max(1.0, float(np.linalg.norm(x)))
    if sing is None and supp is None:
        pole = np.eye(N)[-1]
    Q = _frame(np.asarray(pole, float))

    nshell = max(1, int(math.ceil(math.log2(R / eps))))
    edges = eps * (R / eps) ** (np.arange(nshell + 1) / nshell)
    edges = np.unique(np.concatenate([edges, [b for b in breaks if eps < b < R]]))
    g, wg = gauss_legendre01(nr)
    # cosine map: the shell integrand has square-root endpoints at radii
    # where a cap appears or closes
    gc = 0.5 * (1.0 - np.cos(math.pi * g))
    wc = 0.5 * math.pi * np.sin(math.pi * g) * wg
    brk = set(breaks)
    outer = fx * S * eps ** (-a2) / a2
    for r0, r1 in zip(edges[:-1], edges[1:]):
        rm = 0.5 * (r0 + r1)
        if supp is not None:
            Dc, rad = supp
            if Dc == 0:
                if rm > rad:
                    continue
            else:
                th_s, cs = _cap_angle(rm, Dc, rad)
                if cs >= 1.0:
                    continue        # shell misses the support
        acc = 0.0
        gg, ww = (gc, wc) if (r0 in brk or r1 in brk) else (g, wg)
        for rk, wk in zip(r0 + (r1 - r0) * gg, (r1 - r0) * ww):
            lo, hi = 0.0, math.pi
            if sing is not None:
                th_c, cc = _cap_angle(rk, sing[2], sing[3])
                if cc < 1.0:
                    lo = float(th_c)
            if supp is not None and supp[0] > 0:
                th_s, cs = _cap_angle(rk, supp[0], supp[1])
                if cs >= 1.0:
                    continue
                hi = min(hi, float(th_s))
            if hi <= lo:
                continue
            d, w = _cap_rule(N, nang, lo, hi)
            y = x + rk * (d @ Q.T)
            acc += wk * float(f(y) @ w) * rk ** (-1.0 - a2)
        outer -= acc
    if f.support is None:
        beta = f.decay
        if beta is None:
            raise DomainError("functions without compact support need a decay exponent")
        d, w = _sphere_rule(N, nang)
        mean = float(f(x + R * d) @ w) / S
        outer -= mean * S * R ** (-a2) / (beta + a2)

    # the excluded ball around the singular point, in coordinates about p
    cut = 0.0
    if sing is not None:
        p, beta, D, delta = sing
        t, wt = gauss_jacobi01(nr, N - 1.0 - beta)
        rr = delta * t
        d, w = _sphere_rule(N, nang)
        yy = (p + rr[:, None, None] * d[None, :, :]).reshape(-1, N)
        vals = f(yy) * np.linalg.norm(x - yy, axis=-1) ** (-N - a2)
        vals = vals.reshape(len(rr), len(d)) * (rr ** beta)[:, None]
        cut = delta ** (N - beta) * float(wt @ (vals @ w))
    noise += 16 * np.finfo(float).eps * (abs(inner) + abs(fx) * S * eps ** (-a2) / a2 + abs(cut))
    return inner + outer - cut, noise


def frac_laplacian_point(f: EvaluableFunction, x, alpha: float, cN: float,
                         q: QuadratureSpec = DEFAULT_QUADRATURE, max_level: int = 3) -> float:
    """(-Delta)^alpha f at a single point x, refined until two levels agree to q."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    x = np.asarray(x, float).ravel()
    prev, noise0 = _estimate(f, x, alpha, 0)
    for level in range(1, max_level + 1):
        cur, noise = _estimate(f, x, alpha, level)
        err = abs(cur - prev)
        # roundoff floor: the parts cancel when the result is near zero, and
        # the second difference loses digits at the smallest inner radii
        floor = 4.0 * (noise + noise0)
        noise0 = noise
        if err <= max(q.abs_tol / cN, q.rel_tol * abs(cur), floor):
            return cN * cur
        prev = cur
    raise QuadratureError(f"fractional Laplacian at {x} not converged", cN * cur, cN * err)


def frac_laplacian(f: EvaluableFunction, points, alpha, cN, q=DEFAULT_QUADRATURE, **kw):
    pts = np.atleast_2d(np.asarray(points, float))
    return np.array([frac_laplacian_point(f, x, alpha, cN, q, **kw) for x in pts])


# ---------------------------------------------------------------- barriers

def phi_power(x, sigma: float):
    """Phi_sigma(x) = |x|^{-sigma}."""
    r = np.linalg.norm(np.asarray(x, float), axis=-1)
    if np.any(r == 0):
        raise DomainError("Phi_sigma is singular at the origin")
    return r ** (-sigma)


def power_function(sigma: float, N: int) -> EvaluableFunction:
    """Phi_sigma as an EvaluableFunction (smooth away from 0, decays like |x|^{-sigma})."""
    return EvaluableFunction(lambda y: phi_power(y, sigma),
                             smoothness=lambda x: 0.5 * float(np.linalg.norm(x)),
                             singular_points=[(np.zeros(N), float(sigma))] if sigma > 0 else [],
                             decay=float(sigma))


class FieldInterpolant:
    """Tensor-product interpolation (cubic by default) of a Field in the mesh parameters (tau, phi).

    Outside the ball the value is ``exterior`` (zero by default); between
    the last node row and the sphere the values go linearly to zero.
    """

    def __init__(self, mesh: Mesh, values, method: str = "cubic"):
        v = np.asarray(getattr(values, "values", values), float)
        if hasattr(values, "mesh_hash") and values.mesh_hash != mesh.mesh_hash:
            raise MeshMismatchError("field belongs to another mesh")
        mt, mp = mesh.shape
        grid = v.reshape(mt, mp)
        tau = np.concatenate([[0.0], mesh.tau_centers, [1.0]])
        phi = np.concatenate([[mesh.phi_edges[0]], mesh.phi_centers, [mesh.phi_edges[-1]]])
        g = np.zeros((mt + 2, mp + 2))
        g[1:-1, 1:-1] = grid
        g[0, 1:-1] = grid[0]
        g[:, 0] = g[:, 1]
        g[:, -1] = g[:, -2]
        g[-1, :] = 0.0
        self.mesh = mesh
        self.smoothness = 2.0 * float(np.max(np.diff(mesh.tau_edges))) * mesh.domain.radius
        self._rgi = RegularGridInterpolator((tau, phi), g, method=method, bounds_error=False,
                                            fill_value=None)

    def __call__(self, pts):
        pts = np.asarray(pts, float)
        m = self.mesh
        if m.axisymmetric:
            rp = np.linalg.norm(pts[..., :-1] - np.asarray(m.domain.center[:-1]), axis=-1)
        else:
            rp = pts[..., 0] - m.domain.center[0]
        tau, phi = m.meridian_to_param(rp, pts[..., -1])
        inside = tau < 1.0
        out = np.zeros(tau.shape)
        if np.any(inside):
            phi_c = np.clip(phi[inside], m.phi_edges[0], m.phi_edges[-1])
            out[inside] = self._rgi(np.stack([tau[inside], phi_c], -1))
        return out

    def local_smoothness(self, x):
        """Two local cell widths around x."""
        m = self.mesh
        x = np.asarray(x, float)
        rp, xn = (np.linalg.norm(x[:-1]), x[-1]) if m.axisymmetric else (x[0], x[-1])
        tau, phi = m.meridian_to_param(rp, xn)
        i = int(np.clip(np.searchsorted(m.tau_edges, tau) - 1, 0, len(m.tau_edges) - 2))
        dt = m.tau_edges[i + 1] - m.tau_edges[i]
        dp = m.phi_edges[1] - m.phi_edges[0]
        R = m.domain.radius
        return 2.0 * R * max(2.0 * math.cos(phi) * dt, 2.0 * tau * dp)

    def as_function(self, smoothness=None) -> EvaluableFunction:
        m = self.mesh
        return EvaluableFunction(self, smoothness=smoothness or self.local_smoothness,
                                 support=(np.asarray(m.domain.center), m.domain.radius))


def scaled_torsion(x, t: float, prefactor: float, torsion, exponent: float):
    """prefactor t^{-exponent} V_B((x - t e_N)/t), zero outside B_t(t e_N).

    ``torsion`` evaluates V_B on points of the centered unit ball."""
    if not 0.0 < t < 1.0:
        raise DomainError("t must lie in (0, 1)")
    x = np.asarray(x, float)
    z = x.copy()
    z[..., -1] -= t
    z = z / t
    inside = np.linalg.norm(z, axis=-1) < 1.0
    out = np.zeros(z.shape[:-1])
    if np.any(inside):
        out[inside] = torsion(z[inside])
    return prefactor * t ** (-exponent) * out


@dataclass(frozen=True)
class BarrierSpec:
    kind: str                 # power | scaled_torsion
    k: float = 1.0
    sigma: float = 1.0
    t: float = 0.5
    prefactor: float = 1.0

    def __post_init__(self):
        if self.kind not in ("power", "scaled_torsion"):
            raise DomainError(f"unknown barrier kind {self.kind!r}")
        if not self.k > 0:
            raise DomainError("k must be positive")


def supersolution_margin(b: BarrierSpec, params: ProblemParams, samples, cN: float,
                         q: QuadratureSpec = DEFAULT_QUADRATURE, symbol=None) -> float:
    """min over samples of (-Delta)^a U + U^p - Gamma_0; >= 0 certifies a supersolution."""
    N, a, p = params.dim, params.alpha, params.p
    x = np.atleast_2d(np.asarray(samples, float))
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise DomainError("samples must avoid the origin")
    gamma0 = cN * r ** (-N - 2.0 * a)
    if b.kind == "power":
        if not 0.0 < b.sigma < N:
            raise DomainError(f"power barriers need sigma in (0, N), got {b.sigma}")
        c = symbol if symbol is not None else symbol_constant(b.sigma, N, a, q).value
        lap = b.k * c * r ** (-b.sigma - 2.0 * a)
        U = b.k * r ** (-b.sigma)
    else:
        e = (N + 2.0 * a) / p
        center = np.zeros(N)
        VB = lambda z: torsion_exact(z, centered_ball(N), a)
        U = scaled_torsion(x, b.t, b.prefactor * b.k, VB, e)
        z = x.copy()
        z[:, -1] -= b.t
        z /= b.t
        inside = np.linalg.norm(z, axis=-1) < 1.0
        lap = np.empty(len(x))
        lap[inside] = 1.0
        fB = EvaluableFunction(VB, smoothness=lambda y: max(np.linalg.norm(y) - 1.0, 1e-3),
                               support=(center, 1.0))
        for i in np.nonzero(~inside)[0]:
            lap[i] = frac_laplacian_point(fB, z[i], a, cN, QuadratureSpec(1e-10, 1e-4))
        lap = lap * b.prefactor * b.k * b.t ** (-e - 2.0 * a)
    return float(np.min(lap + U ** p - gamma0))


def certified_k(params: ProblemParams, samples, cN: float, sigma: float | None = None,
                k0: float = 1.0, rel_tol: float = 1e-2, max_doublings: int = 60,
                q: QuadratureSpec = DEFAULT_QUADRATURE):
    """Smallest tested k with a nonnegative power-barrier margin.

    Doubling from k0 until the margin is nonnegative, then bisection.  When
    c(sigma, alpha) < 0 the margin need not be monotone in k, so this is
    the smallest certified value among those tried, not a proven minimum.
    Returns (k, margin_at_k).
    """
    N, a, p = params.dim, params.alpha, params.p
    sigma = params.sigma0 if sigma is None else sigma
    c = symbol_constant(sigma, N, a, q).value
    margin = lambda k: supersolution_margin(BarrierSpec("power", k, sigma), params,
                                            samples, cN, q, symbol=c)
    lo, hi = None, k0
    for _ in range(max_doublings):
        if margin(hi) >= 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise DomainError("no certified k found by doubling")
    if lo is None:
        lo = hi
        while lo > 1e-12 and margin(lo / 2) >= 0:
            lo /= 2
        hi, lo = lo, lo / 2
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if margin(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi, margin(hi)
