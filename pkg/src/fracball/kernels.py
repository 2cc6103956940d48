"""Closed-form kernels: exterior sources, mollifiers, ball Green and Poisson kernels.

Points are passed in the frame of the ball (B_1(e_N) by default); the
kernel formulas are evaluated in ball-centered coordinates after the shift
x -> (x - center)/radius.  All functions broadcast over leading axes, with
the coordinate axis last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .constants import DEFAULT_QUADRATURE, QuadratureSpec, surface_area
from .errors import DomainError, QuadratureError
from .geometry import BallDomain, ProblemParams, gauss_legendre01, unit_ball


@dataclass(frozen=True)
class SourceSpec:
    kind: str                 # dirac_transform | mollified | constant | sampled
    s: float = 0.0
    n: int = 1
    cN_alpha: float = 1.0
    mollifier: str = "poly"

    def __post_init__(self):
        if self.kind not in ("dirac_transform", "mollified", "constant", "sampled"):
            raise DomainError(f"unknown source kind {self.kind!r}")
        if not self.cN_alpha > 0:
            raise DomainError("cN_alpha must be positive")
        if self.s < 0:
            raise DomainError("s must be >= 0")
        if self.kind == "mollified" and (self.n < 1 or self.s <= 0):
            raise DomainError("mollified sources need n >= 1 and s > 0")


def _pts(x, N=None):
    x = np.asarray(x, float)
    if N is not None and x.shape[-1] != N:
        raise DomainError(f"points must have {N} coordinates")
    return x


# ---------------------------------------------------------------- sources

def gamma_source(x, s: float, params: ProblemParams, cN: float):
    """Gamma_s(x) = c_{N,alpha} |x + s e_N|^{-N-2 alpha}."""
    N, a = params.dim, params.alpha
    x = _pts(x, N).copy()
    x[..., -1] += s
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise DomainError("Gamma_s is singular at -s e_N")
    return cN * r ** (-N - 2.0 * a)


def _profile_poly(r):
    return np.where(r < 0.5, np.clip(1.0 - 4.0 * r * r, 0.0, None) ** 3, 0.0)


def _profile_gauss(r):
    # truncated Gaussian; only used to check that limits do not depend on g0
    return np.where(r < 0.5, np.exp(-16.0 * r * r), 0.0)


_PROFILES = {"poly": _profile_poly, "gauss": _profile_gauss}


@lru_cache(maxsize=None)
def mollifier_constant(N: int, kind: str = "poly") -> float:
    """A_N making the radial bump of unit mass."""
    prof = _PROFILES[kind]
    m, _ = integrate.quad(lambda r: float(prof(r)) * r ** (N - 1), 0.0, 0.5,
                          epsabs=1e-14, epsrel=1e-13)
    return 1.0 / (surface_area(N) * m)


def g0(x, kind: str = "poly"):
    x = np.asarray(x, float)
    N = x.shape[-1]
    return mollifier_constant(N, kind) * _PROFILES[kind](np.linalg.norm(x, axis=-1))


def mollifier(x, n: int, s: float, kind: str = "poly"):
    """g_n(x) = n^N g0(n (x + s e_N))."""
    if n < 1:
        raise DomainError("mollifier index must be >= 1")
    x = np.asarray(x, float).copy()
    N = x.shape[-1]
    x[..., -1] += s
    return n ** N * g0(n * x, kind)


@lru_cache(maxsize=None)
def _support_rule(N, n_rad=20, n_ang=40):
    """Product rule for int_{|w|<1/2} h(w) dw: (points, weights)."""
    r, wr = gauss_legendre01(n_rad)
    r, wr = 0.5 * r, 0.5 * wr
    th = 2.0 * math.pi * np.arange(n_ang) / n_ang
    wt = np.full(n_ang, 2.0 * math.pi / n_ang)
    if N == 2:
        R, T = np.meshgrid(r, th, indexing="ij")
        pts = np.stack([R * np.cos(T), R * np.sin(T)], -1).reshape(-1, 2)
        w = (wr[:, None] * r[:, None] * wt[None, :]).ravel()
        return pts, w
    if N == 3:
        c, wc = np.polynomial.legendre.leggauss(n_rad)
        R, C, T = np.meshgrid(r, c, th, indexing="ij")
        S = np.sqrt(1.0 - C * C)
        pts = np.stack([R * S * np.cos(T), R * S * np.sin(T), R * C], -1).reshape(-1, 3)
        w = (wr[:, None, None] * r[:, None, None] ** 2 * wc[None, :, None]
             * wt[None, None, :]).ravel()
        return pts, w
    raise DomainError("mollified transforms are implemented for N = 2, 3")


def mollified_transform(x, n: int, s: float, params: ProblemParams, cN: float,
                        q: QuadratureSpec = DEFAULT_QUADRATURE, kind: str = "poly",
                        domain: BallDomain | None = None):
    """c_{N,alpha} int g_n(y) |x - y|^{-N-2alpha} dy for x in the ball.

    The support B_{1/(2n)}(-s e_N) is separated from the ball, so a fixed
    product Gauss rule on the support (in w = n(y + s e_N)) is used; the
    rule is refined once and the two values compared against q.
    """
    N, a = params.dim, params.alpha
    domain = unit_ball(N) if domain is None else domain
    if s <= 0:
        raise DomainError("s must be positive for mollified sources")
    gap = float(np.linalg.norm(-s * np.eye(N)[-1] - domain.c)) - domain.radius
    if 0.5 / n >= gap:
        raise DomainError(f"mollifier support radius 1/(2n) = {0.5 / n:g} reaches the ball; "
                          f"need n > {0.5 / gap:g}")
    x = _pts(x, N)
    shape = x.shape[:-1]
    xs = x.reshape(-1, N).copy()
    xs[:, -1] += s
    out = []
    for order in ((20, 40), (28, 56)):
        pts, w = _support_rule(N, *order)
        wg = w * g0(pts, kind)
        vals = np.empty(len(xs))
        for k in range(0, len(xs), 256):
            d = xs[k:k + 256, None, :] - pts[None, :, :] / n
            r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
            vals[k:k + 256] = (r ** (-N - 2.0 * a)) @ wg
        out.append(cN * vals)
    err = np.max(np.abs(out[1] - out[0]))
    scale = np.max(np.abs(out[1])) if out[1].size else 0.0
    if err > 10 * max(q.abs_tol, q.rel_tol * scale):
        raise QuadratureError("mollified transform rule not converged", out[1], err)
    return out[1].reshape(shape)


# ---------------------------------------------------------------- Green kernel

def green_constant(N: int, alpha: float) -> float:
    """kappa(N, alpha) = Gamma(N/2) / (2^{2alpha} pi^{N/2} Gamma(alpha)^2)."""
    return math.gamma(N / 2) / (4.0 ** alpha * math.pi ** (N / 2) * math.gamma(alpha) ** 2)


def green_inner_integral(r0, alpha: float, N: int):
    """int_0^{r0} t^{alpha-1} (1+t)^{-N/2} dt as a regularised incomplete Beta."""
    b = 0.5 * N - alpha
    r0 = np.asarray(r0, float)
    with np.errstate(over="ignore", invalid="ignore"):
        u = np.where(np.isinf(r0), 1.0, r0 / (1.0 + r0))
    return special.beta(alpha, b) * special.betainc(alpha, b, u)


def green_inner_integral_quad(r0: float, alpha: float, N: int) -> float:
    """Same integral by adaptive quadrature after t = u^{1/alpha}."""
    # t^{alpha-1} dt = du/alpha removes the endpoint singularity
    f = lambda u: (1.0 + u ** (1.0 / alpha)) ** (-0.5 * N) / alpha
    umax = r0 ** alpha
    pts = [p for p in (1.0, 10.0, 100.0) if p < umax]
    v, _ = integrate.quad(f, 0.0, umax, points=pts or None, epsabs=1e-14,
                          epsrel=1e-12, limit=400)
    return v


def _centered(x, ball):
    return (np.asarray(x, float) - ball.c) / ball.radius


def green_kernel(x, y, ball: BallDomain | None = None, alpha: float = 0.5,
                 check: bool = True):
    """Green function of (-Delta)^alpha on a ball with zero exterior data."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    N = x.shape[-1]
    ball = unit_ball(N) if ball is None else ball
    xt, yt = _centered(x, ball), _centered(y, ball)
    d2 = np.sum((xt - yt) ** 2, axis=-1)
    fx = 1.0 - np.sum(xt * xt, axis=-1)
    fy = 1.0 - np.sum(yt * yt, axis=-1)
    if check:
        if np.any(d2 == 0):
            raise DomainError("green_kernel is singular at x = y")
        if np.any(fx <= 0) or np.any(fy <= 0):
            raise DomainError("green_kernel needs both points strictly inside the ball")
    return _green_from(d2, fx, fy, N, alpha) * ball.radius ** (2 * alpha - N)


def _green_from(d2, fx, fy, N, alpha):
    with np.errstate(divide="ignore", over="ignore"):
        r0 = fx * fy / d2
    return (green_constant(N, alpha) * d2 ** (alpha - 0.5 * N)
            * green_inner_integral(r0, alpha, N))


@lru_cache(maxsize=None)
def _ring_rule(order):
    return gauss_legendre01(order)


def green_ring_kernel(rx, zx, ry, zy, ball: BallDomain, alpha: float, order: int = 32):
    """Azimuthal mean of the N = 3 Green kernel for axisymmetric data.

    Points are given by meridian coordinates (r', x_N) in the frame of
    ``ball`` (whose center must be on the axis).  Returns
    (1/2pi) int_0^{2pi} G(x, R_psi y) dpsi.  The peak at psi = 0 of width
    w = d/sqrt(r_x r_y) is resolved with psi = w sinh(v).
    """
    N = 3
    R = ball.radius
    zc = ball.center[-1]
    rx, ry = np.asarray(rx, float) / R, np.asarray(ry, float) / R
    zx, zy = (np.asarray(zx, float) - zc) / R, (np.asarray(zy, float) - zc) / R
    rx, zx, ry, zy = np.broadcast_arrays(rx, zx, ry, zy)
    fx = 1.0 - rx * rx - zx * zx
    fy = 1.0 - ry * ry - zy * zy
    d2 = (rx - ry) ** 2 + (zx - zy) ** 2
    b = rx * ry
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.sqrt(d2 / b)
    w = np.clip(np.nan_to_num(w, nan=1e8, posinf=1e8), 1e-300, 1e8)
    V = np.arcsinh(math.pi / w)
    t, wt = _ring_rule(order)
    v = V[..., None] * t
    psi = w[..., None] * np.sinh(v)
    dpsi = (w * V)[..., None] * np.cosh(v) * wt
    D = d2[..., None] + 4.0 * b[..., None] * np.sin(0.5 * psi) ** 2
    g = _green_from(D, fx[..., None], fy[..., None], N, alpha)
    return np.sum(g * dpsi, axis=-1) / math.pi * R ** (2 * alpha - N)


# ---------------------------------------------------------------- Poisson kernel

def poisson_constant(N: int, alpha: float) -> float:
    return math.gamma(N / 2) * math.sin(math.pi * alpha) / math.pi ** (N / 2 + 1)


def poisson_kernel(x, z, ball: BallDomain | None = None, alpha: float = 0.5):
    """Exterior Poisson kernel of the ball: harmonic measure density at z seen from x."""
    x = np.asarray(x, float)
    z = np.asarray(z, float)
    N = x.shape[-1]
    ball = unit_ball(N) if ball is None else ball
    xt, zt = _centered(x, ball), _centered(z, ball)
    fx = 1.0 - np.sum(xt * xt, axis=-1)
    fz = np.sum(zt * zt, axis=-1) - 1.0
    if np.any(fx <= 0):
        raise DomainError("poisson_kernel needs x strictly inside the ball")
    if np.any(fz <= 0):
        raise DomainError("poisson_kernel needs z strictly outside the ball")
    d = np.linalg.norm(xt - zt, axis=-1)
    return poisson_constant(N, alpha) * (fx / fz) ** alpha * d ** (-N) / ball.radius ** N


def torsion_exact(x, ball: BallDomain | None = None, alpha: float = 0.5):
    """Closed-form solution of (-Delta)^alpha u = 1 in the ball, u = 0 outside."""
    x = np.asarray(x, float)
    N = x.shape[-1]
    ball = unit_ball(N) if ball is None else ball
    xt = _centered(x, ball)
    f = np.clip(1.0 - np.sum(xt * xt, axis=-1), 0.0, None)
    gam = math.gamma(N / 2) / (4.0 ** alpha * math.gamma(N / 2 + alpha) * math.gamma(1 + alpha))
    return gam * f ** alpha * ball.radius ** (2 * alpha)
