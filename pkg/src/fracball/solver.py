"""Discrete semilinear problem u + G[u^p] = G[f] on a graded ball mesh.

The unknown is the vector of nodal values; G is the dense Green matrix
from :mod:`fracball.greenop`.  The fixed point is approached with the
order-reversing map T(v) = G f - G v^p, damped and clipped to the sandwich
[0, G f], and finished with Newton steps on F(u) = u + G u^p - G f.

Residuals are measured node by node relative to max(1, (G f)_i).  Row i of
the discrete equation is a difference of terms of size (G f)_i, so this is
the accuracy floating point can deliver there; a single global scale
would be far too loose away from a concentrated source.  The equation
residual is taken over the nodes where the clip is inactive; clipped nodes
are counted in the report (the sandwich gap covers them).

So ``converged`` refers to the projected problem u = max(G f - G u^p, 0).
Where the projection is active the unprojected equation has no
nonnegative solution on that mesh; with the s = 0 source this happens
near the origin and, on fine meshes, can spread into the interior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import linalg
from scipy.interpolate import CubicSpline

from .constants import DEFAULT_QUADRATURE, QuadratureSpec
from .errors import DomainError, InfeasibleConfigError, MeshMismatchError
from .fracop import EvaluableFunction, FieldInterpolant, certified_k, frac_laplacian_point
from .geometry import Mesh, ProblemParams, gauss_legendre01
from .greenop import Field, KernelMatrix, apply
from .kernels import gamma_source


@dataclass(frozen=True)
class SolveOptions:
    scheme: str = "newton"          # damped_picard | newton (Picard start, Newton finish)
    damping: float = 0.5
    tol_residual: float = 1e-9
    tol_sandwich: float = 1e-9
    max_iters: int = 2000
    picard_steps: int = 20          # Picard steps before switching to Newton

    def __post_init__(self):
        if self.scheme not in ("damped_picard", "newton"):
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if not 0.0 < self.damping <= 1.0:
            raise DomainError("damping must lie in (0, 1]")
        if not (self.tol_residual > 0 and self.tol_sandwich > 0):
            raise DomainError("tolerances must be positive")
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    sandwich_gap: float
    converged: bool
    extra: dict = field(default_factory=dict)


def _power(v, p):
    if p == 0:
        return np.ones_like(v)
    return np.maximum(v, 0.0) ** p


def _dpower(v, p):
    # derivative of v_+^p; capped for p < 1 where it blows up at 0
    if p >= 1.0:
        return p * np.maximum(v, 0.0) ** (p - 1.0)
    return np.minimum(p * np.maximum(v, 1e-300) ** (p - 1.0), 1e12)


def _check_pair(mesh: Mesh, K: KernelMatrix, f: Field | None = None):
    if K.mesh_hash != mesh.mesh_hash:
        raise MeshMismatchError("matrix was assembled on a different mesh")
    if f is not None and f.mesh_hash != mesh.mesh_hash:
        raise MeshMismatchError("field belongs to another mesh")


def solve_semilinear(mesh: Mesh, K: KernelMatrix, source: Field, p, opts: SolveOptions = SolveOptions(),
                     init=None):
    """Solve u + G[u^p] = G[source].

    p = 0 uses the convention u^0 = 1 (a linear problem, no clipping);
    p = None drops the absorption term.  ``init`` is the starting vector
    (default 0, the lower end of the sandwich).
    """
    _check_pair(mesh, K, source)
    f = source.values
    if np.any(f < 0):
        raise DomainError("source must be nonnegative")
    A = K.entries
    Gf = A @ f
    scale = max(1.0, float(np.max(np.abs(Gf))))
    ns = node_scale(Gf)
    if p is None:
        return Field.on(mesh, Gf), SolveReport(0, 0.0, 0.0, True, {"scale": scale})
    if p < 0:
        raise DomainError("p must be >= 0")
    if p == 0:
        u = Gf - A @ np.ones(mesh.n)
        return Field.on(mesh, u), SolveReport(0, 0.0, 0.0, True, {"scale": scale})

    upper = np.maximum(Gf, 0.0)

    def T(v):
        return np.clip(Gf - A @ _power(v, p), 0.0, upper)

    def gap_of(v):
        return float(np.max(np.abs(T(v) - v) / ns))

    u = np.zeros(mesh.n) if init is None else np.clip(np.asarray(init, float), 0.0, upper)
    theta = opts.damping
    r = gap_of(u)
    it = 0
    picard_budget = opts.max_iters if opts.scheme == "damped_picard" else min(opts.picard_steps, opts.max_iters)
    while it < picard_budget and r > min(opts.tol_residual, opts.tol_sandwich):
        cand = (1.0 - theta) * u + theta * T(u)
        rc = gap_of(cand)
        it += 1
        if rc > r and theta > 1e-3:
            theta *= 0.5
            continue
        u, r = cand, rc

    if opts.scheme == "newton" and r > min(opts.tol_residual, opts.tol_sandwich):
        # start from the Picard iterate; fall back on the balance u^p = f,
        # which is accurate where a concentrated source dominates
        balanced = np.minimum(upper, f ** (1.0 / p))
        v, rv, it = _newton_active_set(A, Gf, p, [u, balanced], it, opts, ns, gap_of)
        if rv < r:
            u, r = v, rv
        # any remaining defect is polished by damped Picard steps
        while it < opts.max_iters and r > min(opts.tol_residual, opts.tol_sandwich):
            cand = (1.0 - theta) * u + theta * T(u)
            rc = gap_of(cand)
            it += 1
            if rc >= r:
                if theta < 1e-3:
                    break
                theta *= 0.5
                continue
            u, r = cand, rc

    z = Gf - A @ _power(u, p)
    free = (z > 0.0) & (z < upper)
    F = u + A @ _power(u, p) - Gf
    res = float(np.max(np.abs(F[free]) / ns[free], initial=0.0))
    gap = gap_of(u)
    ok = res <= opts.tol_residual and gap <= opts.tol_sandwich
    return Field.on(mesh, u), SolveReport(it, res, gap, ok,
                                          {"scale": scale, "clipped_nodes": int(np.count_nonzero(~free))})


def node_scale(Gf):
    """Per-node residual scale max(1, (G f)_i)."""
    return np.maximum(1.0, np.abs(np.asarray(Gf, float)))


def _newton_active_set(A, Gf, p, starts, it, opts, ns, gap_of, growth=8.0):
    """Semismooth Newton for u = max(Gf - A u^p, 0).

    Rows of pinned nodes are replaced by u_i = 0.  A node is pinned when its
    Newton update leaves the positive cone and released once Gf - A u^p is
    positive there again.  Upward moves are capped at ``growth`` times the
    current value (plus a floor) so that the convex term u^p cannot
    overshoot by many orders of magnitude; near a concentrated source the
    solution spans many decades and a raw Newton step from below would."""
    n = len(Gf)
    I = np.eye(n)
    target = 1e-3 * min(opts.tol_residual, opts.tol_sandwich)
    best_v, best_e = None, np.inf
    for v in starts:
        v = np.maximum(np.asarray(v, float), 0.0)
        pinned = np.zeros(n, bool)
        stall = 0
        local = np.inf
        while it < opts.max_iters and stall < 30:
            vp = _power(v, p)
            z = Gf - A @ vp
            F = np.where(pinned, 0.0, v - z)
            release = pinned & (z > 0.0)
            e = float(np.max(np.abs(F) / ns))
            if not np.any(release):
                g = gap_of(v)
                if g < best_e:
                    best_v, best_e = v, g
                if g <= target:
                    return v, g, it
            if e < local * 0.999:
                local, stall = e, 0
            else:
                stall += 1
            pinned &= ~release
            d = _dpower(v, p)
            d[pinned] = 0.0
            J = I + A * d[None, :]
            J[pinned] = I[pinned]
            step = linalg.lu_solve(linalg.lu_factor(J, check_finite=False), -F, check_finite=False)
            new = v + step
            floor = 1e-6 * max(float(np.max(v)), 1e-300)
            new = np.minimum(new, growth * np.maximum(v, floor))
            pinned |= new <= 0.0
            v = np.where(pinned, 0.0, new)
            it += 1
    return best_v, best_e, it


def source_on(mesh: Mesh, params: ProblemParams, s: float, cN: float) -> Field:
    return Field.on(mesh, gamma_source(mesh.nodes, s, params, cN))


def solve_exterior_dirac(mesh: Mesh, K: KernelMatrix, params: ProblemParams, cN: float,
                         opts: SolveOptions = SolveOptions(), init=None, check_uniqueness=True):
    """Interior solution for the Dirac exterior datum at -s e_N (s > 0).

    With ``check_uniqueness`` a second solve starts from the upper end of
    the sandwich and the sup distance between the two is reported."""
    if not params.s > 0:
        raise DomainError("solve_exterior_dirac needs s > 0")
    src = source_on(mesh, params, params.s, cN)
    u, rep = solve_semilinear(mesh, K, src, params.p, opts, init=init)
    if check_uniqueness:
        v, rep2 = solve_semilinear(mesh, K, src, params.p, opts, init=apply(K, src).values)
        d = np.abs(u.values - v.values)
        rep.extra["two_init_distance"] = float(np.max(d))
        rep.extra["two_init_distance_scaled"] = float(np.max(d / node_scale(apply(K, src).values)))
        rep.extra["two_init_converged"] = rep2.converged
    return u, rep


def sweep_s(mesh: Mesh, K: KernelMatrix, params: ProblemParams, s_list, cN: float,
            opts: SolveOptions = SolveOptions()):
    """Solve along a strictly decreasing list of s, warm-starting each solve.

    Returns a list of (s, Field, SolveReport).  Each report carries the
    number of nodes where u_s dropped below the previous solution by more
    than eps_mono = 10 tol_residual (relative to the node scale)."""
    s_list = [float(s) for s in s_list]
    if not s_list or any(s <= 0 for s in s_list):
        raise DomainError("s values must be positive")
    if any(b >= a for a, b in zip(s_list, s_list[1:])):
        raise DomainError("s_list must be strictly decreasing")
    out = []
    prev = None
    eps_mono = 10.0 * opts.tol_residual
    for s in s_list:
        pr = replace(params, s=s)
        try:
            u, rep = solve_exterior_dirac(mesh, K, pr, cN, opts,
                                          init=None if prev is None else prev.values,
                                          check_uniqueness=False)
        except Exception as exc:
            raise type(exc)(f"solve at s={s}: {exc}") from exc
        if prev is not None:
            slack = eps_mono * node_scale(apply(K, source_on(mesh, pr, s, cN)).values)
            bad = u.values < prev.values - slack
            rep.extra["monotone_violations"] = int(np.count_nonzero(bad))
            rep.extra["monotone_worst"] = float(np.max(prev.values - u.values))
        else:
            rep.extra["monotone_violations"] = 0
        out.append((s, u, rep))
        prev = u
    return out


def threshold_message(params: ProblemParams) -> str:
    return (f"p = {params.p:g} <= 1 + 2*alpha/N = {params.critical_p:g}: "
            "no solution exists for the Dirac exterior datum in this range")


def limit_solution(mesh: Mesh, K: KernelMatrix, params: ProblemParams, cN: float,
                   opts: SolveOptions = SolveOptions(), certify=True):
    """Solve with the s = 0 source Gamma_0 sampled at the nodes.

    Refused for p <= 1 + 2 alpha/N.  With ``certify`` the report holds a
    certified multiplier k of k Phi_{sigma_0} and the nodewise bound check."""
    if params.p <= params.critical_p:
        raise InfeasibleConfigError(threshold_message(params))
    src = source_on(mesh, params, 0.0, cN)
    u, rep = solve_semilinear(mesh, K, src, params.p, opts)
    if certify:
        sig = params.sigma0
        k, margin = certified_k(params, mesh.nodes, cN, sigma=sig)
        bound = k * np.linalg.norm(mesh.nodes, axis=-1) ** (-sig)
        rep.extra.update(certified_k=k, certificate_margin=margin, sigma0=sig,
                         bound_violations=int(np.count_nonzero(u.values > bound)),
                         bound_ratio=float(np.max(u.values / bound)))
    return u, rep


# ------------------------------------------------------------ diagnostics

@dataclass
class SymmetryReport:
    symmetry_defect: float
    radial_violations: int
    radial_pairs: int
    vertical_violations: int
    vertical_pairs: int
    field_max: float

    @property
    def radial_fraction(self):
        return self.radial_violations / max(self.radial_pairs, 1)

    @property
    def vertical_fraction(self):
        return self.vertical_violations / max(self.vertical_pairs, 1)


def symmetry_check(mesh: Mesh, u, rows: int = 40, cols: int = 40, slack: float = 1e-9) -> SymmetryReport:
    """Axial symmetry defect and monotonicity counts in r' and x_N.

    Monotonicity is tested on a regular grid of the meridian half-plane
    through the interpolated field: along rows of fixed x_N (decrease in
    r' = |x'|) and along columns of fixed r' on the upper half x_N > c_N
    (decrease in x_N).  A pair counts as a violation when the increase
    exceeds ``slack`` times the field maximum."""
    vals = np.asarray(getattr(u, "values", u), float)
    if vals.shape != (mesh.n,):
        raise MeshMismatchError("field does not match the mesh")
    if mesh.axisymmetric:
        defect = 0.0            # rotation invariance is built into the representation
    else:
        pairs = mesh.reflection_pairs()
        if pairs is None:
            raise DomainError("mesh lacks rotation pairs")
        i, j = pairs
        defect = float(np.max(np.abs(vals[i] - vals[j])))
    fi = FieldInterpolant(mesh, vals, method="linear")
    N = mesh.dim
    c = np.asarray(mesh.domain.c, float)
    R = mesh.domain.radius
    top = float(np.max(np.abs(vals)))
    tol = slack * top

    def at(rp, xn):
        pts = np.zeros((len(rp), N))
        pts[:, 0] = c[0] + rp if N >= 2 else rp
        pts[:, -1] = xn
        return fi(pts)

    rv = rn = 0
    for z in c[-1] + R * np.linspace(-1, 1, rows + 2)[1:-1]:
        h = math.sqrt(max(R * R - (z - c[-1]) ** 2, 0.0))
        v = at(np.linspace(0.0, h, cols + 1)[:-1], np.full(cols, z))
        rv += int(np.count_nonzero(np.diff(v) > tol))
        rn += cols - 1
    vv = vn = 0
    for rp in R * np.linspace(0, 1, cols + 1)[:-1]:
        h = math.sqrt(R * R - rp * rp)
        v = at(np.full(rows, rp), c[-1] + np.linspace(0.0, h, rows + 1)[:-1])
        vv += int(np.count_nonzero(np.diff(v) > tol))
        vn += rows - 1
    return SymmetryReport(defect, rv, rn, vv, vn, top)


@dataclass(frozen=True)
class Bump:
    """exp(-1/(1 - |y - center|^2/radius^2)) inside B_radius(center), 0 outside."""
    center: tuple
    radius: float

    def __call__(self, pts):
        pts = np.asarray(pts, float)
        q = np.sum((pts - np.asarray(self.center)) ** 2, axis=-1) / self.radius ** 2
        out = np.zeros(q.shape)
        m = q < 1.0
        out[m] = np.exp(-1.0 / (1.0 - q[m]))
        return out

    def as_function(self) -> EvaluableFunction:
        return EvaluableFunction(self, smoothness=self.radius,
                                 support=(np.asarray(self.center, float), self.radius))


def default_bumps(N: int):
    """Three axial bumps inside B_1(e_N) (axial so they suit N = 3 meshes too)."""
    e = np.zeros(N)
    out = []
    for h, r in ((0.5, 0.3), (1.0, 0.5), (1.4, 0.4)):
        e2 = e.copy()
        e2[-1] = h
        out.append(Bump(tuple(e2), r))
    return out


def bump_laplacian(b: Bump, points, alpha: float, cN: float, n_profile: int = 64,
                   q: QuadratureSpec = QuadratureSpec(1e-10, 1e-6)):
    """(-Delta)^alpha of a bump at many points.

    The bump is radial, so the operator is evaluated on a radial profile
    and interpolated by a cubic spline in |x - c|.  Profile radii are
    uniform up to twice the support radius (where the profile varies
    fastest) and geometric beyond it."""
    pts = np.atleast_2d(np.asarray(points, float))
    c = np.asarray(b.center, float)
    d = np.linalg.norm(pts - c, axis=-1)
    # round the range up so that repeated calls share one cached profile
    rmax = math.ceil(4.0 * max(float(np.max(d)), 2.0 * b.radius) * 1.01) / 4.0
    rr, prof = _bump_profile(b, float(alpha), float(cN), rmax, n_profile, q)
    return CubicSpline(rr, prof, bc_type=((1, 0.0), "not-a-knot"))(d)


@lru_cache(maxsize=64)
def _bump_profile(b, alpha, cN, rmax, n_profile, q):
    rr = np.linspace(0.0, 2.0 * b.radius, n_profile + 1)
    if rmax > rr[-1]:
        h = rr[1] - rr[0]
        n_far = max(2, int(math.ceil(math.log(rmax / rr[-1]) / math.log1p(h / rr[-1]))))
        rr = np.concatenate([rr, rr[-1] * (rmax / rr[-1]) ** (np.arange(1, n_far + 1) / n_far)])
    f = b.as_function()
    c = np.asarray(b.center, float)
    prof = []
    for r in rr:
        x = c.copy()
        x[0] += r
        prof.append(frac_laplacian_point(f, x, alpha, cN, q, max_level=4))
    return rr, np.array(prof)


def subcell_rule(mesh: Mesh, order: int = 4):
    """Tensor Gauss points inside every mesh cell, with volume weights."""
    g, wg = gauss_legendre01(order)
    t0, t1, p0, p1 = mesh.cell_bounds()
    T = t0[:, None, None] + (t1 - t0)[:, None, None] * g[None, :, None]
    P = p0[:, None, None] + (p1 - p0)[:, None, None] * g[None, None, :]
    T, P = np.broadcast_arrays(T, P)
    W = ((t1 - t0) * (p1 - p0))[:, None, None] * wg[None, :, None] * wg[None, None, :]
    W = W * mesh.volume_density(T, P)
    a, b = mesh.param_to_meridian(T.ravel(), P.ravel())
    pts = np.zeros((a.size, mesh.dim))
    pts[:, 0] = a + mesh.domain.c[0]
    pts[:, -1] = b
    return pts, W.ravel()


def weak_residual(mesh: Mesh, u, p, source, test_functions, alpha: float, cN: float,
                  order: int = 4):
    """Relative weak-form defects |int(u L xi + u^p xi - f xi)| / |int f xi|.

    u is a Field or nodal vector (interpolated inside the cells); ``source``
    is a nodal vector/Field or a callable of points.  p = None drops the
    absorption term and p = 0 means u^0 = 1.  When int f xi vanishes the
    absolute defect is returned."""
    uv = np.asarray(getattr(u, "values", u), float)
    pts, w = subcell_rule(mesh, order)
    ui = FieldInterpolant(mesh, uv)(pts)
    if callable(source):
        fi = np.asarray(source(pts), float)
    else:
        fi = FieldInterpolant(mesh, np.asarray(getattr(source, "values", source), float))(pts)
    out = []
    for b in test_functions:
        c = np.asarray(b.center, float)
        if np.linalg.norm(c - mesh.domain.c) + b.radius >= mesh.domain.radius:
            raise DomainError("test function support leaves the ball")
        xi = b(pts)
        lap = bump_laplacian(b, pts, alpha, cN)
        absorb = 0.0 if p is None else _power(ui, p)
        lhs = float(np.sum(w * (ui * lap + absorb * xi)))
        rhs = float(np.sum(w * fi * xi))
        out.append(abs(lhs - rhs) / abs(rhs) if rhs != 0 else abs(lhs - rhs))
    return out


@dataclass
class AxisTrace:
    t: np.ndarray
    values: np.ndarray
    resolved: np.ndarray
    node_t: np.ndarray
    node_values: np.ndarray


def axis_values(mesh: Mesh, u):
    """Values on the inward axis at the node radii t_i = 2 R tau_i.

    The field is even in phi across the axis; the two nearest angular
    columns on each side are combined as a + b phi^2 evaluated at phi = 0.
    """
    vals = np.asarray(getattr(u, "values", u), float).reshape(mesh.shape)
    pc = mesh.phi_centers
    if mesh.axisymmetric:
        k1, k2 = 0, 1
        v1, v3 = vals[:, k1], vals[:, k2]
    else:
        mid = mesh.shape[1] // 2
        if mesh.shape[1] % 2:
            v = vals[:, mid]
            return 2 * mesh.domain.radius * mesh.tau_centers + mesh.grading_point[-1], v
        v1 = 0.5 * (vals[:, mid - 1] + vals[:, mid])
        v3 = 0.5 * (vals[:, mid - 2] + vals[:, mid + 1])
        k1, k2 = mid, mid + 1
    p1, p3 = abs(pc[k1]), abs(pc[k2])
    v0 = (p3 * p3 * v1 - p1 * p1 * v3) / (p3 * p3 - p1 * p1)
    t = 2.0 * mesh.domain.radius * mesh.tau_centers
    return t, v0


def axis_trace(mesh: Mesh, u, t_list) -> AxisTrace:
    """u(t e_N) for t measured from the grading point along the axis.

    Interpolation between node radii is piecewise linear in log t (in
    log u as well where u > 0).  Requests outside the resolved range are
    flagged and returned as nan."""
    tn, vn = axis_values(mesh, u)
    t = np.asarray(t_list, float)
    if np.any((t <= 0) | (t >= 2.0 * mesh.domain.radius)):
        raise DomainError("t must lie in (0, 2R)")
    ok = (t >= tn[0]) & (t <= tn[-1])
    out = np.full(t.shape, np.nan)
    if np.any(ok):
        lt = np.log(t[ok])
        if np.all(vn > 0):
            out[ok] = np.exp(np.interp(lt, np.log(tn), np.log(vn)))
        else:
            out[ok] = np.interp(lt, np.log(tn), vn)
    return AxisTrace(t, out, ok, tn, vn)
