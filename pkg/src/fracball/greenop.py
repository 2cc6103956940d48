"""Dense discretisation of the Green operator on a graded ball mesh.

Entry (i, j) of the matrix approximates the integral of G(x_i, y) over the
mesh cell of node j, so that K @ f is the quadrature of G[f] at x_i.

* far pairs: one-point rule, G(x_i, y_j) w_j;
* near pairs (node i within a few cell diameters of cell j): adaptive
  bisection of the parameter cell with a tensor Gauss rule on the leaves;
* the self cell: the cell is cut into thirds until the piece holding the
  node is roughly isotropic; that piece is integrated with a Duffy split
  into four triangles and a Gauss-Jacobi rule carrying the u^{2alpha-1}
  singularity, the rest goes through the adaptive path.

For N = 3 the kernel is the azimuthal mean of G (axisymmetric data).
Rows are collocation rows and are not symmetrised by default; the weighted
asymmetry max |w_i K_ij - w_j K_ji| is reported by :func:`weighted_asymmetry`.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptCacheError, DomainError, MeshMismatchError
from .geometry import Mesh, ProblemParams, gauss_jacobi01, gauss_legendre01
from .kernels import _green_from, gamma_source, green_ring_kernel

MAGIC = b"FRACBALL-GK2"
HEADER = struct.Struct("<qdqQ")


@dataclass(frozen=True, eq=False)
class Field:
    mesh_hash: str
    values: np.ndarray
    note: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.ndim != 1:
            raise DomainError("field values must be a vector")
        if not np.all(np.isfinite(v)):
            raise DomainError("field values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def on(cls, mesh: Mesh, values, note=""):
        v = np.asarray(values, float)
        if v.shape != (mesh.n,):
            raise MeshMismatchError(f"field has {v.size} values, mesh has {mesh.n} nodes")
        return cls(mesh.mesh_hash, v, note)


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    mesh_hash: str
    alpha: float
    dim: int
    entries: np.ndarray
    assembly_meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.entries.shape[0]


# ------------------------------------------------------------- kernel in meridian coords

def _kernel_fn(mesh: Mesh, alpha: float, ring_order: int = 12):
    """H(xa, xb, ya, yb) on meridian coordinates, broadcasting."""
    ball = mesh.domain
    if mesh.axisymmetric:
        def H(xa, xb, ya, yb):
            return green_ring_kernel(xa, xb, ya, yb, ball, alpha, ring_order)
        return H
    R = ball.radius
    ca, cb = ball.center[0], ball.center[1]
    N = 2
    scale = R ** (2 * alpha - N)

    def H(xa, xb, ya, yb):
        xa, xb = (xa - ca) / R, (xb - cb) / R
        ya, yb = (ya - ca) / R, (yb - cb) / R
        d2 = (xa - ya) ** 2 + (xb - yb) ** 2
        fx = 1.0 - xa * xa - xb * xb
        fy = 1.0 - ya * ya - yb * yb
        return _green_from(d2, fx, fy, N, alpha) * scale
    return H


def _side_lengths(mesh, t0, t1, p0, p1):
    R = mesh.domain.radius
    pmin = np.where((p0 <= 0) & (p1 >= 0), 0.0, np.minimum(np.abs(p0), np.abs(p1)))
    lt = 2.0 * R * np.cos(pmin) * (t1 - t0)
    lp = 2.0 * R * t1 * (p1 - p0)
    return lt, lp


def _gauss_cells(mesh, H, xa, xb, t0, t1, p0, p1, order):
    """Tensor Gauss rule of the kernel times volume density on parameter cells."""
    g, w = gauss_legendre01(order)
    T = t0[:, None, None] + (t1 - t0)[:, None, None] * g[None, :, None]
    P = p0[:, None, None] + (p1 - p0)[:, None, None] * g[None, None, :]
    ya, yb = mesh.param_to_meridian(T, P)
    val = H(xa[:, None, None], xb[:, None, None], ya, yb) * mesh.volume_density(T, P)
    ww = (w[:, None] * w[None, :])[None]
    return np.sum(val * ww, axis=(1, 2)) * (t1 - t0) * (p1 - p0)


def _adaptive(mesh, H, xa, xb, t0, t1, p0, p1, ratio=1.5, order=3, max_depth=14):
    """Integrate H(x_k, .) over cell k for every task k, splitting near the target."""
    out = np.zeros(len(xa))
    idx = np.arange(len(xa))
    depth = 0
    while idx.size:
        lt, lp = _side_lengths(mesh, t0, t1, p0, p1)
        diam = np.hypot(lt, lp)
        ca, cb = mesh.param_to_meridian(0.5 * (t0 + t1), 0.5 * (p0 + p1))
        dist = np.hypot(xa - ca, xb - cb)
        leaf = (dist > ratio * diam) | (depth >= max_depth)
        if np.any(leaf):
            v = _gauss_cells(mesh, H, xa[leaf], xb[leaf], t0[leaf], t1[leaf],
                             p0[leaf], p1[leaf], order)
            np.add.at(out, idx[leaf], v)
        s = ~leaf
        if not np.any(s):
            break
        idx, xa, xb = idx[s], xa[s], xb[s]
        t0, t1, p0, p1 = t0[s], t1[s], p0[s], p1[s]
        cut_t = lt[s] >= lp[s]
        tm, pm = 0.5 * (t0 + t1), 0.5 * (p0 + p1)
        # first halves then second halves
        a_t1 = np.where(cut_t, tm, t1)
        a_p1 = np.where(cut_t, p1, pm)
        b_t0 = np.where(cut_t, tm, t0)
        b_p0 = np.where(cut_t, p0, pm)
        idx = np.concatenate([idx, idx])
        xa, xb = np.concatenate([xa, xa]), np.concatenate([xb, xb])
        t0, t1 = np.concatenate([t0, b_t0]), np.concatenate([a_t1, t1])
        p0, p1 = np.concatenate([p0, b_p0]), np.concatenate([a_p1, p1])
        depth += 1
    return out


def _duffy(mesh, H, alpha, xa, xb, t0, t1, p0, p1, order):
    """Integral over cells whose parameter center is the target point.

    Each of the four triangles (apex at the center) is swept as
    center + u (E(v) - center).  Cells near the grading point are strongly
    sheared, so along a long edge the integrand peaks sharply at the foot
    of the perpendicular from the apex; v is split there and mapped with
    v = v0 +- eps sinh(s), eps = height / edge length.
    """
    gu, wu = gauss_jacobi01(order, 2.0 * alpha - 1.0)
    gs, ws = gauss_legendre01(order)
    tc, pc = 0.5 * (t0 + t1), 0.5 * (p0 + p1)
    ca, cb = mesh.param_to_meridian(tc, pc)
    corners = [(t0, p0), (t1, p0), (t1, p1), (t0, p1)]
    phys = [mesh.param_to_meridian(t, p) for t, p in corners]
    total = np.zeros(len(xa))
    for k in range(4):
        (at, ap), (bt, bp) = corners[k], corners[(k + 1) % 4]
        (aa, ab), (ba, bb) = phys[k], phys[(k + 1) % 4]
        # twice the triangle area in parameter space
        det = np.abs((at - tc) * (bp - ap) - (ap - pc) * (bt - at))
        ea, eb = ba - aa, bb - ab
        L2 = ea * ea + eb * eb
        v0 = np.clip(((ca - aa) * ea + (cb - ab) * eb) / L2, 0.0, 1.0)
        eps = np.abs((aa - ca) * eb - (ab - cb) * ea) / L2
        for sign in (-1.0, 1.0):
            span = v0 if sign < 0 else 1.0 - v0
            smax = np.arcsinh(span / eps)
            sv = smax[:, None] * gs[None, :]
            v = v0[:, None] + sign * eps[:, None] * np.sinh(sv)
            dv = (eps * smax)[:, None] * np.cosh(sv) * ws[None, :]
            et = at[:, None] + (bt - at)[:, None] * v
            ep = ap[:, None] + (bp - ap)[:, None] * v
            T = tc[:, None, None] + gu[None, :, None] * (et - tc[:, None])[:, None, :]
            P = pc[:, None, None] + gu[None, :, None] * (ep - pc[:, None])[:, None, :]
            ya, yb = mesh.param_to_meridian(T, P)
            val = H(xa[:, None, None], xb[:, None, None], ya, yb) * mesh.volume_density(T, P)
            # the Duffy factor u and the Jacobi weight u^{2a-1} combine to u^{2-2a}
            val = val * gu[None, :, None] ** (2.0 - 2.0 * alpha)
            total += det * np.sum(val * wu[None, :, None] * dv[:, None, :], axis=(1, 2))
    return total


def _self_cells(mesh, H, alpha, order, aspect=2.0, rings=1, peel=1.0):
    """Integral of H(x_i, .) over the own cell of every node."""
    n = mesh.n
    xa, xb = mesh.meridian_nodes()
    t0, t1, p0, p1 = (a.copy() for a in mesh.cell_bounds())
    side = {k: [] for k in ("i", "t0", "t1", "p0", "p1")}
    idx = np.arange(n)
    # a threshold >= sqrt(3) guarantees that cutting a side by 3 cannot overshoot
    for _ in range(40):
        lt, lp = _side_lengths(mesh, t0, t1, p0, p1)
        ct = lt > aspect * lp
        cp = lp > aspect * lt
        if not np.any(ct | cp):
            break
        # outer thirds go to the regular path, the middle third is kept
        for mask, along_t in ((ct, True), (cp, False)):
            if not np.any(mask):
                continue
            a0, a1 = (t0, t1) if along_t else (p0, p1)
            d = (a1[mask] - a0[mask]) / 3.0
            for lo, hi in ((a0[mask], a0[mask] + d), (a1[mask] - d, a1[mask])):
                side["i"].append(idx[mask])
                if along_t:
                    side["t0"].append(lo), side["t1"].append(hi)
                    side["p0"].append(p0[mask]), side["p1"].append(p1[mask])
                else:
                    side["t0"].append(t0[mask]), side["t1"].append(t1[mask])
                    side["p0"].append(lo), side["p1"].append(hi)
            new0, new1 = a0[mask] + d, a1[mask] - d
            a0[mask], a1[mask] = new0, new1
    # Peel rings of eight neighbours until the Duffy piece is nearly affine
    # and small against the distance to the sphere, below which the kernel
    # changes from |x-y|^{2a-N} to rho(x)^a rho(y)^a |x-y|^{-N} behaviour.
    rho = mesh.domain.radius - np.hypot(xa - mesh.domain.center[0],
                                        xb - mesh.domain.center[-1])
    for level in range(30):
        lt, lp = _side_lengths(mesh, t0, t1, p0, p1)
        m = np.hypot(lt, lp) > peel * rho if level >= rings else np.ones(n, bool)
        if not np.any(m):
            break
        dt, dp = (t1[m] - t0[m]) / 3.0, (p1[m] - p0[m]) / 3.0
        for kt in range(3):
            for kp in range(3):
                if kt == 1 and kp == 1:
                    continue
                side["i"].append(idx[m])
                side["t0"].append(t0[m] + kt * dt), side["t1"].append(t0[m] + (kt + 1) * dt)
                side["p0"].append(p0[m] + kp * dp), side["p1"].append(p0[m] + (kp + 1) * dp)
        t0[m], t1[m], p0[m], p1[m] = t0[m] + dt, t1[m] - dt, p0[m] + dp, p1[m] - dp
    v1 = _duffy(mesh, H, alpha, xa, xb, t0, t1, p0, p1, order)
    v2 = _duffy(mesh, H, alpha, xa, xb, t0, t1, p0, p1, order + 4)
    consistency = float(np.max(np.abs(v2 - v1) / np.abs(v2)))
    out = v2
    if side["i"]:
        ii = np.concatenate(side["i"])
        vals = _adaptive(mesh, H, xa[ii], xb[ii], *(np.concatenate(side[k])
                                                      for k in ("t0", "t1", "p0", "p1")))
        np.add.at(out, ii, vals)
    return out, consistency


def assemble(mesh: Mesh, alpha: float, near_ratio: float = 4.0, leaf_ratio: float = 1.5,
             leaf_order: int = 3, self_order: int = 8, ring_order: int = 12,
             consistency_tol: float = 1e-3, block: int | None = None,
             symmetrize: bool = False) -> KernelMatrix:
    """Assemble K with K @ f ~ G_alpha[f] at the nodes."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    H = _kernel_fn(mesh, alpha, ring_order)
    n = mesh.n
    xa, xb = mesh.meridian_nodes()
    w = mesh.weights
    t0, t1, p0, p1 = mesh.cell_bounds()
    lt, lp = _side_lengths(mesh, t0, t1, p0, p1)
    diam = np.hypot(lt, lp)

    K = np.empty((n, n))
    if block is None:
        block = max(1, (1 << 20) // (n * (ring_order if mesh.axisymmetric else 1)))
    near_i, near_j = [], []
    for r0 in range(0, n, block):
        r1 = min(n, r0 + block)
        ya, yb = xa[None, :], xb[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            K[r0:r1] = H(xa[r0:r1, None], xb[r0:r1, None], ya, yb) * w[None, :]
        dist = np.hypot(xa[r0:r1, None] - ya, xb[r0:r1, None] - yb)
        ii, jj = np.nonzero(dist < near_ratio * diam[None, :])
        ii = ii + r0
        keep = ii != jj
        near_i.append(ii[keep])
        near_j.append(jj[keep])
    ni, nj = np.concatenate(near_i), np.concatenate(near_j)
    step = 1 << 16
    for k in range(0, ni.size, step):
        i, j = ni[k:k + step], nj[k:k + step]
        K[i, j] = _adaptive(mesh, H, xa[i], xb[i], t0[j], t1[j], p0[j], p1[j],
                            ratio=leaf_ratio, order=leaf_order)
    diag, consistency = _self_cells(mesh, H, alpha, self_order)
    if consistency > consistency_tol:
        raise DomainError(f"self-cell quadrature inconsistent ({consistency:.2e}); "
                          "the mesh is too coarse for this alpha")
    K[np.arange(n), np.arange(n)] = diag
    if symmetrize:
        # K_ij / w_j made symmetric; costs accuracy on the sliver cells at
        # the origin, where a cell average of G(x_j, .) is far from G(x_j, x_i)
        S = K / w[None, :]
        S = 0.5 * (S + S.T)
        K = S * w[None, :]
    meta = {"scheme": "far:midpoint near:adaptive-gauss self:duffy-jacobi",
            "near_ratio": near_ratio, "leaf_ratio": leaf_ratio, "leaf_order": leaf_order,
            "self_order": self_order, "ring_order": ring_order,
            "near_pairs": int(ni.size), "self_consistency": consistency,
            "symmetrized": bool(symmetrize)}
    return KernelMatrix(mesh.mesh_hash, float(alpha), mesh.dim, K, meta)


# ------------------------------------------------------------- application

def weighted_asymmetry(K: KernelMatrix, weights, mask=None) -> float:
    """max |K_ij/w_j - K_ji/w_i| / max |K_ij/w_j| over the (masked) pairs."""
    S = K.entries / np.asarray(weights)[None, :]
    D = np.abs(S - S.T)
    if mask is not None:
        D = D[np.ix_(mask, mask)]
    return float(np.max(D) / np.max(np.abs(S)))


def _check(K: KernelMatrix, f: Field):
    if f.mesh_hash != K.mesh_hash:
        raise MeshMismatchError("field and matrix refer to different meshes")
    if f.values.shape != (K.n,):
        raise MeshMismatchError("field length does not match the matrix")


def apply(K: KernelMatrix, f: Field) -> Field:
    _check(K, f)
    return Field(K.mesh_hash, K.entries @ f.values)


def torsion(mesh: Mesh, K: KernelMatrix) -> Field:
    """G[1]: the torsion function of the ball the mesh covers."""
    if mesh.mesh_hash != K.mesh_hash:
        raise MeshMismatchError("matrix was assembled on a different mesh")
    return apply(K, Field.on(mesh, np.ones(mesh.n)))


def source_field(mesh: Mesh, params: ProblemParams, s: float, cN: float) -> Field:
    return Field.on(mesh, gamma_source(mesh.nodes, s, params, cN))


def linear_solution(mesh: Mesh, K: KernelMatrix, params: ProblemParams, s: float,
                    cN: float) -> Field:
    """G[Gamma_s] at the nodes.  For s = 0 the value depends on the mesh."""
    if s < 0:
        raise DomainError("s must be >= 0")
    out = apply(K, source_field(mesh, params, s, cN))
    if s == 0:
        return Field(out.mesh_hash, out.values, "mesh-dependent; no continuum limit")
    return out


# ------------------------------------------------------------- cache

def save_matrix(K: KernelMatrix, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(HEADER.pack(K.dim, K.alpha, K.n, int(K.mesh_hash, 16)))
        fh.write(np.ascontiguousarray(K.entries, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_matrix(path, mesh: Mesh | None = None, alpha: float | None = None) -> KernelMatrix:
    """Read a cached matrix; corrupt files and mesh mismatches raise different errors."""
    raw = Path(path).read_bytes()
    hsize = len(MAGIC) + HEADER.size
    if len(raw) < hsize or raw[:len(MAGIC)] != MAGIC:
        raise CorruptCacheError(f"{path}: bad magic or truncated header")
    dim, a, n, h = HEADER.unpack(raw[len(MAGIC):hsize])
    if n < 0 or dim < 2 or not (0.0 < a < 1.0):
        raise CorruptCacheError(f"{path}: invalid header values")
    if len(raw) != hsize + 8 * n * n:
        raise CorruptCacheError(f"{path}: payload has {len(raw) - hsize} bytes, "
                                f"expected {8 * n * n}")
    mh = f"{h:016x}"
    if mesh is not None and (mh != mesh.mesh_hash or n != mesh.n or dim != mesh.dim):
        raise MeshMismatchError(f"{path}: cached for mesh {mh}, requested {mesh.mesh_hash}")
    if alpha is not None and a != alpha:
        raise MeshMismatchError(f"{path}: cached for alpha={a!r}, requested {alpha!r}")
    entries = np.frombuffer(raw, dtype="<f8", offset=hsize).reshape(n, n).astype(float)
    return KernelMatrix(mh, a, dim, entries, {"loaded_from": str(path)})


def cache_dir() -> Path:
    d = os.environ.get("FRACBALL_CACHE_DIR")
    return Path(d) if d else Path.home() / ".cache" / "fracball"


def cached_assemble(mesh: Mesh, alpha: float, path=None, **kw) -> KernelMatrix:
    """Load the matrix from the cache or assemble and store it."""
    if path is None:
        path = cache_dir() / f"gk_{mesh.mesh_hash}_a{alpha!r}.bin"
    path = Path(path)
    if path.exists():
        try:
            return load_matrix(path, mesh, alpha)
        except CorruptCacheError:
            pass
    K = assemble(mesh, alpha, **kw)
    save_matrix(K, path)
    return K
