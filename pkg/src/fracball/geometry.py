"""Ball domains, graded quadrature meshes and small geometric predicates.

Meshes use a fan parameterisation about the grading point g (the lowest
point of the ball, the origin for B_1(e_N)):

    y = g + R * tau * (sin 2phi, 1 + cos 2phi),   0 < tau < 1,

so tau = const are circles through g and phi = const are chords from g.
The volume element is 4 R^2 tau cos^2(phi) dtau dphi.  Cells are graded
in tau like (i/M)^grading_exponent, so they shrink toward g where the
Dirac data touches the boundary.

For N = 2 the angle runs over (-pi/2, pi/2).  For N = 3 only the meridian
half plane phi in [0, pi/2) is meshed (x = (r', 0, x_N)) and each node
carries the volume of its ring, 2 pi r' times the meridian area.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DomainError

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def e_N(N):
    e = np.zeros(N)
    e[-1] = 1.0
    return e


def ball_volume(N):
    return math.pi ** (N / 2) / math.gamma(N / 2 + 1)


@dataclass(frozen=True)
class BallDomain:
    dim: int
    center: tuple = None
    radius: float = 1.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise DomainError(f"dimension must be an integer >= 2, got {self.dim}")
        if not self.radius > 0:
            raise DomainError("radius must be positive")
        c = e_N(self.dim) if self.center is None else np.asarray(self.center, float)
        if c.shape != (self.dim,):
            raise DomainError("center has the wrong length")
        object.__setattr__(self, "center", tuple(float(v) for v in c))

    @property
    def c(self):
        return np.asarray(self.center)

    def lowest_point(self):
        return self.c - self.radius * e_N(self.dim)

    def contains(self, x, strict=True):
        d = boundary_distance(self, x)
        return d > 0 if strict else d >= 0

    def to_centered(self, x):
        """Coordinates of x in the frame where the ball is B_1(0)."""
        return (np.asarray(x, float) - self.c) / self.radius


def unit_ball(N):
    """The domain B_1(e_N) used throughout."""
    return BallDomain(N)


def centered_ball(N):
    return BallDomain(N, center=np.zeros(N))


@dataclass(frozen=True)
class ProblemParams:
    dim: int
    alpha: float
    p: float
    s: float = 0.0
    resolution: int = 32
    grading_exponent: float = 2.0
    angular_clustering: float = 0.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise DomainError(f"dimension must be an integer >= 2, got {self.dim}")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (math.isfinite(self.p) and self.p >= 0):
            raise DomainError(f"p must be finite and >= 0, got {self.p}")
        if not (math.isfinite(self.s) and self.s >= 0):
            raise DomainError(f"s must be finite and >= 0, got {self.s}")
        if self.resolution < 4:
            raise DomainError("resolution must be >= 4")
        if not 0.0 <= self.angular_clustering < 2.0:
            raise DomainError("angular_clustering must lie in [0, 2)")

    @property
    def critical_p(self):
        return 1.0 + 2.0 * self.alpha / self.dim

    @property
    def sigma0(self):
        return (self.dim + 2.0 * self.alpha) / self.p


@dataclass(frozen=True, eq=False)
class Mesh:
    domain: BallDomain
    nodes: np.ndarray
    weights: np.ndarray
    grading_point: np.ndarray
    grading_exponent: float
    resolution: int
    mesh_hash: str
    tau_edges: np.ndarray = field(repr=False)
    phi_edges: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return self.domain.dim

    @property
    def n(self):
        return len(self.weights)

    @property
    def shape(self):
        return len(self.tau_edges) - 1, len(self.phi_edges) - 1

    @property
    def axisymmetric(self):
        return self.domain.dim >= 3

    @property
    def tau_centers(self):
        return 0.5 * (self.tau_edges[1:] + self.tau_edges[:-1])

    @property
    def phi_centers(self):
        return 0.5 * (self.phi_edges[1:] + self.phi_edges[:-1])

    def node_params(self):
        """(tau, phi) of every node, in node order."""
        T, P = np.meshgrid(self.tau_centers, self.phi_centers, indexing="ij")
        return T.ravel(), P.ravel()

    def cell_bounds(self):
        """Per-node parameter cell as (tau_lo, tau_hi, phi_lo, phi_hi)."""
        mt, mp = self.shape
        t0 = np.repeat(self.tau_edges[:-1], mp)
        t1 = np.repeat(self.tau_edges[1:], mp)
        p0 = np.tile(self.phi_edges[:-1], mt)
        p1 = np.tile(self.phi_edges[1:], mt)
        return t0, t1, p0, p1

    def param_to_meridian(self, tau, phi):
        """Meridian coordinates (r', x_N) for parameters (tau, phi).

        For N = 2, r' is the signed first coordinate."""
        R = self.domain.radius
        g = self.grading_point
        a = R * tau * np.sin(2 * phi)
        b = g[-1] + R * tau * (1 + np.cos(2 * phi))
        return a, b

    def meridian_to_param(self, rp, xn):
        """Inverse of param_to_meridian; tau >= 1 means outside the ball."""
        R = self.domain.radius
        v1 = np.asarray(rp, float) / R
        v2 = (np.asarray(xn, float) - self.grading_point[-1]) / R
        phi = np.arctan2(v1, v2)
        c = np.cos(phi)
        with np.errstate(divide="ignore", invalid="ignore"):
            tau = np.hypot(v1, v2) / (2.0 * c)
        tau = np.where(c > 0, tau, np.inf)
        tau = np.where((v1 == 0) & (v2 == 0), 0.0, tau)
        return tau, phi

    def volume_density(self, tau, phi):
        """dV / (dtau dphi), including the ring factor for N = 3."""
        R = self.domain.radius
        j = 4.0 * R * R * tau * np.cos(phi) ** 2
        if self.axisymmetric:
            rp, _ = self.param_to_meridian(tau, phi)
            j = j * 2.0 * math.pi * rp
        return j

    def meridian_nodes(self):
        if self.axisymmetric:
            return self.nodes[:, 0], self.nodes[:, -1]
        return self.nodes[:, 0], self.nodes[:, 1]

    def reflection_pairs(self):
        """Index pairs (i, j) with node j the mirror image of node i in x_1.

        Only defined for the planar mesh; N = 3 meshes are axisymmetric by
        construction."""
        if self.axisymmetric:
            return None
        mt, mp = self.shape
        i = np.arange(self.n)
        ti, pk = np.divmod(i, mp)
        return i, ti * mp + (mp - 1 - pk)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{k + 1}" for k in range(self.dim)] + ["weight"])
            for x, wt in zip(self.nodes, self.weights):
                w.writerow([f"{v:.17g}" for v in x] + [f"{wt:.17g}"])


def mesh_hash(domain: BallDomain, resolution, grading_exponent, angular_clustering=0.0) -> str:
    """FNV-1a of the canonical serialisation of the mesh inputs."""
    parts = [f"dim={domain.dim}",
             "center=" + ",".join(repr(float(c)) for c in domain.center),
             f"radius={float(domain.radius)!r}",
             f"resolution={int(resolution)}",
             f"grading={float(grading_exponent)!r}"]
    if angular_clustering:
        parts.append(f"clustering={float(angular_clustering)!r}")
    return f"{fnv1a64(';'.join(parts).encode()):016x}"


def _cell_integrals(tau_edges, phi_edges, axisym, R):
    # exact integrals of the volume element over every tensor cell
    t0, t1 = tau_edges[:-1], tau_edges[1:]
    p0, p1 = phi_edges[:-1], phi_edges[1:]
    if not axisym:
        it = 2.0 * (t1 ** 2 - t0 ** 2)                    # int 4 tau
        ip = 0.5 * (p1 - p0) + 0.25 * (np.sin(2 * p1) - np.sin(2 * p0))  # int cos^2
        return R * R * np.outer(it, ip)
    # 2 pi r' * 4 tau cos^2 = 8 pi R tau^2 * 2 sin cos^3
    it = (t1 ** 3 - t0 ** 3) / 3.0
    ip = 0.5 * (np.cos(p0) ** 4 - np.cos(p1) ** 4)        # int 2 sin cos^3
    return 8.0 * math.pi * R ** 3 * np.outer(it, ip)


def _angular_fractions(M, two_sided, clustering):
    # blend of uniform spacing and a map with zero slope at the sphere end(s)
    x = np.arange(M + 1) / M
    if not clustering:
        return x
    y = 0.5 * (1.0 - np.cos(math.pi * x)) if two_sided else np.sin(0.5 * math.pi * x)
    return (1.0 - 0.5 * clustering) * x + 0.5 * clustering * y


def build_graded_mesh(domain: BallDomain, resolution: int, grading_exponent: float = 2.0,
                      angular_clustering: float = 0.0) -> Mesh:
    """Tensor fan mesh with resolution x resolution cells, graded toward the lowest point.

    ``angular_clustering`` in [0, 2) moves fan angles toward the sphere,
    where the solution has a boundary layer next to the grading point; 0
    gives uniform angles."""
    if int(resolution) != resolution or resolution < 4:
        raise DomainError(f"resolution must be an integer >= 4, got {resolution}")
    if not grading_exponent >= 1:
        raise DomainError(f"grading_exponent must be >= 1, got {grading_exponent}")
    if not 0.0 <= angular_clustering < 2.0:
        raise DomainError(f"angular_clustering must lie in [0, 2), got {angular_clustering}")
    N = domain.dim
    if N not in (2, 3):
        raise DomainError("meshes are implemented for N = 2 and the axisymmetric N = 3 case")
    if N == 3 and (domain.center[0] != 0 or domain.center[1] != 0):
        raise DomainError("axisymmetric meshes need the ball center on the x_N axis")
    M = int(resolution)
    R = float(domain.radius)
    tau_edges = (np.arange(M + 1) / M) ** grading_exponent
    axisym = N == 3
    lo = 0.0 if axisym else -0.5 * math.pi
    phi_edges = lo + (0.5 * math.pi - lo) * _angular_fractions(M, not axisym, angular_clustering)

    g = domain.lowest_point()
    tau_c = 0.5 * (tau_edges[1:] + tau_edges[:-1])
    phi_c = 0.5 * (phi_edges[1:] + phi_edges[:-1])
    T, P = np.meshgrid(tau_c, phi_c, indexing="ij")
    a = R * T * np.sin(2 * P)
    b = g[-1] + R * T * (1 + np.cos(2 * P))
    nodes = np.zeros((M * M, N))
    nodes[:, 0] = a.ravel()
    nodes[:, -1] = b.ravel()
    weights = _cell_integrals(tau_edges, phi_edges, axisym, R).ravel()
    return Mesh(domain=domain, nodes=nodes, weights=weights, grading_point=g,
                grading_exponent=float(grading_exponent), resolution=M,
                mesh_hash=mesh_hash(domain, M, grading_exponent, angular_clustering),
                tau_edges=tau_edges, phi_edges=phi_edges)


def mesh_for(params: ProblemParams, domain: BallDomain | None = None) -> Mesh:
    domain = unit_ball(params.dim) if domain is None else domain
    return build_graded_mesh(domain, params.resolution, params.grading_exponent,
                             params.angular_clustering)


def boundary_distance(domain: BallDomain, x) -> float:
    """Signed distance to the sphere, positive inside."""
    x = np.asarray(x, float)
    return domain.radius - np.linalg.norm(x - domain.c, axis=-1)


def in_cone(x) -> bool:
    """Whether |x - t e_N| < t/8 for some t in (0, 1).

    With u = 1/t the ratio |x - t e_N|^2 / t^2 is the quadratic
    |x|^2 u^2 - 2 x_N u + 1, minimised at u* = x_N/|x|^2.  If u* > 1 the
    minimum |x'|^2/|x|^2 is attained inside the range; otherwise the
    infimum is approached as t -> 1.
    """
    x = np.asarray(x, float)
    r2 = float(x @ x)
    if r2 == 0.0:
        return False
    xn = x[-1]
    if xn > r2:
        return (r2 - xn * xn) / r2 < 1.0 / 64.0
    d = x.copy()
    d[-1] -= 1.0
    return float(d @ d) < 1.0 / 64.0


def axial_coordinates(x):
    """(|x'|, x_N) for x = (x', x_N)."""
    x = np.asarray(x, float)
    return float(np.linalg.norm(x[:-1])), float(x[-1])


def gauss_jacobi01(n, beta):
    """Nodes/weights on [0, 1] for the weight u^beta."""
    t, w = special.roots_jacobi(n, 0.0, beta)
    return 0.5 * (t + 1.0), w * 0.5 ** (beta + 1.0)


def gauss_legendre01(n):
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1.0), 0.5 * w

