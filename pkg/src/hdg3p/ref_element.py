"""Reference triangle data for one polynomial degree.

The reference triangle is (0,0), (1,0), (0,1). Volume unknowns are expanded in
the orthonormal Proriol-Koornwinder-Dubiner (PKD) basis, ordered by total
degree so that the first ``(k+1)(k+2)/2`` modes of degree ``k+1`` are exactly
the degree-``k`` basis. Trace unknowns live in the orthonormal Legendre basis
on [0, 1].

Local edge ``j`` runs from local vertex ``j`` to vertex ``(j+1) % 3``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.special import eval_jacobi, gammaln, roots_jacobi

from .errors import ConfigurationError, DomainError

log = logging.getLogger(__name__)

MAX_DEGREE = 16
REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
REF_AREA = 0.5

# Interior Fekete points for degree 6 (reference-triangle coordinates); the
# vertices and the Gauss-Lobatto-Legendre edge points complete the set of 28.
_FEKETE6_INTERIOR = np.array([
    (0.787329063200, 0.106335468400),
    (0.106335468400, 0.787329063200),
    (0.106335468400, 0.106335468400),
    (0.350396870767, 0.100117379667),
    (0.566549287000, 0.117180917100),
    (0.549485749567, 0.350396870767),
    (0.316269795900, 0.566549287000),
    (0.100117379667, 0.549485749567),
    (0.117180917100, 0.316269795900),
    (1.0 / 3.0, 1.0 / 3.0),
])

# warp-and-blend optimisation parameters (Hesthaven & Warburton, table 6.1)
_ALPHA_OPT = (0.0, 0.0, 1.4152, 0.1001, 0.2751, 0.9800, 1.0999, 1.2832,
              1.3648, 1.4773, 1.4959, 1.5743, 1.5770, 1.6223, 1.6258)


def _jacobi_normed(n, alpha, beta, x):
    """Jacobi polynomial normalised to unit L2 norm under its weight on [-1, 1]."""
    x = np.asarray(x, dtype=float)
    if n < 0:
        return np.zeros_like(x)
    log_gamma = ((alpha + beta + 1) * np.log(2.0) - np.log(2 * n + alpha + beta + 1)
                 + gammaln(n + alpha + 1) + gammaln(n + beta + 1)
                 - gammaln(n + alpha + beta + 1) - gammaln(n + 1))
    return eval_jacobi(n, alpha, beta, x) / np.exp(0.5 * log_gamma)


def _jacobi_normed_deriv(n, alpha, beta, x):
    if n == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    return np.sqrt(n * (n + alpha + beta + 1)) * _jacobi_normed(n - 1, alpha + 1, beta + 1, x)


def mode_indices(k):
    """(i, j) PKD index pairs in hierarchical order (by total degree)."""
    return [(d - j, j) for d in range(k + 1) for j in range(d + 1)]


def n_modes(k):
    return (k + 1) * (k + 2) // 2


def _collapsed(points):
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    r = 2.0 * pts[:, 0] - 1.0
    s = 2.0 * pts[:, 1] - 1.0
    a = np.full_like(r, -1.0)
    ok = np.abs(1.0 - s) > 1e-14
    a[ok] = 2.0 * (1.0 + r[ok]) / (1.0 - s[ok]) - 1.0
    return a, s


def pkd_values(k, points):
    """Orthonormal PKD basis on the unit reference triangle, shape (npts, n_modes)."""
    a, b = _collapsed(points)
    cols = []
    for i, j in mode_indices(k):
        h1 = _jacobi_normed(i, 0, 0, a)
        h2 = _jacobi_normed(j, 2 * i + 1, 0, b)
        cols.append(np.sqrt(2.0) * h1 * h2 * (1.0 - b) ** i)
    # factor 2: biunit triangle (area 2) -> unit triangle (area 1/2)
    return 2.0 * np.stack(cols, axis=1)


def pkd_gradients(k, points):
    """x- and y-derivatives of the PKD basis, each shape (npts, n_modes)."""
    a, b = _collapsed(points)
    dx_cols, dy_cols = [], []
    for i, j in mode_indices(k):
        fa = _jacobi_normed(i, 0, 0, a)
        dfa = _jacobi_normed_deriv(i, 0, 0, a)
        gb = _jacobi_normed(j, 2 * i + 1, 0, b)
        dgb = _jacobi_normed_deriv(j, 2 * i + 1, 0, b)
        half = 0.5 * (1.0 - b)
        ddr = dfa * gb
        dds = dfa * (gb * 0.5 * (1.0 + a))
        if i > 0:
            ddr = ddr * half ** (i - 1)
            dds = dds * half ** (i - 1)
        tmp = dgb * half ** i
        if i > 0:
            tmp = tmp - 0.5 * i * gb * half ** (i - 1)
        dds = dds + fa * tmp
        scale = 2.0 ** (i + 0.5)
        # d/dx = 2 d/dr, d/dy = 2 d/ds, and the basis carries an extra factor 2
        dx_cols.append(4.0 * scale * ddr)
        dy_cols.append(4.0 * scale * dds)
    return np.stack(dx_cols, axis=1), np.stack(dy_cols, axis=1)


def legendre01(k, t):
    """Orthonormal Legendre basis of degree k on [0, 1], shape (npts, k+1)."""
    t = np.asarray(t, dtype=float)
    x = 2.0 * t - 1.0
    return np.stack([np.sqrt(2 * n + 1) * npleg.legval(x, np.eye(k + 1)[n])
                     for n in range(k + 1)], axis=1)


def triangle_quadrature(degree):
    """Collapsed Gauss rule on the unit triangle exact for total degree ``degree``."""
    n = max(1, (degree + 2) // 2)
    xa, wa = npleg.leggauss(n)
    xb, wb = roots_jacobi(n, 1.0, 0.0)
    A, B = np.meshgrid(xa, xb, indexing="ij")
    W = np.outer(wa, wb) / 8.0
    r = 0.5 * (1.0 + A) * (1.0 - B) - 1.0
    x = 0.5 * (1.0 + r)
    y = 0.5 * (1.0 + B)
    return np.column_stack([x.ravel(), y.ravel()]), W.ravel()


def line_quadrature(degree):
    """Gauss-Legendre rule on [0, 1] exact for ``degree``."""
    n = max(1, (degree + 2) // 2)
    x, w = npleg.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def gll_points(n):
    """n+1 Gauss-Lobatto-Legendre points on [-1, 1]."""
    if n == 1:
        return np.array([-1.0, 1.0])
    inner = npleg.Legendre.basis(n).deriv().roots()
    return np.concatenate([[-1.0], np.sort(inner.real), [1.0]])


def _warpfactor(n, rout):
    req = np.linspace(-1.0, 1.0, n + 1)
    rgll = gll_points(n)
    veq = np.stack([_jacobi_normed(i, 0, 0, req) for i in range(n + 1)], axis=1)
    pmat = np.stack([_jacobi_normed(i, 0, 0, rout) for i in range(n + 1)], axis=0)
    lmat = np.linalg.solve(veq.T, pmat)
    warp = lmat.T @ (rgll - req)
    zerof = np.abs(rout) < 1.0 - 1e-10
    sf = 1.0 - (zerof * rout) ** 2
    return warp / sf + warp * (zerof - 1.0)


def warp_blend_nodes(k):
    """Hesthaven-Warburton warp-and-blend nodes mapped to the unit triangle."""
    alpha = _ALPHA_OPT[k - 1] if k <= len(_ALPHA_OPT) else 5.0 / 3.0
    L1, L3 = [], []
    for n in range(k + 1):
        for m in range(k + 1 - n):
            L1.append(n / k)
            L3.append(m / k)
    L1 = np.array(L1)
    L3 = np.array(L3)
    L2 = 1.0 - L1 - L3
    x = -L2 + L3
    y = (-L2 - L3 + 2.0 * L1) / np.sqrt(3.0)
    blend1 = 4.0 * L2 * L3
    blend2 = 4.0 * L1 * L3
    blend3 = 4.0 * L1 * L2
    warp1 = blend1 * _warpfactor(k, L3 - L2) * (1.0 + (alpha * L1) ** 2)
    warp2 = blend2 * _warpfactor(k, L1 - L3) * (1.0 + (alpha * L2) ** 2)
    warp3 = blend3 * _warpfactor(k, L2 - L1) * (1.0 + (alpha * L3) ** 2)
    c2, s2 = np.cos(2 * np.pi / 3), np.sin(2 * np.pi / 3)
    c4, s4 = np.cos(4 * np.pi / 3), np.sin(4 * np.pi / 3)
    x = x + warp1 + c2 * warp2 + c4 * warp3
    y = y + 0.0 * warp1 + s2 * warp2 + s4 * warp3
    # equilateral (-1,-1/sqrt3), (1,-1/sqrt3), (0, 2/sqrt3) -> biunit -> unit
    L1 = (np.sqrt(3.0) * y + 1.0) / 3.0
    L2 = (-3.0 * x - np.sqrt(3.0) * y + 2.0) / 6.0
    L3 = (3.0 * x - np.sqrt(3.0) * y + 2.0) / 6.0
    r = -L2 + L3 - L1
    s = -L2 - L3 + L1
    return np.column_stack([0.5 * (r + 1.0), 0.5 * (s + 1.0)])


def fekete6_nodes():
    """The 28 degree-6 Fekete points: vertices, edge GLL points, interior table."""
    pts = [tuple(v) for v in REF_VERTICES]
    t = 0.5 * (gll_points(6)[1:-1] + 1.0)
    for j in range(3):
        va, vb = REF_VERTICES[j], REF_VERTICES[(j + 1) % 3]
        pts.extend(tuple(va + ti * (vb - va)) for ti in t)
    pts.extend(tuple(p) for p in _FEKETE6_INTERIOR)
    return np.array(pts)


@dataclass(frozen=True)
class ReferenceElement:
    """Immutable per-degree reference data.

    ``edge_phi[j]`` holds volume-mode values at the edge quadrature points of
    local edge ``j``; ``edge_mu[o]`` holds the trace basis at those points for
    orientation ``o`` (0: local edge direction agrees with the global edge
    direction, 1: reversed).
    """

    degree: int
    nodes: np.ndarray
    vandermonde: np.ndarray
    grad_matrices: tuple
    quad_points: np.ndarray
    quad_weights: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    edge_points: np.ndarray
    edge_weights: np.ndarray
    edge_phi: np.ndarray
    edge_mu: np.ndarray
    edge_trace: np.ndarray
    vandermonde_cond: float = field(default=np.nan)

    @property
    def n_modes(self):
        return n_modes(self.degree)

    @property
    def n_trace(self):
        return self.degree + 1

    @property
    def volume_quadrature(self):
        return self.quad_points, self.quad_weights

    @property
    def edge_quadrature(self):
        return self.edge_points, self.edge_weights


def edge_map(j, t):
    """Reference coordinates of parameter ``t`` along local edge ``j``."""
    va, vb = REF_VERTICES[j], REF_VERTICES[(j + 1) % 3]
    t = np.asarray(t, dtype=float)
    return va[None, :] + t[:, None] * (vb - va)[None, :]


@lru_cache(maxsize=None)
def build_reference(k, quad_degree=None, edge_degree=None):
    """Assemble all reference data for degree ``k`` (cached per argument set)."""
    if not isinstance(k, (int, np.integer)) or k < 1 or k > MAX_DEGREE:
        raise ConfigurationError(f"unsupported polynomial degree {k!r}; need 1 <= k <= {MAX_DEGREE}")
    k = int(k)
    if quad_degree is None:
        quad_degree = max(2 * k + 2, 3 * k + 1)
    if edge_degree is None:
        edge_degree = max(2 * k + 2, 3 * k + 1)
    nodes = fekete6_nodes() if k == 6 else warp_blend_nodes(k)
    V = pkd_values(k, nodes)
    Vx, Vy = pkd_gradients(k, nodes)
    qp, qw = triangle_quadrature(quad_degree)
    phi = pkd_values(k, qp)
    dphi = np.stack(pkd_gradients(k, qp))
    te, we = line_quadrature(edge_degree)
    edge_phi = np.stack([pkd_values(k, edge_map(j, te)) for j in range(3)])
    edge_mu = np.stack([legendre01(k, te), legendre01(k, 1.0 - te)])
    # trace restriction: L2 projection of the edge restriction onto P_k(edge)
    edge_trace = np.stack([edge_mu[0].T @ (we[:, None] * edge_phi[j]) for j in range(3)])
    cond = float(np.linalg.cond(V))
    log.debug("degree %d: Vandermonde condition number %.3e", k, cond)
    return ReferenceElement(
        degree=k, nodes=nodes, vandermonde=V, grad_matrices=(Vx, Vy),
        quad_points=qp, quad_weights=qw, phi=phi, dphi=dphi,
        edge_points=te, edge_weights=we, edge_phi=edge_phi, edge_mu=edge_mu,
        edge_trace=edge_trace, vandermonde_cond=cond,
    )


def eval_basis(ref, points, tol=1e-12):
    """Mode values at arbitrary reference points, shape (npts, n_modes)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    outside = (pts[:, 0] < -tol) | (pts[:, 1] < -tol) | (pts.sum(axis=1) > 1.0 + tol)
    if np.any(outside):
        bad = pts[np.argmax(outside)]
        raise DomainError(f"point {tuple(bad)} lies outside the reference triangle")
    return pkd_values(ref.degree, pts)


def eval_gradients(ref, points):
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return pkd_gradients(ref.degree, pts)


def edge_quadrature_trace(ref, edge_index):
    """Map from volume modal coefficients to values at the edge quadrature points."""
    if edge_index not in (0, 1, 2):
        raise ConfigurationError(f"edge index must be 0, 1 or 2, got {edge_index!r}")
    return ref.edge_phi[edge_index]


def differentiation_matrices(ref):
    """Nodal-to-nodal derivative matrices ``Dx = Vx V^-1``, ``Dy = Vy V^-1``."""
    Vinv = np.linalg.inv(ref.vandermonde)
    return ref.grad_matrices[0] @ Vinv, ref.grad_matrices[1] @ Vinv


def dump(ref, path):
    """Write Vandermonde and volume quadrature as plain text (17 significant digits)."""
    fmt = "%.17g"
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# degree {ref.degree} vandermonde {ref.vandermonde.shape[0]}x{ref.vandermonde.shape[1]}\n")
        np.savetxt(fh, ref.vandermonde, fmt=fmt)
        fh.write(f"# volume quadrature {len(ref.quad_weights)} points: x y w\n")
        np.savetxt(fh, np.column_stack([ref.quad_points, ref.quad_weights]), fmt=fmt)
