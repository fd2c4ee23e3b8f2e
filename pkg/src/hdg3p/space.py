"""Batched element geometry, quadrature and modal field evaluation.

Volume fields are stored as modal coefficients in the reference orthonormal
basis, shape (nt, nm) for scalars and (nt, 2, nm) for vectors. Traces are
stored per global edge, shape (ne, k + 1), in a Legendre basis oriented from
the lower to the higher vertex id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ref_element import legendre01, line_quadrature


@dataclass(frozen=True, eq=False)
class Space:
    mesh: object
    skeleton: object
    ref: object
    detJ: np.ndarray      # (nt,)
    Jinv: np.ndarray      # (nt, 2, 2), d xi / d x
    xq: np.ndarray        # (nt, nq, 2)
    wq: np.ndarray        # (nt, nq) physical weights
    gphi: np.ndarray      # (nt, 2, nq, nm) physical basis gradients
    xe: np.ndarray        # (nt, 3, nqe, 2)
    we: np.ndarray        # (nt, 3, nqe) physical edge weights
    mu: np.ndarray        # (nt, 3, nqe, ntr) trace basis in global orientation
    normals: np.ndarray   # (nt, 3, 2)
    K: np.ndarray         # (nt, 2, 2)
    Kn: np.ndarray        # (nt, 3) normal permeability n.K.n
    diameter: float       # domain diagonal, the diffusive length scale

    @property
    def nt(self):
        return self.mesh.n_elements

    @property
    def ne(self):
        return self.skeleton.n_edges

    @property
    def nm(self):
        return self.ref.n_modes

    @property
    def ntr(self):
        return self.ref.n_trace

    # evaluation -----------------------------------------------------------
    def vol(self, c):
        """Scalar coefficients (nt, nm) -> values at quadrature points (nt, nq)."""
        return c @ self.ref.phi.T

    def vol_vec(self, c):
        """Vector coefficients (nt, 2, nm) -> (nt, nq, 2)."""
        return np.einsum("eam,qm->eqa", c, self.ref.phi)

    def vol_grad(self, c):
        """Physical gradient of a scalar field at quadrature points, (nt, nq, 2)."""
        return np.einsum("eaqm,em->eqa", self.gphi, c)

    def edge(self, c):
        """Interior trace of a scalar field on each local edge, (nt, 3, nqe)."""
        return np.einsum("jqm,em->ejq", self.ref.edge_phi, c)

    def edge_vec(self, c):
        return np.einsum("jqm,eam->ejqa", self.ref.edge_phi, c)

    def trace(self, lam):
        """Skeleton field (ne, ntr) seen from each element edge, (nt, 3, nqe)."""
        return np.einsum("ejqi,eji->ejq", self.mu, lam[self.skeleton.elem_edges])

    # projections ----------------------------------------------------------
    def project(self, values):
        """L2 projection of values given at quadrature points (nt, nq [, 2])."""
        # the basis is orthonormal under the reference weights, so no mass solve
        w = self.ref.quad_weights
        if values.ndim == 3:
            return np.einsum("q,qm,eqa->eam", w, self.ref.phi, values)
        return np.einsum("q,qm,eq->em", w, self.ref.phi, values)

    def project_function(self, f):
        """Project ``f(x, y)`` (scalar or returning (..., 2)) onto the volume space."""
        return self.project(np.asarray(f(self.xq[..., 0], self.xq[..., 1])))

    def edge_points(self, edge_ids, t):
        e = self.skeleton.edges[edge_ids]
        V = self.mesh.vertices
        a, b = V[e[:, 0]], V[e[:, 1]]
        return a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]

    def project_edges(self, edge_ids, f):
        """L2 projection onto the trace space of ``f(x, y)`` on the given edges."""
        edge_ids = np.asarray(edge_ids, dtype=np.int64)
        out = np.zeros((len(edge_ids), self.ntr))
        if len(edge_ids) == 0:
            return out
        t, w = line_quadrature(self.ref_edge_degree)
        P = legendre01(self.ref.degree, t)
        x = self.edge_points(edge_ids, t)
        vals = np.broadcast_to(np.asarray(f(x[..., 0], x[..., 1]), dtype=float), x.shape[:2])
        return np.einsum("q,qi,gq->gi", w, P, vals)

    @property
    def ref_edge_degree(self):
        return 2 * self.ref.degree + 6

    # integration ----------------------------------------------------------
    def integrate(self, values):
        """Per-element integral of quadrature-point values."""
        return np.einsum("eq,eq->e", self.wq, values)

    def element_mean(self, c):
        return self.integrate(self.vol(c)) / (0.5 * self.detJ)

    def locate(self, points, tol=1e-10):
        """Element index and reference coordinates of each point (lowest id on ties)."""
        pts = np.atleast_2d(points)
        V = self.mesh.vertices[self.mesh.triangles]
        elem = np.full(len(pts), -1, dtype=np.int64)
        xi = np.zeros((len(pts), 2))
        for i, p in enumerate(pts):
            r = np.einsum("eab,eb->ea", self.Jinv, p[None, :] - V[:, 0])
            inside = (r[:, 0] >= -tol) & (r[:, 1] >= -tol) & (r.sum(axis=1) <= 1 + tol)
            hits = np.flatnonzero(inside)
            if len(hits):
                elem[i] = hits[0]
                xi[i] = np.clip(r[hits[0]], 0.0, 1.0)
                if xi[i].sum() > 1.0:
                    xi[i] /= xi[i].sum()
        return elem, xi


def build_space(mesh, skeleton, ref):
    tri = mesh.triangles
    V = mesh.vertices[tri]  # (nt, 3, 2)
    J = np.stack([V[:, 1] - V[:, 0], V[:, 2] - V[:, 0]], axis=2)  # columns
    detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    Jinv = np.linalg.inv(J)
    xq = V[:, 0][:, None, :] + np.einsum("eab,qb->eqa", J, ref.quad_points)
    wq = ref.quad_weights[None, :] * detJ[:, None]
    gphi = np.einsum("eba,bqm->eaqm", Jinv, ref.dphi)
    t = ref.edge_points
    nxt = [1, 2, 0]
    xe = np.stack([V[:, j][:, None, :] + t[None, :, None] * (V[:, nxt[j]] - V[:, j])[:, None, :]
                   for j in range(3)], axis=1)
    lengths = np.stack([np.linalg.norm(V[:, nxt[j]] - V[:, j], axis=1) for j in range(3)], axis=1)
    we = ref.edge_weights[None, None, :] * lengths[:, :, None]
    mu = ref.edge_mu[skeleton.elem_flip.astype(int)]  # (nt, 3, nqe, ntr)
    K = mesh.perm_tensors()
    n = skeleton.normals
    Kn = np.einsum("eja,eab,ejb->ej", n, K, n)
    lo, hi = mesh.bounding_box
    diameter = float(np.linalg.norm(hi - lo))
    return Space(mesh, skeleton, ref, detJ, Jinv, xq, wq, gphi, xe, we, mu, n, K, Kn, diameter)
