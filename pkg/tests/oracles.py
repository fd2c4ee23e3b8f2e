"""Brute-force reference implementations used only by the tests.

Everything here is written with explicit per-element loops and its own
quadrature and geometry, sharing nothing with the package except the modal
basis functions (needed to compare coefficients) and the closures.
"""

from __future__ import annotations

import numpy as np

from hdg3p.fluid import darcy_coefficients
from hdg3p.ref_element import legendre01, pkd_gradients, pkd_values

REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def duffy_rule(n):
    x, w = np.polynomial.legendre.leggauss(n)
    a, wa = 0.5 * (x + 1), 0.5 * w
    A, B = np.meshgrid(a, a, indexing="ij")
    return np.column_stack([(A * (1 - B)).ravel(), B.ravel()]), (np.outer(wa, wa) * (1 - B)).ravel()


def gauss01(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


def _edge_index(skel):
    return {(int(a), int(b)): g for g, (a, b) in enumerate(skel.edges)}


def darcy_monolithic(mesh, skel, k, model, sw, sg, qw, qg, dirichlet, neumann=None, source=None):
    """Assemble and solve the full (U, P, Lambda) Darcy system with a dense solver.

    ``sw, sg`` (nt, nm) and ``qw, qg`` (nt, 2, nm) are modal fields.
    ``source(x, y)`` is the divergence source. Returns (U, P, Lam).
    """
    nt = mesh.n_elements
    nm = (k + 1) * (k + 2) // 2
    ntr = k + 1
    ne = skel.n_edges
    nU, nP = nt * 2 * nm, nt * nm
    n = nU + nP + ne * ntr
    M = np.zeros((n, n))
    F = np.zeros(n)
    uidx = lambda e, a, m: e * 2 * nm + a * nm + m  # noqa: E731
    pidx = lambda e, m: nU + e * nm + m  # noqa: E731
    lidx = lambda g, i: nU + nP + g * ntr + i  # noqa: E731
    eid = _edge_index(skel)
    qp, qw_ = duffy_rule(2 * k + 6)
    te, tw = gauss01(2 * k + 6)
    phi = pkd_values(k, qp)
    dxi = np.stack(pkd_gradients(k, qp))  # (2, nq, nm)
    lo, hi = mesh.bounding_box
    diam = np.linalg.norm(hi - lo)
    Kall = mesh.perm_tensors()
    for e in range(nt):
        tri = mesh.triangles[e]
        v = mesh.vertices[tri]
        J = np.column_stack([v[1] - v[0], v[2] - v[0]])
        det = np.linalg.det(J)
        Jit = np.linalg.inv(J).T
        X = v[0] + qp @ J.T
        w = qw_ * det
        gphi = np.einsum("ab,bqm->aqm", Jit, dxi)
        coef = darcy_coefficients(model, phi @ sw[e], phi @ sg[e])
        lt = coef.lt
        force = coef.a_w[:, None] * (phi @ qw[e].T) + coef.a_g[:, None] * (phi @ qg[e].T)
        Kinv = np.linalg.inv(Kall[e])
        lt_mean = np.sum(w * lt) / np.sum(w)
        for a in range(2):
            for m in range(nm):
                r = uidx(e, a, m)
                for b in range(2):
                    for j in range(nm):
                        M[r, uidx(e, b, j)] += np.sum(w * Kinv[a, b] / lt * phi[:, m] * phi[:, j])
                for j in range(nm):
                    M[r, pidx(e, j)] -= np.sum(w * phi[:, j] * gphi[a, :, m])
                F[r] -= np.sum(w * force[:, a] * phi[:, m])
        for m in range(nm):
            r = pidx(e, m)
            for b in range(2):
                for j in range(nm):
                    M[r, uidx(e, b, j)] += np.sum(w * phi[:, m] * gphi[b, :, j])
            if source is not None:
                F[r] += np.sum(w * source(X[:, 0], X[:, 1]) * phi[:, m])
        for jloc in range(3):
            ia, ib = tri[jloc], tri[(jloc + 1) % 3]
            pa, pb = mesh.vertices[ia], mesh.vertices[ib]
            L = np.linalg.norm(pb - pa)
            nrm = np.array([pb[1] - pa[1], pa[0] - pb[0]]) / L
            tau = lt_mean * (nrm @ Kall[e] @ nrm) / diam
            xi = REF[jloc] + te[:, None] * (REF[(jloc + 1) % 3] - REF[jloc])
            ph = pkd_values(k, xi)
            g = eid[(min(ia, ib), max(ia, ib))]
            t = te if ia < ib else 1 - te
            mu = legendre01(k, t)
            ww = tw * L
            for m in range(nm):
                for a in range(2):
                    for i in range(ntr):
                        M[uidx(e, a, m), lidx(g, i)] += np.sum(ww * mu[:, i] * nrm[a] * ph[:, m])
                for j in range(nm):
                    M[pidx(e, m), pidx(e, j)] += tau * np.sum(ww * ph[:, m] * ph[:, j])
                for i in range(ntr):
                    M[pidx(e, m), lidx(g, i)] -= tau * np.sum(ww * ph[:, m] * mu[:, i])
            for i in range(ntr):
                r = lidx(g, i)
                for a in range(2):
                    for j in range(nm):
                        M[r, uidx(e, a, j)] += np.sum(ww * mu[:, i] * nrm[a] * ph[:, j])
                for j in range(nm):
                    M[r, pidx(e, j)] += tau * np.sum(ww * mu[:, i] * ph[:, j])
                for i2 in range(ntr):
                    M[r, lidx(g, i2)] -= tau * np.sum(ww * mu[:, i] * mu[:, i2])
    dmask = skel.dirichlet("pressure")
    nmask = skel.neumann("pressure")
    for g in range(ne):
        for i in range(ntr):
            r = lidx(g, i)
            if dmask[g]:
                M[r] = 0.0
                M[r, r] = 1.0
                F[r] = dirichlet[g, i]
            elif nmask[g] and neumann is not None:
                F[r] += neumann[g, i]
    x = np.linalg.solve(M, F)
    return x[:nU].reshape(nt, 2, nm), x[nU:nU + nP].reshape(nt, nm), x[nU + nP:].reshape(ne, ntr)


def closed_box_mass(space, phi, s):
    """Total pore volume of a phase, integrated with an independent rule."""
    k = space.ref.degree
    qp, qw = duffy_rule(k + 2)
    vals = pkd_values(k, qp) @ s.T  # (nq, nt)
    return float(np.sum(phi * space.detJ * (qw @ vals)))
