"""Element-wise degree k+1 reconstruction of a saturation from (s, q)."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .condense import batched_solve
from .ref_element import n_modes, pkd_gradients, pkd_values, triangle_quadrature


@lru_cache(maxsize=None)
def _tables(k):
    """Quadrature and the degree k and k+1 bases at its points."""
    pts, w = triangle_quadrature(2 * k + 2)
    return pts, w, pkd_values(k, pts), np.stack(pkd_gradients(k + 1, pts))


def postprocess(space, s, q):
    """Local Neumann reconstruction s* in P_{k+1} of every element.

    s* has the element mean of ``s`` and its gradient is the L2(K) best fit
    of ``q`` among gradients of P_{k+1}. Returns coefficients in the degree
    k+1 orthonormal basis, shape (nt, n_modes(k + 1)); the first k-degree
    modes are not simply copied because the gradient fit changes them.
    """
    k = space.ref.degree
    pts, w, phi, dphi = _tables(k)
    nt = space.nt
    gp = np.einsum("eba,bqm->eaqm", space.Jinv, dphi)[..., 1:]  # drop the constant mode
    wd = w[None, :] * space.detJ[:, None]
    S = np.einsum("eq,eaqm,eaqn->emn", wd, gp, gp)
    qv = np.einsum("eam,qm->eqa", q, phi)
    rhs = np.einsum("eq,eqa,eaqm->em", wd, qv, gp)
    out = np.zeros((nt, n_modes(k + 1)))
    out[:, 1:] = batched_solve(S, rhs[..., None])[..., 0]
    out[:, 0] = s[:, 0]  # both bases share the constant mode, so the mean is kept
    return out


def evaluate(coeffs, elem, xi):
    """Values of modal fields at reference points ``xi`` of elements ``elem``.

    The degree is inferred from the number of modes.
    """
    nm = coeffs.shape[-1]
    k = int(round((np.sqrt(8 * nm + 1) - 3) / 2))
    if n_modes(k) != nm:
        raise ValueError(f"{nm} is not a triangular mode count")
    vals = pkd_values(k, xi)
    return np.einsum("pm,pm->p", coeffs[elem], vals)

