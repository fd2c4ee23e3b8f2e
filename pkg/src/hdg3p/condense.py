"""Element-wise static condensation shared by the Darcy and transport solvers.

For each element the local system is::

    [Kvv Kvt] [v]   [Fv]
    [Ktv Ktt] [t] = [Ft]

with ``v`` the element volume unknowns and ``t`` its 3 (k+1) trace unknowns.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AssemblyError, SolverError


def batched_solve(M, R):
    """Solve a stack of dense systems; names the offending element on failure."""
    try:
        out = np.linalg.solve(M, R)
    except np.linalg.LinAlgError:
        out = None
    if out is None or not np.all(np.isfinite(out)):
        for e in range(len(M)):
            if not np.all(np.isfinite(M[e])) or np.linalg.cond(M[e]) > 1e15:
                raise AssemblyError("singular local block", element=e)
        raise AssemblyError("singular local block")
    return out


def condense(Kvv, Kvt, Ktv, Ktt, Fv, Ft, dofs, n_dofs):
    """Eliminate volume unknowns and assemble the global trace system.

    Returns ``(matrix, rhs, X, y)`` with ``v = y - X t_local``.
    """
    sol = batched_solve(Kvv, np.concatenate([Kvt, Fv[:, :, None]], axis=2))
    X, y = sol[:, :, :-1], sol[:, :, -1]
    Hloc = Ktt - Ktv @ X
    Floc = Ft - np.einsum("eij,ej->ei", Ktv, y)
    nloc = dofs.shape[1]
    rows = np.repeat(dofs, nloc, axis=1).ravel()
    cols = np.tile(dofs, (1, nloc)).ravel()
    mat = sp.coo_matrix((Hloc.ravel(), (rows, cols)), shape=(n_dofs, n_dofs)).tocsr()
    rhs = np.zeros(n_dofs)
    np.add.at(rhs, dofs.ravel(), Floc.ravel())
    return mat, rhs, X, y


def recover(X, y, dofs, t_full):
    return y - np.einsum("eij,ej->ei", X, t_full[dofs])


def sparse_solve(A, b, rtol=1e-11, what="trace system"):
    """Sparse direct solve with a relative residual check."""
    A = A.tocsc()
    with np.errstate(all="ignore"):
        try:
            x = spla.spsolve(A, b)
        except RuntimeError as exc:
            raise SolverError(f"{what} factorization failed: {exc}") from None
    x = np.atleast_1d(x)
    if not np.all(np.isfinite(x)):
        raise SolverError(f"{what} is singular")
    res = np.linalg.norm(A @ x - b)
    scale = max(np.linalg.norm(b), abs(A).max() * np.linalg.norm(x), np.finfo(float).tiny)
    if res > rtol * scale:
        raise SolverError(f"{what} residual {res:.3e} exceeds tolerance (scale {scale:.3e})")
    return x
