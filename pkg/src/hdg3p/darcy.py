"""HDG discretization of the pressure / total-velocity system.

Local unknowns per element are the velocity modes U = (u_x, u_y), the
pressure modes P and the pressure traces on the three element edges. With
the numerical flux u_hat.n = u.n + tau (p - p_hat) the element system reads::

    [ A  -B^T  C^T ] [U]   [R_u]
    [ B   D    E   ] [P] = [R_p]
    [ C   G    H   ] [L]   [R_l]

and the volume unknowns are eliminated element by element.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .condense import condense, recover, sparse_solve
from .fluid import darcy_coefficients



@dataclass
class DarcyBC:
    """Pressure boundary data as trace coefficients.

    ``dirichlet`` holds P_h(p_D) on Dirichlet edges (other rows ignored);
    ``neumann`` holds the moments <g_N, mu> of the prescribed outward flux.
    """

    dirichlet: np.ndarray
    neumann: np.ndarray | None = None


@dataclass
class DarcyBlocks:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    G: np.ndarray
    H: np.ndarray
    Ru: np.ndarray
    Rp: np.ndarray
    tau: np.ndarray   # (nt, 3)
    dofs: np.ndarray  # (nt, 3 * ntr) global trace dof of each local trace unknown

    @property
    def volume_block(self):
        """The locally inverted matrix [[A, -B^T], [B, D]] for every element."""
        top = np.concatenate([self.A, -np.transpose(self.B, (0, 2, 1))], axis=2)
        bot = np.concatenate([self.B, self.D], axis=2)
        return np.concatenate([top, bot], axis=1)


@dataclass
class CondensedSystem:
    """Global trace system over all skeleton dofs plus local recovery data."""

    matrix: sp.csr_matrix      # over all ne * ntr dofs
    rhs: np.ndarray
    free: np.ndarray           # dof indices carrying unknowns
    fixed: np.ndarray          # Dirichlet dof indices
    fixed_values: np.ndarray
    X: np.ndarray              # M^{-1} [C^T; E]
    y: np.ndarray              # M^{-1} [R_u; R_p]
    dofs: np.ndarray
    shape: tuple               # (ne, ntr)
    pin_mean: np.ndarray | None = None  # mean-constraint row when no Dirichlet edge

    @property
    def reduced_matrix(self):
        return self.matrix[self.free][:, self.free]

    @property
    def reduced_rhs(self):
        r = self.rhs[self.free]
        if len(self.fixed):
            r = r - self.matrix[self.free][:, self.fixed] @ self.fixed_values
        return r


@dataclass
class DarcySolution:
    U: np.ndarray     # (nt, 2, nm)
    P: np.ndarray     # (nt, nm)
    Lam: np.ndarray   # (ne, ntr), Dirichlet rows hold P_h(p_D)
    tau: np.ndarray   # (nt, 3)

    def velocity(self, space):
        return space.vol_vec(self.U)

    def normal_flux(self, space):
        """Numerical normal flux u_hat.n on each element edge, (nt, 3, nqe)."""
        un = np.einsum("ejqa,eja->ejq", space.edge_vec(self.U), space.normals)
        return un + self.tau[:, :, None] * (space.edge(self.P) - space.trace(self.Lam))


def trace_dofs(space):
    ntr = space.ntr
    return (space.skeleton.elem_edges[:, :, None] * ntr + np.arange(ntr)).reshape(space.nt, 3 * ntr)


def darcy_tau(space, lt_q, tau_scale=1.0):
    """tau = lambda_t K_n / ell on each element edge with the element-mean mobility."""
    lt_mean = space.integrate(lt_q) / (0.5 * space.detJ)
    return tau_scale * lt_mean[:, None] * space.Kn / space.diameter


def assemble_darcy(space, model, s_w, s_g, q_w, q_g, bc, source=None, tau_scale=1.0):
    """Element blocks and condensed trace system for the given saturation state.

    ``s_w, s_g`` are modal coefficients (nt, nm), ``q_w, q_g`` gradient
    coefficients (nt, 2, nm). ``source`` are values of the divergence
    source at quadrature points (nt, nq) or None.
    """
    ref = space.ref
    nt, nm, ntr = space.nt, space.nm, space.ntr
    phi = ref.phi
    coef = darcy_coefficients(model, space.vol(s_w), space.vol(s_g))
    lt = coef.lt
    Kinv = np.linalg.inv(space.K)
    Mw = np.einsum("eq,qi,qj->eij", space.wq / lt, phi, phi)
    A = np.einsum("eab,eij->eaibj", Kinv, Mw).reshape(nt, 2 * nm, 2 * nm)
    B = np.einsum("eq,qi,ebqj->eibj", space.wq, phi, space.gphi).reshape(nt, nm, 2 * nm)

    tau = darcy_tau(space, lt, tau_scale)
    ew = space.we  # (nt, 3, nqe)
    ephi = ref.edge_phi  # (3, nqe, nm)
    D = np.einsum("ej,ejq,jqi,jqk->eik", tau, ew, ephi, ephi)
    # per-edge blocks, then laid out along the local trace index (j, i)
    Ej = -np.einsum("ej,ejq,jqm,ejqi->ejmi", tau, ew, ephi, space.mu)
    E = np.transpose(Ej, (0, 2, 1, 3)).reshape(nt, nm, 3 * ntr)
    Cj = np.einsum("ejq,ejqi,eja,jqm->ejiam", ew, space.mu, space.normals, ephi)
    C = Cj.reshape(nt, 3 * ntr, 2 * nm)
    G = -np.transpose(E, (0, 2, 1))
    Hb = -np.einsum("ej,ejq,ejqi,ejqk->ejik", tau, ew, space.mu, space.mu)
    H = np.zeros((nt, 3 * ntr, 3 * ntr))
    for j in range(3):
        H[:, j * ntr:(j + 1) * ntr, j * ntr:(j + 1) * ntr] = Hb[:, j]

    force = coef.a_w[..., None] * space.vol_vec(q_w) + coef.a_g[..., None] * space.vol_vec(q_g)
    Ru = -np.einsum("eq,eqa,qm->eam", space.wq, force, phi).reshape(nt, 2 * nm)
    Rp = np.zeros((nt, nm)) if source is None else np.einsum("eq,eq,qm->em", space.wq, source, phi)

    dofs = trace_dofs(space)
    blocks = DarcyBlocks(A, B, C, D, E, G, H, Ru, Rp, tau, dofs)
    Kvt = np.concatenate([np.transpose(C, (0, 2, 1)), E], axis=1)
    Ktv = np.concatenate([C, G], axis=2)
    mat, rhs, X, y = condense(blocks.volume_block, Kvt, Ktv, H, np.concatenate([Ru, Rp], axis=1),
                              np.zeros((nt, 3 * ntr)), dofs, space.ne * ntr)

    skel = space.skeleton
    dir_edges = np.flatnonzero(skel.dirichlet("pressure"))
    if bc.neumann is not None:
        neu_edges = np.flatnonzero(skel.neumann("pressure"))
        rhs.reshape(-1, ntr)[neu_edges] += bc.neumann[neu_edges]
    fixed = (dir_edges[:, None] * ntr + np.arange(ntr)).ravel()
    free = np.setdiff1d(np.arange(space.ne * ntr), fixed)
    fixed_values = np.asarray(bc.dirichlet)[dir_edges].ravel()
    pin = None
    if len(dir_edges) == 0:
        pin = np.zeros(space.ne * ntr)
        pin[::ntr] = skel.edge_lengths
    system = CondensedSystem(mat, rhs, free, fixed, fixed_values, X, y, dofs, (space.ne, ntr), pin)
    return blocks, system


def solve_trace(system, rtol=1e-11):
    """Solve the condensed system; returns the full trace array (ne, ntr)."""
    Hf = system.reduced_matrix
    F = system.reduced_rhs
    if system.pin_mean is not None:
        c = system.pin_mean[system.free]
        Hf = sp.bmat([[Hf, sp.csr_matrix(c[:, None])], [sp.csr_matrix(c[None, :]), None]])
        F = np.concatenate([F, [0.0]])
    x = sparse_solve(Hf, F, rtol, "pressure trace system")
    full = np.zeros(system.shape[0] * system.shape[1])
    full[system.free] = x[: len(system.free)]
    full[system.fixed] = system.fixed_values
    return full.reshape(system.shape)


def recover_volume(system, Lam, nm):
    """Back-substitute element unknowns from the trace; returns (U, P)."""
    sol = recover(system.X, system.y, system.dofs, Lam.reshape(-1))
    nt = sol.shape[0]
    return sol[:, : 2 * nm].reshape(nt, 2, nm), sol[:, 2 * nm:]


def solve_darcy(space, model, s_w, s_g, q_w, q_g, bc, source=None, tau_scale=1.0):
    blocks, system = assemble_darcy(space, model, s_w, s_g, q_w, q_g, bc, source, tau_scale)
    Lam = solve_trace(system)
    U, P = recover_volume(system, Lam, space.nm)
    return DarcySolution(U, P, Lam, blocks.tau)


def local_conservation_report(solution, space, source=None):
    """Per-element imbalance of the boundary flux against the volume source.

    Returns ``(imbalance, scale)`` where ``scale`` is the mean absolute
    edge flux integral, so ``max(|imbalance|) / scale`` is the relative error.
    """
    flux = np.einsum("ejq,ejq->ej", space.we, solution.normal_flux(space))
    imbalance = flux.sum(axis=1)
    if source is not None:
        imbalance = imbalance - space.integrate(source)
    scale = np.abs(flux).mean()
    return imbalance, scale


def flux_jump(solution, space):
    """L2 norm of the interior jump of u_hat.n and the L2 norm of u_hat.n itself."""
    skel = space.skeleton
    fl = solution.normal_flux(space)
    interior = np.flatnonzero(~skel.is_boundary)
    e0, j0 = skel.edge_elements[interior, 0], skel.edge_local[interior, 0]
    e1, j1 = skel.edge_elements[interior, 1], skel.edge_local[interior, 1]
    # quadrature points on the two sides run in opposite directions
    jump = fl[e0, j0] + fl[e1, j1][:, ::-1]
    w = space.we[e0, j0]
    return np.sqrt(np.sum(w * jump ** 2)), np.sqrt(np.sum(space.we * fl ** 2))
