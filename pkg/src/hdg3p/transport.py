"""HDG discretization of one saturation equation in first-order form.

Unknowns are the gradient q, the saturation s and its skeleton trace s_hat.
The flux of the phase is::

    F = f(s, s_o) u + K (c_cross(s, s_o) q_o - c_self(s, s_o) q)

with ``s_o, q_o`` the frozen other-phase saturation and gradient. On element
edges the numerical flux is F(s_hat).n with the Darcy numerical normal
velocity, plus tau (s - s_hat). Time stepping is the theta scheme; the
old-level operator is stored from the previous converged step so that every
step is exactly conservative.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .condense import condense, recover, sparse_solve
from .errors import ConfigurationError, NumericalError, SolverError
from .fluid import phase_coefficients
from .nonlinear import NonlinearConfig, anderson_picard, newton

log = logging.getLogger(__name__)

PHASES = ("wetting", "light_oil")
FIELD_OF_PHASE = {"wetting": "s_w", "light_oil": "s_g"}
LF_SAMPLES = 17  # saturation samples for the Lax-Friedrichs speed bound


@dataclass
class TransportState:
    """Volume and trace coefficients of one saturation field at a time level.

    ``old`` is the converged spatial operator (including forcing) evaluated
    at this state; the Crank-Nicolson step uses it as its explicit half.
    """

    q: np.ndarray      # (nt, 2, nm)
    s: np.ndarray      # (nt, nm)
    shat: np.ndarray   # (ne, ntr)
    t: float = 0.0
    old: np.ndarray | None = None

    def copy(self):
        return TransportState(self.q.copy(), self.s.copy(), self.shat.copy(), self.t,
                              None if self.old is None else self.old.copy())


@dataclass
class PhaseInputs:
    """Frozen data for one phase solve, sampled at quadrature points.

    ``un_e`` is the Darcy numerical normal velocity on each element edge.
    ``so_e`` is the other phase's skeleton trace seen from each element and
    ``qo_e`` the other phase's interior gradient trace. ``source`` is the
    forcing that enters with the spatial operator, ``time_source`` the one
    that enters with the time difference. Both may be None.
    """

    phase: str
    u_q: np.ndarray
    un_e: np.ndarray
    so_q: np.ndarray
    qo_q: np.ndarray
    so_e: np.ndarray
    qo_e: np.ndarray
    dirichlet: np.ndarray
    neumann: np.ndarray | None = None
    source: np.ndarray | None = None
    time_source: np.ndarray | None = None

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ConfigurationError(f"unknown phase {self.phase!r}")


@dataclass
class JacobianBlocks:
    """Per-element Jacobian and residual blocks.

    Volume ordering is (q_x, q_y, s); trace ordering is (edge, mode).
    ``Rt`` is the assembled trace residual over all skeleton dofs.
    """

    Jvv: np.ndarray
    Jvt: np.ndarray
    Jtv: np.ndarray
    Jtt: np.ndarray
    Rv: np.ndarray
    Rt: np.ndarray

    def split(self, nm):
        """Named sub-blocks J_qq, J_qs, ... as a dict."""
        q, s = slice(0, 2 * nm), slice(2 * nm, 3 * nm)
        return {"qq": self.Jvv[:, q, q], "qs": self.Jvv[:, q, s], "qh": self.Jvt[:, q],
                "sq": self.Jvv[:, s, q], "ss": self.Jvv[:, s, s], "sh": self.Jvt[:, s],
                "hq": self.Jtv[:, :, q], "hs": self.Jtv[:, :, s], "hh": self.Jtt}


class TransportProblem:
    """One implicit step of a saturation equation.

    Parameters
    ----------
    space : Space
    model : FluidModel
    inputs : PhaseInputs
    prev : TransportState
        State at the old time level (its ``old`` operator is needed when
        ``theta < 1``).
    dt : float
        Time step in seconds.
    theta : float
        1 for backward Euler, 0.5 for Crank-Nicolson.
    tau : array (nt, 3), optional
        Stabilization; computed from ``prev`` when omitted and then frozen.
    outflow_upwind : bool
        On Dirichlet edges with outgoing total flux, evaluate the convective
        flux with the interior saturation instead of the boundary value.
    """

    def __init__(self, space, model, inputs, prev, dt, theta=0.5, tau=None,
                 tau_scale_c=1.0, tau_scale_v=1.0, tau_floor=1e-6, outflow_upwind=True):
        if dt <= 0:
            raise ConfigurationError("time step must be positive")
        if not 0 < theta <= 1:
            raise ConfigurationError("theta must lie in (0, 1]")
        self.space = space
        self.model = model
        self.inputs = inputs
        self.prev = prev
        self.dt = float(dt)
        self.theta = float(theta)
        self.phi = np.asarray(space.mesh.element_poro, dtype=float)
        skel = space.skeleton
        fld = FIELD_OF_PHASE[inputs.phase]
        self.dir_edges = np.flatnonzero(skel.dirichlet(fld))
        self.neu_edges = np.flatnonzero(skel.neumann(fld))
        ntr = space.ntr
        fixed = (self.dir_edges[:, None] * ntr + np.arange(ntr)).ravel()
        self.free = np.setdiff1d(np.arange(space.ne * ntr), fixed)
        self.dofs = (skel.elem_edges[:, :, None] * ntr + np.arange(ntr)).reshape(space.nt, 3 * ntr)
        self.nK = np.einsum("eja,eab->ejb", space.normals, space.K)
        on_dir = np.isin(skel.elem_edges, self.dir_edges)
        mean_un = np.einsum("ejq,ejq->ej", space.we, inputs.un_e)
        self.outflow = on_dir & (mean_un > 0) if outflow_upwind else np.zeros_like(on_dir)
        if theta < 1 and prev.old is None:
            raise ConfigurationError("Crank-Nicolson step needs the stored old-level operator")
        self.tau_c = np.zeros(self.outflow.shape)
        self.tau = self.stabilization(prev, tau_scale_c, tau_scale_v, tau_floor) if tau is None else tau

    # packing ----------------------------------------------------------------
    @property
    def sizes(self):
        sp_ = self.space
        return sp_.nt * 2 * sp_.nm, sp_.nt * sp_.nm, len(self.free)

    @property
    def blocks(self):
        a, b, c = self.sizes
        return [slice(0, a), slice(a, a + b), slice(a + b, a + b + c)]

    def pack(self, state):
        return np.concatenate([state.q.ravel(), state.s.ravel(), state.shat.ravel()[self.free]])

    def unpack(self, x):
        sp_ = self.space
        a, b, _ = self.sizes
        q = x[:a].reshape(sp_.nt, 2, sp_.nm)
        s = x[a:a + b].reshape(sp_.nt, sp_.nm)
        # Dirichlet rows keep the projected boundary data
        full = np.array(self.inputs.dirichlet, dtype=float).reshape(-1)
        full[self.free] = x[a + b:]
        return q, s, full.reshape(sp_.ne, sp_.ntr)

    # coefficients -----------------------------------------------------------
    def stabilization(self, state, scale_c=1.0, scale_v=1.0, floor=1e-6):
        sp_ = self.space
        inp = self.inputs
        vals = [sp_.trace(state.shat), sp_.edge(state.s)]
        # the wave speed bound also covers every admissible saturation, so the
        # outflow flux never falls below the interior flux during the step
        vals += [np.full(inp.so_e.shape, a) for a in np.linspace(0.0, 1.0, LF_SAMPLES)]
        tc = np.zeros((sp_.nt, 3))
        tv = np.zeros((sp_.nt, 3))
        for i, v in enumerate(vals):
            c = phase_coefficients(self.model, inp.phase, v, inp.so_e)
            tc = np.maximum(tc, np.max(np.abs(c.df[0]) * np.abs(inp.un_e), axis=2))
            if i < 2:
                tv = np.maximum(tv, np.max(np.abs(c.c_self), axis=2))
        tv = tv * sp_.Kn / sp_.diameter
        h = np.sqrt(sp_.detJ)
        tfloor = floor * self.phi * h / self.dt
        # on upwinded outflow edges the speed bound only acts outside the
        # admissible range, see _flux
        self.tau_c = scale_c * tc * self.outflow
        return scale_c * tc * ~self.outflow + scale_v * tv + tfloor[:, None]

    def _admissible(self, s_e):
        d = self.model.delta
        return np.clip(s_e, d, 1.0 - 2.0 * d)

    def _fields(self, x):
        sp_ = self.space
        q, s, shat = self.unpack(x)
        return q, s, shat, sp_.vol(s), sp_.vol_vec(q), sp_.edge(s), sp_.edge_vec(q), sp_.trace(shat)

    def _flux(self, s_q, q_q, sh_e, q_e, s_e):
        inp = self.inputs
        K = self.space.K
        cv = phase_coefficients(self.model, inp.phase, s_q, inp.so_q)
        F = cv.f[..., None] * inp.u_q + np.einsum(
            "eab,eqb->eqa", K, cv.c_cross[..., None] * inp.qo_q - cv.c_self[..., None] * q_q)
        ce = phase_coefficients(self.model, inp.phase, sh_e, inp.so_e)
        ci = None
        f_e = ce.f
        if self.outflow.any():
            ci = phase_coefficients(self.model, inp.phase, s_e, inp.so_e)
            f_e = np.where(self.outflow[:, :, None], ci.f, ce.f)
            # the clamped closures are flat outside the admissible range;
            # a linear continuation keeps the outflow flux increasing there
            f_e = f_e * inp.un_e + self.tau_c[:, :, None] * (s_e - self._admissible(s_e))
        else:
            f_e = f_e * inp.un_e
        Fn = (f_e
              + np.einsum("ejb,ejqb->ejq", self.nK, ce.c_cross[..., None] * inp.qo_e - ce.c_self[..., None] * q_e)
              + self.tau[:, :, None] * (s_e - sh_e))
        return cv, ce, ci, F, Fn

    # residual ---------------------------------------------------------------
    def operator(self, x):
        """Spatial operator L(x) - (source, w), shape (nt, nm)."""
        sp_ = self.space
        _, _, _, s_q, q_q, s_e, q_e, sh_e = self._fields(x)
        _, _, _, F, Fn = self._flux(s_q, q_q, sh_e, q_e, s_e)
        return self._operator_from_flux(F, Fn)

    def _operator_from_flux(self, F, Fn):
        sp_ = self.space
        L = -np.einsum("eq,eqa,eaqm->em", sp_.wq, F, sp_.gphi)
        L += np.einsum("ejq,ejq,jqm->em", sp_.we, Fn, sp_.ref.edge_phi)
        if self.inputs.source is not None:
            L -= np.einsum("eq,eq,qm->em", sp_.wq, self.inputs.source, sp_.ref.phi)
        return L

    def residual_parts(self, x):
        sp_ = self.space
        ref = sp_.ref
        q, s, shat, s_q, q_q, s_e, q_e, sh_e = self._fields(x)
        cv, ce, ci, F, Fn = self._flux(s_q, q_q, sh_e, q_e, s_e)
        RQ = (sp_.detJ[:, None, None] * q
              + np.einsum("eq,eq,eaqm->eam", sp_.wq, s_q, sp_.gphi)
              - np.einsum("ejq,ejq,eja,jqm->eam", sp_.we, sh_e, sp_.normals, ref.edge_phi))
        N = self._operator_from_flux(F, Fn)
        RS = (self.phi * sp_.detJ / self.dt)[:, None] * (s - self.prev.s) + self.theta * N
        if self.theta < 1:
            RS += (1.0 - self.theta) * self.prev.old
        if self.inputs.time_source is not None:
            RS -= np.einsum("eq,eq,qm->em", sp_.wq, self.inputs.time_source, ref.phi)
        RTloc = np.einsum("ejq,ejq,ejqi->eji", sp_.we, Fn, sp_.mu).reshape(sp_.nt, -1)
        RT = np.zeros(sp_.ne * sp_.ntr)
        np.add.at(RT, self.dofs.ravel(), RTloc.ravel())
        if self.inputs.neumann is not None and len(self.neu_edges):
            RT.reshape(-1, sp_.ntr)[self.neu_edges] -= self.inputs.neumann[self.neu_edges]
        return RQ, RS, RT, (cv, ce, ci, q_q, q_e, N)

    def residual(self, x):
        RQ, RS, RT, _ = self.residual_parts(x)
        return np.concatenate([RQ.ravel(), RS.ravel(), RT[self.free]])

    # Jacobian ---------------------------------------------------------------
    def jacobian(self, x, picard=False):
        """Element Jacobian blocks of :meth:`residual` (tau frozen).

        With ``picard=True`` the derivatives of the coefficients are dropped,
        giving the lagged-coefficient linearization used by the Picard map.
        """
        sp_ = self.space
        ref = sp_.ref
        inp = self.inputs
        nt, nm, ntr = sp_.nt, sp_.nm, sp_.ntr
        RQ, RS, RT, (cv, ce, ci, q_q, q_e, _) = self.residual_parts(x)
        th = self.theta
        phi_q, gphi, ephi, mu = ref.phi, sp_.gphi, ref.edge_phi, sp_.mu
        wq, we, n, K, nK, tau = sp_.wq, sp_.we, sp_.normals, sp_.K, self.nK, self.tau
        d = 0.0 if picard else 1.0

        # volume flux derivative w.r.t. s at quadrature points, (nt, nq, 2)
        Gs = d * (cv.df[0][..., None] * inp.u_q + np.einsum(
            "eab,eqb->eqa", K, cv.dc_cross[0][..., None] * inp.qo_q - cv.dc_self[0][..., None] * q_q))
        # edge normal flux derivative w.r.t. s_hat, (nt, 3, nqe)
        inflow = ~self.outflow[:, :, None]
        He = (d * (inflow * ce.df[0] * inp.un_e + np.einsum(
            "ejb,ejqb->ejq", nK, ce.dc_cross[0][..., None] * inp.qo_e - ce.dc_self[0][..., None] * q_e))
            - tau[:, :, None])

        Jvv = np.zeros((nt, 3 * nm, 3 * nm))
        eye = np.eye(nm)
        for a in range(2):
            Jvv[:, a * nm:(a + 1) * nm, a * nm:(a + 1) * nm] = sp_.detJ[:, None, None] * eye
        Jvv[:, :2 * nm, 2 * nm:] = np.einsum("eq,eaqm,qn->eamn", wq, gphi, phi_q).reshape(nt, 2 * nm, nm)
        # d R_S / d q: volume term -(F, grad w) with dF/dq = -c_self K
        KG = np.einsum("eab,eaqm->ebqm", K, gphi)  # (K grad w)_b
        vol_sq = np.einsum("eq,eq,ebqm,qn->embn", wq, cv.c_self, KG, phi_q)
        edge_sq = -np.einsum("ejq,ejq,ejb,jqm,jqn->embn", we, ce.c_self, nK, ephi, ephi)
        Jvv[:, 2 * nm:, :2 * nm] = th * (vol_sq + edge_sq).reshape(nt, nm, 2 * nm)
        vol_ss = -np.einsum("eq,eqa,eaqm,qn->emn", wq, Gs, gphi, phi_q)
        edge_ss = np.einsum("ej,ejq,jqm,jqn->emn", tau, we, ephi, ephi)
        if ci is not None:
            s_e = sp_.edge(self.unpack(x)[1])
            outside = s_e != self._admissible(s_e)
            up = (d * self.outflow[:, :, None] * ci.df[0] * inp.un_e
                  + self.tau_c[:, :, None] * outside)
            edge_ss = edge_ss + np.einsum("ejq,ejq,jqm,jqn->emn", we, up, ephi, ephi)
        Jvv[:, 2 * nm:, 2 * nm:] = ((self.phi * sp_.detJ / self.dt)[:, None, None] * eye
                                    + th * (vol_ss + edge_ss))

        Jvt = np.zeros((nt, 3 * nm, 3 * ntr))
        Jvt[:, :2 * nm] = -np.einsum("ejq,eja,jqm,ejqi->eamji", we, n, ephi, mu).reshape(nt, 2 * nm, 3 * ntr)
        Jvt[:, 2 * nm:] = th * np.einsum("ejq,ejq,jqm,ejqi->emji", we, He, ephi, mu).reshape(nt, nm, 3 * ntr)

        Jtv = np.zeros((nt, 3 * ntr, 3 * nm))
        Jtv[:, :, :2 * nm] = -np.einsum("ejq,ejq,ejb,jqn,ejqi->ejibn", we, ce.c_self, nK, ephi, mu).reshape(
            nt, 3 * ntr, 2 * nm)
        Jtv[:, :, 2 * nm:] = np.einsum("ej,ejq,jqn,ejqi->ejin", tau, we, ephi, mu).reshape(nt, 3 * ntr, nm)

        Jtt = np.zeros((nt, 3 * ntr, 3 * ntr))
        Hb = np.einsum("ejq,ejq,ejqi,ejqk->ejik", we, He, mu, mu)
        for j in range(3):
            Jtt[:, j * ntr:(j + 1) * ntr, j * ntr:(j + 1) * ntr] = Hb[:, j]
        Rv = np.concatenate([RQ.reshape(nt, 2 * nm), RS], axis=1)
        return JacobianBlocks(Jvv, Jvt, Jtv, Jtt, Rv, RT)

    def monolithic_matrix(self, jb):
        """Dense global Jacobian over the packed unknowns (small meshes only)."""
        sp_ = self.space
        nt, nm = sp_.nt, sp_.nm
        a, b, c = self.sizes
        n = a + b + c
        J = np.zeros((n, n))
        pos = -np.ones(sp_.ne * sp_.ntr, dtype=np.int64)
        pos[self.free] = a + b + np.arange(c)

        def vidx(e):
            qi = e * 2 * nm + np.arange(2 * nm)
            si = a + e * nm + np.arange(nm)
            return np.concatenate([qi, si])

        for e in range(nt):
            vi = vidx(e)
            ti = pos[self.dofs[e]]
            tm = ti >= 0
            J[np.ix_(vi, vi)] += jb.Jvv[e]
            J[np.ix_(vi, ti[tm])] += jb.Jvt[e][:, tm]
            J[np.ix_(ti[tm], vi)] += jb.Jtv[e][tm]
            J[np.ix_(ti[tm], ti[tm])] += jb.Jtt[e][np.ix_(tm, tm)]
        return J

    # linear solves ----------------------------------------------------------
    def condense_and_solve(self, jb, rhs=None):
        """Solve J dx = rhs by static condensation (rhs defaults to -R)."""
        sp_ = self.space
        nt, nm = sp_.nt, sp_.nm
        a, b, c = self.sizes
        if rhs is None:
            rv = -jb.Rv
            rt = np.zeros(sp_.ne * sp_.ntr)
            rt[self.free] = -jb.Rt[self.free]
        else:
            rv = np.concatenate([rhs[:a].reshape(nt, 2 * nm), rhs[a:a + b].reshape(nt, nm)], axis=1)
            rt = np.zeros(sp_.ne * sp_.ntr)
            rt[self.free] = rhs[a + b:]
        mat, grhs, X, y = condense(jb.Jvv, jb.Jvt, jb.Jtv, jb.Jtt, rv, np.zeros((nt, 3 * sp_.ntr)),
                                   self.dofs, sp_.ne * sp_.ntr)
        grhs += rt
        A = mat[self.free][:, self.free]
        dt_free = sparse_solve(A, grhs[self.free], what="saturation trace system")
        full = np.zeros(sp_.ne * sp_.ntr)
        full[self.free] = dt_free
        dv = recover(X, y, self.dofs, full)
        dq = dv[:, :2 * nm].reshape(-1)
        ds = dv[:, 2 * nm:].reshape(-1)
        return np.concatenate([dq, ds, dt_free])

    def equilibrate_traces(self, state, tol=1e-12, max_iter=30):
        """Solve the gradient and trace equations for (q, s_hat) with s held fixed.

        A projected initial state does not satisfy the trace equations, so its
        edge fluxes do not cancel between neighbours. Evaluating the explicit
        half of a Crank-Nicolson step there would not conserve mass.
        """
        sp_ = self.space
        nm2, n_tr = 2 * sp_.nm, sp_.ne * sp_.ntr
        a, b, _ = self.sizes
        x = self.pack(state)
        for _ in range(max_iter):
            jb = self.jacobian(x)
            mat, grhs, X, y = condense(jb.Jvv[:, :nm2, :nm2], jb.Jvt[:, :nm2], jb.Jtv[:, :, :nm2], jb.Jtt,
                                       -jb.Rv[:, :nm2], np.zeros((sp_.nt, 3 * sp_.ntr)), self.dofs, n_tr)
            grhs[self.free] -= jb.Rt[self.free]
            d_free = sparse_solve(mat[self.free][:, self.free], grhs[self.free], what="trace equilibration")
            full = np.zeros(n_tr)
            full[self.free] = d_free
            dx = np.zeros_like(x)
            dx[:a] = recover(X, y, self.dofs, full).reshape(-1)
            dx[a + b:] = d_free
            x = x + dx
            if np.abs(dx).max() <= tol * max(1.0, np.abs(x).max()):
                q, _, shat = self.unpack(x)
                return TransportState(q, state.s.copy(), shat, state.t)
        raise SolverError(f"{self.inputs.phase} trace equilibration did not converge in {max_iter} iterations")

    def residual_and_solver(self, x):
        jb = self.jacobian(x)
        R = np.concatenate([jb.Rv[:, :2 * self.space.nm].ravel(), jb.Rv[:, 2 * self.space.nm:].ravel(),
                            jb.Rt[self.free]])
        return R, lambda b: self.condense_and_solve(jb, b)

    def picard_map(self, x):
        jb = self.jacobian(x, picard=True)
        return x + self.condense_and_solve(jb)

    def state_from(self, x, t):
        q, s, shat = self.unpack(x)
        return TransportState(q, s, shat, t, self.operator(x))


def step_phase(problem, config=NonlinearConfig(), seed_with_anderson=False, callback=None):
    """Advance one phase by one step.

    Returns ``(state, history)``. Raises :class:`SolverError` carrying the
    iteration history when Newton does not converge.
    """
    x0 = problem.pack(problem.prev)
    history = []

    def note(rec):
        history.append(rec)
        if callback is not None:
            callback(rec)

    if seed_with_anderson:
        try:
            res = anderson_picard(problem.picard_map, x0, config, callback=note)
            if np.all(np.isfinite(res.x)):
                x0 = res.x
        except NumericalError as exc:
            log.warning("Anderson-Picard seed failed (%s); starting Newton from the old state", exc)
    res = newton(problem.residual_and_solver, x0, config, blocks=problem.blocks, callback=note)
    if not res.converged:
        raise SolverError(f"{problem.inputs.phase} Newton failed: {res.message}", history)
    return problem.state_from(res.x, problem.prev.t + problem.dt), history

