"""Semi-implicit splitting time loop: Darcy, then wetting, then light oil."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .darcy import DarcyBC, DarcySolution, solve_darcy
from .errors import ConfigurationError, HDGError, SolverError
from .fluid import FluidModel
from .mesh import build_skeleton
from .nonlinear import NonlinearConfig
from .postprocess import postprocess
from .ref_element import build_reference
from .space import build_space
from .transport import PhaseInputs, TransportProblem, TransportState, step_phase

log = logging.getLogger(__name__)

DAY = 86400.0
THETA = {"backward_euler": 1.0, "crank_nicolson": 0.5}


@dataclass
class Scenario:
    """Everything the time loop needs, in SI units.

    ``boundary(field, tag, x, y, t)`` gives Dirichlet values for field in
    {"pressure", "s_w", "s_g"}; ``initial(field, x, y)`` gives initial
    saturations and ``initial_gradient`` (optional) their gradients, stacked
    on a trailing axis. ``forcing`` supplies manufactured source terms.
    """

    mesh: object
    bc_spec: dict
    model: FluidModel
    k: int
    dt: float
    t_end: float
    boundary: Callable
    initial: Callable
    initial_gradient: Callable | None = None
    t0: float = 0.0
    time_scheme: str = "crank_nicolson"
    nonlinear: NonlinearConfig = field(default_factory=NonlinearConfig)
    tau_scale: float = 1.0
    tau_scale_c: float = 1.0
    tau_scale_v: float = 1.0
    tau_floor: float = 1e-6
    outflow_upwind: bool = True
    max_dt_halvings: int = 4
    forcing: object | None = None
    snapshot_times: tuple = ()
    postprocess: bool = False
    name: str = "custom"

    def __post_init__(self):
        if self.time_scheme not in THETA:
            raise ConfigurationError(f"unknown time scheme {self.time_scheme!r}")
        if self.dt <= 0 or self.t_end < self.t0:
            raise ConfigurationError("need dt > 0 and t_end >= t0")

    @property
    def theta(self):
        return THETA[self.time_scheme]


@dataclass
class SimulationState:
    t: float
    step: int
    darcy: DarcySolution
    wet: TransportState
    gas: TransportState
    records: list = field(default_factory=list)

    def s_o(self):
        """Heavy-oil saturation coefficients, 1 - s_w - s_g."""
        one = np.zeros_like(self.wet.s)
        one[:, 0] = 1.0 / np.sqrt(2.0)  # the unit function: the constant mode itself equals sqrt(2)
        return one - self.wet.s - self.gas.s


@dataclass
class LogRecord:
    step: int
    phase: str
    stage: str
    iter: int
    res_norm: float
    inc_norm: float


class Simulator:
    """Owns the discretization for one scenario and advances its state."""

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.ref = build_reference(scenario.k)
        self.skeleton = build_skeleton(scenario.mesh, scenario.bc_spec)
        self.space = build_space(scenario.mesh, self.skeleton, self.ref)
        self.log: list[LogRecord] = []
        self.rejected: list[tuple] = []  # (step, attempted dt, reason) of every retried step
        self._tag = self.skeleton.boundary_tag

    # boundary data ----------------------------------------------------------
    def dirichlet_traces(self, fld, t):
        sp_ = self.space
        out = np.zeros((sp_.ne, sp_.ntr))
        edges = np.flatnonzero(self.skeleton.dirichlet(fld))
        for tag in np.unique(self._tag[edges]):
            sel = edges[self._tag[edges] == tag]
            out[sel] = sp_.project_edges(sel, lambda x, y: self.sc.boundary(fld, int(tag), x, y, t))
        return out

    # initial state ------------------------------------------------------------
    def _initial_phase(self, fld, t):
        sp_ = self.space
        s = sp_.project_function(lambda x, y: self.sc.initial(fld, x, y))
        if self.sc.initial_gradient is not None:
            q = sp_.project_function(lambda x, y: self.sc.initial_gradient(fld, x, y))
        else:
            q = np.zeros((sp_.nt, 2, sp_.nm))
        shat = sp_.project_edges(np.arange(sp_.ne), lambda x, y: self.sc.initial(fld, x, y))
        dirichlet = self.dirichlet_traces(fld, t)
        mask = self.skeleton.dirichlet(fld)
        shat[mask] = dirichlet[mask]
        return TransportState(q, s, shat, t)

    def initial_state(self):
        t0 = self.sc.t0
        wet = self._initial_phase("s_w", t0)
        gas = self._initial_phase("s_g", t0)
        darcy = self.solve_darcy(wet, gas, t0)
        state = SimulationState(t0, 0, darcy, wet, gas)
        if self.sc.theta < 1:
            # explicit half of the first Crank-Nicolson step
            times = (t0, t0, t0, t0)
            for phase, own, other in (("wetting", wet, gas), ("light_oil", gas, wet)):
                prob = self._problem(phase, own, other, darcy, self.sc.dt, times, theta=1.0)
                eq = prob.equilibrate_traces(own)
                own.q, own.shat = eq.q, eq.shat
                own.old = prob.operator(prob.pack(own))
        return state

    # sub-solves -------------------------------------------------------------
    def solve_darcy(self, wet, gas, t):
        sp_ = self.space
        bc = DarcyBC(self.dirichlet_traces("pressure", t))
        src = None
        if self.sc.forcing is not None:
            src = self.sc.forcing.darcy(sp_.xq[..., 0], sp_.xq[..., 1], t)
        return solve_darcy(sp_, self.sc.model, wet.s, gas.s, wet.q, gas.q, bc, src, self.sc.tau_scale)

    def _inputs(self, phase, other, darcy, times, dt):
        """Frozen inputs; ``times`` = (t_new, t_old, t_other, t_u)."""
        sp_ = self.space
        fld = "s_w" if phase == "wetting" else "s_g"
        src = tsrc = None
        if self.sc.forcing is not None:
            phi = np.asarray(sp_.mesh.element_poro)[:, None]
            src, tsrc = self.sc.forcing.phase(phase, sp_.xq[..., 0], sp_.xq[..., 1], times, dt, phi)
        return PhaseInputs(phase, darcy.velocity(sp_), darcy.normal_flux(sp_),
                           sp_.vol(other.s), sp_.vol_vec(other.q), sp_.trace(other.shat),
                           sp_.edge_vec(other.q), self.dirichlet_traces(fld, times[0]),
                           None, src, tsrc)

    def _problem(self, phase, prev, other, darcy, dt, times, theta=None):
        inp = self._inputs(phase, other, darcy, times, dt)
        theta = self.sc.theta if theta is None else theta
        return TransportProblem(self.space, self.sc.model, inp, prev, dt, theta,
                                tau_scale_c=self.sc.tau_scale_c, tau_scale_v=self.sc.tau_scale_v,
                                tau_floor=self.sc.tau_floor, outflow_upwind=self.sc.outflow_upwind)

    def _record(self, step, phase):
        def cb(rec):
            self.log.append(LogRecord(step, phase, rec.stage, rec.iter, rec.res_norm, rec.inc_norm))
        return cb

    def advance(self, state, dt, first=False):
        """One splitting step of size ``dt``; returns the new state."""
        t0, t1 = state.t, state.t + dt
        step = state.step + 1
        darcy = state.darcy
        self.log.append(LogRecord(step, "darcy", "solve", 1, 0.0, 0.0))
        pw = self._problem("wetting", state.wet, state.gas, darcy, dt, (t1, t0, t0, t0))
        wet, _ = step_phase(pw, self.sc.nonlinear, seed_with_anderson=first, callback=self._record(step, "wetting"))
        pg = self._problem("light_oil", state.gas, wet, darcy, dt, (t1, t0, t1, t0))
        gas, _ = step_phase(pg, self.sc.nonlinear, seed_with_anderson=first, callback=self._record(step, "light_oil"))
        new_darcy = self.solve_darcy(wet, gas, t1)
        return SimulationState(t1, step, new_darcy, wet, gas)

    def run(self, on_step=None, on_snapshot=None):
        """Integrate to ``t_end``; returns the final state.

        Time is tracked as an exact fraction of the base step so the final
        time equals t0 plus the sum of accepted steps. A snapshot time that
        falls between steps shortens the step reaching it.
        """
        sc = self.sc
        state = self.initial_state()
        span = sc.t_end - sc.t0
        n_full = int(round(span / sc.dt))
        if abs(n_full * sc.dt - span) > 1e-9 * max(span, sc.dt):
            raise ConfigurationError("t_end - t0 must be an integer multiple of dt")
        marks = sorted({self._in_steps(s) for s in sc.snapshot_times if sc.t0 <= s <= sc.t_end})
        done = Fraction(0)
        if on_snapshot is not None and (Fraction(0) in marks or sc.t_end == sc.t0):
            on_snapshot(state)
        first = True
        while done < n_full:
            stop = min([m for m in marks if m > done] + [Fraction(n_full)])
            sub = min(Fraction(1), stop - done)
            halvings = 0
            while True:
                try:
                    new = self.advance(state, float(sub) * sc.dt, first=first)
                    break
                except HDGError as exc:
                    self.rejected.append((state.step + 1, float(sub) * sc.dt, str(exc)))
                    if halvings >= sc.max_dt_halvings:
                        raise SolverError(f"step {state.step + 1} failed after {halvings} halvings: {exc}",
                                          getattr(exc, "history", None)) from exc
                    halvings += 1
                    sub /= 2
                    log.warning("step %d rejected (%s); retrying with dt/%d", state.step + 1, exc, 2 ** halvings)
            done += sub
            new.t = sc.t0 + float(done) * sc.dt
            state = new
            first = False
            if on_step is not None:
                on_step(state)
            if on_snapshot is not None and done in marks:
                on_snapshot(state)
        return state

    def _in_steps(self, t):
        """Time ``t`` as an exact fraction of base steps after t0."""
        return Fraction((t - self.sc.t0) / self.sc.dt).limit_denominator(1 << 20)

    # derived fields -----------------------------------------------------------
    def postprocessed(self, state):
        """Degree k+1 reconstructions of s_w, s_g and s_o = 1 - s_w* - s_g*."""
        sw = postprocess(self.space, state.wet.s, state.wet.q)
        sg = postprocess(self.space, state.gas.s, state.gas.q)
        so = -sw - sg
        so[:, 0] += 1.0 / np.sqrt(2.0)
        return sw, sg, so
