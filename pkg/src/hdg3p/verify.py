"""Manufactured solution, forcing terms and error / convergence measurement."""

from __future__ import annotations

import csv
import io
import logging
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .driver import Scenario, Simulator
from .errors import ConfigurationError, HDGError
from .fluid import darcy_coefficients, manufactured_model, phase_coefficients
from .mesh import all_dirichlet_bc, assign_rock, structured_mesh
from .nonlinear import NonlinearConfig
from .postprocess import postprocess
from .ref_element import n_modes, pkd_values, triangle_quadrature

log = logging.getLogger(__name__)

OMEGA = np.pi / 8.0
PERM = 1e-4
POROSITY = 0.2
QUANTITIES = ("sw", "gsw", "sg", "gsg", "p", "u")


def _g(x):
    return x * (1.0 - x) * np.exp(-x * x)


def _dg(x):
    return np.exp(-x * x) * (1.0 - 2.0 * x - 2.0 * x ** 2 + 2.0 * x ** 3)


def _d2g(x):
    return np.exp(-x * x) * (-2.0 - 6.0 * x + 10.0 * x ** 2 + 4.0 * x ** 3 - 4.0 * x ** 4)


class ManufacturedSolution:
    """Smooth pressure and saturations on the unit square.

    Gradients are stacked on a trailing axis of length 2.
    """

    def pressure(self, x, y, t=0.0):
        return np.cos(OMEGA * (x + y + t))

    def grad_pressure(self, x, y, t=0.0):
        d = -OMEGA * np.sin(OMEGA * (x + y + t))
        return np.stack([d, d], axis=-1)

    def lap_pressure(self, x, y, t=0.0):
        return -2.0 * OMEGA ** 2 * np.cos(OMEGA * (x + y + t))

    def s_w(self, x, y, t=0.0):
        return 0.125 * (1.0 - np.sin(OMEGA * (x + y + t)))

    def grad_s_w(self, x, y, t=0.0):
        d = -0.125 * OMEGA * np.cos(OMEGA * (x + y + t))
        return np.stack([d, d], axis=-1)

    def lap_s_w(self, x, y, t=0.0):
        return 0.25 * OMEGA ** 2 * np.sin(OMEGA * (x + y + t))

    def dt_s_w(self, x, y, t=0.0):
        return -0.125 * OMEGA * np.cos(OMEGA * (x + y + t))

    def s_g(self, x, y, t=0.0):
        return 0.125 * (1.0 + _g(x) * _g(y)) + 0.0 * np.asarray(t)

    def grad_s_g(self, x, y, t=0.0):
        return 0.125 * np.stack([_dg(x) * _g(y), _g(x) * _dg(y)], axis=-1)

    def lap_s_g(self, x, y, t=0.0):
        return 0.125 * (_d2g(x) * _g(y) + _g(x) * _d2g(y))

    def dt_s_g(self, x, y, t=0.0):
        return np.zeros(np.broadcast(x, y).shape)

    # field name dispatch, used for boundary and initial data
    def value(self, fld, x, y, t=0.0):
        return {"pressure": self.pressure, "s_w": self.s_w, "s_g": self.s_g}[fld](x, y, t)

    def gradient(self, fld, x, y, t=0.0):
        return {"pressure": self.grad_pressure, "s_w": self.grad_s_w, "s_g": self.grad_s_g}[fld](x, y, t)


def exact_solution(x, y, t):
    """Exact fields and derivatives at the given points as a dict."""
    m = ManufacturedSolution()
    return {"p_o": m.pressure(x, y, t), "s_w": m.s_w(x, y, t), "s_g": m.s_g(x, y, t),
            "grad_p_o": m.grad_pressure(x, y, t), "grad_s_w": m.grad_s_w(x, y, t),
            "grad_s_g": m.grad_s_g(x, y, t), "dt_s_w": m.dt_s_w(x, y, t), "dt_s_g": m.dt_s_g(x, y, t)}


@dataclass
class ManufacturedForcing:
    """Source terms that make the manufactured fields solve the model.

    ``mode="split_consistent"`` evaluates each flux with the same time lags
    as the splitting (other saturation and velocity from the previous
    level where the scheme uses them) and replaces the time derivative by
    the exact difference quotient, so only spatial errors remain.
    ``mode="continuous"`` uses the pointwise residual at the new time.
    """

    model: object = field(default_factory=manufactured_model)
    perm: float = PERM
    porosity: float = POROSITY
    mode: str = "split_consistent"
    solution: ManufacturedSolution = field(default_factory=ManufacturedSolution)

    def __post_init__(self):
        if self.mode not in ("split_consistent", "continuous"):
            raise ConfigurationError(f"unknown forcing mode {self.mode!r}")

    def velocity(self, x, y, t):
        m = self.solution
        c = darcy_coefficients(self.model, m.s_w(x, y, t), m.s_g(x, y, t))
        g = m.grad_pressure(x, y, t) + c.a_w[..., None] * m.grad_s_w(x, y, t) + c.a_g[..., None] * m.grad_s_g(x, y, t)
        return -self.perm * c.lt[..., None] * g

    def div_velocity(self, x, y, t):
        m = self.solution
        sw, sg = m.s_w(x, y, t), m.s_g(x, y, t)
        gw, gg, gp = m.grad_s_w(x, y, t), m.grad_s_g(x, y, t), m.grad_pressure(x, y, t)
        c = darcy_coefficients(self.model, sw, sg)

        def grad_of(val, dval):
            # gradient of a coefficient through both saturations
            return dval[0][..., None] * gw + dval[1][..., None] * gg

        glt = grad_of(c.lt, c.dlt)
        total = np.sum(glt * gp, axis=-1) + c.lt * m.lap_pressure(x, y, t)
        for a, da, gs, lap in ((c.a_w, c.da_w, gw, m.lap_s_w(x, y, t)), (c.a_g, c.da_g, gg, m.lap_s_g(x, y, t))):
            b = c.lt * a
            db = tuple(c.dlt[i] * a + c.lt * da[i] for i in range(2))
            total = total + np.sum(grad_of(b, db) * gs, axis=-1) + b * lap
        return -self.perm * total

    def flux_divergence(self, phase, x, y, t_s, t_o, t_u):
        """Divergence of the phase flux with own saturation at ``t_s``, other at ``t_o``, velocity at ``t_u``."""
        m = self.solution
        if phase == "wetting":
            s, gs, ls = m.s_w(x, y, t_s), m.grad_s_w(x, y, t_s), m.lap_s_w(x, y, t_s)
            so, go, lo = m.s_g(x, y, t_o), m.grad_s_g(x, y, t_o), m.lap_s_g(x, y, t_o)
        elif phase == "light_oil":
            s, gs, ls = m.s_g(x, y, t_s), m.grad_s_g(x, y, t_s), m.lap_s_g(x, y, t_s)
            so, go, lo = m.s_w(x, y, t_o), m.grad_s_w(x, y, t_o), m.lap_s_w(x, y, t_o)
        else:
            raise ConfigurationError(f"unknown phase {phase!r}")
        c = phase_coefficients(self.model, phase, s, so)

        def grad_of(d):
            return d[0][..., None] * gs + d[1][..., None] * go

        u = self.velocity(x, y, t_u)
        conv = np.sum(grad_of(c.df) * u, axis=-1) + c.f * self.div_velocity(x, y, t_u)
        diff = (np.sum(grad_of(c.dc_cross) * go, axis=-1) + c.c_cross * lo
                - np.sum(grad_of(c.dc_self) * gs, axis=-1) - c.c_self * ls)
        return conv + self.perm * diff

    def _dt(self, phase, x, y, t):
        m = self.solution
        return m.dt_s_w(x, y, t) if phase == "wetting" else m.dt_s_g(x, y, t)

    def _s(self, phase, x, y, t):
        m = self.solution
        return m.s_w(x, y, t) if phase == "wetting" else m.s_g(x, y, t)

    def source_terms(self, x, y, t):
        """Pointwise residuals (g_p, g_w, g_g) of the continuous equations."""
        out = [self.div_velocity(x, y, t)]
        for ph in ("wetting", "light_oil"):
            out.append(self.porosity * self._dt(ph, x, y, t) + self.flux_divergence(ph, x, y, t, t, t))
        return tuple(out)

    # driver protocol ----------------------------------------------------------
    def darcy(self, x, y, t):
        return self.div_velocity(x, y, t)

    def phase(self, phase, x, y, times, dt, phi):
        """(source, time_source) for one phase solve; ``times`` = (t_new, t_old, t_other, t_u)."""
        t_new, t_old, t_other, t_u = times
        if self.mode == "continuous":
            src = phi * self._dt(phase, x, y, t_new) + self.flux_divergence(phase, x, y, t_new, t_new, t_new)
            return src, None
        src = self.flux_divergence(phase, x, y, t_new, t_other, t_u)
        tsrc = phi * (self._s(phase, x, y, t_new) - self._s(phase, x, y, t_old)) / dt
        return src, tsrc


def manufactured_scenario(k, N, dt=0.5, t_end=0.5, time_scheme="backward_euler",
                          mode="split_consistent", nonlinear=None, perm=PERM, **kw):
    """Scenario on the unit square with all-Dirichlet data from the exact solution."""
    sol = ManufacturedSolution()
    model = manufactured_model()
    mesh = assign_rock(structured_mesh(N), {"kind": "constant", "K": perm, "porosity": POROSITY})
    forcing = ManufacturedForcing(model, perm, POROSITY, mode, sol)
    return Scenario(
        mesh=mesh, bc_spec=all_dirichlet_bc(), model=model, k=k, dt=dt, t_end=t_end,
        boundary=lambda fld, tag, x, y, t: sol.value(fld, x, y, t),
        initial=lambda fld, x, y: sol.value(fld, x, y, 0.0),
        initial_gradient=lambda fld, x, y: sol.gradient(fld, x, y, 0.0),
        time_scheme=time_scheme, nonlinear=nonlinear or NonlinearConfig(),
        forcing=forcing, name="manufactured", **kw)


# error measurement ------------------------------------------------------------
def _degree_of(nm):
    k = int(round((np.sqrt(8 * nm + 1) - 3) / 2))
    if n_modes(k) != nm:
        raise ValueError(f"{nm} is not a triangular mode count")
    return k


def l2_error(space, coeffs, exact, quad_degree=None):
    """L2 norm of (discrete - exact) over the mesh.

    ``coeffs`` is (nt, nm) or (nt, 2, nm) in the orthonormal basis of any
    degree; ``exact(x, y)`` returns matching values (trailing axis 2 for
    vectors, measured with the Euclidean pointwise norm).
    """
    coeffs = np.asarray(coeffs)
    k = _degree_of(coeffs.shape[-1])
    pts, w = triangle_quadrature(quad_degree or 2 * k + 6)
    V = space.mesh.vertices[space.mesh.triangles]
    J = np.stack([V[:, 1] - V[:, 0], V[:, 2] - V[:, 0]], axis=2)
    x = V[:, 0][:, None, :] + np.einsum("eab,qb->eqa", J, pts)
    phi = pkd_values(k, pts)
    ex = np.asarray(exact(x[..., 0], x[..., 1]))
    if coeffs.ndim == 3:
        diff = np.einsum("eam,qm->eqa", coeffs, phi) - ex
        sq = np.sum(diff ** 2, axis=-1)
    else:
        sq = (coeffs @ phi.T - ex) ** 2
    wd = w[None, :] * np.abs(space.detJ)[:, None]
    return float(np.sqrt(np.sum(wd * sq)))


def state_errors(sim, state, forcing=None):
    """L2 errors of all measured quantities at the state's time, plus s*."""
    sol = ManufacturedSolution()
    forcing = forcing or sim.sc.forcing
    t = state.t
    sp_ = sim.space
    out = {
        "sw": l2_error(sp_, state.wet.s, lambda x, y: sol.s_w(x, y, t)),
        "gsw": l2_error(sp_, state.wet.q, lambda x, y: sol.grad_s_w(x, y, t)),
        "sg": l2_error(sp_, state.gas.s, lambda x, y: sol.s_g(x, y, t)),
        "gsg": l2_error(sp_, state.gas.q, lambda x, y: sol.grad_s_g(x, y, t)),
        "p": l2_error(sp_, state.darcy.P, lambda x, y: sol.pressure(x, y, t)),
        "u": l2_error(sp_, state.darcy.U, lambda x, y: forcing.velocity(x, y, t)),
    }
    out["sw_pp"] = l2_error(sp_, postprocess(sp_, state.wet.s, state.wet.q), lambda x, y: sol.s_w(x, y, t))
    out["sg_pp"] = l2_error(sp_, postprocess(sp_, state.gas.s, state.gas.q), lambda x, y: sol.s_g(x, y, t))
    return out


# convergence study --------------------------------------------------------------
@dataclass
class ErrorReport:
    """Errors per (k, N) and observed rates between successive N."""

    errors: dict = field(default_factory=dict)     # (k, N) -> {quantity: error}
    failures: dict = field(default_factory=dict)   # (k, N) -> message
    timings: dict = field(default_factory=dict)

    @property
    def ks(self):
        return sorted({k for k, _ in self.errors})

    def Ns(self, k):
        return sorted(N for kk, N in self.errors if kk == k)

    def rates(self, k):
        """{(N_coarse, N_fine): {quantity: log2 ratio}} for successive N of degree k."""
        Ns = self.Ns(k)
        out = {}
        for a, b in zip(Ns[:-1], Ns[1:]):
            ea, eb = self.errors[(k, a)], self.errors[(k, b)]
            out[(a, b)] = {q: float(np.log(ea[q] / eb[q]) / np.log(b / a)) for q in ea}
        return out

    def last_rates(self, k):
        r = self.rates(k)
        return r[max(r)] if r else {}

    def columns(self):
        if not self.errors:
            return list(QUANTITIES)
        first = next(iter(self.errors.values()))
        return list(QUANTITIES) + [q for q in first if q not in QUANTITIES]

    def to_csv(self):
        cols = self.columns()
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["k", "N"] + [f"err_{c}" for c in cols] + [f"rate_{c}" for c in cols])
        for k in self.ks:
            Ns = self.Ns(k)
            rates = self.rates(k)
            for i, N in enumerate(Ns):
                e = self.errors[(k, N)]
                r = rates.get((Ns[i - 1], N)) if i else None
                wr.writerow([k, N] + [f"{e[c]:.17g}" for c in cols]
                            + [f"{r[c]:.17g}" if r else "" for c in cols])
        return buf.getvalue()

    def to_text(self):
        cols = self.columns()
        lines = []
        head = f"{'k':>2} {'N':>4} " + " ".join(f"{c:>10} {'rate':>5}" for c in cols)
        lines.append(head)
        for k in self.ks:
            Ns = self.Ns(k)
            rates = self.rates(k)
            for i, N in enumerate(Ns):
                e = self.errors[(k, N)]
                r = rates.get((Ns[i - 1], N)) if i else None
                cells = [f"{e[c]:10.2e} {r[c]:5.2f}" if r else f"{e[c]:10.2e} {'-':>5}" for c in cols]
                lines.append(f"{k:>2} {N:>4} " + " ".join(cells))
        for key, msg in sorted(self.failures.items()):
            lines.append(f"failed k={key[0]} N={key[1]}: {msg}")
        return "\n".join(lines) + "\n"


def default_dt(k, N, time_scheme="crank_nicolson", C=0.05):
    """Time step policy C * h^((k+1)/p) capped so at least 10 steps reach t = 0.5.

    With split-consistent forcing the discrete scheme carries no temporal
    truncation error, so the policy only matters for the continuous mode.
    """
    p = 2 if time_scheme == "crank_nicolson" else 1
    h = 1.0 / N
    dt = min(C * h ** ((k + 1) / p) / (1.0 / 8) ** ((k + 1) / p), 0.05)
    # snap to a divisor of the final time
    n = int(np.ceil(0.5 / dt))
    return 0.5 / n


def convergence_study(ks, Ns, dt=None, t_end=0.5, time_scheme="backward_euler",
                      mode="split_consistent", nonlinear=None, progress=None):
    """Run the manufactured case for every (k, N); failed runs are recorded, not raised.

    With split-consistent forcing and no explicit ``dt`` a single step spans
    the whole interval: the discrete scheme then has no temporal error and a
    large step keeps the reaction term phi/dt from masking the spatial rates.
    """
    report = ErrorReport()
    for k in ks:
        for N in Ns:
            step = dt if dt is not None else (t_end if mode == "split_consistent" else default_dt(k, N, time_scheme))
            t0 = _time.perf_counter()
            try:
                sc = manufactured_scenario(k, N, step, t_end, time_scheme, mode, nonlinear)
                sim = Simulator(sc)
                state = sim.run()
                report.errors[(k, N)] = state_errors(sim, state)
            except HDGError as exc:
                report.failures[(k, N)] = str(exc)
                log.error("manufactured run k=%d N=%d failed: %s", k, N, exc)
            report.timings[(k, N)] = _time.perf_counter() - t0
            if progress is not None:
                progress(k, N, report)
    return report
