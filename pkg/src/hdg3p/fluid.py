"""Mobility and capillary-pressure closures with analytic derivatives.

All functions are vectorized over arrays of saturations. Inputs are clamped
to the admissible simplex before evaluation and derivatives are taken of the
clamped expression (zero across an active bound).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalError

PSI = 6894.757  # Pa
CENTIPOISE = 1e-3  # Pa s

MOBILITY_FAMILIES = ("quadratic_chen", "linear_manufactured", "brooks_corey_generalized")
CAPILLARY_FAMILIES = ("log_capillary", "leverett_capillary", "linear_capillary", "none")


@dataclass(frozen=True)
class FluidModel:
    """Closure selection and parameters (SI units).

    ``capillary_sign`` controls how the capillary slope enters the flow
    equations: ``"absolute"`` uses |p_c'| so every capillary term is
    diffusive, ``"literal"`` uses p_c' as written.
    """

    mobility: str = "quadratic_chen"
    capillary: str = "log_capillary"
    mu_w: float = CENTIPOISE
    mu_o: float = CENTIPOISE
    mu_g: float = CENTIPOISE
    a_g: float = 0.5
    eps_cap: float = 1e-3
    eps_log: float = 0.01
    s_wr: float = 0.0
    s_or: float = 0.0
    capillary_sign: str = "absolute"
    log_base: float = np.e
    delta: float = 1e-8
    lambda_floor: float = 1e-12

    def __post_init__(self):
        if self.mobility not in MOBILITY_FAMILIES:
            raise ConfigurationError(f"unknown mobility family {self.mobility!r}")
        if self.capillary not in CAPILLARY_FAMILIES:
            raise ConfigurationError(f"unknown capillary family {self.capillary!r}")
        if min(self.mu_w, self.mu_o, self.mu_g) <= 0:
            raise ConfigurationError("viscosities must be positive")
        if not 0.0 <= self.a_g <= 1.0:
            raise ConfigurationError("a_g must lie in [0, 1]")
        if not (0 <= self.s_wr < 1 and 0 <= self.s_or < 1 and self.s_wr + self.s_or < 1):
            raise ConfigurationError("residual saturations must lie in [0, 1) with s_wr + s_or < 1")
        if self.capillary_sign not in ("absolute", "literal"):
            raise ConfigurationError("capillary_sign must be 'absolute' or 'literal'")
        if self.eps_log <= 0 or self.log_base <= 0 or self.log_base == 1:
            raise ConfigurationError("invalid logarithmic capillary parameters")

    @property
    def lambda_scale(self):
        return 1.0 / min(self.mu_w, self.mu_o, self.mu_g)


def manufactured_model(capillary_sign="absolute"):
    """Linear closures with unit viscosities, used by the manufactured solution."""
    return FluidModel(mobility="linear_manufactured", capillary="linear_capillary",
                      mu_w=1.0, mu_o=1.0, mu_g=1.0, capillary_sign=capillary_sign)


@dataclass
class Mobilities:
    """Phase mobilities and partial derivatives with respect to (s_w, s_g)."""

    lw: np.ndarray
    lg: np.ndarray
    lo: np.ndarray
    lt: np.ndarray
    dlw: tuple
    dlg: tuple
    dlo: tuple
    dlt: tuple


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalError("non-finite saturation passed to a closure")


def clamp_pair(model, s_w, s_g, priority=None):
    """Clamp (s_w, s_g) into the shrunken simplex.

    Returns the clamped pair and the 2x2 Jacobian entries
    ``(dw_dw, dw_dg, dg_dw, dg_dg)``. With ``priority=None`` an excess sum
    is removed by radial projection. With ``priority`` set to ``"w"`` or
    ``"g"`` the other saturation alone yields, so closures stay strictly
    monotone in the prioritized one up to its own bound.
    """
    if priority is not None:
        return _clamp_priority(model, s_w, s_g, priority)
    s_w = np.asarray(s_w, dtype=float)
    s_g = np.asarray(s_g, dtype=float)
    _check_finite(s_w, s_g)
    d = model.delta
    lo, hi = d, 1.0 - d
    cw = np.clip(s_w, lo, hi)
    cg = np.clip(s_g, lo, hi)
    aw = ((s_w > lo) & (s_w < hi)).astype(float)
    ag = ((s_g > lo) & (s_g < hi)).astype(float)
    total = cw + cg
    over = total > hi
    scale = np.where(over, hi / np.where(over, total, 1.0), 1.0)
    # radial projection toward the origin onto s_w + s_g = 1 - delta
    T2 = np.where(over, total * total, 1.0)
    pw_w = np.where(over, hi * cg / T2, 1.0)
    pw_g = np.where(over, -hi * cw / T2, 0.0)
    pg_w = np.where(over, -hi * cg / T2, 0.0)
    pg_g = np.where(over, hi * cw / T2, 1.0)
    return (cw * scale, cg * scale, pw_w * aw, pw_g * ag, pg_w * aw, pg_g * ag)


def _clamp_priority(model, s_w, s_g, priority):
    s_w = np.asarray(s_w, dtype=float)
    s_g = np.asarray(s_g, dtype=float)
    _check_finite(s_w, s_g)
    d = model.delta
    lo, hi = d, 1.0 - d
    own, other = (s_w, s_g) if priority == "w" else (s_g, s_w)
    co = np.clip(own, lo, hi - lo)
    a_own = ((own > lo) & (own < hi - lo)).astype(float)
    cap = hi - co
    ct = np.clip(other, lo, hi)
    a_oth = ((other > lo) & (other < hi)).astype(float)
    over = ct > cap
    cx = np.where(over, cap, ct)
    dx_own = np.where(over, -a_own, 0.0)
    dx_oth = np.where(over, 0.0, a_oth)
    zero = np.zeros_like(co)
    if priority == "w":
        return co, cx, a_own, zero, dx_own, dx_oth
    return cx, co, dx_oth, dx_own, zero, a_own


def _chain(dw, dg, J):
    """Push derivatives w.r.t. clamped inputs back to raw inputs."""
    jww, jwg, jgw, jgg = J
    return dw * jww + dg * jgw, dw * jwg + dg * jgg


def mobilities(model, s_w, s_g, priority=None):
    """Phase and total mobilities with exact partials of the clamped closure."""
    cw, cg, *J = clamp_pair(model, s_w, s_g, priority)
    mw, mo, mg = model.mu_w, model.mu_o, model.mu_g
    zero = np.zeros_like(cw)
    if model.mobility == "linear_manufactured":
        lw, lg = cw / mw, cg / mg
        dlw = (zero + 1.0 / mw, zero)
        dlg = (zero, zero + 1.0 / mg)
        so = 1.0 - cw - cg
        lo = so / mo
        dlo = (zero - 1.0 / mo, zero - 1.0 / mo)
    else:
        lw, lg = cw * cw / mw, cg * cg / mg
        dlw = (2.0 * cw / mw, zero)
        dlg = (zero, 2.0 * cg / mg)
        so = 1.0 - cw - cg
        if model.mobility == "quadratic_chen":
            a, b = 1.0 - cw, 1.0 - cg
            lo = a * b * so / mo
            dlo = ((-b * so - a * b) / mo, (-a * so - a * b) / mo)
        else:
            ag = model.a_g
            lo = ((1.0 - ag) * so * so + ag * so) / mo
            d = -(2.0 * (1.0 - ag) * so + ag) / mo
            dlo = (d, d.copy())
    dlw = _chain(*dlw, J)
    dlg = _chain(*dlg, J)
    dlo = _chain(*dlo, J)
    lt = lw + lg + lo
    dlt = (dlw[0] + dlg[0] + dlo[0], dlw[1] + dlg[1] + dlo[1])
    if np.any(lt <= model.lambda_floor * model.lambda_scale):
        raise NumericalError("total mobility fell below its floor")
    return Mobilities(lw, lg, lo, lt, dlw, dlg, dlo, dlt)


def fractional_flow(model, s_w, s_g):
    """(f_w, f_g) and their partials ``((dfw_dsw, dfw_dsg), (dfg_dsw, dfg_dsg))``."""
    m = mobilities(model, s_w, s_g)
    fw = m.lw / m.lt
    fg = m.lg / m.lt
    dfw = tuple((m.dlw[i] - fw * m.dlt[i]) / m.lt for i in range(2))
    dfg = tuple((m.dlg[i] - fg * m.dlt[i]) / m.lt for i in range(2))
    return fw, fg, dfw, dfg


def _log(model, x):
    return np.log(x) / np.log(model.log_base)


def capillary_derivatives(model, phase, s):
    """Capillary pressure (Pa) with first and second derivatives in ``s``."""
    if phase not in ("wo", "go"):
        raise ConfigurationError(f"unknown capillary phase pair {phase!r}")
    s = np.asarray(s, dtype=float)
    _check_finite(s)
    d = model.delta
    c = np.clip(s, d, 1.0 - d)
    active = ((s > d) & (s < 1.0 - d)).astype(float)
    zero = np.zeros_like(c)
    fam = model.capillary
    if fam == "none":
        return zero, zero, zero
    if fam == "linear_capillary":
        if phase == "wo":
            return c - 1.0, zero + active, zero
        return 1.0 - c, zero - active, zero
    if fam == "leverett_capillary":
        e = model.eps_cap * (5.0 if phase == "wo" else 1.0)
        return e * (2.0 - c) * (1.0 - c), e * (2.0 * c - 3.0) * active, zero + 2.0 * e * active
    # logarithmic family; the base cancels between prefactor and argument
    eps, swr, sor = model.eps_log, model.s_wr, model.s_or
    if phase == "wo":
        A = 6.3 * PSI / _log(model, eps / (1.0 - swr))
        arg = c - swr + eps
        if np.any(arg <= 0):
            raise NumericalError("wetting capillary pressure evaluated at its logarithmic singularity")
        L = 1.0 / np.log(model.log_base)
        return (A * _log(model, arg / (1.0 - swr)), A * L / arg * active, -A * L / arg ** 2 * active)
    B = 3.9 * PSI / _log(model, eps / (1.0 - swr - sor))
    arg = 1.0 - c - sor - swr + eps
    if np.any(arg <= 0):
        raise NumericalError("light-oil capillary pressure evaluated at its logarithmic singularity")
    L = 1.0 / np.log(model.log_base)
    return (B * _log(model, arg / (1.0 - sor - swr)), -B * L / arg * active, -B * L / arg ** 2 * active)


def capillary(model, phase, s):
    """Capillary pressure and its derivative, (p_c, p_c')."""
    pc, d1, _ = capillary_derivatives(model, phase, s)
    return pc, d1


def capillary_slope(model, phase, s):
    """Slope entering the flow equations and its derivative in ``s``.

    Equal to (p_c', p_c'') for the literal convention and to
    (|p_c'|, sign(p_c') p_c'') for the absolute convention.
    """
    _, d1, d2 = capillary_derivatives(model, phase, s)
    if model.capillary_sign == "literal":
        return d1, d2
    sg = np.sign(d1)
    return np.abs(d1), sg * d2


@dataclass
class PhaseCoefficients:
    """Coefficients of one saturation equation's flux.

    The flux is ``f * u + K (c_cross * q_other - c_self * q)``. Each
    ``d*`` entry is a pair of partials with respect to (own, other)
    saturation.
    """

    f: np.ndarray
    c_cross: np.ndarray
    c_self: np.ndarray
    df: tuple
    dc_cross: tuple
    dc_self: tuple


def phase_coefficients(model, phase, s_self, s_other):
    """Flux coefficients for ``phase`` in {"wetting", "light_oil"}."""
    if phase == "wetting":
        s_w, s_g = s_self, s_other
    elif phase == "light_oil":
        s_w, s_g = s_other, s_self
    else:
        raise ConfigurationError(f"unknown phase {phase!r}")
    # the lagged saturation yields when the pair leaves the simplex
    m = mobilities(model, s_w, s_g, "w" if phase == "wetting" else "g")
    Pw, dPw = capillary_slope(model, "wo", s_w)
    Pg, dPg = capillary_slope(model, "go", s_g)
    lt = m.lt
    # partials are first formed w.r.t. (s_w, s_g) then reordered to (self, other)
    prod = m.lw * m.lg
    dprod = tuple(m.dlw[i] * m.lg + m.lw * m.dlg[i] for i in range(2))
    cross = prod / lt
    dcross = tuple((dprod[i] - cross * m.dlt[i]) / lt for i in range(2))
    if phase == "wetting":
        lam, dlam = m.lw, m.dlw
        rest, drest = m.lo + m.lg, tuple(m.dlo[i] + m.dlg[i] for i in range(2))
        P_self, dP_self, P_other, dP_other = Pw, dPw, Pg, dPg
    else:
        lam, dlam = m.lg, m.dlg
        rest, drest = m.lo + m.lw, tuple(m.dlo[i] + m.dlw[i] for i in range(2))
        P_self, dP_self, P_other, dP_other = Pg, dPg, Pw, dPw
    f = lam / lt
    df = tuple((dlam[i] - f * m.dlt[i]) / lt for i in range(2))
    g = lam * rest / lt
    dg = tuple((dlam[i] * rest + lam * drest[i] - g * m.dlt[i]) / lt for i in range(2))
    own, oth = (0, 1) if phase == "wetting" else (1, 0)
    c_cross = cross * P_other
    dc_cross = (dcross[own] * P_other, dcross[oth] * P_other + cross * dP_other)
    c_self = g * P_self
    dc_self = (dg[own] * P_self + g * dP_self, dg[oth] * P_self)
    return PhaseCoefficients(f, c_cross, c_self, (df[own], df[oth]), dc_cross, dc_self)


@dataclass
class DarcyCoefficients:
    """Total mobility and capillary forcing weights of the velocity equation.

    The forcing is ``-(a_w grad s_w + a_g grad s_g)`` with
    ``a_w = f_w P_w`` and ``a_g = f_g P_g``. Partials are w.r.t. (s_w, s_g).
    """

    lt: np.ndarray
    a_w: np.ndarray
    a_g: np.ndarray
    dlt: tuple
    da_w: tuple
    da_g: tuple


def darcy_coefficients(model, s_w, s_g):
    m = mobilities(model, s_w, s_g)
    Pw, dPw = capillary_slope(model, "wo", s_w)
    Pg, dPg = capillary_slope(model, "go", s_g)
    fw, fg = m.lw / m.lt, m.lg / m.lt
    dfw = tuple((m.dlw[i] - fw * m.dlt[i]) / m.lt for i in range(2))
    dfg = tuple((m.dlg[i] - fg * m.dlt[i]) / m.lt for i in range(2))
    a_w = fw * Pw
    a_g = fg * Pg
    da_w = (dfw[0] * Pw + fw * dPw, dfw[1] * Pw)
    da_g = (dfg[0] * Pg, dfg[1] * Pg + fg * dPg)
    return DarcyCoefficients(m.lt, a_w, a_g, m.dlt, da_w, da_g)
