from __future__ import annotations

import numpy as np
import pytest
from scipy import integrate

from conftest import make_space
from hdg3p.driver import Simulator
from hdg3p.errors import ConfigurationError
from hdg3p.fluid import manufactured_model, phase_coefficients
from hdg3p.mesh import all_dirichlet_bc
from hdg3p.verify import (
    POROSITY,
    ErrorReport,
    ManufacturedForcing,
    ManufacturedSolution,
    default_dt,
    exact_solution,
    l2_error,
    manufactured_scenario,
    state_errors,
)

SOL = ManufacturedSolution()
H = 1e-5


def random_points(n=50, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 1, n), rng.uniform(0, 1, n), rng.uniform(0, 0.5, n)


def test_exact_values():
    e = exact_solution(0.0, 0.0, 0.0)
    assert e["p_o"] == 1.0 and e["s_w"] == 0.125 and e["s_g"] == 0.125
    # 0.125 (1 + 0.0625 exp(-1/2)) evaluated to 30 digits
    for t in (0.0, 0.3, 0.5):
        assert SOL.s_g(0.5, 0.5, t) == pytest.approx(0.129738520779004948621904683867, abs=1e-15)


def test_exact_bounds_on_sample():
    rng = np.random.default_rng(3)
    x, y, t = rng.uniform(0, 1, 10_000), rng.uniform(0, 1, 10_000), rng.uniform(0, 0.5, 10_000)
    sw, sg = SOL.s_w(x, y, t), SOL.s_g(x, y, t)
    assert sw.min() > 0 and sg.min() > 0 and (sw + sg).max() < 1
    assert sw.max() <= 0.25


def test_exact_derivatives_by_differences():
    x, y, t = random_points(seed=1)
    for fld in ("pressure", "s_w", "s_g"):
        g = SOL.gradient(fld, x, y, t)
        fx = (SOL.value(fld, x + H, y, t) - SOL.value(fld, x - H, y, t)) / (2 * H)
        fy = (SOL.value(fld, x, y + H, t) - SOL.value(fld, x, y - H, t)) / (2 * H)
        assert np.abs(g[:, 0] - fx).max() < 1e-9 and np.abs(g[:, 1] - fy).max() < 1e-9
    for val, lap in ((SOL.s_w, SOL.lap_s_w), (SOL.s_g, SOL.lap_s_g), (SOL.pressure, SOL.lap_pressure)):
        h = 1e-4
        fd = (val(x + h, y, t) + val(x - h, y, t) + val(x, y + h, t) + val(x, y - h, t) - 4 * val(x, y, t)) / h ** 2
        assert np.abs(lap(x, y, t) - fd).max() < 1e-6


def phase_flux(forcing, phase, x, y, t):
    """Pointwise phase flux f u + K (c_cross grad s_other - c_self grad s_own)."""
    own, oth = ("s_w", "s_g") if phase == "wetting" else ("s_g", "s_w")
    c = phase_coefficients(forcing.model, phase, SOL.value(own, x, y, t), SOL.value(oth, x, y, t))
    u = forcing.velocity(x, y, t)
    return (c.f[..., None] * u + forcing.perm * (c.c_cross[..., None] * SOL.gradient(oth, x, y, t)
                                                 - c.c_self[..., None] * SOL.gradient(own, x, y, t)))


def fd_divergence(F, x, y, t):
    return ((F(x + H, y, t)[..., 0] - F(x - H, y, t)[..., 0]) + (F(x, y + H, t)[..., 1] - F(x, y - H, t)[..., 1])) / (2 * H)


def test_source_terms_match_finite_differences():
    forcing = ManufacturedForcing()
    x, y, t = random_points()
    gp, gw, gg = forcing.source_terms(x, y, t)
    ref_p = fd_divergence(forcing.velocity, x, y, t)
    assert np.abs(gp - ref_p).max() <= 1e-7 * np.abs(ref_p).max()
    for g, phase, fld in ((gw, "wetting", "s_w"), (gg, "light_oil", "s_g")):
        dt = (SOL.value(fld, x, y, t + H) - SOL.value(fld, x, y, t - H)) / (2 * H)
        ref = POROSITY * dt + fd_divergence(lambda a, b, c: phase_flux(forcing, phase, a, b, c), x, y, t)
        assert np.abs(g - ref).max() <= 1e-7 * np.abs(ref).max()


def test_split_forcing_reduces_to_continuous_when_lags_vanish():
    x, y, t = random_points(seed=2)
    split = ManufacturedForcing(mode="split_consistent")
    cont = ManufacturedForcing(mode="continuous")
    for phase in ("wetting", "light_oil"):
        src, tsrc = split.phase(phase, x, y, (t, t - 1e-6, t, t), 1e-6, POROSITY)
        full, none = cont.phase(phase, x, y, (t, t - 1e-6, t, t), 1e-6, POROSITY)
        assert none is None
        assert np.abs(src + tsrc - full).max() <= 1e-6 * np.abs(full).max()


def test_gas_source_is_time_independent_without_coupling():
    # s_g does not depend on t, so only the s_w coupling moves its source
    forcing = ManufacturedForcing()
    assert np.all(SOL.dt_s_g(*random_points()[:2]) == 0.0)
    x, y, _ = random_points()
    a = forcing.flux_divergence("light_oil", x, y, 0.1, 0.3, 0.3)
    b = forcing.flux_divergence("light_oil", x, y, 0.4, 0.3, 0.3)
    assert np.array_equal(a, b)


def test_forcing_mode_validation():
    with pytest.raises(ConfigurationError):
        ManufacturedForcing(mode="lagged")
    with pytest.raises(ConfigurationError):
        ManufacturedForcing().flux_divergence("gas", 0.1, 0.1, 0, 0, 0)


@pytest.mark.parametrize("k", [1, 2, 4])
def test_projection_error_vanishes_for_polynomials(k):
    S = make_space(k, N=3, bc=all_dirichlet_bc())
    f = lambda x, y: 1 + x ** k - 2 * x * y ** (k - 1)  # noqa: E731
    assert l2_error(S, S.project_function(f), f) <= 1e-12
    gf = lambda x, y: np.stack([x ** k, y + 0 * x], -1)  # noqa: E731
    assert l2_error(S, S.project_function(gf), gf) <= 1e-12


def test_zero_field_error_is_the_exact_norm():
    S = make_space(2, N=4, bc=all_dirichlet_bc())
    ref, _ = integrate.dblquad(lambda y, x: SOL.pressure(x, y, 0.0) ** 2, 0, 1, 0, 1, epsabs=1e-13, epsrel=1e-13)
    got = l2_error(S, np.zeros((S.nt, S.nm)), lambda x, y: SOL.pressure(x, y, 0.0), quad_degree=20)
    assert got == pytest.approx(np.sqrt(ref), rel=1e-12)


def test_rate_arithmetic():
    rep = ErrorReport()
    rep.errors[(2, 32)] = {"sw": 1.03e-4}
    rep.errors[(2, 64)] = {"sw": 1.34e-5}
    assert rep.rates(2)[(32, 64)]["sw"] == pytest.approx(np.log2(1.03e-4 / 1.34e-5))
    assert rep.last_rates(2)["sw"] == pytest.approx(2.94, abs=0.005)


def test_report_formats():
    rep = ErrorReport()
    for N, e in ((4, 1e-2), (8, 2.5e-3)):
        rep.errors[(1, N)] = {q: e for q in ("sw", "gsw", "sg", "gsg", "p", "u")}
    rep.failures[(1, 16)] = "diverged"
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("k,N,err_sw") and len(lines) == 3
    assert lines[2].split(",")[-1] == "2"
    assert "failed k=1 N=16: diverged" in rep.to_text()


def test_policy_step_makes_time_error_subdominant():
    # Richardson check: halving the policy step barely changes the errors
    k, N = 1, 8
    dt = default_dt(k, N)
    errs = []
    for step in (dt, dt / 2):
        sim = Simulator(manufactured_scenario(k, N, step, 0.5, "crank_nicolson", "continuous"))
        errs.append(state_errors(sim, sim.run()))
    for q in ("sw", "gsw", "sg", "gsg", "p", "u"):
        assert abs(errs[0][q] - errs[1][q]) < 0.05 * errs[1][q], q


def test_split_consistent_has_no_time_error():
    errs = []
    for step in (0.5, 0.25):
        sim = Simulator(manufactured_scenario(1, 4, step, 0.5))
        errs.append(state_errors(sim, sim.run()))
    # same spatial discretization, only the reaction weight phi/dt changes
    for q in ("sg", "gsg", "p", "u"):
        assert abs(errs[0][q] - errs[1][q]) < 0.05 * errs[1][q], q


def test_manufactured_model_is_linear():
    m = manufactured_model()
    c = phase_coefficients(m, "wetting", np.array([0.1, 0.2]), np.array([0.3, 0.3]))
    assert np.allclose(np.diff(c.f) / 0.1, c.df[0][0])
