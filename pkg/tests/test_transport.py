from __future__ import annotations

import itertools

import numpy as np
import pytest

from conftest import make_space, random_transport, skewed_mesh
from hdg3p.errors import ConfigurationError
from hdg3p.fluid import CAPILLARY_FAMILIES, MOBILITY_FAMILIES, FluidModel
from hdg3p.mesh import all_dirichlet_bc, rectangle_bc
from hdg3p.nonlinear import NonlinearConfig
from hdg3p.transport import PhaseInputs, TransportProblem, TransportState, step_phase

ALL_FAMILIES = list(itertools.product(MOBILITY_FAMILIES, CAPILLARY_FAMILIES))


def directional_error(prob, x, v, h=1e-6):
    J = prob.monolithic_matrix(prob.jacobian(x))
    Jv = J @ v
    fd = (prob.residual(x + h * v) - prob.residual(x - h * v)) / (2 * h)
    return np.linalg.norm(Jv - fd) / np.linalg.norm(Jv)


@pytest.mark.parametrize("mobility,capillary", ALL_FAMILIES)
@pytest.mark.parametrize("phase", ["wetting", "light_oil"])
def test_jacobian_directional_fd(mobility, capillary, phase):
    model = FluidModel(mobility=mobility, capillary=capillary)
    S, prob, state = random_transport(k=2, phase=phase, theta=0.5, seed=ALL_FAMILIES.index((mobility, capillary)),
                                      model=model)
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(20):
        x = prob.pack(state())
        v = rng.normal(size=x.shape)
        v /= np.abs(v).max()
        worst = max(worst, directional_error(prob, x, v * 1e-2))
    assert worst <= 1e-6


def test_jacobian_covers_outflow_edges():
    S, prob, state = random_transport(k=3, seed=4, bc=all_dirichlet_bc(), mesh=skewed_mesh())
    assert prob.outflow.any() and (~prob.outflow).any()
    x = prob.pack(state())
    v = np.random.default_rng(2).normal(size=x.shape) * 1e-2
    assert directional_error(prob, x, v) <= 1e-6


def test_full_jacobian_matches_columns():
    S, prob, state = random_transport(k=1, N=1, theta=1.0, seed=3)
    x = prob.pack(state())
    J = prob.monolithic_matrix(prob.jacobian(x))
    h = 1e-7
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        col = (prob.residual(x + e) - prob.residual(x - e)) / (2 * h)
        assert np.abs(J[:, i] - col).max() <= 1e-6 * max(1.0, np.abs(J).max())


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("phase", ["wetting", "light_oil"])
@pytest.mark.parametrize("mesh_kind", ["square", "skewed"])
def test_condensed_step_matches_monolithic(k, phase, mesh_kind):
    mesh = skewed_mesh() if mesh_kind == "skewed" else None
    bc = all_dirichlet_bc() if mesh_kind == "skewed" else rectangle_bc()
    S, prob, state = random_transport(k=k, phase=phase, seed=k, mesh=mesh, bc=bc)
    assert S.nt <= 8
    x = prob.pack(state())
    jb = prob.jacobian(x)
    dm = np.linalg.solve(prob.monolithic_matrix(jb), -prob.residual(x))
    dx = prob.condense_and_solve(jb)
    assert np.abs(dx - dm).max() <= 1e-10 * max(1.0, np.abs(dm).max())


def constant_problem(k=2, value=0.4, other=0.2, theta=1.0):
    S = make_space(k, 2, rectangle_bc())
    nt, nq, nqe = S.nt, S.xq.shape[1], S.we.shape[2]
    model = FluidModel(capillary="none")
    dirichlet = np.zeros((S.ne, S.ntr))
    dirichlet[:, 0] = value
    inp = PhaseInputs("wetting", np.zeros((nt, nq, 2)), np.zeros((nt, 3, nqe)), np.full((nt, nq), other),
                      np.zeros((nt, nq, 2)), np.full((nt, 3, nqe), other), np.zeros((nt, 3, nqe, 2)), dirichlet)
    s = np.zeros((nt, S.nm))
    s[:, 0] = value / np.sqrt(2)
    st = TransportState(np.zeros((nt, 2, S.nm)), s, dirichlet.copy(), 0.0, np.zeros((nt, S.nm)))
    return S, TransportProblem(S, model, inp, st, dt=10.0, theta=theta), st


def test_uniform_state_is_steady():
    for theta in (1.0, 0.5):
        S, prob, st = constant_problem(theta=theta)
        assert np.abs(prob.residual(prob.pack(st))).max() < 1e-13
        new, hist = step_phase(prob)
        assert np.abs(new.s - st.s).max() < 1e-13


def test_newton_converges_quadratically():
    S, prob, state = random_transport(k=2, seed=5, theta=1.0)
    new, hist = step_phase(prob, NonlinearConfig(), seed_with_anderson=True)
    newton = [r for r in hist if r.stage == "newton"]
    assert newton[-1].inc_norm <= 1e-12
    assert len(newton) <= 8
    assert np.abs(prob.residual(prob.pack(new))).max() < 1e-8 * max(1.0, np.abs(prob.residual(prob.pack(state()))).max())


def test_stabilization_positive_and_frozen():
    S, prob, state = random_transport(k=2, seed=6)
    assert np.all(prob.tau > 0)
    tau = prob.tau.copy()
    prob.residual(prob.pack(state()))
    assert np.array_equal(prob.tau, tau)


def test_bad_arguments():
    S, prob, state = random_transport(k=1, seed=0)
    with pytest.raises(ConfigurationError):
        TransportProblem(S, prob.model, prob.inputs, state(), dt=0.0)
    st = state()
    st.old = None
    with pytest.raises(ConfigurationError):
        TransportProblem(S, prob.model, prob.inputs, st, dt=1.0, theta=0.5)
    with pytest.raises(ConfigurationError):
        PhaseInputs("gas", *([None] * 7))
