from __future__ import annotations

import numpy as np
import pytest

from hdg3p.fluid import FluidModel
from hdg3p.mesh import Mesh, all_dirichlet_bc, assign_rock, build_skeleton, rectangle_bc, structured_mesh
from hdg3p.ref_element import build_reference
from hdg3p.space import build_space
from hdg3p.transport import PhaseInputs, TransportProblem, TransportState

FAMILIES = [
    ("quadratic_chen", "log_capillary"),
    ("brooks_corey_generalized", "leverett_capillary"),
    ("linear_manufactured", "linear_capillary"),
    ("quadratic_chen", "none"),
]


def make_space(k, N=2, bc=None, K=1.0, poro=0.2, mesh=None):
    mesh = mesh if mesh is not None else structured_mesh(N)
    mesh = assign_rock(mesh, {"kind": "constant", "K": K, "porosity": poro})
    skel = build_skeleton(mesh, bc if bc is not None else rectangle_bc())
    return build_space(mesh, skel, build_reference(k))


def skewed_mesh():
    """Four distorted triangles with every boundary side tagged."""
    v = np.array([[0.0, 0.0], [1.0, 0.1], [0.9, 1.0], [0.1, 0.8], [0.45, 0.5]])
    t = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    b = np.array([[0, 1, 3], [1, 2, 2], [2, 3, 4], [3, 0, 1]])
    return Mesh(v, t, b)


def random_transport(k=2, N=2, phase="wetting", theta=1.0, seed=0, model=None, bc=None, mesh=None):
    """A transport problem with random but admissible frozen inputs."""
    rng = np.random.default_rng(seed)
    S = make_space(k, N, bc if bc is not None else rectangle_bc(), mesh=mesh)
    nt, nm, ntr = S.nt, S.nm, S.ntr
    nq, nqe = S.xq.shape[1], S.we.shape[2]
    model = model or FluidModel()

    def around(base, amp, shape):
        return base + amp * rng.uniform(-1, 1, shape)

    inp = PhaseInputs(phase, rng.normal(size=(nt, nq, 2)) * 1e-2, rng.normal(size=(nt, 3, nqe)) * 1e-2,
                      around(0.3, 0.05, (nt, nq)), rng.normal(size=(nt, nq, 2)) * 0.1,
                      around(0.3, 0.05, (nt, 3, nqe)), rng.normal(size=(nt, 3, nqe, 2)) * 0.1,
                      dirichlet=np.zeros((S.ne, ntr)), source=rng.normal(size=(nt, nq)) * 1e-3)
    inp.dirichlet[:, 0] = 0.4

    def state():
        s = np.concatenate([np.full((nt, 1), 0.35 / np.sqrt(2)), rng.normal(size=(nt, nm - 1)) * 0.01], 1)
        sh = np.concatenate([np.full((S.ne, 1), 0.35), rng.normal(size=(S.ne, ntr - 1)) * 0.01], 1)
        return TransportState(rng.normal(size=(nt, 2, nm)) * 0.05, s, sh, 0.0, rng.normal(size=(nt, nm)) * 1e-3)

    prob = TransportProblem(S, model, inp, state(), dt=0.7, theta=theta)
    return S, prob, state


@pytest.fixture
def unit_model():
    return FluidModel(mobility="quadratic_chen", capillary="log_capillary")


@pytest.fixture
def dirichlet_bc():
    return all_dirichlet_bc()


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion that ran in this session."""
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
