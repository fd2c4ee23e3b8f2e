from __future__ import annotations

import copy

import numpy as np
import pytest

from hdg3p.config import build_scenario, header_fields, parse_text
from hdg3p.driver import Simulator
from hdg3p.errors import DomainError
from hdg3p.output import (
    OutputError,
    RunWriter,
    header_line,
    nodal_values,
    read_csv,
    sample_profile,
    snapshot_fields,
)

SMALL = "[run]\nscenario = homogeneous\nk = 2\n[mesh]\nN = 2\n[time]\nt_end_days = 1\n"


@pytest.fixture(scope="module")
def uniform_run():
    """Uniform initial state equal to the left boundary data: nothing moves."""
    cfg = parse_text(SMALL, overrides=["initial.s_w=0.3", "initial.s_g=0.54", "bc.left.s_w=0.3",
                                       "bc.left.s_g=0.54", "bc.left.pressure=15e6"])
    sim = Simulator(build_scenario(cfg))
    return cfg, sim, sim.run()


def writer(tmp_path, cfg, **kw):
    return RunWriter(str(tmp_path), header_fields(cfg, "structured-N2"), **kw)


def test_snapshot_rows_and_constant_values(tmp_path, uniform_run):
    cfg, sim, st = uniform_run
    w = writer(tmp_path, cfg)
    w.snapshot(sim, st)
    nn = sim.space.ref.nodes.shape[0]
    head, names, data = read_csv(tmp_path / "snapshot_000001_s_w.csv")
    assert head.startswith("# version=") and names == ["x", "y", "value"]
    assert data.shape == (sim.space.nt * nn, 3)
    assert np.allclose(data[:, 2], 0.3, atol=1e-12)
    _, _, so = read_csv(tmp_path / "snapshot_000001_s_o.csv")
    assert np.allclose(so[:, 2], 0.16, atol=1e-12)


def test_snapshot_round_trip_is_bit_identical(tmp_path, uniform_run):
    cfg, sim, st = uniform_run
    rng = np.random.default_rng(0)
    st = copy.deepcopy(st)
    st.wet.s = st.wet.s + rng.normal(size=st.wet.s.shape) * 0.01
    writer(tmp_path, cfg, postprocess=False).snapshot(sim, st)
    _, _, data = read_csv(tmp_path / f"snapshot_{st.step:06d}_s_w.csv")
    assert np.array_equal(data[:, 2], nodal_values(sim.space, st.wet.s).ravel())


def test_profile_has_requested_rows(tmp_path, uniform_run):
    cfg, sim, st = uniform_run
    path = writer(tmp_path, cfg).profile(sim, st, "y", 500.0)
    with open(path) as fh:
        lines = fh.read().splitlines()
    assert len(lines) == 1 + 1 + 1000
    _, names, data = read_csv(path)
    assert names == ["x", "s_w", "s_g", "p_o"]
    assert data[0, 0] == 0.0 and data[-1, 0] == 1000.0
    assert np.allclose(data[:, 1], 0.3, atol=1e-12) and np.allclose(data[:, 2], 0.54, atol=1e-12)


def test_profile_outside_domain(uniform_run):
    _, sim, st = uniform_run
    with pytest.raises(DomainError):
        sample_profile(sim, st, "x", 1500.0)


def test_postprocessed_fields_present(uniform_run):
    _, sim, st = uniform_run
    f = snapshot_fields(sim, st)
    assert list(f) == ["s_w", "s_g", "s_o", "p_o", "u_x", "u_y", "s_w_pp", "s_g_pp", "s_o_pp"]
    assert np.allclose(f["s_w_pp"], 0.3, atol=1e-12)
    assert "s_w_pp" not in snapshot_fields(sim, st, postprocessed=False)


def test_vtk_file(tmp_path, uniform_run):
    cfg, sim, st = uniform_run
    writer(tmp_path, cfg, vtk=True, postprocess=False).snapshot(sim, st)
    text = (tmp_path / "snapshot_000001.vtk").read_text().splitlines()
    assert text[0] == "# vtk DataFile Version 3.0" and text[3] == "DATASET UNSTRUCTURED_GRID"
    nt = sim.space.nt
    assert f"CELLS {nt} {4 * nt}" in text and text.count("5") >= nt
    assert "SCALARS s_w double 1" in text


def test_header_order():
    line = header_line({"seed": 0, "k": 3, "version": "1", "extra": "x"}, t=1.0)
    assert line == "# version=1 k=3 seed=0 extra=x t=1.0\n"


def test_write_failure_names_path(tmp_path):
    blocker = tmp_path / "f"
    blocker.write_text("")
    with pytest.raises(OutputError, match="f/sub"):
        RunWriter(str(blocker / "sub"), {})
