from __future__ import annotations

import numpy as np
import pytest

from hdg3p.config import PRESETS, build_scenario, parse_config, parse_text, preset, serialize
from hdg3p.errors import ConfigurationError, ParseError
from hdg3p.fluid import CENTIPOISE

SMALL = "[run]\nscenario = homogeneous\nk = 1\n[mesh]\nN = 2\n[time]\nt_end_days = 2\n"


def test_homogeneous_preset_values():
    cfg = preset("homogeneous")
    assert cfg.get("rock", "K") == 1e-10 and cfg.get("rock", "porosity") == 0.2
    m = cfg.fluid()
    assert (m.mu_w, m.mu_o, m.mu_g) == (0.5 * CENTIPOISE, 1.0 * CENTIPOISE, 0.3 * CENTIPOISE)
    assert cfg.bc_values == {"left.pressure": 19e6, "left.s_g": 0.11, "left.s_w": 0.82,
                             "right.pressure": 15e6, "right.s_g": 0.54, "right.s_w": 0.3}
    assert cfg.dt() == 86400.0 and cfg.t_end() == 100 * 86400.0


def test_disk_preset_values():
    cfg = preset("disk")
    mesh = build_scenario(cfg).mesh
    (x0, y0), (x1, y1) = mesh.bounding_box
    assert (x0, y0, x1, y1) == (0.0, 0.0, 300.0, 200.0)
    assert cfg.get("rock", "center") == (100.0, 100.0) and cfg.get("rock", "radius") == 50.0
    assert cfg.get("rock", "K_out") / cfg.get("rock", "K_in") == pytest.approx(1e4)
    m = cfg.fluid()
    assert m.mu_w == m.mu_o == m.mu_g == CENTIPOISE
    assert cfg.dt() == 86400.0


def test_empty_config_lists_required_keys():
    with pytest.raises(ConfigurationError, match="run.scenario"):
        parse_text("")


@pytest.mark.parametrize("name", [n for n in PRESETS if n != "from_files"])
def test_serialization_round_trip(name):
    cfg = preset(name)
    text = serialize(cfg)
    again = parse_text(text)
    assert serialize(again) == text
    assert again.hash == cfg.hash


def test_from_files_requires_a_path():
    with pytest.raises(ConfigurationError, match="mesh.path"):
        preset("from_files")


@pytest.mark.parametrize("text,line", [
    ("[run]\nscenario = homogeneous\nbogus = 1\n", 3),
    ("[nowhere]\n", 1),
    ("[run]\nscenario = homogeneous\nk = two\n", 3),
    ("[run]\nscenario = homogeneous\nk = 2\nk = 3\n", 4),
    ("scenario = homogeneous\n", 1),
    ("[run]\nscenario homogeneous\n", 2),
    ("[run]\nscenario = nowhere\n", 2),
    ("[run]\nscenario = homogeneous\n[bc]\nleft.s_w = wet\n", 4),
])
def test_parse_errors_name_the_line(text, line):
    with pytest.raises(ParseError) as info:
        parse_text(text)
    assert info.value.line == line


@pytest.mark.parametrize("override", [
    "run.k=0", "run.k=17", "time.dt_days=0", "time.t_end_days=2.5", "rock.porosity=0", "rock.K=-1",
    "bc.left.s_w=1.5", "initial.s_w=0.9", "fluid.mu_w_cp=0", "solver.newton_tol=0",
    "output.profiles=z=3", "bc.neumann_tags=1 3",
])
def test_out_of_range_values(override):
    with pytest.raises((ConfigurationError, ParseError)):
        parse_text(SMALL, overrides=[override])


def test_missing_dirichlet_value():
    with pytest.raises(ConfigurationError, match="bottom"):
        parse_text(SMALL, overrides=["bc.dirichlet_tags=1 2 3", "bc.neumann_tags=4"])
    cfg = parse_text(SMALL, overrides=["bc.dirichlet_tags=1 2 3", "bc.neumann_tags=4", "bc.bottom.pressure=1e6",
                                       "bc.bottom.s_w=0.5", "bc.bottom.s_g=0.2"])
    assert cfg.bc_values["bottom.s_w"] == 0.5


def test_overrides_replace_text_values():
    cfg = parse_text(SMALL, overrides=["run.k=3", "output.snapshot_days=1 2"])
    assert cfg.get("run", "k") == 3
    assert cfg.snapshot_times() == (86400.0, 172800.0)
    with pytest.raises(ParseError):
        parse_text(SMALL, overrides=["k=3"])


def test_snapshot_cadence():
    cfg = parse_text(SMALL, overrides=["time.t_end_days=4", "output.snapshot_every=2"])
    assert cfg.snapshot_times() == tuple(d * 86400.0 for d in (0, 2, 4))


def test_config_file_and_preset_paths(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(SMALL + "# comment\n")
    assert parse_config(p).get("mesh", "N") == 2
    assert parse_config("preset:lens").get("rock", "kind") == "lens"
    with pytest.raises(ConfigurationError):
        parse_config(tmp_path / "missing.cfg")
    with pytest.raises(ConfigurationError):
        parse_config("preset:volcano")


def test_scenario_boundary_and_initial_data():
    sc = build_scenario(parse_text(SMALL))
    x = np.array([0.0, 1.0])
    assert np.all(sc.boundary("s_w", 1, x, x, 0.0) == 0.82)
    assert np.all(sc.initial("s_g", x, x) == 0.54)
    assert sc.k == 1 and sc.mesh.n_elements == 8


def test_manufactured_preset_builds_forcing():
    sc = build_scenario(preset("manufactured", mesh__N=4))
    assert sc.forcing is not None and sc.dt == 0.5 and sc.t_end == 0.5
