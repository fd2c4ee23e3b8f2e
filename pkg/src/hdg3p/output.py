"""File emission: nodal snapshots, line profiles, run logs and convergence tables.

Every file starts with one ``#`` line carrying provenance (version, config
hash, scenario, degree, mesh, time step, scheme, seed). Numbers are written
with 17 significant digits and LF line endings so identical runs produce
identical bytes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, HDGError
from .postprocess import evaluate
from .ref_element import pkd_values

FMT = "%.17g"
HEADER_ORDER = ("version", "config_hash", "scenario", "k", "mesh", "dt", "time_scheme", "seed")


class OutputError(HDGError, OSError):
    """A file could not be written; the message names the path."""


def header_line(fields, **extra):
    items = [(k, fields[k]) for k in HEADER_ORDER if k in fields]
    items += [(k, v) for k, v in fields.items() if k not in HEADER_ORDER]
    items += list(extra.items())
    return "# " + " ".join(f"{k}={v}" for k, v in items) + "\n"


def _write(path, text):
    try:
        with open(path, "w", newline="\n", encoding="ascii") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _rows(columns):
    """CSV body for equally long numeric columns."""
    data = np.column_stack([np.asarray(c, dtype=float).ravel() for c in columns])
    return "".join(",".join(FMT % v for v in row) + "\n" for row in data)


def read_csv(path):
    """(header line, column names, data array) of a file written here."""
    with open(path, encoding="ascii") as fh:
        head = fh.readline().rstrip("\n")
        names = fh.readline().rstrip("\n").split(",")
        # empty cells (rates of the coarsest level) read as nan
        data = np.genfromtxt(fh, delimiter=",", ndmin=2)
    return head, names, data


# nodal fields ----------------------------------------------------------------------
def node_coordinates(space):
    """Physical coordinates of the reference nodes of every element, (nt, nn, 2)."""
    V = space.mesh.vertices[space.mesh.triangles]
    r = space.ref.nodes
    return V[:, None, 0] + np.einsum("na,eba->enb", r, np.stack([V[:, 1] - V[:, 0], V[:, 2] - V[:, 0]], axis=2))


def nodal_values(space, coeffs):
    """Modal field of any degree evaluated at the degree-k element nodes."""
    nm = coeffs.shape[-1]
    k = int(round((np.sqrt(8 * nm + 1) - 3) / 2))
    return coeffs @ pkd_values(k, space.ref.nodes).T


def snapshot_fields(sim, state, postprocessed=True):
    """Ordered mapping of field name to nodal values (nt, nn)."""
    sp_ = sim.space
    out = {"s_w": nodal_values(sp_, state.wet.s),
           "s_g": nodal_values(sp_, state.gas.s),
           "s_o": nodal_values(sp_, state.s_o()),
           "p_o": nodal_values(sp_, state.darcy.P)}
    U = nodal_values(sp_, state.darcy.U)
    out["u_x"], out["u_y"] = U[:, 0], U[:, 1]
    if postprocessed:
        for name, c in zip(("s_w_pp", "s_g_pp", "s_o_pp"), sim.postprocessed(state)):
            out[name] = nodal_values(sp_, c)
    return out


def write_vtk(path, space, fields, title="hdg3p"):
    """Legacy ASCII unstructured grid of the element corner triangles.

    Points are duplicated per element so discontinuities survive; all element
    nodes are listed as points, only the corners are connected.
    """
    xy = node_coordinates(space).reshape(-1, 2)
    nt, nn = space.nt, space.ref.nodes.shape[0]
    corners = _corner_nodes(space.ref.nodes)
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(xy)} double"]
    lines += [f"{FMT % x} {FMT % y} 0" for x, y in xy]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {e * nn + corners[0]} {e * nn + corners[1]} {e * nn + corners[2]}" for e in range(nt)]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    lines.append(f"POINT_DATA {len(xy)}")
    for name, vals in fields.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [FMT % v for v in np.asarray(vals).ravel()]
    return _write(path, "\n".join(lines) + "\n")


def _corner_nodes(nodes):
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return [int(np.argmin(np.sum((nodes - c) ** 2, axis=1))) for c in ref]


# profiles ------------------------------------------------------------------------
def profile_points(space, axis, value, n):
    """``n`` uniform sample points along x=value or y=value across the mesh box."""
    (x0, y0), (x1, y1) = space.mesh.bounding_box
    lo, hi = (y0, y1) if axis == "x" else (x0, x1)
    cross_lo, cross_hi = (x0, x1) if axis == "x" else (y0, y1)
    if not cross_lo <= value <= cross_hi:
        raise DomainError(f"profile line {axis}={value} lies outside the domain")
    t = np.linspace(lo, hi, n)
    pts = np.column_stack([np.full(n, value), t]) if axis == "x" else np.column_stack([t, np.full(n, value)])
    return t, pts


def sample_profile(sim, state, axis, value, n=1000):
    """Coordinate along the line and s_w, s_g, p_o from the volume expansions."""
    sp_ = sim.space
    t, pts = profile_points(sp_, axis, value, n)
    elem, xi = sp_.locate(pts)
    if np.any(elem < 0):
        bad = pts[np.argmax(elem < 0)]
        raise DomainError(f"profile line {axis}={value}: point {tuple(bad)} is outside the mesh")
    return t, {name: evaluate(c, elem, xi) for name, c in
               (("s_w", state.wet.s), ("s_g", state.gas.s), ("p_o", state.darcy.P))}


# writer --------------------------------------------------------------------------
@dataclass
class RunWriter:
    """Writes all artifacts of one run below ``directory``."""

    directory: str
    header: dict
    postprocess: bool = True
    vtk: bool = False
    profiles: tuple = ()
    profile_samples: int = 1000

    def __post_init__(self):
        try:
            os.makedirs(self.directory, exist_ok=True)
        except OSError as exc:
            raise OutputError(f"cannot create {self.directory}: {exc.strerror or exc}") from exc
        self.written = []

    def _path(self, name):
        return os.path.join(self.directory, name)

    def _emit(self, name, text):
        self.written.append(_write(self._path(name), text))
        return self.written[-1]

    def snapshot(self, sim, state):
        tag = f"{state.step:06d}"
        head = header_line(self.header, t=repr(state.t), step=state.step)
        xy = node_coordinates(sim.space).reshape(-1, 2)
        fields = snapshot_fields(sim, state, self.postprocess)
        for name, vals in fields.items():
            self._emit(f"snapshot_{tag}_{name}.csv", head + "x,y,value\n" + _rows([xy[:, 0], xy[:, 1], vals]))
        if self.vtk:
            self.written.append(write_vtk(self._path(f"snapshot_{tag}.vtk"), sim.space, fields,
                                          title=head.strip("# \n")))
        for axis, value in self.profiles:
            self.profile(sim, state, axis, value, tag)

    def profile(self, sim, state, axis, value, tag=None):
        tag = f"{state.step:06d}" if tag is None else tag
        t, vals = sample_profile(sim, state, axis, value, self.profile_samples)
        head = header_line(self.header, t=repr(state.t), step=state.step, line=f"{axis}={value!r}")
        coord = "y" if axis == "x" else "x"
        body = f"{coord},s_w,s_g,p_o\n" + _rows([t, vals["s_w"], vals["s_g"], vals["p_o"]])
        return self._emit(f"profile_{tag}_{axis}{value:g}.csv", head + body)

    def run_log(self, records, provenance=""):
        """Solver history; ``provenance`` (comment lines) follows the header line."""
        body = "step,phase,stage,iter,res_norm,inc_norm\n" + "".join(
            f"{r.step},{r.phase},{r.stage},{r.iter},{FMT % r.res_norm},{FMT % r.inc_norm}\n" for r in records)
        return self._emit("run_log.csv", header_line(self.header) + provenance + body)

    def config(self, text):
        return self._emit("config.txt", text)

    def failure(self, message):
        return self._emit("failure.txt", header_line(self.header) + message.rstrip("\n") + "\n")

    def convergence(self, report):
        head = header_line(self.header)
        self._emit("convergence.csv", head + report.to_csv())
        return self._emit("convergence.txt", head + report.to_text())
