"""Command line interface: ``hdg3p run|converge|mesh-info|presets``.

Exit codes: 0 success, 2 configuration or input error, 3 solver failure,
1 anything else (for instance an unwritable output directory).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import config as cfgmod
from .config import PRESETS, __version__, parse_config
from .driver import DAY, Simulator
from .errors import ConfigurationError, DomainError, HDGError, NumericalError, ParseError, SolverError
from .mesh import FIELDS, build_skeleton, dof_counts, load_mesh, rectangle_bc
from .output import OutputError, RunWriter

log = logging.getLogger("hdg3p")

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

PRESET_NOTES = {
    "manufactured": "unit square, smooth exact solution, linear closures (convergence study)",
    "homogeneous": "1000 m square, constant K, left-to-right displacement over 100 days",
    "lens": "homogeneous setup with a low permeability square lens",
    "disk": "300 m x 200 m channel around a low permeability disk, 50 days",
    "random_perm": "element-wise log-uniform random permeability, degree 5, 65 days",
    "checkerboard": "two-valued checkerboard permeability, 500 days",
    "from_files": "mesh and rock read from files given in the config",
}


def _mesh_desc(cfg, mesh):
    kind = cfg.get("mesh", "kind")
    if cfg.scenario == "manufactured" or kind == "structured":
        return f"structured-N{cfg.get('mesh', 'N')}-nt{mesh.n_elements}"
    if kind == "delaunay":
        return f"delaunay-nt{mesh.n_elements}"
    return f"file:{os.path.basename(cfg.get('mesh', 'path'))}-nt{mesh.n_elements}"


def _provenance(cfg):
    """Every effective value, one comment line each, for the run log."""
    return "".join(f"# {line}\n" for line in cfg.serialize().splitlines() if line)


def cmd_run(args):
    cfg = parse_config(args.config, args.set)
    mesh = cfgmod.build_mesh(cfg)
    if cfg.scenario != "manufactured":
        cfgmod.check_mesh_bc(cfg, mesh)
    scenario = cfgmod.build_scenario(cfg, mesh)
    header = cfgmod.header_fields(cfg, _mesh_desc(cfg, mesh))
    outdir = args.output or cfg.get("output", "directory")
    writer = RunWriter(outdir, header, postprocess=cfg.get("output", "postprocess"),
                       vtk=cfg.get("output", "vtk"), profiles=tuple(cfg.profiles()),
                       profile_samples=cfg.get("output", "profile_samples"))
    writer.config(cfg.serialize())
    sim = Simulator(scenario)
    unit = 1.0 if cfg.get("time", "dt_seconds") > 0 else DAY

    def on_step(state):
        if not args.quiet:
            print(f"step {state.step:5d}  t = {state.t / unit:.6g}", flush=True)

    try:
        state = sim.run(on_step=on_step, on_snapshot=lambda st: writer.snapshot(sim, st))
    except HDGError as exc:
        writer.run_log(sim.log, _provenance(cfg))
        writer.failure(f"{type(exc).__name__}: {exc}")
        raise
    writer.run_log(sim.log, _provenance(cfg))
    if not args.quiet:
        sw, sg = sim.space.vol(state.wet.s), sim.space.vol(state.gas.s)
        print(f"finished t = {state.t / unit:.6g} after {state.step} steps; "
              f"s_w in [{sw.min():.4f}, {sw.max():.4f}], s_g in [{sg.min():.4f}, {sg.max():.4f}]")
        print(f"{len(writer.written)} files written to {outdir}")
    return EXIT_OK


def cmd_converge(args):
    from .verify import convergence_study

    cfg = parse_config(args.config, args.set)
    if cfg.scenario != "manufactured":
        raise ConfigurationError("converge needs run.scenario = manufactured")
    g = lambda n: cfg.get("converge", n)  # noqa: E731
    ks, Ns = g("ks"), g("Ns")
    header = cfgmod.header_fields(cfg, "structured-N" + "/".join(map(str, Ns)))
    header.update(dt=repr(g("dt")), time_scheme=g("time_scheme"))
    writer = RunWriter(args.output or cfg.get("output", "directory"), header, postprocess=True)
    writer.config(cfg.serialize())

    def progress(k, N, report):
        if not args.quiet:
            status = "failed" if (k, N) in report.failures else "done"
            print(f"k={k} N={N} {status} in {report.timings[(k, N)]:.1f} s", flush=True)

    report = convergence_study(ks, Ns, dt=g("dt"), t_end=g("t_end"), time_scheme=g("time_scheme"),
                               mode=g("mode"), nonlinear=cfg.nonlinear(), progress=progress)
    writer.convergence(report)
    print(report.to_text(), end="")
    if report.failures:
        raise SolverError(f"{len(report.failures)} convergence run(s) failed")
    return EXIT_OK


def cmd_mesh_info(args):
    mesh = load_mesh(args.mesh, reorient=args.reorient)
    tags = np.unique(mesh.boundary_edges[:, 2]) if len(mesh.boundary_edges) else np.array([], int)
    spec = {f: {"dirichlet": {int(t) for t in tags}, "neumann": set()} for f in FIELDS} if len(tags) else rectangle_bc()
    skel = build_skeleton(mesh, spec)
    area = np.abs(mesh.signed_areas)
    (x0, y0), (x1, y1) = mesh.bounding_box
    print(f"vertices        {len(mesh.vertices)}")
    print(f"elements        {mesh.n_elements}")
    print(f"edges           {skel.n_edges} ({skel.n_boundary_edges} on the boundary)")
    print(f"bounding box    [{x0:g}, {x1:g}] x [{y0:g}, {y1:g}]")
    print(f"element area    min {area.min():.6g}  max {area.max():.6g}  total {area.sum():.6g}")
    for t in tags:
        print(f"boundary tag {int(t):<3d} {int(np.sum(mesh.boundary_edges[:, 2] == t))} edges")
    for k in args.k:
        dg, hdg, ratio = dof_counts(mesh, skel, k)
        print(f"k={k:<3d} DG dofs {dg}  HDG trace dofs {hdg}  ratio {ratio:.4f}")
    return EXIT_OK


def cmd_presets(args):
    if args.name:
        if args.name not in PRESETS:
            raise ConfigurationError(f"unknown preset {args.name!r}; choose from {', '.join(PRESETS)}")
        if args.name == "from_files":
            raise ConfigurationError("from_files has no complete default; it needs mesh.path")
        print(cfgmod.preset(args.name).serialize(), end="")
        return EXIT_OK
    width = max(map(len, PRESETS))
    for name in PRESETS:
        print(f"{name:<{width}}  {PRESET_NOTES.get(name, '')}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="hdg3p", description="HDG solver for incompressible three-phase flow.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="config file, or preset:NAME for a built-in scenario")
        sp.add_argument("-o", "--output", help="output directory (overrides output.directory)")
        sp.add_argument("-s", "--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value; may be repeated")
        sp.add_argument("-q", "--quiet", action="store_true")

    common(sub.add_parser("run", help="run a scenario and write snapshots, profiles and the run log"))
    common(sub.add_parser("converge", help="manufactured convergence study"))
    mi = sub.add_parser("mesh-info", help="summarize a mesh file")
    mi.add_argument("mesh")
    mi.add_argument("-k", type=int, nargs="*", default=[1, 4], help="degrees for the dof table")
    mi.add_argument("--reorient", action="store_true", help="flip clockwise triangles instead of failing")
    pr = sub.add_parser("presets", help="list built-in scenarios or print one as a config")
    pr.add_argument("name", nargs="?")
    return p


COMMANDS = {"run": cmd_run, "converge": cmd_converge, "mesh-info": cmd_mesh_info, "presets": cmd_presets}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, ParseError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, NumericalError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER
    except HDGError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
