"""Run configuration: flat ``[section]`` / ``key = value`` text, presets and scenario building."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

from .driver import DAY, Scenario
from .errors import ConfigurationError, ParseError
from .fluid import CENTIPOISE, FluidModel
from .mesh import BOTTOM, FIELDS, LEFT, RIGHT, TOP, assign_rock, build_skeleton, delaunay_mesh, load_mesh, structured_mesh
from .nonlinear import NonlinearConfig
from .ref_element import MAX_DEGREE

__version__ = "0.1.0"

SCENARIOS = ("manufactured", "homogeneous", "lens", "disk", "random_perm", "checkerboard", "from_files")
TAG_NAMES = {"left": LEFT, "right": RIGHT, "bottom": BOTTOM, "top": TOP}


@dataclass(frozen=True)
class Key:
    section: str
    name: str
    kind: str            # int, float, str, bool, floats, ints
    default: object = None
    choices: tuple = ()
    doc: str = ""


SCHEMA = [
    Key("run", "scenario", "str", None, SCENARIOS, "scenario name"),
    Key("run", "k", "int", 4, doc="polynomial degree"),
    Key("run", "seed", "int", 0),
    Key("mesh", "kind", "str", "structured", ("structured", "delaunay", "file")),
    Key("mesh", "N", "int", 16, doc="squares per side for structured meshes"),
    Key("mesh", "n_elements", "int", 640),
    Key("mesh", "Lx", "float", 1000.0),
    Key("mesh", "Ly", "float", 1000.0),
    Key("mesh", "path", "str", ""),
    Key("time", "dt_days", "float", 1.0),
    Key("time", "t_end_days", "float", 100.0),
    Key("time", "dt_seconds", "float", 0.0, doc="overrides dt_days when positive"),
    Key("time", "t_end_seconds", "float", 0.0, doc="used when dt_seconds is positive"),
    Key("time", "time_scheme", "str", "backward_euler", ("backward_euler", "crank_nicolson")),
    Key("fluid", "mobility", "str", "brooks_corey_generalized",
        ("quadratic_chen", "linear_manufactured", "brooks_corey_generalized")),
    Key("fluid", "capillary", "str", "leverett_capillary",
        ("log_capillary", "leverett_capillary", "linear_capillary", "none")),
    Key("fluid", "mu_w_cp", "float", 0.5),
    Key("fluid", "mu_o_cp", "float", 1.0),
    Key("fluid", "mu_g_cp", "float", 0.3),
    Key("fluid", "a_g", "float", 0.5),
    Key("fluid", "eps_cap", "float", 1e-3),
    Key("fluid", "eps_log", "float", 0.01),
    Key("fluid", "s_wr", "float", 0.0),
    Key("fluid", "s_or", "float", 0.0),
    Key("fluid", "capillary_sign", "str", "absolute", ("absolute", "literal")),
    Key("fluid", "log_base", "float", float(np.e)),
    Key("rock", "kind", "str", "constant", ("constant", "lens", "disk", "random", "checkerboard")),
    Key("rock", "K", "float", 1e-10),
    Key("rock", "K_in", "float", 1e-13),
    Key("rock", "K_out", "float", 1e-10),
    Key("rock", "box", "floats", (250.0, 500.0, 250.0, 500.0), doc="x0 x1 y0 y1"),
    Key("rock", "center", "floats", (100.0, 100.0)),
    Key("rock", "radius", "float", 50.0),
    Key("rock", "K_min", "float", 1e-16),
    Key("rock", "K_max", "float", 1e-7),
    Key("rock", "mask", "str", "default", doc="0/1 grid file, first line = top row"),
    Key("rock", "K_low", "float", 1e-15),
    Key("rock", "K_high", "float", 1e-10),
    Key("rock", "porosity", "float", 0.2),
    Key("bc", "dirichlet_tags", "ints", (LEFT, RIGHT)),
    Key("bc", "neumann_tags", "ints", (BOTTOM, TOP)),
    Key("initial", "s_w", "float", 0.3),
    Key("initial", "s_g", "float", 0.54),
    Key("solver", "newton_tol", "float", 1e-12),
    Key("solver", "newton_max_iter", "int", 50),
    Key("solver", "anderson_depth", "int", 5),
    Key("solver", "anderson_max_iter", "int", 30),
    Key("solver", "anderson_tol", "float", 1e-6),
    Key("solver", "anderson_mixing", "float", 1.0),
    Key("solver", "backtracking", "bool", True),
    Key("solver", "max_halvings", "int", 8),
    Key("solver", "residual_guard", "float", 1e-9),
    Key("solver", "tau_scale", "float", 1.0),
    Key("solver", "tau_scale_c", "float", 1.0),
    Key("solver", "tau_scale_v", "float", 1.0),
    Key("solver", "tau_floor", "float", 1e-6),
    Key("solver", "outflow_upwind", "bool", True, doc="interior saturation in the convective flux on outflow Dirichlet edges"),
    Key("solver", "max_dt_halvings", "int", 4),
    Key("output", "directory", "str", "output"),
    Key("output", "snapshot_days", "floats", ()),
    Key("output", "snapshot_every", "int", 0, doc="steps between snapshots, 0 = only listed times and the end"),
    Key("output", "profiles", "str", "", doc="semicolon separated lines such as y=500;x=375"),
    Key("output", "profile_samples", "int", 1000),
    Key("output", "vtk", "bool", False),
    Key("output", "postprocess", "bool", True),
    Key("converge", "ks", "ints", (1, 2, 3)),
    Key("converge", "Ns", "ints", (8, 16, 32)),
    Key("converge", "dt", "float", 0.5),
    Key("converge", "t_end", "float", 0.5),
    Key("converge", "time_scheme", "str", "backward_euler", ("backward_euler", "crank_nicolson")),
    Key("converge", "mode", "str", "split_consistent", ("split_consistent", "continuous")),
]
SCHEMA_INDEX = {(k.section, k.name): k for k in SCHEMA}
SECTIONS = tuple(dict.fromkeys(k.section for k in SCHEMA))
BC_VALUE = re.compile(r"^(left|right|bottom|top|\d+)\.(pressure|s_w|s_g)$")

# Presets only list what differs from the schema defaults.
PRESETS = {
    "manufactured": {
        ("run", "k"): 2, ("mesh", "N"): 16, ("mesh", "Lx"): 1.0, ("mesh", "Ly"): 1.0,
        ("time", "dt_seconds"): 0.5, ("time", "t_end_seconds"): 0.5,
        ("fluid", "mobility"): "linear_manufactured", ("fluid", "capillary"): "linear_capillary",
        ("fluid", "mu_w_cp"): 1000.0, ("fluid", "mu_o_cp"): 1000.0, ("fluid", "mu_g_cp"): 1000.0,
        ("rock", "K"): 1e-4, ("bc", "dirichlet_tags"): (LEFT, RIGHT, BOTTOM, TOP), ("bc", "neumann_tags"): (),
    },
    "homogeneous": {},
    "lens": {("rock", "kind"): "lens"},
    "disk": {
        ("mesh", "kind"): "delaunay", ("mesh", "n_elements"): 640, ("mesh", "Lx"): 300.0, ("mesh", "Ly"): 200.0,
        ("time", "t_end_days"): 50.0, ("fluid", "mobility"): "quadratic_chen", ("fluid", "capillary"): "log_capillary",
        ("fluid", "mu_w_cp"): 1.0, ("fluid", "mu_o_cp"): 1.0, ("fluid", "mu_g_cp"): 1.0,
        ("rock", "kind"): "disk", ("rock", "K_in"): 1e-13, ("rock", "K_out"): 1e-9,
        ("output", "snapshot_days"): (12.5, 25.0, 37.5, 50.0),
    },
    "random_perm": {
        ("run", "k"): 5, ("mesh", "kind"): "delaunay", ("mesh", "n_elements"): 1104,
        ("time", "t_end_days"): 65.0, ("fluid", "mu_w_cp"): 1.0, ("fluid", "mu_o_cp"): 0.8,
        ("fluid", "mu_g_cp"): 0.9, ("rock", "kind"): "random",
    },
    "checkerboard": {
        ("time", "t_end_days"): 500.0, ("rock", "kind"): "checkerboard",
        ("output", "snapshot_days"): (150.0, 300.0, 450.0, 500.0),
    },
    "from_files": {("mesh", "kind"): "file"},
}
PRESET_BC = {
    "manufactured": {},
    "default": {"left.pressure": 19e6, "left.s_w": 0.82, "left.s_g": 0.11,
                "right.pressure": 15e6, "right.s_w": 0.3, "right.s_g": 0.54},
    "disk": {"left.pressure": 3e6, "left.s_w": 0.82, "left.s_g": 0.11,
             "right.pressure": 1e6, "right.s_w": 0.3, "right.s_g": 0.54},
}
PRESET_PROFILES = {"homogeneous": "y=500", "lens": "y=375;x=375"}


@dataclass
class RunConfig:
    """Validated configuration; ``values`` maps (section, key) to typed values."""

    values: dict = field(default_factory=dict)
    bc_values: dict = field(default_factory=dict)  # "left.pressure" -> float

    def get(self, section, name):
        return self.values[(section, name)]

    def __getitem__(self, dotted):
        s, n = dotted.split(".", 1)
        return self.values[(s, n)]

    @property
    def scenario(self):
        return self.values[("run", "scenario")]

    def serialize(self):
        return serialize(self)

    @property
    def hash(self):
        return hashlib.sha256(self.serialize().encode()).hexdigest()[:16]

    def dt(self):
        if self.get("time", "dt_seconds") > 0:
            return self.get("time", "dt_seconds")
        return self.get("time", "dt_days") * DAY

    def t_end(self):
        if self.get("time", "dt_seconds") > 0:
            return self.get("time", "t_end_seconds")
        return self.get("time", "t_end_days") * DAY

    def snapshot_times(self):
        unit = 1.0 if self.get("time", "dt_seconds") > 0 else DAY
        times = {float(t) * unit for t in self.get("output", "snapshot_days")}
        every = self.get("output", "snapshot_every")
        if every > 0:
            n = int(round(self.t_end() / self.dt()))
            times |= {m * self.dt() for m in range(0, n + 1, every)}
        times.add(self.t_end())
        return tuple(sorted(times))

    def nonlinear(self):
        g = lambda n: self.get("solver", n)  # noqa: E731
        return NonlinearConfig(g("newton_tol"), g("newton_max_iter"), g("anderson_depth"), g("anderson_max_iter"),
                               g("anderson_tol"), g("anderson_mixing"), 1e-12, g("backtracking"),
                               g("max_halvings"), g("residual_guard"))

    def fluid(self):
        g = lambda n: self.get("fluid", n)  # noqa: E731
        return FluidModel(g("mobility"), g("capillary"), g("mu_w_cp") * CENTIPOISE, g("mu_o_cp") * CENTIPOISE,
                          g("mu_g_cp") * CENTIPOISE, g("a_g"), g("eps_cap"), g("eps_log"), g("s_wr"), g("s_or"),
                          g("capillary_sign"), g("log_base"))

    def profiles(self):
        """Parsed profile lines as (axis, value) with axis in {"x", "y"}."""
        out = []
        for part in filter(None, (p.strip() for p in self.get("output", "profiles").split(";"))):
            m = re.fullmatch(r"([xy])\s*=\s*(\S+)", part)
            if not m:
                raise ConfigurationError(f"output.profiles: bad line spec {part!r}")
            out.append((m.group(1), float(m.group(2))))
        return out


# parsing ------------------------------------------------------------------------
def _convert(key, raw, line=None):
    try:
        if key.kind == "int":
            return int(raw)
        if key.kind == "float":
            return float(raw)
        if key.kind == "bool":
            low = raw.strip().lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if key.kind == "floats":
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if key.kind == "ints":
            return tuple(int(v) for v in raw.replace(",", " ").split())
        return raw.strip()
    except ValueError:
        raise ParseError(f"{key.section}.{key.name}: cannot read {raw!r} as {key.kind}", line) from None


def parse_text(text, source="<string>", overrides=()):
    """Parse config text into a validated :class:`RunConfig`.

    ``overrides`` are ``section.key=value`` strings applied after the text;
    unlike keys in the text they may replace an earlier value.
    """
    explicit = {}
    bc_explicit = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"\[(\w+)\]", line)
        if m:
            section = m.group(1)
            if section not in SECTIONS:
                raise ParseError(f"{source}: unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ParseError(f"{source}: expected 'key = value'", lineno)
        name, raw = (p.strip() for p in line.split("=", 1))
        if section is None:
            raise ParseError(f"{source}: key {name!r} outside any section", lineno)
        if section == "bc" and BC_VALUE.match(name):
            try:
                bc_explicit[name] = float(raw)
            except ValueError:
                raise ParseError(f"{source}: bc.{name} must be a number", lineno) from None
            continue
        key = SCHEMA_INDEX.get((section, name))
        if key is None:
            raise ParseError(f"{source}: unknown key {section}.{name}", lineno)
        if (section, name) in explicit:
            raise ParseError(f"{source}: duplicate key {section}.{name}", lineno)
        value = _convert(key, raw, lineno)
        if key.choices and value not in key.choices:
            raise ParseError(f"{source}: {section}.{name} must be one of {', '.join(key.choices)}", lineno)
        explicit[(section, name)] = value
    for item in overrides:
        sec, name, value = parse_override(item)
        if sec == "bc" and BC_VALUE.match(name):
            bc_explicit[name] = value
        else:
            explicit[(sec, name)] = value
    return build_config(explicit, bc_explicit)


def parse_override(item):
    """Split and convert one ``section.key=value`` override."""
    if "=" not in item or "." not in item.split("=", 1)[0]:
        raise ParseError(f"override {item!r} is not of the form section.key=value")
    dotted, raw = (p.strip() for p in item.split("=", 1))
    sec, name = dotted.split(".", 1)
    if sec == "bc" and BC_VALUE.match(name):
        try:
            return sec, name, float(raw)
        except ValueError:
            raise ParseError(f"override bc.{name} must be a number") from None
    key = SCHEMA_INDEX.get((sec, name))
    if key is None:
        raise ParseError(f"override: unknown key {dotted}")
    value = _convert(key, raw)
    if key.choices and value not in key.choices:
        raise ParseError(f"override: {dotted} must be one of {', '.join(key.choices)}")
    return sec, name, value


def parse_config(path, overrides=()):
    """Read a config file; ``preset:NAME`` selects a built-in scenario instead."""
    path = str(path)
    if path.startswith("preset:"):
        name = path.split(":", 1)[1]
        if name not in PRESETS:
            raise ConfigurationError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
        return parse_text(f"[run]\nscenario = {name}\n", path, overrides)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_text(text, path, overrides)


def required_keys(scenario=None):
    req = ["run.scenario"]
    if scenario == "from_files":
        req.append("mesh.path")
    return req


def build_config(explicit, bc_explicit=None):
    """Merge explicit values over the scenario preset and schema defaults, then validate."""
    scenario = explicit.get(("run", "scenario"))
    if scenario is None:
        raise ConfigurationError("missing required keys: " + ", ".join(required_keys()))
    values = {(k.section, k.name): k.default for k in SCHEMA}
    values.update(PRESETS[scenario])
    if scenario in PRESET_PROFILES:
        values[("output", "profiles")] = PRESET_PROFILES[scenario]
    values.update(explicit)
    bc = dict(PRESET_BC.get(scenario, PRESET_BC["default"]))
    bc.update(bc_explicit or {})
    cfg = RunConfig(values, dict(sorted(bc.items())))
    validate(cfg, explicit)
    return cfg


def preset(name, **overrides):
    """Config for a built-in scenario; overrides use ``section__key`` names."""
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    explicit = {("run", "scenario"): name}
    bc = {}
    for k, v in overrides.items():
        sec, key = k.split("__", 1)
        if sec == "bc" and BC_VALUE.match(key):
            bc[key] = float(v)
            continue
        if (sec, key) not in SCHEMA_INDEX:
            raise ConfigurationError(f"unknown key {sec}.{key}")
        explicit[(sec, key)] = tuple(v) if isinstance(v, list) else v
    return build_config(explicit, bc)


def validate(cfg, explicit=()):
    v = cfg.values
    missing = [f"{s}.{n}" for s, n in [tuple(r.split(".")) for r in required_keys(cfg.scenario)]
               if (s, n) not in explicit and not v.get((s, n))]
    if missing:
        raise ConfigurationError("missing required keys: " + ", ".join(missing))
    k = v[("run", "k")]
    if not 1 <= k <= MAX_DEGREE:
        raise ConfigurationError(f"run.k must lie in [1, {MAX_DEGREE}], got {k}")
    if v[("mesh", "N")] < 1 or v[("mesh", "n_elements")] < 2:
        raise ConfigurationError("mesh size must be positive")
    if v[("mesh", "Lx")] <= 0 or v[("mesh", "Ly")] <= 0:
        raise ConfigurationError("mesh.Lx and mesh.Ly must be positive")
    if v[("time", "dt_seconds")] > 0:
        if v[("time", "t_end_seconds")] < 0:
            raise ConfigurationError("time.t_end_seconds must be non-negative")
    elif v[("time", "dt_days")] <= 0 or v[("time", "t_end_days")] < 0:
        raise ConfigurationError("time.dt_days must be positive and time.t_end_days non-negative")
    span, dt = cfg.t_end(), cfg.dt()
    if abs(round(span / dt) * dt - span) > 1e-9 * max(span, dt):
        raise ConfigurationError("time: t_end must be an integer multiple of dt")
    if not 0 < v[("rock", "porosity")] <= 1:
        raise ConfigurationError("rock.porosity must lie in (0, 1]")
    for name in ("K", "K_in", "K_out", "K_min", "K_max", "K_low", "K_high"):
        if v[("rock", name)] <= 0:
            raise ConfigurationError(f"rock.{name} must be positive")
    if len(v[("rock", "box")]) != 4 or len(v[("rock", "center")]) != 2:
        raise ConfigurationError("rock.box needs 4 numbers and rock.center 2")
    for n in ("tau_scale", "tau_scale_c", "tau_scale_v"):
        if v[("solver", n)] <= 0:
            raise ConfigurationError(f"solver.{n} must be positive")
    if v[("solver", "tau_floor")] < 0 or v[("solver", "max_dt_halvings")] < 0:
        raise ConfigurationError("solver.tau_floor and solver.max_dt_halvings must be non-negative")
    if v[("output", "profile_samples")] < 2:
        raise ConfigurationError("output.profile_samples must be at least 2")
    if any(t < 0 for t in v[("output", "snapshot_days")]):
        raise ConfigurationError("output.snapshot_days must be non-negative")
    if any(kk < 1 or kk > MAX_DEGREE for kk in v[("converge", "ks")]) or any(n < 1 for n in v[("converge", "Ns")]):
        raise ConfigurationError("converge.ks must lie in [1, 16] and converge.Ns be positive")
    dir_tags = set(v[("bc", "dirichlet_tags")])
    if dir_tags & set(v[("bc", "neumann_tags")]):
        raise ConfigurationError("bc: a tag cannot be both Dirichlet and Neumann")
    if cfg.scenario != "manufactured":
        names = {tag: name for name, tag in TAG_NAMES.items()}
        for tag in sorted(dir_tags):
            for fld in FIELDS:
                keys = [f"{names.get(tag, tag)}.{fld}", f"{tag}.{fld}"]
                if not any(kk in cfg.bc_values for kk in keys):
                    raise ConfigurationError(f"bc: missing Dirichlet value {keys[0]}")
        for key, val in cfg.bc_values.items():
            if not key.endswith("pressure") and not 0 <= val <= 1:
                raise ConfigurationError(f"bc.{key} must lie in [0, 1]")
        s0w, s0g = v[("initial", "s_w")], v[("initial", "s_g")]
        if min(s0w, s0g) < 0 or s0w + s0g > 1:
            raise ConfigurationError("initial saturations must be non-negative with s_w + s_g <= 1")
    cfg.fluid()  # validates the closure parameters
    cfg.nonlinear()
    cfg.profiles()


# serialization ------------------------------------------------------------------
def _fmt(key, value):
    if key.kind == "bool":
        return "true" if value else "false"
    if key.kind == "float":
        return repr(float(value))
    if key.kind in ("floats", "ints"):
        return " ".join(repr(float(x)) if key.kind == "floats" else str(int(x)) for x in value)
    return str(value)


def serialize(cfg):
    """Canonical text listing every effective value, parseable by :func:`parse_text`."""
    lines = []
    for sec in SECTIONS:
        lines.append(f"[{sec}]")
        for key in SCHEMA:
            if key.section == sec:
                lines.append(f"{key.name} = {_fmt(key, cfg.values[(sec, key.name)])}".rstrip())
        if sec == "bc":
            for name, val in cfg.bc_values.items():
                lines.append(f"{name} = {val!r}")
        lines.append("")
    return "\n".join(lines)


def header_fields(cfg, mesh_desc):
    return {"version": __version__, "config_hash": cfg.hash, "scenario": cfg.scenario,
            "k": cfg.get("run", "k"), "mesh": mesh_desc, "dt": repr(cfg.dt()),
            "time_scheme": cfg.get("time", "time_scheme"), "seed": cfg.get("run", "seed")}


# scenario construction ------------------------------------------------------------
def build_mesh(cfg):
    g = lambda n: cfg.get("mesh", n)  # noqa: E731
    kind = g("kind")
    if cfg.scenario == "manufactured":
        return structured_mesh(g("N"))
    if kind == "structured":
        mesh = structured_mesh(g("N"), g("Lx"), g("Ly"))
    elif kind == "delaunay":
        circles = ()
        if cfg.get("rock", "kind") == "disk":
            cx, cy = cfg.get("rock", "center")
            circles = ((cx, cy, cfg.get("rock", "radius")),)
        mesh = delaunay_mesh(g("Lx"), g("Ly"), g("n_elements"), circles=circles, seed=cfg.get("run", "seed"))
    else:
        if not g("path"):
            raise ConfigurationError("mesh.path is required for file meshes")
        mesh = load_mesh(g("path"))
    r = lambda n: cfg.get("rock", n)  # noqa: E731
    rk = r("kind")
    spec = {"kind": rk, "porosity": r("porosity")}
    if rk == "constant":
        spec["K"] = r("K")
    elif rk == "lens":
        x0, x1, y0, y1 = r("box")
        spec.update(box=((x0, x1), (y0, y1)), K_in=r("K_in"), K_out=r("K_out"))
    elif rk == "disk":
        spec.update(center=r("center"), radius=r("radius"), K_in=r("K_in"), K_out=r("K_out"))
    elif rk == "random":
        spec.update(K_min=r("K_min"), K_max=r("K_max"), seed=cfg.get("run", "seed"))
    elif rk == "checkerboard":
        spec.update(K_low=r("K_low"), K_high=r("K_high"))
        if r("mask") != "default":
            spec["mask"] = r("mask")
    return assign_rock(mesh, spec)


def bc_spec(cfg):
    d, n = set(cfg.get("bc", "dirichlet_tags")), set(cfg.get("bc", "neumann_tags"))
    return {f: {"dirichlet": d, "neumann": n} for f in FIELDS}


def build_scenario(cfg, mesh=None):
    """Scenario object for the driver."""
    from .verify import manufactured_scenario

    if cfg.scenario == "manufactured":
        g = lambda n: cfg.get("run", n)  # noqa: E731
        return manufactured_scenario(
            g("k"), cfg.get("mesh", "N"), cfg.dt(), cfg.t_end(), cfg.get("time", "time_scheme"),
            nonlinear=cfg.nonlinear(), tau_scale=cfg.get("solver", "tau_scale"),
            tau_scale_c=cfg.get("solver", "tau_scale_c"), tau_scale_v=cfg.get("solver", "tau_scale_v"),
            tau_floor=cfg.get("solver", "tau_floor"), outflow_upwind=cfg.get("solver", "outflow_upwind"),
            max_dt_halvings=cfg.get("solver", "max_dt_halvings"),
            snapshot_times=cfg.snapshot_times(), postprocess=cfg.get("output", "postprocess"))
    mesh = build_mesh(cfg) if mesh is None else mesh
    names = {tag: name for name, tag in TAG_NAMES.items()}
    table = {}
    for tag in cfg.get("bc", "dirichlet_tags"):
        for fld in FIELDS:
            key = f"{names.get(tag, tag)}.{fld}"
            table[(tag, fld)] = cfg.bc_values.get(key, cfg.bc_values.get(f"{tag}.{fld}"))

    def boundary(fld, tag, x, y, t):
        return np.full(np.shape(x), table[(tag, fld)])

    init = {"s_w": cfg.get("initial", "s_w"), "s_g": cfg.get("initial", "s_g")}

    def initial(fld, x, y):
        return np.full(np.shape(x), init[fld])

    s = lambda n: cfg.get("solver", n)  # noqa: E731
    return Scenario(
        mesh=mesh, bc_spec=bc_spec(cfg), model=cfg.fluid(), k=cfg.get("run", "k"), dt=cfg.dt(),
        t_end=cfg.t_end(), boundary=boundary, initial=initial, time_scheme=cfg.get("time", "time_scheme"),
        nonlinear=cfg.nonlinear(), tau_scale=s("tau_scale"), tau_scale_c=s("tau_scale_c"),
        tau_scale_v=s("tau_scale_v"), tau_floor=s("tau_floor"), outflow_upwind=s("outflow_upwind"),
        max_dt_halvings=s("max_dt_halvings"), snapshot_times=cfg.snapshot_times(), postprocess=cfg.get("output", "postprocess"), name=cfg.scenario)


def check_mesh_bc(cfg, mesh):
    """Every tag named in the bc section must exist on the mesh."""
    skel = build_skeleton(mesh, bc_spec(cfg))
    present = set(np.unique(skel.boundary_tag[skel.is_boundary]).tolist())
    missing = (set(cfg.get("bc", "dirichlet_tags")) | set(cfg.get("bc", "neumann_tags"))) - present
    if missing:
        raise ConfigurationError(f"bc tags {sorted(missing)} do not occur on the mesh boundary")
    return skel
