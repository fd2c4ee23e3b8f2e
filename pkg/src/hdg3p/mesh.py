"""Triangulation, skeleton connectivity, boundary tagging and rock properties."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ParseError

log = logging.getLogger(__name__)

FIELDS = ("pressure", "s_w", "s_g")
INTERIOR, DIRICHLET, NEUMANN = 0, 1, 2

# boundary tags of generated rectangles
LEFT, RIGHT, BOTTOM, TOP = 1, 2, 3, 4

DEFAULT_POROSITY = 0.2


@dataclass(frozen=True, eq=False)
class Mesh:
    """Straight-sided triangulation with per-element rock properties.

    ``boundary_edges`` rows are ``(v0, v1, tag)``. ``element_perm`` is either
    shape (nt,) for scalar permeability or (nt, 2, 2) for tensors.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    element_perm: np.ndarray = None
    element_poro: np.ndarray = None

    def __post_init__(self):
        nt = len(self.triangles)
        if self.element_perm is None:
            object.__setattr__(self, "element_perm", np.ones(nt))
        if self.element_poro is None:
            object.__setattr__(self, "element_poro", np.full(nt, DEFAULT_POROSITY))

    @property
    def n_elements(self):
        return len(self.triangles)

    @property
    def signed_areas(self):
        v = self.vertices[self.triangles]
        d1 = v[:, 1] - v[:, 0]
        d2 = v[:, 2] - v[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def perm_tensors(self):
        """Permeability as an (nt, 2, 2) array."""
        K = np.asarray(self.element_perm, dtype=float)
        if K.ndim == 1:
            return K[:, None, None] * np.eye(2)[None]
        return K

    def validate(self):
        nv = len(self.vertices)
        tri = np.asarray(self.triangles)
        if tri.ndim != 2 or tri.shape[1] != 3:
            raise ConfigurationError("triangles must be an (nt, 3) array")
        if tri.size and (tri.min() < 0 or tri.max() >= nv):
            raise ConfigurationError("triangle vertex id out of range")
        degenerate = (tri[:, 0] == tri[:, 1]) | (tri[:, 1] == tri[:, 2]) | (tri[:, 0] == tri[:, 2])
        if np.any(degenerate):
            raise ConfigurationError(f"degenerate triangle {int(np.argmax(degenerate))}")
        area = self.signed_areas
        if np.any(area <= 0):
            raise ConfigurationError(f"triangle {int(np.argmax(area <= 0))} is not counter-clockwise")
        K = self.perm_tensors()
        if not np.allclose(K, np.transpose(K, (0, 2, 1))):
            raise ConfigurationError("permeability tensors must be symmetric")
        if np.any(np.linalg.eigvalsh(K)[:, 0] <= 0):
            raise ConfigurationError("permeability must be positive definite")
        phi = np.asarray(self.element_poro)
        if np.any((phi <= 0) | (phi > 1)):
            raise ConfigurationError("porosity must lie in (0, 1]")
        return self


def structured_mesh(N, Lx=1.0, Ly=1.0, origin=(0.0, 0.0)):
    """N x N squares, each cut lower-left to upper-right into two triangles."""
    if int(N) != N or N < 1:
        raise ConfigurationError(f"N must be a positive integer, got {N!r}")
    if Lx <= 0 or Ly <= 0:
        raise ConfigurationError("domain dimensions must be positive")
    N = int(N)
    xs = origin[0] + np.linspace(0.0, Lx, N + 1)
    ys = origin[1] + np.linspace(0.0, Ly, N + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (N + 1) + i

    tris = []
    for j in range(N):
        for i in range(N):
            v00, v10, v11, v01 = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    bnd = []
    for j in range(N):
        bnd.append((vid(0, j), vid(0, j + 1), LEFT))
        bnd.append((vid(N, j), vid(N, j + 1), RIGHT))
    for i in range(N):
        bnd.append((vid(i, 0), vid(i + 1, 0), BOTTOM))
        bnd.append((vid(i, N), vid(i + 1, N), TOP))
    return Mesh(vertices, np.array(tris, dtype=np.int64), np.array(bnd, dtype=np.int64)).validate()


def _rectangle_tag(p, q, Lx, Ly, origin, tol):
    x0, y0 = origin
    if abs(p[0] - x0) < tol and abs(q[0] - x0) < tol:
        return LEFT
    if abs(p[0] - x0 - Lx) < tol and abs(q[0] - x0 - Lx) < tol:
        return RIGHT
    if abs(p[1] - y0) < tol and abs(q[1] - y0) < tol:
        return BOTTOM
    if abs(p[1] - y0 - Ly) < tol and abs(q[1] - y0 - Ly) < tol:
        return TOP
    raise ConfigurationError(f"boundary edge {tuple(p)}-{tuple(q)} is not on the rectangle")


def _boundary_from_triangles(vertices, triangles, Lx, Ly, origin):
    edges = np.sort(np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    tol = 1e-9 * max(Lx, Ly)
    bnd = [(a, b, _rectangle_tag(vertices[a], vertices[b], Lx, Ly, origin, tol)) for a, b in uniq[counts == 1]]
    return np.array(bnd, dtype=np.int64)


def delaunay_mesh(Lx, Ly, n_elements, circles=(), seed=0):
    """Unstructured Delaunay mesh of a rectangle with exactly ``n_elements`` triangles.

    Each circle ``(cx, cy, r)`` is resolved by a ring of vertices whose chords
    are mesh edges, so a centroid test recovers a polygonal disk exactly.
    The count uses ``nt = n_interior * 2 + n_boundary - 2`` for a convex hull.
    """
    from scipy.spatial import Delaunay

    if Lx <= 0 or Ly <= 0 or n_elements < 2:
        raise ConfigurationError("invalid rectangle or element count")
    rng = np.random.default_rng(seed)
    area = Lx * Ly
    h = np.sqrt(4.0 * area / (np.sqrt(3.0) * n_elements))
    for _ in range(200):
        nx = max(1, int(round(Lx / h)))
        ny = max(1, int(round(Ly / h)))
        n_b = 2 * (nx + ny)
        if (n_elements + 2 - n_b) % 2:
            ny += 1
            n_b += 2
        need = (n_elements + 2 - n_b) // 2
        ring = []
        for cx, cy, r in circles:
            nc = max(8, int(round(2 * np.pi * r / (0.9 * h))))
            th = 2 * np.pi * np.arange(nc) / nc
            ring.append(np.column_stack([cx + r * np.cos(th), cy + r * np.sin(th)]))
        ring = np.concatenate(ring) if ring else np.zeros((0, 2))
        # triangular lattice of candidate interior points
        dy = h * np.sqrt(3.0) / 2.0
        pts = []
        for j, y in enumerate(np.arange(dy / 2, Ly, dy)):
            off = 0.5 * h if j % 2 else 0.0
            for x in np.arange(h / 2 + off, Lx, h):
                pts.append((x, y))
        pts = np.array(pts).reshape(-1, 2)
        keep = (pts[:, 0] > 0.45 * h) & (pts[:, 0] < Lx - 0.45 * h) & (pts[:, 1] > 0.45 * h) & (pts[:, 1] < Ly - 0.45 * h)
        for cx, cy, r in circles:
            keep &= np.abs(np.hypot(pts[:, 0] - cx, pts[:, 1] - cy) - r) > 0.6 * h
        pts = pts[keep]
        n_free = need - len(ring)
        if n_free <= 0:
            h *= 0.97
            continue
        if len(pts) < n_free:
            h *= 0.99
            continue
        if len(pts) > n_free:
            drop = rng.choice(len(pts), size=len(pts) - n_free, replace=False)
            pts = np.delete(pts, drop, axis=0)
        bx = np.linspace(0.0, Lx, nx + 1)
        by = np.linspace(0.0, Ly, ny + 1)
        boundary = np.concatenate([
            np.column_stack([bx[:-1], np.zeros(nx)]),
            np.column_stack([np.full(ny, Lx), by[:-1]]),
            np.column_stack([bx[::-1][:-1], np.full(nx, Ly)]),
            np.column_stack([np.zeros(ny), by[::-1][:-1]]),
        ])
        # small jitter keeps the lattice away from co-circular degeneracy
        pts = pts + rng.uniform(-0.05, 0.05, pts.shape) * h
        vertices = np.concatenate([boundary, ring, pts])
        tri = Delaunay(vertices)
        simplices = tri.simplices.astype(np.int64)
        simplices = _orient_ccw(vertices, simplices)
        if len(simplices) != n_elements:
            h *= 0.995
            continue
        bnd = _boundary_from_triangles(vertices, simplices, Lx, Ly, (0.0, 0.0))
        mesh = Mesh(vertices, simplices, bnd).validate()
        if circles and not _circles_conform(mesh, circles):
            h *= 0.995
            continue
        return mesh
    raise ConfigurationError(f"could not generate a mesh with {n_elements} elements")


def _orient_ccw(vertices, tris):
    v = vertices[tris]
    d1 = v[:, 1] - v[:, 0]
    d2 = v[:, 2] - v[:, 0]
    cw = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tris = tris.copy()
    tris[cw, 1], tris[cw, 2] = tris[cw, 2].copy(), tris[cw, 1].copy()
    return tris


def _circles_conform(mesh, circles):
    c = mesh.centroids
    areas = mesh.signed_areas
    for cx, cy, r in circles:
        inside = np.hypot(c[:, 0] - cx, c[:, 1] - cy) < r
        verts_r = np.hypot(mesh.vertices[:, 0] - cx, mesh.vertices[:, 1] - cy)
        on_ring = np.abs(verts_r - r) < 1e-9 * r
        # every inside element must have all vertices inside or on the ring
        inner = mesh.triangles[inside]
        if np.any(verts_r[inner] > r * (1 + 1e-9)):
            return False
        nring = on_ring.sum()
        polygon = 0.5 * nring * r * r * np.sin(2 * np.pi / nring)
        if abs(areas[inside].sum() - polygon) > 1e-8 * polygon:
            return False
    return True


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Unique edges with incidence, orientation and boundary classification.

    ``elem_flip[e, j]`` is True when local edge ``j`` of element ``e`` runs
    against the global (ascending vertex id) direction of its edge.
    ``bc_kind[field]`` holds INTERIOR / DIRICHLET / NEUMANN per edge.
    """

    edges: np.ndarray
    edge_elements: np.ndarray
    edge_local: np.ndarray
    elem_edges: np.ndarray
    elem_flip: np.ndarray
    normals: np.ndarray
    edge_lengths: np.ndarray
    boundary_tag: np.ndarray
    bc_kind: dict

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def is_boundary(self):
        return self.edge_elements[:, 1] < 0

    @property
    def n_boundary_edges(self):
        return int(self.is_boundary.sum())

    def dirichlet(self, field):
        return self.bc_kind[field] == DIRICHLET

    def neumann(self, field):
        return self.bc_kind[field] == NEUMANN

    def free_edges(self, field):
        """Edges carrying unknown traces (everything but Dirichlet)."""
        return np.flatnonzero(self.bc_kind[field] != DIRICHLET)


def _normalize_bc_spec(boundary_spec, tags):
    spec = {}
    for fld in FIELDS:
        if fld not in boundary_spec:
            raise ConfigurationError(f"boundary specification lacks field {fld!r}")
        entry = boundary_spec[fld]
        if "dirichlet" in entry or "neumann" in entry:
            dset = {int(t) for t in entry.get("dirichlet", ())}
            nset = {int(t) for t in entry.get("neumann", ())}
        else:
            dset = {int(t) for t, kind in entry.items() if kind == "dirichlet"}
            nset = {int(t) for t, kind in entry.items() if kind == "neumann"}
            unknown = {kind for kind in entry.values()} - {"dirichlet", "neumann"}
            if unknown:
                raise ConfigurationError(f"{fld}: unknown boundary kind(s) {sorted(unknown)}")
        if dset & nset:
            raise ConfigurationError(f"{fld}: tags {sorted(dset & nset)} are both Dirichlet and Neumann")
        missing = set(tags) - dset - nset
        if missing:
            raise ConfigurationError(f"{fld}: boundary tags {sorted(missing)} have no condition")
        spec[fld] = (dset, nset)
    return spec


def build_skeleton(mesh, boundary_spec):
    """Derive the skeleton and per-field boundary classification.

    ``boundary_spec`` maps each of ``pressure``, ``s_w``, ``s_g`` either to
    ``{"dirichlet": tags, "neumann": tags}`` or to ``{tag: kind}``.
    """
    tri = np.asarray(mesh.triangles)
    nt = len(tri)
    local = np.stack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]], axis=1)  # (nt, 3, 2)
    flat = local.reshape(-1, 2)
    sorted_pairs = np.sort(flat, axis=1)
    edges, inverse = np.unique(sorted_pairs, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    ne = len(edges)
    elem_edges = inverse.reshape(nt, 3)
    elem_flip = (flat[:, 0] > flat[:, 1]).reshape(nt, 3)

    edge_elements = np.full((ne, 2), -1, dtype=np.int64)
    edge_local = np.full((ne, 2), -1, dtype=np.int64)
    count = np.zeros(ne, dtype=np.int64)
    for idx, g in enumerate(inverse):
        e, j = divmod(idx, 3)
        c = count[g]
        if c >= 2:
            raise ConfigurationError(f"edge {tuple(edges[g])} shared by more than two triangles")
        edge_elements[g, c] = e
        edge_local[g, c] = j
        count[g] += 1

    V = mesh.vertices
    d = V[local[:, :, 1]] - V[local[:, :, 0]]
    lengths = np.linalg.norm(d, axis=2)
    normals = np.stack([d[:, :, 1], -d[:, :, 0]], axis=2) / lengths[:, :, None]
    edge_lengths = np.linalg.norm(V[edges[:, 1]] - V[edges[:, 0]], axis=1)

    is_bnd = count == 1
    tag_of = {}
    for a, b, t in np.asarray(mesh.boundary_edges, dtype=np.int64).reshape(-1, 3):
        tag_of[(min(a, b), max(a, b))] = int(t)
    boundary_tag = np.zeros(ne, dtype=np.int64)
    for g in np.flatnonzero(is_bnd):
        key = (int(edges[g, 0]), int(edges[g, 1]))
        if key not in tag_of:
            raise ConfigurationError(f"boundary edge {key} has no tag")
        boundary_tag[g] = tag_of[key]
    tags = sorted(set(boundary_tag[is_bnd].tolist()))
    spec = _normalize_bc_spec(boundary_spec, tags)
    bc_kind = {}
    for fld, (dset, nset) in spec.items():
        kind = np.zeros(ne, dtype=np.int64)
        for g in np.flatnonzero(is_bnd):
            kind[g] = DIRICHLET if boundary_tag[g] in dset else NEUMANN
        bc_kind[fld] = kind
    return Skeleton(edges, edge_elements, edge_local, elem_edges, elem_flip, normals,
                    edge_lengths, boundary_tag, bc_kind)


def rectangle_bc(dirichlet_tags=(LEFT, RIGHT), neumann_tags=(BOTTOM, TOP)):
    """Same Dirichlet/Neumann split for all three fields."""
    return {f: {"dirichlet": set(dirichlet_tags), "neumann": set(neumann_tags)} for f in FIELDS}


def all_dirichlet_bc():
    return rectangle_bc((LEFT, RIGHT, BOTTOM, TOP), ())


def dof_counts(mesh, skeleton, k):
    """(DG volume dofs, HDG trace dofs, their ratio) for scalar degree-k spaces."""
    dg = mesh.n_elements * (k + 2) * (k + 1) // 2
    hdg = skeleton.n_edges * (k + 1)
    return dg, hdg, dg / hdg


def _read_mask(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split() if " " in line else list(line)
            try:
                rows.append([int(c) for c in cells])
            except ValueError:
                raise ParseError("mask cells must be 0 or 1", lineno) from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise ParseError("mask must be a non-empty rectangular grid")
    return np.array(rows)


def checkerboard_mask(n=8):
    return (np.add.outer(np.arange(n), np.arange(n)) % 2).astype(int)


def assign_rock(mesh, field_spec):
    """Return a copy of ``mesh`` with permeability and porosity set by centroid sampling.

    ``field_spec`` is a mapping with ``kind`` in ``constant``, ``lens``,
    ``disk``, ``random``, ``checkerboard`` plus the kind's parameters, and an
    optional ``porosity`` (default 0.2).
    """
    kind = field_spec.get("kind")
    c = mesh.centroids
    nt = mesh.n_elements
    if kind == "constant":
        K = np.full(nt, float(field_spec.get("K", 1e-4)))
    elif kind == "lens":
        (x0, x1), (y0, y1) = field_spec["box"]
        if not (x1 > x0 and y1 > y0):
            raise ConfigurationError("lens box is empty")
        inside = (c[:, 0] >= x0) & (c[:, 0] <= x1) & (c[:, 1] >= y0) & (c[:, 1] <= y1)
        K = np.where(inside, float(field_spec["K_in"]), float(field_spec["K_out"]))
    elif kind == "disk":
        cx, cy = field_spec["center"]
        r = float(field_spec["radius"])
        if r <= 0:
            raise ConfigurationError("disk radius must be positive")
        inside = np.hypot(c[:, 0] - cx, c[:, 1] - cy) < r
        K = np.where(inside, float(field_spec["K_in"]), float(field_spec["K_out"]))
    elif kind == "random":
        lo, hi = sorted((float(field_spec["K_min"]), float(field_spec["K_max"])))
        if lo <= 0:
            raise ConfigurationError("random permeability bounds must be positive")
        rng = np.random.default_rng(int(field_spec.get("seed", 0)))
        K = 10.0 ** rng.uniform(np.log10(lo), np.log10(hi), nt)
    elif kind == "checkerboard":
        mask = field_spec.get("mask")
        if mask is None:
            mask = checkerboard_mask()
        elif isinstance(mask, (str, bytes)) or hasattr(mask, "__fspath__"):
            mask = _read_mask(mask)
        mask = np.asarray(mask)
        lo, hi = mesh.bounding_box
        ny, nx = mask.shape
        ix = np.clip(((c[:, 0] - lo[0]) / (hi[0] - lo[0]) * nx).astype(int), 0, nx - 1)
        # first mask row is the top of the domain
        iy = np.clip(((hi[1] - c[:, 1]) / (hi[1] - lo[1]) * ny).astype(int), 0, ny - 1)
        K = np.where(mask[iy, ix] == 1, float(field_spec["K_low"]), float(field_spec["K_high"]))
    else:
        raise ConfigurationError(f"unknown permeability field kind {kind!r}")
    phi = np.full(nt, float(field_spec.get("porosity", DEFAULT_POROSITY)))
    return dataclasses.replace(mesh, element_perm=K, element_poro=phi).validate()


def save_mesh(mesh, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{len(mesh.vertices)} {mesh.n_elements} {len(mesh.boundary_edges)}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")
        for a, b, t in mesh.boundary_edges:
            fh.write(f"{a} {b} {t}\n")


def load_mesh(path, reorient=False):
    """Read the plain-text mesh format.

    A clockwise triangle raises :class:`ParseError` unless ``reorient`` is set,
    in which case it is flipped and a warning logged.
    """
    with open(path) as fh:
        lines = [(i, ln.split()) for i, ln in enumerate(fh, 1) if ln.strip()]
    if not lines:
        raise ParseError("empty mesh file", 1)
    lineno, head = lines[0]
    try:
        nv, nt, nb = (int(v) for v in head)
    except ValueError:
        raise ParseError("header must be 'nv nt nb'", lineno) from None
    if len(lines) != 1 + nv + nt + nb:
        raise ParseError(f"expected {nv + nt + nb} data lines, found {len(lines) - 1}", lineno)

    def parse(rows, n, conv):
        out = []
        for ln, tok in rows:
            if len(tok) != n:
                raise ParseError(f"expected {n} values", ln)
            try:
                out.append([conv(t) for t in tok])
            except ValueError:
                raise ParseError(f"cannot parse {' '.join(tok)!r}", ln) from None
        return out

    verts = np.array(parse(lines[1:1 + nv], 2, float), dtype=float).reshape(-1, 2)
    tri_rows = lines[1 + nv:1 + nv + nt]
    tris = np.array(parse(tri_rows, 3, int), dtype=np.int64).reshape(-1, 3)
    bnd = np.array(parse(lines[1 + nv + nt:], 3, int), dtype=np.int64).reshape(-1, 3)
    for (ln, _), t in zip(tri_rows, tris):
        if len(set(t.tolist())) < 3:
            raise ParseError("triangle repeats a vertex id", ln)
        if t.min() < 0 or t.max() >= nv:
            raise ParseError("vertex id out of range", ln)
        p = verts[t]
        area = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[1, 1] - p[0, 1]) * (p[2, 0] - p[0, 0])
        if area == 0:
            raise ParseError("zero-area triangle", ln)
        if area < 0:
            if not reorient:
                raise ParseError("triangle is clockwise", ln)
            log.warning("line %d: clockwise triangle reoriented", ln)
            t[1], t[2] = t[2], t[1]
    return Mesh(verts, tris, bnd).validate()
