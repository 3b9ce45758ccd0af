"""Tagged simplicial 2D meshes for the core-shell geometry.

A mesh carries per-triangle region tags (INCLUSION / SHELL), and a list of
tagged edges: INTERFACE edges separate the two regions, OUTER edges lie on
the domain boundary.  Two structured generators are provided (disk inside a
disk, disk inside a square) plus a plain-text file format, submesh
extraction and uniform red refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

INCLUSION = 0
SHELL = 1
INTERFACE = 0
OUTER = 1

__all__ = [
    "INCLUSION",
    "SHELL",
    "INTERFACE",
    "OUTER",
    "Mesh",
    "Submesh",
    "MeshError",
    "MeshParseError",
    "generate_disk_in_disk",
    "generate_square_with_disk",
    "load_mesh",
    "save_mesh",
    "extract_submesh",
    "refine_uniform",
]


class MeshError(ValueError):
    """Mesh validation failure."""


class MeshParseError(ValueError):
    """Mesh file syntax error; carries the offending line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class Mesh:
    vertices: np.ndarray          # (nv, 2) float
    triangles: np.ndarray         # (nt, 3) int, CCW
    regions: np.ndarray           # (nt,) int in {INCLUSION, SHELL}
    edges: np.ndarray             # (ne, 2) int, tagged edges only
    edge_tags: np.ndarray         # (ne,) int in {INTERFACE, OUTER}
    metadata: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    def region_area(self, region: int) -> float:
        return float(self.triangle_areas()[self.regions == region].sum())

    def boundary_edges(self, tag: int) -> np.ndarray:
        return self.edges[self.edge_tags == tag]

    def boundary_vertices(self, tag: int) -> np.ndarray:
        return np.unique(self.edges[self.edge_tags == tag])

    def validate(self) -> None:
        """Raise MeshError on any structural inconsistency."""
        nv = self.n_vertices
        if self.triangles.min(initial=0) < 0 or self.triangles.max(initial=-1) >= nv:
            raise MeshError("triangle vertex index out of range")
        areas = self.triangle_areas()
        bad = np.nonzero(areas <= 0.0)[0]
        if len(bad):
            raise MeshError(f"triangle {bad[0]} has non-positive area {areas[bad[0]]:g}")

        # edge -> incident triangle list with regions
        incident: dict[tuple[int, int], list[int]] = {}
        for t, tri in enumerate(self.triangles):
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                incident.setdefault(key, []).append(t)

        for key, tris in incident.items():
            if len(tris) > 2:
                raise MeshError(f"edge {key} shared by {len(tris)} triangles")

        tagged = {}
        for (a, b), tag in zip(self.edges, self.edge_tags):
            key = (min(a, b), max(a, b))
            if key in tagged:
                raise MeshError(f"edge {key} tagged twice")
            tagged[key] = tag
            if key not in incident:
                raise MeshError(f"tagged edge {key} not found in any triangle "
                                "(hanging node or stale index)")
            tris = incident[key]
            if tag == OUTER:
                if len(tris) != 1:
                    raise MeshError(f"OUTER edge {key} lies on {len(tris)} triangles, expected 1")
            elif tag == INTERFACE:
                if len(tris) != 2:
                    raise MeshError(f"INTERFACE edge {key} lies on {len(tris)} triangles, expected 2")
                regs = sorted(self.regions[t] for t in tris)
                if regs != [INCLUSION, SHELL]:
                    raise MeshError(f"INTERFACE edge {key} does not separate INCLUSION from SHELL")
            else:
                raise MeshError(f"unknown edge tag {tag}")

        for key, tris in incident.items():
            if len(tris) == 1 and key not in tagged:
                raise MeshError(f"boundary edge {key} carries no tag (hanging node?)")
            if len(tris) == 2 and self.regions[tris[0]] != self.regions[tris[1]] and key not in tagged:
                raise MeshError(f"region-separating edge {key} not tagged INTERFACE")

        # connectivity of the inclusion via union-find over shared edges
        inc = np.nonzero(self.regions == INCLUSION)[0]
        if len(inc):
            parent = {int(t): int(t) for t in inc}

            def find(x):
                while parent[x] != x:
                    parent[x] = parent[parent[x]]
                    x = parent[x]
                return x

            incset = set(parent)
            for tris in incident.values():
                if len(tris) == 2 and tris[0] in incset and tris[1] in incset:
                    parent[find(tris[0])] = find(tris[1])
            roots = {find(t) for t in incset}
            if len(roots) > 1:
                raise MeshError(f"INCLUSION region is disconnected ({len(roots)} components)")


@dataclass
class Submesh:
    parent: Mesh
    region: int
    mesh: Mesh                    # child mesh
    vertex_map: np.ndarray        # child vertex index -> parent vertex index
    triangle_map: np.ndarray      # child triangle index -> parent triangle index
    # roles of the child's tagged edges, inherited from the parent tags:
    # INTERFACE for edges that were interface edges, OUTER for outer ones.

    def restrict(self, parent_values: np.ndarray) -> np.ndarray:
        return np.asarray(parent_values)[self.vertex_map]

    def extend(self, child_values: np.ndarray, fill=0.0) -> np.ndarray:
        out = np.full(self.parent.n_vertices, fill,
                      dtype=np.result_type(np.asarray(child_values).dtype, type(fill)))
        out[self.vertex_map] = child_values
        return out


def _polar_rings(rings_core: int, n_theta: int):
    thetas = 2.0 * math.pi * np.arange(n_theta) / n_theta
    verts = [np.zeros((1, 2))]
    for i in range(1, rings_core + 1):
        r = i / rings_core
        verts.append(np.column_stack([r * np.cos(thetas), r * np.sin(thetas)]))
    return np.vstack(verts), thetas


def _ring_index(ring: int, t: int, n_theta: int) -> int:
    # ring 0 is the single center vertex
    if ring == 0:
        return 0
    return 1 + (ring - 1) * n_theta + (t % n_theta)


def _build_core(rings_core: int, n_theta: int):
    tris, regs = [], []
    for t in range(n_theta):
        tris.append((0, _ring_index(1, t, n_theta), _ring_index(1, t + 1, n_theta)))
        regs.append(INCLUSION)
    for ring in range(1, rings_core):
        for t in range(n_theta):
            a = _ring_index(ring, t, n_theta)
            b = _ring_index(ring, t + 1, n_theta)
            c = _ring_index(ring + 1, t, n_theta)
            d = _ring_index(ring + 1, t + 1, n_theta)
            tris.append((a, d, b))
            tris.append((a, c, d))
            regs.extend((INCLUSION, INCLUSION))
    return tris, regs


def _build_shell(rings_core: int, rings_shell: int, n_theta: int, tris, regs):
    for ring in range(rings_core, rings_core + rings_shell):
        for t in range(n_theta):
            a = _ring_index(ring, t, n_theta)
            b = _ring_index(ring, t + 1, n_theta)
            c = _ring_index(ring + 1, t, n_theta)
            d = _ring_index(ring + 1, t + 1, n_theta)
            tris.append((a, d, b))
            tris.append((a, c, d))
            regs.extend((SHELL, SHELL))


def _tag_rings(rings_core: int, rings_total: int, n_theta: int):
    edges, tags = [], []
    for t in range(n_theta):
        edges.append((_ring_index(rings_core, t, n_theta), _ring_index(rings_core, t + 1, n_theta)))
        tags.append(INTERFACE)
    for t in range(n_theta):
        edges.append((_ring_index(rings_total, t, n_theta), _ring_index(rings_total, t + 1, n_theta)))
        tags.append(OUTER)
    return edges, tags


def _default_n_theta(rings_core: int) -> int:
    n = max(16, 4 * rings_core)
    return n + (-n) % 8  # multiple of 8 so square corners land on vertices


def generate_disk_in_disk(R: float, rings_core: int, rings_shell: int,
                          n_theta: int | None = None) -> Mesh:
    """Structured polar mesh of the unit disk inside the disk of radius R."""
    if R <= 1.0:
        raise MeshError(f"outer radius must exceed 1, got {R}")
    if rings_core < 2 or rings_shell < 2:
        raise MeshError("ring counts must be >= 2")
    if n_theta is None:
        n_theta = _default_n_theta(rings_core)
    core_verts, thetas = _polar_rings(rings_core, n_theta)
    shell = []
    for j in range(1, rings_shell + 1):
        r = 1.0 + j * (R - 1.0) / rings_shell
        shell.append(np.column_stack([r * np.cos(thetas), r * np.sin(thetas)]))
    verts = np.vstack([core_verts] + shell)

    tris, regs = _build_core(rings_core, n_theta)
    _build_shell(rings_core, rings_shell, n_theta, tris, regs)
    edges, tags = _tag_rings(rings_core, rings_core + rings_shell, n_theta)

    mesh = Mesh(verts, np.array(tris), np.array(regs), np.array(edges), np.array(tags),
                metadata={"generator": "disk_in_disk", "snap_interface": True,
                          "R": float(R)})
    mesh.validate()
    return mesh


def _square_point(theta: float, L: float) -> tuple[float, float]:
    c, s = math.cos(theta), math.sin(theta)
    m = max(abs(c), abs(s))
    return L * c / m, L * s / m


def generate_square_with_disk(L: float, rings_core: int, rings_blend: int,
                              n_theta: int | None = None) -> Mesh:
    """Unit disk inside the square [-L, L]^2, shell meshed by transfinite
    blending between the circle r = 1 and the square boundary."""
    if L <= 1.0:
        raise MeshError(f"half side must exceed 1, got {L}")
    if rings_core < 2 or rings_blend < 2:
        raise MeshError("ring counts must be >= 2")
    if n_theta is None:
        n_theta = _default_n_theta(rings_core)
    if n_theta % 8:
        raise MeshError("n_theta must be a multiple of 8 so square corners are vertices")
    core_verts, thetas = _polar_rings(rings_core, n_theta)
    circle = core_verts[1 + (rings_core - 1) * n_theta:]
    square = np.array([_square_point(t, L) for t in thetas])
    shell = []
    for j in range(1, rings_blend + 1):
        s = j / rings_blend
        shell.append((1.0 - s) * circle + s * square)
    verts = np.vstack([core_verts] + shell)

    tris, regs = _build_core(rings_core, n_theta)
    _build_shell(rings_core, rings_blend, n_theta, tris, regs)
    edges, tags = _tag_rings(rings_core, rings_core + rings_blend, n_theta)

    mesh = Mesh(verts, np.array(tris), np.array(regs), np.array(edges), np.array(tags),
                metadata={"generator": "square_with_disk", "snap_interface": True,
                          "L": float(L)})
    mesh.validate()
    return mesh


# ---------------------------------------------------------------------------
# plain-text format: header `enzmesh 1 2`, then vertices/triangles/boundary
# ---------------------------------------------------------------------------

def save_mesh(mesh: Mesh, path: str) -> None:
    lines = ["enzmesh 1 2", f"vertices {mesh.n_vertices}"]
    for x, y in mesh.vertices:
        lines.append(f"{x:.17g} {y:.17g}")
    lines.append(f"triangles {mesh.n_triangles}")
    for (i, j, k), r in zip(mesh.triangles, mesh.regions):
        lines.append(f"{i} {j} {k} {r}")
    lines.append(f"boundary {len(mesh.edges)}")
    for (i, j), t in zip(mesh.edges, mesh.edge_tags):
        lines.append(f"{i} {j} {t}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_mesh(path: str) -> Mesh:
    with open(path, encoding="utf-8") as f:
        raw = f.read().splitlines()
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(raw) if ln.strip()]
    pos = 0

    def next_line():
        nonlocal pos
        if pos >= len(lines):
            raise MeshParseError(len(raw) + 1, "unexpected end of file")
        ln = lines[pos]
        pos += 1
        return ln

    no, header = next_line()
    if header.split() != ["enzmesh", "1", "2"]:
        raise MeshParseError(no, f"bad header {header!r}, expected 'enzmesh 1 2'")

    def section(name):
        no, ln = next_line()
        parts = ln.split()
        if len(parts) != 2 or parts[0] != name:
            raise MeshParseError(no, f"expected '{name} N', got {ln!r}")
        try:
            return int(parts[1])
        except ValueError:
            raise MeshParseError(no, f"bad count {parts[1]!r}") from None

    nv = section("vertices")
    verts = np.empty((nv, 2))
    for i in range(nv):
        no, ln = next_line()
        parts = ln.split()
        if len(parts) != 2:
            raise MeshParseError(no, f"expected 'x y', got {ln!r}")
        try:
            verts[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshParseError(no, f"bad coordinate in {ln!r}") from None

    nt = section("triangles")
    tris = np.empty((nt, 3), dtype=int)
    regs = np.empty(nt, dtype=int)
    for i in range(nt):
        no, ln = next_line()
        parts = ln.split()
        if len(parts) != 4:
            raise MeshParseError(no, f"expected 'i j k region', got {ln!r}")
        try:
            vals = [int(p) for p in parts]
        except ValueError:
            raise MeshParseError(no, f"bad integer in {ln!r}") from None
        if vals[3] not in (INCLUSION, SHELL):
            raise MeshParseError(no, f"unknown region tag {vals[3]}")
        tris[i] = vals[:3]
        regs[i] = vals[3]

    ne = section("boundary")
    edges = np.empty((ne, 2), dtype=int)
    tags = np.empty(ne, dtype=int)
    for i in range(ne):
        no, ln = next_line()
        parts = ln.split()
        if len(parts) != 3:
            raise MeshParseError(no, f"expected 'i j tag', got {ln!r}")
        try:
            vals = [int(p) for p in parts]
        except ValueError:
            raise MeshParseError(no, f"bad integer in {ln!r}") from None
        if vals[2] not in (INTERFACE, OUTER):
            raise MeshParseError(no, f"unknown boundary tag {vals[2]}")
        edges[i] = vals[:2]
        tags[i] = vals[2]

    mesh = Mesh(verts, tris, regs, edges, tags)
    mesh.validate()
    return mesh


def extract_submesh(mesh: Mesh, region: int) -> Submesh:
    """Restrict to one region; child tagged edges inherit the parent roles."""
    sel = np.nonzero(mesh.regions == region)[0]
    if not len(sel):
        raise MeshError(f"region {region} is empty")
    tris = mesh.triangles[sel]
    used = np.unique(tris)
    remap = -np.ones(mesh.n_vertices, dtype=int)
    remap[used] = np.arange(len(used))
    child_tris = remap[tris]

    tag_of = {(min(a, b), max(a, b)): t for (a, b), t in zip(mesh.edges, mesh.edge_tags)}
    count: dict[tuple[int, int], int] = {}
    for tri in tris:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            count[key] = count.get(key, 0) + 1
    edges, tags = [], []
    for key, c in count.items():
        if c == 1:
            if key not in tag_of:
                raise MeshError(f"untagged boundary edge {key} in region {region}")
            edges.append((remap[key[0]], remap[key[1]]))
            tags.append(tag_of[key])

    child = Mesh(mesh.vertices[used].copy(), child_tris,
                 np.full(len(child_tris), region, dtype=int),
                 np.array(edges, dtype=int), np.array(tags, dtype=int),
                 metadata=dict(mesh.metadata))
    # the child's "region" labels are uniform by construction; validation of
    # INTERFACE edges does not apply on the child, so check the rest by hand
    areas = child.triangle_areas()
    if np.any(areas <= 0):
        raise MeshError("submesh produced a degenerate triangle")
    return Submesh(parent=mesh, region=region, mesh=child, vertex_map=used,
                   triangle_map=sel)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: each triangle splits into 4; tags are inherited.

    If the mesh metadata carries snap_interface, new interface midpoints are
    projected back to the unit circle (generator geometry).
    """
    mid_of: dict[tuple[int, int], int] = {}
    verts = [mesh.vertices]
    next_id = mesh.n_vertices
    new_pts = []

    def midpoint(a, b):
        nonlocal next_id
        key = (min(a, b), max(a, b))
        if key not in mid_of:
            mid_of[key] = next_id
            new_pts.append(0.5 * (mesh.vertices[a] + mesh.vertices[b]))
            next_id += 1
        return mid_of[key]

    tris, regs = [], []
    for tri, r in zip(mesh.triangles, mesh.regions):
        a, b, c = (int(v) for v in tri)
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        tris.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
        regs.extend([r, r, r, r])

    edges, tags = [], []
    for (a, b), t in zip(mesh.edges, mesh.edge_tags):
        m = midpoint(int(a), int(b))
        edges.extend([(int(a), m), (m, int(b))])
        tags.extend([t, t])

    vertices = np.vstack([mesh.vertices, np.array(new_pts)]) if new_pts else mesh.vertices.copy()

    if mesh.metadata.get("snap_interface"):
        iface_nodes = set()
        for (a, b), t in zip(edges, tags):
            if t == INTERFACE:
                iface_nodes.update((a, b))
        for v in iface_nodes:
            r = np.linalg.norm(vertices[v])
            if r > 0:
                vertices[v] = vertices[v] / r

    out = Mesh(vertices, np.array(tris), np.array(regs),
               np.array(edges), np.array(tags), metadata=dict(mesh.metadata))
    out.validate()
    return out
