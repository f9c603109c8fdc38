"""Tetrahedral meshes: container, generators, Gmsh import and VTK export."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

# local vertex triples of the four faces of a tetrahedron
TET_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
# local vertex pairs of the six edges, in P2 node order
TET_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])


class MeshError(ValueError):
    pass


class GmshParseError(MeshError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def signed_volumes(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    x = vertices[cells]
    a = x[:, 1] - x[:, 0]
    b = x[:, 2] - x[:, 0]
    c = x[:, 3] - x[:, 0]
    return np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0


def orient_cells(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Swap the last two vertices of every negatively oriented cell."""
    cells = np.array(cells, dtype=np.int64, copy=True)
    neg = signed_volumes(vertices, cells) < 0
    cells[neg, 2], cells[neg, 3] = cells[neg, 3].copy(), cells[neg, 2].copy()
    return cells


def boundary_faces(cells: np.ndarray) -> np.ndarray:
    """Faces that belong to exactly one cell, with vertex order taken from the cell."""
    faces = cells[:, TET_FACES].reshape(-1, 3)
    keys = np.sort(faces, axis=1)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    return faces[counts[inverse] == 1]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Tetrahedral mesh with tagged boundary facets.

    ``vertices`` is (n, 3) in meters, ``cells`` is (m, 4) with positive
    orientation, ``facets``/``facet_tags`` list boundary triangles.
    """

    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    region_tags: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.ascontiguousarray(self.vertices, dtype=float))
        object.__setattr__(self, "cells", np.ascontiguousarray(self.cells, dtype=np.int64))
        object.__setattr__(self, "facets", np.asarray(self.facets, dtype=np.int64).reshape(-1, 3))
        object.__setattr__(self, "facet_tags", np.asarray(self.facet_tags, dtype=np.int64).reshape(-1))
        for name in ("vertices", "cells", "facets", "facet_tags"):
            getattr(self, name).flags.writeable = False

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @cached_property
    def volumes(self) -> np.ndarray:
        return signed_volumes(self.vertices, self.cells)

    @cached_property
    def edges(self) -> np.ndarray:
        """Sorted global vertex pairs, one row per unique edge."""
        pairs = np.sort(self.cells[:, TET_EDGES].reshape(-1, 2), axis=1)
        return np.unique(pairs, axis=0)

    @cached_property
    def cell_edges(self) -> np.ndarray:
        """(m, 6) edge index of each local edge, in ``TET_EDGES`` order."""
        return self.edge_index(self.cells[:, TET_EDGES].reshape(-1, 2)).reshape(-1, 6)

    def edge_index(self, pairs: np.ndarray) -> np.ndarray:
        pairs = np.sort(np.asarray(pairs).reshape(-1, 2), axis=1)
        n = self.num_vertices
        keys = self.edges[:, 0] * n + self.edges[:, 1]
        query = pairs[:, 0] * n + pairs[:, 1]
        idx = np.searchsorted(keys, query)
        if np.any(idx >= len(keys)) or np.any(keys[np.minimum(idx, len(keys) - 1)] != query):
            raise MeshError("edge not present in mesh")
        return idx

    @property
    def tags(self) -> set[int]:
        return set(int(t) for t in np.unique(self.facet_tags))

    def with_vertices(self, vertices: np.ndarray) -> "Mesh":
        """Same topology on new vertex positions (orientation is not re-checked)."""
        vertices = np.asarray(vertices, dtype=float)
        if vertices.shape != self.vertices.shape:
            raise MeshError("vertex array shape mismatch")
        return Mesh(vertices, self.cells, self.facets, self.facet_tags, self.region_tags)

    def check(self) -> None:
        """Raise MeshError unless all structural invariants hold."""
        n = self.num_vertices
        if self.cells.size and (self.cells.min() < 0 or self.cells.max() >= n):
            raise MeshError("cell vertex index out of range")
        if self.facets.size and (self.facets.min() < 0 or self.facets.max() >= n):
            raise MeshError("facet vertex index out of range")
        if np.any(self.volumes <= 0):
            raise MeshError(f"{int(np.sum(self.volumes <= 0))} cells with non-positive volume")
        bnd = {tuple(f) for f in np.sort(boundary_faces(self.cells), axis=1)}
        tagged = [tuple(f) for f in np.sort(self.facets, axis=1)]
        if len(set(tagged)) != len(tagged) or set(tagged) != bnd:
            raise MeshError("tagged facets do not match the topological boundary")


def _tagged_boundary(vertices, cells, tagger) -> tuple[np.ndarray, np.ndarray]:
    faces = boundary_faces(cells)
    centroids = vertices[faces].mean(axis=1)
    return faces, np.array([tagger(c) for c in centroids], dtype=np.int64)


def generate_box_mesh(extents=(1.0, 1.0, 1.0), divisions=(1, 1, 1)) -> Mesh:
    """Structured box [0,Lx]x[0,Ly]x[0,Lz]; each hexahedron split into 6 Kuhn tetrahedra.

    Facet tags: 1 x-min, 2 x-max, 3 y-min, 4 y-max, 5 z-min, 6 z-max.
    """
    extents = tuple(float(e) for e in extents)
    divisions = tuple(int(d) for d in divisions)
    if len(extents) != 3 or len(divisions) != 3:
        raise ValueError("extents and divisions need three entries")
    if min(extents) <= 0 or min(divisions) < 1:
        raise ValueError("box extents must be positive and divisions >= 1")
    nx, ny, nz = divisions
    axes = [np.linspace(0.0, L, n + 1) for L, n in zip(extents, divisions)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    i, j, k = (a.ravel() for a in np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"))
    cells = []
    unit = np.eye(3, dtype=int)
    for perm in ([0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]):
        path = [np.zeros(3, dtype=int)]
        for axis in perm:
            path.append(path[-1] + unit[axis])
        cells.append(np.column_stack([vid(i + p[0], j + p[1], k + p[2]) for p in path]))
    cells = orient_cells(vertices, np.concatenate(cells))
    tol = 1e-9 * max(extents)

    def tagger(c):
        for axis in range(3):
            if abs(c[axis]) < tol:
                return 2 * axis + 1
            if abs(c[axis] - extents[axis]) < tol:
                return 2 * axis + 2
        raise MeshError("boundary face not on a box side")

    facets, tags = _tagged_boundary(vertices, cells, tagger)
    return Mesh(vertices, cells, facets, tags)


def _disc(radius: float, layers: int) -> tuple[np.ndarray, np.ndarray]:
    """Center point plus ``layers`` rings of 6*i points, zipped into triangles."""
    points = [np.zeros(2)]
    rings = [np.array([0])]
    angles = [np.array([0.0])]
    for i in range(1, layers + 1):
        n = 6 * i
        theta = 2 * np.pi * np.arange(n) / n
        start = len(points)
        points.extend(radius * i / layers * np.column_stack([np.cos(theta), np.sin(theta)]))
        rings.append(np.arange(start, start + n))
        angles.append(theta)
    points = np.array(points)
    triangles = []
    for i in range(1, layers + 1):
        inner, outer = rings[i - 1], rings[i]
        a_in, a_out = angles[i - 1], angles[i]
        if len(inner) == 1:
            for j in range(len(outer)):
                triangles.append((inner[0], outer[j], outer[(j + 1) % len(outer)]))
            continue
        # zip two closed rings together by advancing on the smaller next angle
        p = q = 0
        n_in, n_out = len(inner), len(outer)
        while p < n_in or q < n_out:
            next_in = a_in[p + 1] if p + 1 < n_in else 2 * np.pi
            next_out = a_out[q + 1] if q + 1 < n_out else 2 * np.pi
            if q < n_out and (p >= n_in or next_out <= next_in):
                triangles.append((inner[p % n_in], outer[q], outer[(q + 1) % n_out]))
                q += 1
            else:
                triangles.append((inner[p], outer[q % n_out], inner[(p + 1) % n_in]))
                p += 1
    return points, np.array(triangles, dtype=np.int64)


def generate_cylinder_mesh(length: float, diameter: float, axial_divisions: int, radial_layers: int) -> Mesh:
    """Cylinder along +x from x=0 to x=length: extruded disc, each prism split into 3 tets.

    Facet tag 1 is the x=0 end cap (clamped face), tag 2 everything else.
    """
    if length <= 0 or diameter <= 0 or axial_divisions < 1 or radial_layers < 1:
        raise ValueError("cylinder dimensions and divisions must be positive")
    points2d, tri = _disc(diameter / 2.0, int(radial_layers))
    tri = np.sort(tri, axis=1)
    npts = len(points2d)
    xs = np.linspace(0.0, length, int(axial_divisions) + 1)
    vertices = np.column_stack(
        [np.repeat(xs, npts), np.tile(points2d[:, 0], len(xs)), np.tile(points2d[:, 1], len(xs))]
    )
    cells = []
    for layer in range(int(axial_divisions)):
        a, b, c = (tri[:, m] + layer * npts for m in range(3))
        a2, b2, c2 = a + npts, b + npts, c + npts
        # diagonals follow global index order so neighbouring prisms conform
        cells.append(np.column_stack([a, b, c, a2]))
        cells.append(np.column_stack([b, c, a2, b2]))
        cells.append(np.column_stack([c, a2, b2, c2]))
    cells = orient_cells(vertices, np.concatenate(cells))
    tol = 1e-9 * length
    facets, tags = _tagged_boundary(vertices, cells, lambda c: 1 if abs(c[0]) < tol else 2)
    return Mesh(vertices, cells, facets, tags)


def generate_unit_tetrahedron() -> Mesh:
    """Single tetrahedron (0,0,0),(1,0,0),(0,1,0),(0,0,1); the y=0 facet has tag 1, the rest tag 2."""
    vertices = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    cells = np.array([[0, 1, 2, 3]])
    facets, tags = _tagged_boundary(vertices, cells, lambda c: 1 if abs(c[1]) < 1e-12 else 2)
    return Mesh(vertices, cells, facets, tags)


def generate_unit_cube(divisions: int = 1) -> Mesh:
    return generate_box_mesh((1.0, 1.0, 1.0), (divisions,) * 3)


# --- Gmsh MSH 2.2 ASCII ---------------------------------------------------------

_NODES_PER_TYPE = {1: 2, 2: 3, 3: 4, 4: 4, 5: 8, 6: 6, 7: 5, 8: 3, 9: 6, 11: 10, 15: 1}


def read_gmsh(path) -> Mesh:
    """Read a Gmsh MSH 2.2 ASCII file.

    Tetrahedra (type 4) become cells, triangles (type 2) boundary facets tagged
    by their first (physical) tag. Boundary faces without a triangle get tag 0.
    Skipped element types are counted in ``mesh.info["skipped"]``.
    """
    lines = Path(path).read_text().splitlines()
    pos = 0

    def expect(header):
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines) or lines[pos].strip() != header:
            raise GmshParseError(f"expected {header}", pos + 1)
        pos += 1

    def nextline():
        nonlocal pos
        if pos >= len(lines):
            raise GmshParseError("unexpected end of file", pos)
        pos += 1
        return lines[pos - 1].split()

    expect("$MeshFormat")
    fmt = nextline()
    if len(fmt) < 3 or not fmt[0].startswith("2"):
        raise GmshParseError("only MSH 2.x ASCII is supported", pos)
    if fmt[1] != "0":
        raise GmshParseError("binary MSH files are not supported", pos)
    expect("$EndMeshFormat")

    expect("$Nodes")
    try:
        n_nodes = int(nextline()[0])
        ids = np.empty(n_nodes, dtype=np.int64)
        coords = np.empty((n_nodes, 3))
        for i in range(n_nodes):
            parts = nextline()
            ids[i] = int(parts[0])
            coords[i] = [float(v) for v in parts[1:4]]
    except (ValueError, IndexError) as exc:
        raise GmshParseError(f"malformed node record ({exc})", pos) from None
    expect("$EndNodes")
    lookup = {int(n): i for i, n in enumerate(ids)}

    expect("$Elements")
    tets, tris, tri_tags = [], [], []
    skipped: dict[int, int] = {}
    try:
        n_elem = int(nextline()[0])
        for _ in range(n_elem):
            parts = [int(v) for v in nextline()]
            etype, ntags = parts[1], parts[2]
            tags = parts[3 : 3 + ntags]
            nodes = [lookup[n] for n in parts[3 + ntags :]]
            if etype in _NODES_PER_TYPE and len(nodes) != _NODES_PER_TYPE[etype]:
                raise GmshParseError(f"element type {etype} with {len(nodes)} nodes", pos)
            if etype == 4:
                tets.append(nodes)
            elif etype == 2:
                tris.append(nodes)
                tri_tags.append(tags[0] if tags else 0)
            else:
                skipped[etype] = skipped.get(etype, 0) + 1
    except GmshParseError:
        raise
    except (ValueError, IndexError, KeyError) as exc:
        raise GmshParseError(f"malformed element record ({exc!r})", pos) from None
    expect("$EndElements")

    if not tets:
        raise MeshError("mesh has no tetrahedra")
    cells = np.array(tets, dtype=np.int64)
    n_flipped = int(np.sum(signed_volumes(coords, cells) < 0))
    cells = orient_cells(coords, cells)

    bnd = boundary_faces(cells)
    tag_of = {tuple(sorted(t)): tag for t, tag in zip(tris, tri_tags)}
    facet_tags = np.array([tag_of.get(tuple(sorted(f)), 0) for f in bnd], dtype=np.int64)
    if skipped:
        log.warning("read_gmsh: skipped element types %s", skipped)
    info = {"skipped": skipped, "reoriented": n_flipped, "interior_triangles": len(set(tag_of) - {tuple(sorted(f)) for f in bnd})}
    return Mesh(coords, cells, bnd, facet_tags, info=info)


def write_gmsh(mesh: Mesh, path) -> None:
    """Write MSH 2.2 ASCII (used for round-trip tests and handing meshes to other tools)."""
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.num_vertices)]
    out += [f"{i + 1} {x!r} {y!r} {z!r}" for i, (x, y, z) in enumerate(mesh.vertices.tolist())]
    out += ["$EndNodes", "$Elements", str(len(mesh.facets) + mesh.num_cells)]
    k = 1
    for f, t in zip(mesh.facets, mesh.facet_tags):
        out.append(f"{k} 2 2 {t} {t} " + " ".join(str(v + 1) for v in f))
        k += 1
    for c in mesh.cells:
        out.append(f"{k} 4 2 0 0 " + " ".join(str(v + 1) for v in c))
        k += 1
    out.append("$EndElements")
    Path(path).write_text("\n".join(out) + "\n")


# --- VTK legacy -----------------------------------------------------------------


def write_vtk(mesh: Mesh, fields: dict | None, path) -> None:
    """VTK legacy ASCII UNSTRUCTURED_GRID with point data.

    ``fields`` maps names to NodalFields (or arrays) whose first
    ``num_vertices`` nodes are the mesh vertices; P2 edge nodes are dropped.
    """
    nv = mesh.num_vertices
    out = ["# vtk DataFile Version 3.0", "invfem output", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {nv} double")
    out += [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    out.append(f"CELLS {mesh.num_cells} {5 * mesh.num_cells}")
    out += ["4 " + " ".join(map(str, c)) for c in mesh.cells.tolist()]
    out.append(f"CELL_TYPES {mesh.num_cells}")
    out += ["10"] * mesh.num_cells
    if fields:
        out.append(f"POINT_DATA {nv}")
        for name, fld in fields.items():
            values = np.asarray(getattr(fld, "values", fld), dtype=float)
            if len(values) < nv:
                raise MeshError(f"field {name!r} has fewer nodes than the mesh has vertices")
            values = values[:nv]
            if values.ndim == 2 and values.shape[1] == 3:
                out.append(f"VECTORS {name} double")
                out += [f"{a!r} {b!r} {c!r}" for a, b, c in values.tolist()]
            else:
                out.append(f"SCALARS {name} double 1")
                out.append("LOOKUP_TABLE default")
                out += [repr(v) for v in values.reshape(nv).tolist()]
    Path(path).write_text("\n".join(out) + "\n")
