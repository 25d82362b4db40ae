"""Structured triangulations of the unit square, unit disk, and annulus.

Every mesh carries tagged boundary edges with precomputed lengths; the
length array is the single source of truth for the discrete boundary
measure used by the boundary quadratures in :mod:`robineig.assembly`.

Disk and annulus meshes are built from concentric vertex rings that share
one angular grid of ``4*n`` steps, with every other ring advanced by half
a step.  Each band between consecutive rings is then a strip of isosceles
triangles, which keeps all interior angles at or below 90 degrees and lets
the band pattern repeat under rotation by one angular step.  Coordinates
are evaluated only inside the first octant and mapped out by coordinate
swaps and sign flips, so the vertex set is exactly (bitwise) invariant
under quarter-turn rotations and axis reflections.

Plain-text file format (whitespace-delimited, sections in this order)::

    VERTICES <count>
    <x> <y>            one vertex per line, 17 significant digits
    TRIANGLES <count>
    <i> <j> <k>        counterclockwise vertex indices
    BOUNDARY <count>
    <i> <j> <tag>      tag in {RobinAll, DirichletInner, NeumannOuter}

Writing then reading a mesh reproduces it exactly: 17 significant digits
round-trip IEEE doubles, and edge lengths are recomputed from the
round-tripped coordinates.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


class Tag(enum.Enum):
    """Role of a boundary edge."""

    ROBIN_ALL = "RobinAll"
    DIRICHLET_INNER = "DirichletInner"
    NEUMANN_OUTER = "NeumannOuter"


class MeshFormatError(ValueError):
    """Raised when a mesh file cannot be parsed; message names the line."""


class MeshTopologyError(ValueError):
    """Raised when mesh connectivity violates a structural requirement."""


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation with tagged boundary edges.

    Attributes
    ----------
    vertices : (nv, 2) float array of coordinates.
    triangles : (nt, 3) int array, counterclockwise vertex triples.
    boundary_edges : (nb, 2) int array of vertex index pairs.
    boundary_tags : tuple of Tag, one per boundary edge.
    boundary_lengths : (nb,) float array of edge lengths.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: tuple
    boundary_lengths: np.ndarray

    def __post_init__(self):
        for name in ("vertices", "triangles", "boundary_edges", "boundary_lengths"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    def triangle_areas(self) -> np.ndarray:
        """Signed areas of all triangles (positive for CCW orientation)."""
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def boundary_vertices(self, tag: Tag | None = None) -> np.ndarray:
        """Sorted unique vertex indices on the boundary (optionally one tag)."""
        if tag is None:
            edges = self.boundary_edges
        else:
            keep = [i for i, t in enumerate(self.boundary_tags) if t is tag]
            edges = self.boundary_edges[keep]
        return np.unique(edges)

    def tags_present(self) -> frozenset:
        return frozenset(self.boundary_tags)


def _edge_lengths(vertices: np.ndarray, edges: np.ndarray) -> np.ndarray:
    d = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    return np.hypot(d[:, 0], d[:, 1])


def _make_mesh(vertices, triangles, boundary_edges, boundary_tags) -> Mesh:
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    boundary_edges = np.ascontiguousarray(boundary_edges, dtype=np.int64)
    lengths = _edge_lengths(vertices, boundary_edges)
    return Mesh(vertices, triangles, boundary_edges, tuple(boundary_tags), lengths)


# ---------------------------------------------------------------------------
# generators


def generate_unit_square(n: int) -> Mesh:
    """Structured mesh of the unit square with ``n`` subdivisions per side.

    (n+1)^2 vertices, 2 n^2 right triangles from a uniform diagonal split,
    4 n boundary edges tagged RobinAll.
    """
    if n < 1:
        raise ValueError(f"subdivision count must be >= 1, got {n}")
    coords = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(coords, coords)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):  # column i (x), row j (y)
        return j * (n + 1) + i

    triangles = []
    for j in range(n):
        for i in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            triangles.append((v00, v10, v11))
            triangles.append((v00, v11, v01))

    edges = []
    edges += [(vid(i, 0), vid(i + 1, 0)) for i in range(n)]          # bottom
    edges += [(vid(n, j), vid(n, j + 1)) for j in range(n)]          # right
    edges += [(vid(i + 1, n), vid(i, n)) for i in range(n)]          # top
    edges += [(vid(0, j + 1), vid(0, j)) for j in range(n)]          # left
    tags = [Tag.ROBIN_ALL] * len(edges)
    return _make_mesh(vertices, triangles, edges, tags)


def _ring_points(radius: float, n: int, offset_half: bool) -> np.ndarray:
    """4n points on a circle, exactly symmetric under the dihedral maps.

    Angles live on the grid (i + offset) * pi/(2n).  Each point is reduced
    to the first octant, evaluated there, and mapped back by exact swaps
    and sign flips, so symmetric points have bitwise-equal coordinate
    magnitudes.
    """
    m = 4 * n
    dtheta = math.pi / (2.0 * n)
    half = n / 2.0
    pts = np.empty((m, 2), dtype=np.float64)
    for i in range(m):
        a = i + (0.5 if offset_half else 0.0)
        quarter, b = divmod(a, float(n))
        swap = b > half
        if swap:
            b = n - b
        if b == half:
            x = y = radius * math.sqrt(0.5)
        else:
            t = b * dtheta
            x = radius * math.cos(t)
            y = radius * math.sin(t)
        if swap:
            x, y = y, x
        for _ in range(int(quarter)):
            x, y = -y, x
        pts[i, 0] = x
        pts[i, 1] = y
    return pts + 0.0  # normalize -0.0 to +0.0


def _band_triangles(inner: np.ndarray, outer: np.ndarray, shift: int) -> list:
    """Zig-zag strip between two staggered rings of equal vertex count.

    ``shift`` selects which outer vertex sits between inner vertices i and
    i+1: outer[(i + shift) % m] must lie half an angular step ahead of
    inner[i].
    """
    m = len(inner)
    tris = []
    for i in range(m):
        i1 = (i + 1) % m
        o = (i + shift) % m
        o1 = (i + shift + 1) % m
        tris.append((inner[i], outer[o], inner[i1]))
        tris.append((outer[o], outer[o1], inner[i1]))
    return tris


def generate_disk(n: int) -> Mesh:
    """Ring mesh of the unit disk with 4n boundary segments.

    Rings sit at radii j/n, all with 4n vertices; odd rings are advanced
    half an angular step.  All triangles are non-obtuse and the whole
    triangulation repeats under rotation by one angular step pi/(2n).
    Boundary tagged RobinAll.
    """
    if n < 1:
        raise ValueError(f"refinement level must be >= 1, got {n}")
    m = 4 * n
    radii = np.linspace(0.0, 1.0, n + 1)

    vertices = [np.zeros((1, 2))]
    ring_start = [None]  # ring j >= 1 starts at ring_start[j]
    for j in range(1, n + 1):
        ring_start.append(1 + (j - 1) * m)
        vertices.append(_ring_points(radii[j], n, offset_half=(j % 2 == 1)))
    vertices = np.vstack(vertices)

    triangles = []
    first = np.arange(ring_start[1], ring_start[1] + m)
    for i in range(m):  # center fan
        triangles.append((0, first[i], first[(i + 1) % m]))
    for j in range(1, n):
        inner = np.arange(ring_start[j], ring_start[j] + m)
        outer = np.arange(ring_start[j + 1], ring_start[j + 1] + m)
        # outer vertex between inner i and i+1: index i+1 when the inner
        # ring is the half-step-offset one (odd j), index i otherwise
        shift = 1 if (j % 2 == 1) else 0
        triangles += _band_triangles(inner, outer, shift)

    last = np.arange(ring_start[n], ring_start[n] + m)
    edges = [(last[i], last[(i + 1) % m]) for i in range(m)]
    tags = [Tag.ROBIN_ALL] * m
    return _make_mesh(vertices, triangles, edges, tags)


def generate_annulus(r0: float, n: int) -> Mesh:
    """Ring mesh of the annulus r0 < r < 1.

    Inner boundary tagged DirichletInner, outer tagged NeumannOuter.  The
    radial band count scales with n*(1-r0) so refinement is isotropic.
    """
    if not (0.0 < r0 < 1.0):
        raise ValueError(f"inner radius r0 must lie in (0, 1), got {r0}")
    if n < 1:
        raise ValueError(f"refinement level must be >= 1, got {n}")
    m = 4 * n
    n_bands = max(1, round(n * (1.0 - r0)))
    radii = np.linspace(r0, 1.0, n_bands + 1)

    vertices = []
    for j in range(n_bands + 1):
        vertices.append(_ring_points(radii[j], n, offset_half=(j % 2 == 1)))
    vertices = np.vstack(vertices)

    def ring(j):
        return np.arange(j * m, (j + 1) * m)

    triangles = []
    for j in range(n_bands):
        shift = 1 if (j % 2 == 1) else 0
        triangles += _band_triangles(ring(j), ring(j + 1), shift)

    inner, outer = ring(0), ring(n_bands)
    edges = [(inner[i], inner[(i + 1) % m]) for i in range(m)]
    edges += [(outer[i], outer[(i + 1) % m]) for i in range(m)]
    tags = [Tag.DIRICHLET_INNER] * m + [Tag.NEUMANN_OUTER] * m
    return _make_mesh(vertices, triangles, edges, tags)


# ---------------------------------------------------------------------------
# validation


def validate(mesh: Mesh) -> None:
    """Check structural invariants, raising MeshTopologyError on violation.

    Verified: index ranges, positive triangle areas, every boundary edge on
    exactly one triangle, every single-triangle edge listed as boundary,
    and closed per-tag boundary cycles (each tagged vertex has exactly two
    incident edges of its tag).
    """
    nv = mesh.num_vertices
    if mesh.triangles.size and (mesh.triangles.min() < 0 or mesh.triangles.max() >= nv):
        raise MeshTopologyError("triangle vertex index out of range")
    if mesh.boundary_edges.size and (
        mesh.boundary_edges.min() < 0 or mesh.boundary_edges.max() >= nv
    ):
        raise MeshTopologyError("boundary edge vertex index out of range")

    areas = mesh.triangle_areas()
    bad = np.nonzero(areas <= 0.0)[0]
    if bad.size:
        raise MeshTopologyError(
            f"triangle {bad[0]} has non-positive area {areas[bad[0]]:g}"
        )

    edge_count: dict = {}
    for t in mesh.triangles:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            key = (min(a, b), max(a, b))
            edge_count[key] = edge_count.get(key, 0) + 1
    over = [e for e, c in edge_count.items() if c > 2]
    if over:
        raise MeshTopologyError(f"edge {over[0]} shared by more than two triangles")

    listed = set()
    for (a, b) in mesh.boundary_edges:
        key = (min(a, b), max(a, b))
        c = edge_count.get(key)
        if c is None:
            raise MeshTopologyError(f"boundary edge {(int(a), int(b))} is not on any triangle")
        if c != 1:
            raise MeshTopologyError(
                f"boundary edge {(int(a), int(b))} belongs to {c} triangles, expected 1"
            )
        if key in listed:
            raise MeshTopologyError(f"boundary edge {(int(a), int(b))} listed twice")
        listed.add(key)
    missing = [e for e, c in edge_count.items() if c == 1 and e not in listed]
    if missing:
        raise MeshTopologyError(
            f"edge {missing[0]} lies on one triangle but is not listed as boundary"
        )

    for tag in mesh.tags_present():
        degree: dict = {}
        for (a, b), t in zip(mesh.boundary_edges, mesh.boundary_tags):
            if t is tag:
                degree[int(a)] = degree.get(int(a), 0) + 1
                degree[int(b)] = degree.get(int(b), 0) + 1
        odd = [v for v, d in degree.items() if d != 2]
        if odd:
            raise MeshTopologyError(
                f"open boundary cycle: vertex {odd[0]} has {degree[odd[0]]} "
                f"incident {tag.value} edges, expected 2"
            )


# ---------------------------------------------------------------------------
# file I/O


def write_mesh(mesh: Mesh, path) -> None:
    """Write a mesh in the plain-text format described in the module docs."""
    lines = [f"VERTICES {mesh.num_vertices}"]
    for x, y in mesh.vertices:
        lines.append(f"{x:.17g} {y:.17g}")
    lines.append(f"TRIANGLES {mesh.num_triangles}")
    for a, b, c in mesh.triangles:
        lines.append(f"{a} {b} {c}")
    lines.append(f"BOUNDARY {len(mesh.boundary_edges)}")
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        lines.append(f"{a} {b} {tag.value}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


class _LineReader:
    def __init__(self, path):
        with open(path) as fh:
            raw = fh.readlines()
        # keep 1-based line numbers, skip blank lines
        self.items = [
            (i + 1, line.split()) for i, line in enumerate(raw) if line.strip()
        ]
        self.pos = 0

    def next(self, what: str):
        if self.pos >= len(self.items):
            raise MeshFormatError(f"unexpected end of file: expected {what}")
        ln, tokens = self.items[self.pos]
        self.pos += 1
        return ln, tokens

    def exhausted(self) -> bool:
        return self.pos >= len(self.items)


def _read_section_header(reader: _LineReader, name: str) -> int:
    ln, tokens = reader.next(f"'{name} <count>'")
    if len(tokens) != 2 or tokens[0] != name:
        raise MeshFormatError(f"line {ln}: expected '{name} <count>'")
    try:
        count = int(tokens[1])
    except ValueError:
        raise MeshFormatError(f"line {ln}: bad count {tokens[1]!r}") from None
    if count < 0:
        raise MeshFormatError(f"line {ln}: negative count {count}")
    return count


def read_mesh(path) -> Mesh:
    """Read and validate a mesh file; see the module docs for the grammar.

    Raises MeshFormatError (naming the offending line) on parse problems
    and MeshTopologyError on connectivity violations.
    """
    reader = _LineReader(path)
    tag_by_name = {t.value: t for t in Tag}

    nv = _read_section_header(reader, "VERTICES")
    vertices = np.empty((nv, 2))
    for k in range(nv):
        ln, tokens = reader.next("vertex coordinates")
        if len(tokens) != 2:
            raise MeshFormatError(f"line {ln}: expected 2 coordinates, got {len(tokens)}")
        try:
            vertices[k] = [float(tokens[0]), float(tokens[1])]
        except ValueError:
            raise MeshFormatError(f"line {ln}: bad coordinate in {tokens}") from None

    nt = _read_section_header(reader, "TRIANGLES")
    triangles = np.empty((nt, 3), dtype=np.int64)
    for k in range(nt):
        ln, tokens = reader.next("triangle indices")
        if len(tokens) != 3:
            raise MeshFormatError(f"line {ln}: expected 3 vertex indices, got {len(tokens)}")
        try:
            tri = [int(t) for t in tokens]
        except ValueError:
            raise MeshFormatError(f"line {ln}: bad vertex index in {tokens}") from None
        for v in tri:
            if not (0 <= v < nv):
                raise MeshFormatError(f"line {ln}: triangle vertex index {v} out of range")
        triangles[k] = tri

    nb = _read_section_header(reader, "BOUNDARY")
    edges = np.empty((nb, 2), dtype=np.int64)
    tags = []
    for k in range(nb):
        ln, tokens = reader.next("boundary edge")
        if len(tokens) != 3:
            raise MeshFormatError(
                f"line {ln}: expected '<i> <j> <tag>', got {len(tokens)} tokens"
            )
        try:
            a, b = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise MeshFormatError(f"line {ln}: bad vertex index in {tokens}") from None
        for v in (a, b):
            if not (0 <= v < nv):
                raise MeshFormatError(f"line {ln}: boundary vertex index {v} out of range")
        tag = tag_by_name.get(tokens[2])
        if tag is None:
            raise MeshFormatError(f"line {ln}: unknown boundary tag {tokens[2]!r}")
        edges[k] = (a, b)
        tags.append(tag)

    if not reader.exhausted():
        ln, _ = reader.next("")
        raise MeshFormatError(f"line {ln}: trailing content after BOUNDARY section")

    mesh = _make_mesh(vertices, triangles, edges, tags)
    validate(mesh)
    return mesh


# ---------------------------------------------------------------------------
# symmetry helpers


def symmetry_permutation(mesh: Mesh, angle: float, tol: float = 1e-9) -> np.ndarray:
    """Vertex permutation realizing rotation by ``angle`` about the origin.

    Returns ``p`` with vertex ``p[i]`` at the rotated position of vertex
    ``i``.  Raises MeshTopologyError if the rotation does not map the
    vertex set onto itself within ``tol``.
    """
    c, s = math.cos(angle), math.sin(angle)
    v = mesh.vertices
    rotated = np.column_stack([c * v[:, 0] - s * v[:, 1], s * v[:, 0] + c * v[:, 1]])
    dist, idx = cKDTree(v).query(rotated)
    if dist.max() > tol:
        worst = int(np.argmax(dist))
        raise MeshTopologyError(
            f"rotation by {angle:g} does not map vertex {worst} onto the mesh "
            f"(distance {dist[worst]:.3e})"
        )
    if len(np.unique(idx)) != mesh.num_vertices:
        raise MeshTopologyError("rotation image is not a permutation of the vertices")
    return idx
