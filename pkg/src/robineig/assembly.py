"""P1 Galerkin matrices and boundary functionals on tagged triangulations.

Assembled operators:

* stiffness ``K``  with entries from the gradient inner product,
* consistent mass ``M`` (local block ``area/12 * [[2,1,1],[1,2,1],[1,1,2]]``),
* boundary mass ``B_h``, the vertex-lumped (trapezoidal) quadrature of the
  weighted trace product: edge (i, j) of length L adds ``L/(2 h_i)`` to
  entry (i, i) and ``L/(2 h_j)`` to (j, j).

``boundary_l1`` uses the same trapezoidal weights, so for nodal u > 0 on
the boundary and h = m u / boundary_l1(u) the identity
``u' B_h u = boundary_l1(u)^2 / m`` holds exactly (one shared quadrature on
both sides of the Cauchy-Schwarz bound).

All matrices are exactly symmetric: assembly fills only the upper triangle
and mirrors it, so entry (i, j) and (j, i) are the same stored float.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, Tag

DEGENERATE_AREA = 1e-14


class SymSparseMatrix:
    """Square symmetric sparse matrix (CSR storage, exact symmetry)."""

    def __init__(self, csr: sp.csr_matrix):
        if csr.shape[0] != csr.shape[1]:
            raise ValueError(f"matrix must be square, got shape {csr.shape}")
        self.csr = csr

    @classmethod
    def from_upper_triplets(cls, dim: int, rows, cols, vals) -> "SymSparseMatrix":
        """Build from upper-triangle triplets (rows <= cols); mirrors exactly."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if np.any(rows > cols):
            raise ValueError("from_upper_triplets requires row <= col")
        upper = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
        upper.sum_duplicates()
        strict = sp.triu(upper, k=1)
        full = (upper + strict.T).tocsr()
        full.sum_duplicates()
        return cls(full)

    @classmethod
    def from_diagonal(cls, diag) -> "SymSparseMatrix":
        diag = np.asarray(diag, dtype=np.float64)
        return cls(sp.diags(diag, format="csr"))

    @property
    def dim(self) -> int:
        return self.csr.shape[0]

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return self.csr @ x

    def __add__(self, other: "SymSparseMatrix") -> "SymSparseMatrix":
        return SymSparseMatrix((self.csr + other.csr).tocsr())

    def diagonal(self) -> np.ndarray:
        return self.csr.diagonal()

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def quad(self, u: np.ndarray, v: np.ndarray | None = None) -> float:
        """Quadratic form u' A v (v defaults to u)."""
        return float(u @ (self.csr @ (u if v is None else v)))

    def is_exactly_symmetric(self) -> bool:
        d = self.csr - self.csr.T.tocsr()
        return d.nnz == 0 or not np.any(d.data)


@dataclass(frozen=True)
class BoundaryProfile:
    """Strictly positive boundary values h at covered boundary vertices.

    ``indices`` is sorted;  ``tags`` names the boundary components covered.
    """

    indices: np.ndarray
    values: np.ndarray
    tags: frozenset

    def __post_init__(self):
        idx = np.asarray(self.indices)
        if np.any(np.diff(idx) <= 0):
            raise ValueError("profile indices must be sorted and unique")
        bad = np.nonzero(np.asarray(self.values) <= 0.0)[0]
        if bad.size:
            v = int(idx[bad[0]])
            raise ValueError(
                f"insulation value must be positive, got {self.values[bad[0]]:g} "
                f"at vertex {v}"
            )

    @classmethod
    def constant(cls, mesh: Mesh, value: float, tags=None) -> "BoundaryProfile":
        tags = frozenset(tags) if tags is not None else mesh.tags_present()
        idx = np.unique(
            np.concatenate([mesh.boundary_vertices(t) for t in tags])
        )
        return cls(idx, np.full(idx.size, float(value)), tags)

    def lookup(self, nv: int) -> np.ndarray:
        """Length-nv array with h at covered vertices and NaN elsewhere."""
        full = np.full(nv, np.nan)
        full[self.indices] = self.values
        return full

    def mass(self, mesh: Mesh) -> float:
        """Trapezoidal boundary integral of h over the covered edges."""
        h = self.lookup(mesh.num_vertices)
        total = 0.0
        for (a, b), tag, length in zip(
            mesh.boundary_edges, mesh.boundary_tags, mesh.boundary_lengths
        ):
            if tag in self.tags:
                total += 0.5 * length * (h[a] + h[b])
        return total


@dataclass(frozen=True)
class DirichletConstraint:
    """Sorted vertex indices pinned to zero (the essential boundary)."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices)
        if idx.size and np.any(np.diff(idx) <= 0):
            raise ValueError("constraint indices must be sorted and unique")

    @classmethod
    def from_mesh(cls, mesh: Mesh) -> "DirichletConstraint":
        """Constrain exactly the vertices incident to DirichletInner edges."""
        return cls(mesh.boundary_vertices(Tag.DIRICHLET_INNER))

    @property
    def size(self) -> int:
        return len(self.indices)


def _triangle_geometry(mesh: Mesh):
    p = mesh.vertices[mesh.triangles]          # (nt, 3, 2)
    # edge vector opposite local vertex k
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    area = 0.5 * (e[:, 2, 0] * (-e[:, 1, 1]) - e[:, 2, 1] * (-e[:, 1, 0]))
    bad = np.nonzero(np.abs(area) < DEGENERATE_AREA)[0]
    if bad.size:
        raise ValueError(
            f"degenerate triangle {bad[0]}: area {area[bad[0]]:.3e} below "
            f"{DEGENERATE_AREA:g}"
        )
    return e, area


_LOCAL_PAIRS = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]


def _assemble_from_local(mesh: Mesh, local) -> SymSparseMatrix:
    """Scatter symmetric 3x3 local blocks into global upper triplets.

    ``local[(a, b)]`` is the (nt,) array of local entries for vertex pair
    (a, b); only the six unordered pairs are visited, so the mirrored
    global entries are the same accumulated floats.
    """
    tri = mesh.triangles
    rows, cols, vals = [], [], []
    for a, b in _LOCAL_PAIRS:
        ga, gb = tri[:, a], tri[:, b]
        rows.append(np.minimum(ga, gb))
        cols.append(np.maximum(ga, gb))
        vals.append(local[(a, b)])
    return SymSparseMatrix.from_upper_triplets(
        mesh.num_vertices,
        np.concatenate(rows),
        np.concatenate(cols),
        np.concatenate(vals),
    )


def assemble_stiffness(mesh: Mesh) -> SymSparseMatrix:
    """P1 stiffness matrix of the gradient inner product.

    Local entries (e_a . e_b) / (4 area) with e_k the edge opposite local
    vertex k; constants lie in the kernel, so every row sums to zero.
    """
    e, area = _triangle_geometry(mesh)
    scale = 1.0 / (4.0 * area)
    local = {
        (a, b): scale * (e[:, a, 0] * e[:, b, 0] + e[:, a, 1] * e[:, b, 1])
        for a, b in _LOCAL_PAIRS
    }
    return _assemble_from_local(mesh, local)


def assemble_mass(mesh: Mesh) -> SymSparseMatrix:
    """Consistent (non-lumped) P1 mass matrix."""
    _, area = _triangle_geometry(mesh)
    local = {
        (a, b): area * ((2.0 if a == b else 1.0) / 12.0) for a, b in _LOCAL_PAIRS
    }
    return _assemble_from_local(mesh, local)


def assemble_boundary_mass(mesh: Mesh, profile: BoundaryProfile) -> SymSparseMatrix:
    """Diagonal boundary mass for the 1/h-weighted trace product.

    Vertex-lumped trapezoidal rule: edge (i, j) of length L contributes
    L/(2 h_i) to (i, i) and L/(2 h_j) to (j, j).  Interior rows are zero.
    Raises ValueError (naming the vertex) on nonpositive or missing h.
    """
    h = profile.lookup(mesh.num_vertices)
    diag = np.zeros(mesh.num_vertices)
    for (a, b), tag, length in zip(
        mesh.boundary_edges, mesh.boundary_tags, mesh.boundary_lengths
    ):
        if tag not in profile.tags:
            continue
        for v in (int(a), int(b)):
            hv = h[v]
            if not np.isfinite(hv):
                raise ValueError(f"profile does not cover boundary vertex {v}")
            if hv <= 0.0:
                raise ValueError(
                    f"insulation value must be positive, got {hv:g} at vertex {v}"
                )
            diag[v] += 0.5 * length / hv
    return SymSparseMatrix.from_diagonal(diag)


def boundary_l1(mesh: Mesh, u: np.ndarray) -> float:
    """Trapezoidal boundary integral of |u| over the whole boundary.

    Uses the same quadrature weights as :func:`assemble_boundary_mass`.
    """
    e = mesh.boundary_edges
    absu = np.abs(np.asarray(u, dtype=np.float64))
    return float(np.sum(0.5 * mesh.boundary_lengths * (absu[e[:, 0]] + absu[e[:, 1]])))


def profile_from_vector(mesh: Mesh, u: np.ndarray, m: float) -> BoundaryProfile:
    """Mass-m profile proportional to |u| on the boundary.

    h = m |u| / boundary_l1(u) at every boundary vertex; the trapezoidal
    mass of the result is m up to rounding.  Raises ValueError when the
    boundary trace vanishes (degenerate profile) and propagates the
    positivity check if u vanishes at isolated boundary vertices.
    """
    if m <= 0.0:
        raise ValueError(f"profile mass must be positive, got {m}")
    total = boundary_l1(mesh, u)
    if total <= 0.0:
        raise ValueError("degenerate profile: boundary trace of u vanishes")
    idx = mesh.boundary_vertices()
    values = m * np.abs(np.asarray(u)[idx]) / total
    return BoundaryProfile(idx, values, mesh.tags_present())


def apply_constraint(A: SymSparseMatrix, c: DirichletConstraint) -> SymSparseMatrix:
    """Symmetric elimination: zero constrained rows/columns, unit diagonal."""
    if c.size == 0:
        return SymSparseMatrix(A.csr.copy())
    idx = np.asarray(c.indices)
    if idx.min() < 0 or idx.max() >= A.dim:
        raise ValueError("constraint index out of range")
    coo = A.csr.tocoo()
    constrained = np.zeros(A.dim, dtype=bool)
    constrained[idx] = True
    keep = ~(constrained[coo.row] | constrained[coo.col])
    rows = np.concatenate([coo.row[keep], idx])
    cols = np.concatenate([coo.col[keep], idx])
    vals = np.concatenate([coo.data[keep], np.ones(idx.size)])
    out = sp.coo_matrix((vals, (rows, cols)), shape=(A.dim, A.dim)).tocsr()
    out.sum_duplicates()
    return SymSparseMatrix(out)


def constrain_vector(b: np.ndarray, c: DirichletConstraint) -> np.ndarray:
    """Companion of apply_constraint: zero the constrained entries of b."""
    out = np.array(b, dtype=np.float64, copy=True)
    if c.size:
        out[c.indices] = 0.0
    return out
