"""Discontinuous modal polynomial basis of degree q per triangle.

The local basis is the orthonormalized Jacobi (Dubiner) family on the
reference triangle {(u, v): u, v >= 0, u + v <= 1}, exactly L2-orthonormal
there. Physical shape functions are plain pullbacks through the affine
map, so the physical local mass matrix is (2 * area) * identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import eval_jacobi

from .mesh import TriangleMesh

__all__ = ["ReferenceBasis", "SpatialBasis", "reference_basis", "global_dof_map",
           "eval_shape", "local_count"]


def local_count(q: int) -> int:
    return (q + 1) * (q + 2) // 2


class ReferenceBasis:
    """Orthonormal polynomial basis on the reference triangle.

    Functions are indexed in total-degree order: for d = 0..q the pairs
    (i, j) with i + j = d, i ascending.
    """

    def __init__(self, q: int):
        if q < 0:
            raise ValueError(f"spatial degree must be >= 0, got {q}")
        self.q = q
        self.index_pairs = [(i, d - i) for d in range(q + 1) for i in range(d + 1)]
        self.n_local = len(self.index_pairs)

    def eval(self, uv: np.ndarray) -> np.ndarray:
        """Values at reference points uv (n, 2); returns (n, n_local)."""
        uv = np.atleast_2d(np.asarray(uv, dtype=float))
        u, v = uv[:, 0], uv[:, 1]
        w = 1.0 - v
        b = 2.0 * v - 1.0
        # collapsed coordinate; the (1-v)^i prefactor removes the apex issue
        safe = w > 1e-14
        a = np.where(safe, 2.0 * np.divide(u, np.where(safe, w, 1.0)) - 1.0, -1.0)
        out = np.empty((len(uv), self.n_local))
        for col, (i, j) in enumerate(self.index_pairs):
            norm = np.sqrt(2.0 * (2 * i + 1) * (i + j + 1))
            out[:, col] = (
                norm * eval_jacobi(i, 0.0, 0.0, a) * w**i * eval_jacobi(j, 2 * i + 1, 0.0, b)
            )
        return out


def reference_basis(q: int) -> ReferenceBasis:
    """L2-orthonormal basis on the reference triangle, (q+1)(q+2)/2 functions."""
    return ReferenceBasis(q)


@dataclass(frozen=True)
class SpatialBasis:
    """Global discontinuous basis: per-triangle orthonormal modal functions.

    Global dof = triangle_index * n_local + local_index.
    """

    mesh: TriangleMesh
    q: int
    ref: ReferenceBasis = field(repr=False, compare=False, default=None)
    # affine map data per triangle
    origins: np.ndarray = field(repr=False, compare=False, default=None)
    edges1: np.ndarray = field(repr=False, compare=False, default=None)
    edges2: np.ndarray = field(repr=False, compare=False, default=None)
    inv_gram: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        ref = ReferenceBasis(self.q)
        coords = self.mesh.all_coords()
        v0 = coords[:, 0]
        e1 = coords[:, 1] - v0
        e2 = coords[:, 2] - v0
        g11 = np.sum(e1 * e1, axis=1)
        g12 = np.sum(e1 * e2, axis=1)
        g22 = np.sum(e2 * e2, axis=1)
        det = g11 * g22 - g12 * g12
        inv = np.empty((len(coords), 2, 2))
        inv[:, 0, 0] = g22 / det
        inv[:, 0, 1] = -g12 / det
        inv[:, 1, 0] = -g12 / det
        inv[:, 1, 1] = g11 / det
        for name, val in (
            ("ref", ref), ("origins", v0), ("edges1", e1), ("edges2", e2),
            ("inv_gram", inv),
        ):
            object.__setattr__(self, name, val)

    @property
    def n_local(self) -> int:
        return self.ref.n_local

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_triangles * self.ref.n_local

    def dof_triangle_local(self, dof: int) -> tuple[int, int]:
        if not 0 <= dof < self.n_dofs:
            raise IndexError(f"dof {dof} out of range")
        return dof // self.n_local, dof % self.n_local

    def to_reference(self, tri: int, points: np.ndarray) -> np.ndarray:
        """Reference coordinates of physical points on triangle tri."""
        pts = np.atleast_2d(np.asarray(points, dtype=float)) - self.origins[tri]
        rhs = np.stack([pts @ self.edges1[tri], pts @ self.edges2[tri]], axis=1)
        return rhs @ self.inv_gram[tri].T

    def to_physical(self, tri: int, uv: np.ndarray) -> np.ndarray:
        uv = np.atleast_2d(np.asarray(uv, dtype=float))
        return (
            self.origins[tri]
            + np.outer(uv[:, 0], self.edges1[tri])
            + np.outer(uv[:, 1], self.edges2[tri])
        )

    def eval_local(self, tri: int, points: np.ndarray) -> np.ndarray:
        """All local shape values at physical points on triangle tri: (n, n_local)."""
        return self.ref.eval(self.to_reference(tri, points))

    def find_triangle(self, point, tol: float = 1e-10) -> int:
        """Index of a triangle containing the point, or -1."""
        p = np.asarray(point, dtype=float)
        coords = self.mesh.all_coords()
        for tri in range(self.mesh.n_triangles):
            uv = self.to_reference(tri, p[None, :])[0]
            if uv[0] >= -tol and uv[1] >= -tol and uv.sum() <= 1 + tol:
                # reject points off the triangle's plane
                x = self.to_physical(tri, uv[None, :])[0]
                scale = max(np.linalg.norm(coords[tri, 1] - coords[tri, 0]), 1.0)
                if np.linalg.norm(x - p) <= 1e-8 * scale:
                    return tri
        return -1


def global_dof_map(mesh: TriangleMesh, q: int) -> SpatialBasis:
    """Spatial basis with contiguous triangle-major dof ordering."""
    return SpatialBasis(mesh, q)


def eval_shape(basis: SpatialBasis, dof: int, point) -> float:
    """Value of a global shape function at a physical point on its triangle."""
    tri, loc = basis.dof_triangle_local(dof)
    p = np.atleast_2d(np.asarray(point, dtype=float))
    uv = basis.to_reference(tri, p)
    tol = 1e-10
    if np.any(uv[:, 0] < -tol) or np.any(uv[:, 1] < -tol) or np.any(uv.sum(1) > 1 + tol):
        raise ValueError("point lies outside the dof's triangle")
    return float(basis.ref.eval(uv)[0, loc]) if len(p) == 1 else basis.ref.eval(uv)[:, loc]
