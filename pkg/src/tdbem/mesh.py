"""Flat triangulated surfaces: screens and closed polyhedra.

Meshes are immutable after construction and safe to share across threads.
All geometry is stored in 3D even for planar screens.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    """Invalid mesh data or malformed mesh file."""


@dataclass(frozen=True)
class MeshStats:
    """Derived size measures of a triangulation.

    h : largest triangle diameter (longest edge).
    diam : largest pairwise vertex distance of the surface.
    quasi_uniformity : max/min triangle diameter, >= 1.
    """

    h: float
    diam: float
    quasi_uniformity: float


@dataclass(frozen=True)
class TriangleMesh:
    """Triangulated flat-faced surface.

    vertices : (nv, 3) float array, triangles : (nt, 3) int array of
    vertex indices, is_closed : closed polyhedron vs open screen.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    is_closed: bool = False
    _stats: MeshStats = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        verts = np.ascontiguousarray(np.asarray(self.vertices, dtype=float))
        tris = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise MeshError(f"vertices must be (n, 3), got {verts.shape}")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise MeshError(f"triangles must be (n, 3), got {tris.shape}")
        if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
            raise MeshError("triangle vertex index out of range")
        if len(tris) == 0:
            raise MeshError("mesh has no triangles")
        verts.setflags(write=False)
        tris.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)
        if np.any(self.areas() <= 0.0):
            raise MeshError("mesh contains a degenerate (zero-area) triangle")
        if self.is_closed:
            v, e, f = len(verts), self.n_edges(), len(tris)
            if v - e + f != 2:
                raise MeshError(
                    f"closed mesh violates Euler formula: V-E+F = {v - e + f}"
                )
        object.__setattr__(self, "_stats", _compute_stats(verts, tris))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_coords(self, i: int) -> np.ndarray:
        """(3, 3) vertex coordinates of triangle i."""
        return self.vertices[self.triangles[i]]

    def all_coords(self) -> np.ndarray:
        """(nt, 3, 3) coordinates of every triangle."""
        return self.vertices[self.triangles]

    def areas(self) -> np.ndarray:
        c = self.vertices[self.triangles]
        cross = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def diameters(self) -> np.ndarray:
        """Longest edge of each triangle."""
        c = self.vertices[self.triangles]
        e = np.stack(
            [c[:, 1] - c[:, 0], c[:, 2] - c[:, 1], c[:, 0] - c[:, 2]], axis=1
        )
        return np.linalg.norm(e, axis=2).max(axis=1)

    def n_edges(self) -> int:
        t = np.asarray(self.triangles)
        pairs = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        pairs.sort(axis=1)
        return len(np.unique(pairs, axis=0))

    @property
    def h(self) -> float:
        return self._stats.h

    @property
    def diam(self) -> float:
        return self._stats.diam

    def content_hash(self) -> str:
        """Stable hash of the mesh geometry and connectivity."""
        md = hashlib.sha256()
        md.update(f"{self.n_vertices} {self.n_triangles} {self.is_closed}".encode())
        for v in self.vertices:
            md.update(("%.17g %.17g %.17g" % tuple(v)).encode())
        md.update(self.triangles.tobytes())
        return md.hexdigest()


def _compute_stats(verts: np.ndarray, tris: np.ndarray) -> MeshStats:
    c = verts[tris]
    e = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 1], c[:, 0] - c[:, 2]], axis=1)
    diams = np.linalg.norm(e, axis=2).max(axis=1)
    d2 = np.sum((verts[:, None, :] - verts[None, :, :]) ** 2, axis=2)
    return MeshStats(
        h=float(diams.max()),
        diam=float(np.sqrt(d2.max())),
        quasi_uniformity=float(diams.max() / diams.min()),
    )


def mesh_stats(mesh: TriangleMesh) -> MeshStats:
    """Exact h, surface diameter and quasi-uniformity ratio."""
    return mesh._stats


def make_square_screen(n: int) -> TriangleMesh:
    """Structured triangulation of the square screen [-1/2, 1/2]^2 x {0}.

    n x n grid of cells, each split along the lower-left to upper-right
    diagonal: (n+1)^2 vertices, 2 n^2 triangles.
    """
    if n < 1:
        raise MeshError(f"grid count must be >= 1, got {n}")
    coords = np.linspace(-0.5, 0.5, n + 1)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    verts = np.column_stack([xx.ravel(), yy.ravel(), np.zeros((n + 1) ** 2)])

    def vid(i, j):
        return i * (n + 1) + j

    tris = []
    for i in range(n):
        for j in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return TriangleMesh(verts, np.array(tris), is_closed=False)


# Classic icosahedron connectivity over the golden-ratio vertex table.
_ICOSA_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int64,
)


def make_icosahedron(circumradius: float = 1.0) -> TriangleMesh:
    """Regular icosahedron centered at the origin: 12 vertices, 20 faces."""
    if circumradius <= 0:
        raise MeshError(f"circumradius must be positive, got {circumradius}")
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    verts *= circumradius / np.sqrt(1.0 + t * t)
    return TriangleMesh(verts, _ICOSA_FACES, is_closed=True)


def refine_uniform(mesh: TriangleMesh) -> TriangleMesh:
    """Red refinement: each triangle split into 4 via edge midpoints.

    Faces stay flat; the refined surface is the same polyhedron (no
    sphere projection for closed shapes).
    """
    verts = list(map(tuple, mesh.vertices))
    cache: dict[tuple[int, int], int] = {}

    def midpoint(i: int, j: int) -> int:
        key = (i, j) if i < j else (j, i)
        if key not in cache:
            verts.append(tuple(0.5 * (mesh.vertices[i] + mesh.vertices[j])))
            cache[key] = len(verts) - 1
        return cache[key]

    tris = []
    for a, b, c in mesh.triangles:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        tris += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
    return TriangleMesh(np.array(verts), np.array(tris), is_closed=mesh.is_closed)


def save_off(mesh: TriangleMesh, path) -> None:
    """Write an ASCII OFF file (17 significant digit coordinates)."""
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles} {mesh.n_edges()}\n")
        for v in mesh.vertices:
            fh.write("%.17g %.17g %.17g\n" % tuple(v))
        for t in mesh.triangles:
            fh.write("3 %d %d %d\n" % tuple(t))


def load_off(path, is_closed: bool | None = None) -> TriangleMesh:
    """Read an ASCII OFF file with triangle faces.

    If is_closed is None, the flag is inferred from the Euler formula.
    Raises MeshError naming the offending line on malformed input.
    """
    with open(path) as fh:
        raw = fh.readlines()
    lines = [
        (k + 1, ln.strip()) for k, ln in enumerate(raw)
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    if not lines or lines[0][1] != "OFF":
        raise MeshError(f"{path}: line 1: missing OFF header")
    try:
        nv, nf, _ = map(int, lines[1][1].split())
    except (IndexError, ValueError) as exc:
        raise MeshError(f"{path}: line 2: bad counts line") from exc
    if len(lines) < 2 + nv + nf:
        raise MeshError(f"{path}: truncated file, expected {nv} vertices and {nf} faces")
    verts = np.empty((nv, 3))
    for k in range(nv):
        lineno, text = lines[2 + k]
        parts = text.split()
        if len(parts) < 3:
            raise MeshError(f"{path}: line {lineno}: bad vertex line")
        verts[k] = [float(p) for p in parts[:3]]
    tris = np.empty((nf, 3), dtype=np.int64)
    for k in range(nf):
        lineno, text = lines[2 + nv + k]
        parts = text.split()
        if not parts or parts[0] != "3":
            raise MeshError(f"{path}: line {lineno}: non-triangle face")
        if len(parts) < 4:
            raise MeshError(f"{path}: line {lineno}: bad face line")
        idx = [int(p) for p in parts[1:4]]
        if min(idx) < 0 or max(idx) >= nv:
            raise MeshError(f"{path}: line {lineno}: index out of range")
        tris[k] = idx
    if is_closed is None:
        nt = len(tris)
        pairs = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
        pairs.sort(axis=1)
        ne = len(np.unique(pairs, axis=0))
        is_closed = (nv - ne + nt == 2) and (3 * nt == 2 * ne)
    return TriangleMesh(verts, tris, is_closed=is_closed)
