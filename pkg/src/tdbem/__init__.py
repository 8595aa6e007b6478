"""Space-time Galerkin boundary elements for the retarded wave single-layer equation."""

__version__ = "0.1.0"

from .mesh import (
    MeshError,
    MeshStats,
    TriangleMesh,
    load_off,
    make_icosahedron,
    make_square_screen,
    mesh_stats,
    refine_uniform,
    save_off,
)

__all__ = [
    "MeshError",
    "MeshStats",
    "TriangleMesh",
    "load_off",
    "make_icosahedron",
    "make_square_screen",
    "mesh_stats",
    "refine_uniform",
    "save_off",
    "__version__",
]
