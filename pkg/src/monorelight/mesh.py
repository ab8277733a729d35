"""Zero-level-set mesh extraction and OBJ export for evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage import measure

from .geometry import GeometryError


@dataclass
class TriangleMesh:
    vertices: np.ndarray   # (V, 3)
    triangles: np.ndarray  # (T, 3) int

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        if len(self.triangles) and self.triangles.max() >= len(self.vertices):
            raise GeometryError("triangle index out of range")

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=-1)


def extract_mesh(field, resolution: int, bounds) -> TriangleMesh:
    """Marching-cubes surface of the zero level set inside an AABB.

    ``bounds`` is ((xmin, ymin, zmin), (xmax, ymax, zmax)).
    """
    if resolution < 16:
        raise GeometryError("resolution must be >= 16")
    lo = np.asarray(bounds[0], dtype=np.float64)
    hi = np.asarray(bounds[1], dtype=np.float64)
    axes = [np.linspace(lo[i], hi[i], resolution) for i in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    values = np.asarray(field(grid), dtype=np.float64).reshape(resolution, resolution, resolution)
    if values.min() > 0 or values.max() < 0:
        raise GeometryError("no surface in bounds")
    spacing = (hi - lo) / (resolution - 1)
    verts, faces, _, _ = measure.marching_cubes(values, level=0.0, spacing=tuple(spacing))
    verts = verts + lo
    mesh = TriangleMesh(verts, faces)
    keep = mesh.triangle_areas() > 1e-12
    return TriangleMesh(mesh.vertices, mesh.triangles[keep])


def sample_mesh_points(mesh: TriangleMesh, count: int, seed: int) -> np.ndarray:
    """Area-weighted point samples on the mesh surface."""
    areas = mesh.triangle_areas()
    if areas.sum() <= 0:
        raise GeometryError("mesh has no area")
    rng = np.random.default_rng(seed)
    probs = areas / areas.sum()
    tri = rng.choice(len(areas), size=count, p=probs)
    u = rng.random(count)
    v = rng.random(count)
    flip = u + v > 1
    u[flip] = 1 - u[flip]
    v[flip] = 1 - v[flip]
    a = mesh.vertices[mesh.triangles[tri, 0]]
    b = mesh.vertices[mesh.triangles[tri, 1]]
    c = mesh.vertices[mesh.triangles[tri, 2]]
    return a + u[:, None] * (b - a) + v[:, None] * (c - a)


def save_obj(mesh: TriangleMesh, path):
    """ASCII OBJ with v/f records only."""
    with open(path, "w") as f:
        for v in mesh.vertices:
            f.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in mesh.triangles:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def load_obj(path) -> TriangleMesh:
    verts = []
    faces = []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    return TriangleMesh(np.array(verts), np.array(faces, dtype=np.int64))
