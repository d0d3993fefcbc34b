"""Triangle meshes with surface samples, nearest queries, winding numbers,
and penetration measures.

All distance queries run against each mesh's uniform surface sample set
(2000 points per object, 500 per gripper link by default), not against
authored vertices, so results do not depend on tessellation density. The
kd-tree over the samples accelerates queries without approximating them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import meshio
from .errors import ValidationError

DEFAULT_OBJECT_SAMPLES = 2000
DEFAULT_LINK_SAMPLES = 500

# faces with area below this fraction of the mean face area are dropped at load
_DEGENERATE_REL_AREA = 1e-12


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle mesh plus a fixed uniform surface sample set.

    Immutable after construction; all queries are read-only.
    """

    vertices: np.ndarray        # (V, 3) float64
    faces: np.ndarray           # (F, 3) int64
    vertex_normals: np.ndarray  # (V, 3) unit, outward for consistently wound meshes
    sample_points: np.ndarray   # (S, 3) on-surface points
    sample_normals: np.ndarray  # (S, 3) unit, barycentric-interpolated
    sample_faces: np.ndarray    # (S,) face index each sample came from
    tree: cKDTree = field(repr=False, compare=False)

    def __post_init__(self):
        for arr in (self.vertices, self.faces, self.vertex_normals,
                    self.sample_points, self.sample_normals, self.sample_faces):
            arr.setflags(write=False)

    @property
    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def total_area(self) -> float:
        return float(_face_areas(self.vertices, self.faces).sum())


@dataclass(frozen=True)
class PenetrationSets:
    """Sample indices of each mesh lying strictly inside the other."""

    inside_object: np.ndarray   # gripper sample indices inside the object mesh
    inside_gripper: np.ndarray  # object sample indices inside the gripper mesh


def _face_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def _vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    face_normal = np.cross(b - a, c - a)  # length = 2 * area, weights by area
    normals = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(normals, faces[:, k], face_normal)
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    # isolated vertices keep a placeholder normal; they carry no samples
    safe = np.where(norm > 0, norm, 1.0)
    normals = normals / safe
    normals[norm[:, 0] == 0] = (0.0, 0.0, 1.0)
    return normals


def _sample_surface(
    vertices: np.ndarray,
    faces: np.ndarray,
    vertex_normals: np.ndarray,
    count: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Area-weighted uniform surface sampling, deterministic given the seed."""
    rng = np.random.default_rng(seed)
    areas = _face_areas(vertices, faces)
    probs = areas / areas.sum()
    face_idx = rng.choice(len(faces), size=count, p=probs)
    uv = rng.random((count, 2))
    flip = uv.sum(axis=1) > 1.0
    uv[flip] = 1.0 - uv[flip]
    u, v = uv[:, 0], uv[:, 1]
    w = 1.0 - u - v
    tri = faces[face_idx]
    points = (
        w[:, None] * vertices[tri[:, 0]]
        + u[:, None] * vertices[tri[:, 1]]
        + v[:, None] * vertices[tri[:, 2]]
    )
    normals = (
        w[:, None] * vertex_normals[tri[:, 0]]
        + u[:, None] * vertex_normals[tri[:, 1]]
        + v[:, None] * vertex_normals[tri[:, 2]]
    )
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = normals / np.where(norm > 0, norm, 1.0)
    return points, normals, face_idx


def build_mesh(
    vertices: np.ndarray,
    faces: np.ndarray,
    sample_count: int = DEFAULT_OBJECT_SAMPLES,
    seed: int = 0,
) -> TriMesh:
    """Construct a TriMesh from raw arrays: clean, normalize, sample, index."""
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise ValidationError("vertices must be (V, 3)")
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise ValidationError("faces must be (F, 3)")
    if not np.isfinite(vertices).all():
        raise ValidationError("non-finite vertex coordinates")
    if len(faces) == 0:
        raise ValidationError("empty mesh (no faces)")
    if faces.min() < 0 or faces.max() >= len(vertices):
        raise ValidationError("face index out of range")
    if sample_count < 4:
        raise ValidationError("sample_count must be >= 4")
    areas = _face_areas(vertices, faces)
    total = areas.sum()
    if total <= 0:
        raise ValidationError("mesh has zero total area")
    keep = areas > _DEGENERATE_REL_AREA * (total / len(faces))
    faces = faces[keep]
    if len(faces) == 0:
        raise ValidationError("all faces degenerate")
    vnorm = _vertex_normals(vertices, faces)
    points, normals, face_idx = _sample_surface(vertices, faces, vnorm, sample_count, seed)
    return TriMesh(
        vertices=vertices,
        faces=faces,
        vertex_normals=vnorm,
        sample_points=points,
        sample_normals=normals,
        sample_faces=face_idx,
        tree=cKDTree(points),
    )


def mesh_with_samples(
    vertices: np.ndarray,
    faces: np.ndarray,
    sample_points: np.ndarray,
    sample_normals: np.ndarray,
    sample_faces: np.ndarray | None = None,
) -> TriMesh:
    """Assemble a TriMesh around an externally supplied sample set.

    Used for posed gripper geometry, where samples are rigidly transformed
    copies of the link-local sample sets rather than fresh draws.
    """
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int64)
    sample_points = np.ascontiguousarray(sample_points, dtype=np.float64)
    sample_normals = np.ascontiguousarray(sample_normals, dtype=np.float64)
    if sample_faces is None:
        sample_faces = np.zeros(len(sample_points), dtype=np.int64)
    return TriMesh(
        vertices=vertices,
        faces=faces,
        vertex_normals=_vertex_normals(vertices, faces),
        sample_points=sample_points,
        sample_normals=sample_normals,
        sample_faces=np.ascontiguousarray(sample_faces, dtype=np.int64),
        tree=cKDTree(sample_points),
    )


def load_mesh(path: str | Path, target_sample_count: int = DEFAULT_OBJECT_SAMPLES, seed: int = 0) -> TriMesh:
    """Load an OBJ file and build a sampled mesh."""
    vertices, faces = meshio.read_obj(path)
    return build_mesh(vertices, faces, sample_count=target_sample_count, seed=seed)


def nearest_distance(p, mesh: TriMesh) -> float:
    """Distance from a point to the mesh's sample set."""
    d, _ = mesh.tree.query(np.asarray(p, dtype=np.float64))
    return float(d)


def nearest_point(p, mesh: TriMesh) -> tuple[int, float]:
    """Nearest sample index and distance; ties broken by lowest index."""
    p = np.asarray(p, dtype=np.float64)
    d, idx = mesh.tree.query(p)
    # the kd-tree picks an arbitrary argmin among ties; re-resolve exactly
    candidates = mesh.tree.query_ball_point(p, d * (1.0 + 1e-12) + 1e-300)
    if candidates:
        cand = np.sort(np.asarray(candidates, dtype=np.int64))
        dists = np.linalg.norm(mesh.sample_points[cand] - p, axis=1)
        best = dists.min()
        idx = int(cand[dists == best][0])
        d = best
    return int(idx), float(d)


def _solid_angle_sums(points: np.ndarray, vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Sum of signed solid angles of all faces seen from each point."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n_faces = len(faces)
    tri0 = vertices[faces[:, 0]]
    tri1 = vertices[faces[:, 1]]
    tri2 = vertices[faces[:, 2]]
    out = np.empty(len(points), dtype=np.float64)
    # chunk so the (chunk, F, 3) temporaries stay modest
    chunk = max(1, int(4_000_000 // max(n_faces, 1)))
    for lo in range(0, len(points), chunk):
        p = points[lo:lo + chunk][:, None, :]
        a = tri0[None, :, :] - p
        b = tri1[None, :, :] - p
        c = tri2[None, :, :] - p
        la = np.linalg.norm(a, axis=2)
        lb = np.linalg.norm(b, axis=2)
        lc = np.linalg.norm(c, axis=2)
        numer = np.einsum("pfi,pfi->pf", a, np.cross(b, c))
        denom = (
            la * lb * lc
            + np.einsum("pfi,pfi->pf", a, b) * lc
            + np.einsum("pfi,pfi->pf", b, c) * la
            + np.einsum("pfi,pfi->pf", c, a) * lb
        )
        out[lo:lo + chunk] = 2.0 * np.arctan2(numer, denom).sum(axis=1)
    return out


def winding_numbers(points: np.ndarray, mesh: TriMesh) -> np.ndarray:
    """Generalized winding number of each point: solid angle sum / 4 pi."""
    return _solid_angle_sums(points, mesh.vertices, mesh.faces) / (4.0 * np.pi)


def winding_number(p, mesh: TriMesh) -> float:
    return float(winding_numbers(np.asarray(p, dtype=np.float64)[None, :], mesh)[0])


def points_inside(points: np.ndarray, mesh: TriMesh) -> np.ndarray:
    """Classify points as strictly inside (winding number > 0.5).

    Points outside the mesh AABB are classified outside without evaluating
    the winding sum; for a closed mesh that is exact.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    lo, hi = mesh.aabb
    in_box = np.all((points >= lo) & (points <= hi), axis=1)
    result = np.zeros(len(points), dtype=bool)
    if in_box.any():
        result[in_box] = winding_numbers(points[in_box], mesh) > 0.5
    return result


def penetration_sets(gripper_mesh: TriMesh, object_mesh: TriMesh) -> PenetrationSets:
    """Classify each mesh's samples against the other via winding numbers."""
    inside_object = np.flatnonzero(points_inside(gripper_mesh.sample_points, object_mesh))
    inside_gripper = np.flatnonzero(points_inside(object_mesh.sample_points, gripper_mesh))
    return PenetrationSets(inside_object=inside_object, inside_gripper=inside_gripper)


def penetration_volume(
    mesh_a: TriMesh,
    mesh_b: TriMesh,
    sample_count: int = 100_000,
    seed: int = 0,
) -> float:
    """Monte Carlo estimate of the intersection volume of two meshes (m^3).

    Uniform samples in the AABB intersection are counted when inside both
    meshes; deterministic given the seed.
    """
    if sample_count < 1000:
        raise ValidationError("sample_count must be >= 1000")
    lo_a, hi_a = mesh_a.aabb
    lo_b, hi_b = mesh_b.aabb
    lo = np.maximum(lo_a, lo_b)
    hi = np.minimum(hi_a, hi_b)
    if np.any(lo >= hi):
        return 0.0
    box_volume = float(np.prod(hi - lo))
    rng = np.random.default_rng(seed)
    points = lo + rng.random((sample_count, 3)) * (hi - lo)
    # test against the cheaper mesh first to prune
    first, second = (mesh_a, mesh_b) if len(mesh_a.faces) <= len(mesh_b.faces) else (mesh_b, mesh_a)
    in_first = points_inside(points, first)
    count = 0
    if in_first.any():
        count = int(points_inside(points[in_first], second).sum())
    return box_volume * count / sample_count


def max_penetration_depth(gripper_mesh: TriMesh, object_mesh: TriMesh) -> float:
    """Deepest gripper sample inside the object, measured to the object surface (m)."""
    inside = points_inside(gripper_mesh.sample_points, object_mesh)
    if not inside.any():
        return 0.0
    d, _ = object_mesh.tree.query(gripper_mesh.sample_points[inside])
    return float(np.max(d))
