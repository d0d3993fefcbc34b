"""Grasp evaluation: wrench-space quality, penetration measures, and
similarity to the demonstration.

The quality score is the radius of the largest origin-centered ball inside
the convex hull of the contact wrenches, estimated by minimizing the hull's
support function over sampled unit 6D directions with local refinement.
Sampling can only overestimate the true radius; tests bound the estimator
against a much denser sampling pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ValidationError
from .geometry import TriMesh, max_penetration_depth, penetration_volume
from .kinematics import GripperConfig, GripperModel, HandDemo, forward_kinematics
from .losses import Hyperparams, contact_heatmap, loss_orientation


@dataclass(frozen=True)
class WrenchModel:
    friction: float = 1.0
    cone_edges: int = 8
    torque_scale: float | None = None  # default: 1 / max contact arm from the centroid
    contact_delta: float = 0.002

    def __post_init__(self):
        if self.friction <= 0:
            raise ValidationError("friction must be positive")
        if self.cone_edges < 3:
            raise ValidationError("cone_edges must be >= 3")
        if self.torque_scale is not None and self.torque_scale <= 0:
            raise ValidationError("torque_scale must be positive")


@dataclass(frozen=True)
class MetricsReport:
    epsilon_quality: float
    force_closure: bool
    max_penetration_depth_cm: float
    penetration_volume_cm3: float
    orientation_difference: float
    contact_heatmap_difference: float

    def to_dict(self) -> dict:
        return {
            "epsilon_quality": self.epsilon_quality,
            "force_closure": self.force_closure,
            "max_penetration_depth_cm": self.max_penetration_depth_cm,
            "penetration_volume_cm3": self.penetration_volume_cm3,
            "orientation_difference": self.orientation_difference,
            "contact_heatmap_difference": self.contact_heatmap_difference,
        }

    @staticmethod
    def from_dict(d: dict) -> "MetricsReport":
        return MetricsReport(
            epsilon_quality=float(d["epsilon_quality"]),
            force_closure=bool(d["force_closure"]),
            max_penetration_depth_cm=float(d["max_penetration_depth_cm"]),
            penetration_volume_cm3=float(d["penetration_volume_cm3"]),
            orientation_difference=float(d["orientation_difference"]),
            contact_heatmap_difference=float(d["contact_heatmap_difference"]),
        )


def extract_contacts(
    gripper_points: np.ndarray, object_mesh: TriMesh, contact_delta: float
) -> tuple[np.ndarray, np.ndarray]:
    """Object-surface contact points and normals where the gripper touches.

    Touching object samples (within contact_delta of the gripper) are
    greedily clustered with radius 2 * contact_delta; each cluster yields
    its mean point and normalized mean normal. Samples are visited in index
    order, so the result is deterministic.
    """
    tree = cKDTree(np.asarray(gripper_points, dtype=np.float64))
    d, _ = tree.query(object_mesh.sample_points)
    touching = np.flatnonzero(d < contact_delta)
    if len(touching) == 0:
        return np.empty((0, 3)), np.empty((0, 3))
    pts = object_mesh.sample_points[touching]
    nrm = object_mesh.sample_normals[touching]
    radius = 2.0 * contact_delta
    seeds: list[np.ndarray] = []
    members: list[list[int]] = []
    for i, p in enumerate(pts):
        placed = False
        for c, seed in enumerate(seeds):
            if np.linalg.norm(p - seed) <= radius:
                members[c].append(i)
                placed = True
                break
        if not placed:
            seeds.append(p)
            members.append([i])
    points = np.array([pts[m].mean(axis=0) for m in members])
    normals = np.array([nrm[m].mean(axis=0) for m in members])
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return points, normals


def _cone_tangents(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = ref - (ref @ axis) * axis
    u /= np.linalg.norm(u)
    return u, np.cross(axis, u)


def contact_wrenches(
    points: np.ndarray,
    normals: np.ndarray,
    wrench: WrenchModel,
    centroid: np.ndarray,
) -> np.ndarray:
    """Primitive wrenches: discretized friction-cone edges at every contact.

    Forces press along the inward surface normal with unit normal component;
    torques are taken about the centroid and rescaled so force and torque
    magnitudes are commensurate.
    """
    arms = np.linalg.norm(points - centroid, axis=1)
    scale = wrench.torque_scale
    if scale is None:
        max_arm = float(arms.max()) if len(arms) else 1.0
        scale = 1.0 / max_arm if max_arm > 0 else 1.0
    phis = 2.0 * np.pi * np.arange(wrench.cone_edges) / wrench.cone_edges
    rows = []
    for p, n_out in zip(points, normals):
        axis = -n_out / np.linalg.norm(n_out)
        u, v = _cone_tangents(axis)
        forces = axis[None, :] + wrench.friction * (
            np.cos(phis)[:, None] * u + np.sin(phis)[:, None] * v
        )
        torques = scale * np.cross(p - centroid, forces)
        rows.append(np.concatenate([forces, torques], axis=1))
    return np.concatenate(rows, axis=0)


def _support_values(wrenches: np.ndarray, directions: np.ndarray) -> np.ndarray:
    out = np.empty(len(directions))
    chunk = max(1, int(8_000_000 // max(len(wrenches), 1)))
    for lo in range(0, len(directions), chunk):
        out[lo:lo + chunk] = (directions[lo:lo + chunk] @ wrenches.T).max(axis=1)
    return out


def _refine_direction(wrenches: np.ndarray, direction: np.ndarray) -> float:
    """Coordinate descent on the unit sphere from one direction."""
    d = direction / np.linalg.norm(direction)
    best = float((wrenches @ d).max())
    step = 0.25
    while step > 1e-4:
        improved = False
        for c in range(6):
            for s in (step, -step):
                cand = d.copy()
                cand[c] += s
                cand /= np.linalg.norm(cand)
                val = float((wrenches @ cand).max())
                if val < best:
                    best, d = val, cand
                    improved = True
        if not improved:
            step /= 4.0
    return best


def epsilon_quality(
    contact_points: np.ndarray,
    contact_normals: np.ndarray,
    wrench: WrenchModel,
    direction_samples: int = 20_000,
    seed: int = 0,
    centroid: np.ndarray | None = None,
    refine_top: int = 10,
) -> tuple[float, bool]:
    """Largest origin-centered ball radius inside the wrench hull, or (0, False).

    Minimizes the support function over sampled unit directions, then refines
    from the lowest few. A nonpositive minimum means the origin is outside or
    on the hull boundary: no force closure.
    """
    if direction_samples < 1000:
        raise ValidationError("direction_samples must be >= 1000")
    contact_points = np.atleast_2d(np.asarray(contact_points, dtype=np.float64))
    if len(contact_points) < 2:
        return 0.0, False
    contact_normals = np.atleast_2d(np.asarray(contact_normals, dtype=np.float64))
    if centroid is None:
        centroid = contact_points.mean(axis=0)
    wrenches = contact_wrenches(contact_points, contact_normals, wrench, centroid)

    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((direction_samples, 6))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    support = _support_values(wrenches, directions)
    order = np.argsort(support)
    best = float(support[order[0]])
    for idx in order[:refine_top]:
        best = min(best, _refine_direction(wrenches, directions[idx]))
    if best <= 0.0:
        return 0.0, False
    return best, True


def evaluate(
    object_mesh: TriMesh,
    demo: HandDemo,
    model: GripperModel,
    config: GripperConfig,
    hp: Hyperparams = Hyperparams(),
    wrench: WrenchModel = WrenchModel(),
    direction_samples: int = 20_000,
    seed: int = 0,
) -> MetricsReport:
    """All evaluation quantities for one grasp; deterministic given the seed."""
    posed = forward_kinematics(model, config)
    merged = posed.merged_mesh()

    h_hand = contact_heatmap(object_mesh, demo.hand_mesh.sample_points, hp.heatmap_falloff)
    h_robot = contact_heatmap(object_mesh, posed.sample_points, hp.heatmap_falloff)
    heat_diff = float(np.abs(h_hand.values - h_robot.values).mean())

    orient_diff = loss_orientation(posed.palm, demo.palm_frame)

    depth_m = max_penetration_depth(merged, object_mesh)
    volume_m3 = penetration_volume(merged, object_mesh, sample_count=100_000, seed=seed + 1000)

    points, normals = extract_contacts(posed.sample_points, object_mesh, wrench.contact_delta)
    centroid = object_mesh.sample_points.mean(axis=0)
    eps, closure = epsilon_quality(
        points,
        normals,
        wrench,
        direction_samples=direction_samples,
        seed=seed + 2000,
        centroid=centroid,
    )
    return MetricsReport(
        epsilon_quality=eps,
        force_closure=closure,
        max_penetration_depth_cm=depth_m * 100.0,
        penetration_volume_cm3=volume_m3 * 1e6,
        orientation_difference=orient_diff,
        contact_heatmap_difference=heat_diff,
    )
