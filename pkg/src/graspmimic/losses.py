"""Grasp-similarity objective: contact heatmaps, orientation, interpenetration,
self-penetration, and fingertip attraction, with analytic gradients.

Discrete quantities (nearest-neighbor assignments, inside/outside memberships,
contact sets) are recomputed at every pose but held fixed inside a single
gradient evaluation, so each evaluation differentiates a smooth function of
the configuration. Central finite differences over the same frozen function
are the reference the analytic gradients are tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import NumericalError, ValidationError
from .geometry import TriMesh, points_inside, winding_numbers
from .kinematics import (
    GripperConfig,
    GripperModel,
    PalmFrame,
    PosedGripper,
    PoseJacobian,
    forward_kinematics,
)

_TINY = 1e-12


@dataclass(frozen=True)
class Hyperparams:
    """Objective weights and length scales (lengths in meters)."""

    weight_contact: float = 10.0
    weight_orientation: float = 10.0
    weight_interpen: float = 0.5
    weight_self_pen: float = 1.0
    heatmap_falloff: float = 0.01        # soft-contact length scale
    contact_distance: float = 0.002      # threshold below which a point counts as touching
    push_weight: float = 2.4
    pull_weight: float = 7.0
    normal_weight: float = 0.001
    push_scale: float = 0.04
    pull_scale: float = 0.06
    contact_region_threshold: float = 0.5  # hand-heatmap level defining the contact region

    def __post_init__(self):
        for name in ("heatmap_falloff", "contact_distance", "push_scale", "pull_scale"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        for name in ("weight_contact", "weight_orientation", "weight_interpen", "weight_self_pen",
                     "push_weight", "pull_weight", "normal_weight"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class LossMask:
    """Per-term switches for ablations; fingertip is only used in finger initialization."""

    contact: bool = True
    orientation: bool = True
    interpen: bool = True
    self_pen: bool = True
    fingertip: bool = False

    def any_active(self) -> bool:
        return self.contact or self.orientation or self.interpen or self.self_pen or self.fingertip


@dataclass(frozen=True)
class ContactHeatmap:
    """Per-object-sample soft contact values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class LossBreakdown:
    """Raw term values plus the weighted total. Masked-off terms are zero."""

    total: float
    contact: float
    orientation: float
    interpen: float
    push: float
    pull: float
    normal: float
    self_pen: float
    fingertip: float = 0.0

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "contact": self.contact,
            "orientation": self.orientation,
            "interpen": self.interpen,
            "push": self.push,
            "pull": self.pull,
            "normal": self.normal,
            "self_pen": self.self_pen,
            "fingertip": self.fingertip,
        }


def contact_heatmap(object_mesh: TriMesh, other_points: np.ndarray, falloff: float) -> ContactHeatmap:
    """Soft contact field exp(-d / falloff) of the object against a point set."""
    if falloff <= 0:
        raise ValidationError("falloff must be positive")
    other_points = np.asarray(other_points, dtype=np.float64)
    tree = cKDTree(other_points)
    d, _ = tree.query(object_mesh.sample_points)
    return ContactHeatmap(values=np.exp(-d / falloff))


def loss_contact(h_hand: ContactHeatmap, h_robot: ContactHeatmap) -> tuple[float, float]:
    """L1 heatmap discrepancy: (sum over samples, per-sample mean)."""
    a, b = h_hand.values, h_robot.values
    if a.shape != b.shape:
        raise ValidationError("heatmap lengths differ")
    diff = np.abs(a - b)
    return float(diff.sum()), float(diff.mean())


def loss_orientation(robot_frame: PalmFrame, hand_frame: PalmFrame) -> float:
    """L1 distance between the two palm frames' normal and forward vectors."""
    return float(
        np.abs(robot_frame.normal - hand_frame.normal).sum()
        + np.abs(robot_frame.forward - hand_frame.forward).sum()
    )


def loss_push(
    gripper_points: np.ndarray,
    object_mesh: TriMesh,
    inside_object: np.ndarray,
    inside_gripper: np.ndarray,
    push_scale: float,
) -> float:
    """Expel penetrating samples: saturating distance of every inside point to the other surface."""
    total = 0.0
    if len(inside_gripper):
        tree = cKDTree(gripper_points)
        d, _ = tree.query(object_mesh.sample_points[inside_gripper])
        total += float(np.tanh(d / push_scale).sum())
    if len(inside_object):
        d, _ = object_mesh.tree.query(gripper_points[inside_object])
        total += float(np.tanh(d / push_scale).sum())
    return total


def loss_pull(gripper_points: np.ndarray, object_mesh: TriMesh, contact_distance: float, pull_scale: float) -> float:
    """Attract near-surface samples; constant contribution beyond the contact distance."""
    if contact_distance <= 0:
        raise ValidationError("contact_distance must be positive")
    d, _ = object_mesh.tree.query(np.asarray(gripper_points, dtype=np.float64))
    return float(np.tanh(np.minimum(d, contact_distance) / pull_scale).sum())


def loss_normal(
    gripper_points: np.ndarray,
    gripper_normals: np.ndarray,
    object_mesh: TriMesh,
    contact_distance: float,
) -> float:
    """Penalize non-opposing surface normals at contact locations."""
    d, nearest = object_mesh.tree.query(np.asarray(gripper_points, dtype=np.float64))
    active = d < contact_distance
    if not active.any():
        return 0.0
    cos = np.einsum(
        "si,si->s", gripper_normals[active], object_mesh.sample_normals[nearest[active]]
    )
    return float((1.0 + cos).sum())


def loss_interpen(push: float, pull: float, normal: float, hp: Hyperparams) -> float:
    """Weighted combination of the three interpenetration sub-terms."""
    return hp.push_weight * push + hp.pull_weight * pull + hp.normal_weight * normal


def _self_pen_pairs(model: GripperModel) -> list[tuple[int, int]]:
    """Ordered non-adjacent link pairs tested for self-penetration."""
    adjacent = model.adjacent_link_pairs()
    n = len(model.links)
    return [
        (a, b)
        for a in range(n)
        for b in range(n)
        if a != b and (min(a, b), max(a, b)) not in adjacent
    ]


def loss_self_pen(posed: PosedGripper, push_scale: float) -> float:
    """Same expelling loss applied between non-adjacent links of the gripper."""
    model = posed.model
    total = 0.0
    link_meshes = {}
    for a, b in _self_pen_pairs(model):
        mask_a = posed.sample_link == a
        if not mask_a.any():
            continue
        if b not in link_meshes:
            link_meshes[b] = posed.link_mesh(b)
        mesh_b = link_meshes[b]
        pts_a = posed.sample_points[mask_a]
        inside = points_inside(pts_a, mesh_b)
        if not inside.any():
            continue
        d, _ = mesh_b.tree.query(pts_a[inside])
        total += float(np.tanh(d / push_scale).sum())
    return total


def loss_fingertip_attraction(fingertips: np.ndarray, region_points: np.ndarray) -> float:
    """Sum over fingertips of distance to the nearest contact-region sample."""
    fingertips = np.atleast_2d(np.asarray(fingertips, dtype=np.float64))
    region_points = np.atleast_2d(np.asarray(region_points, dtype=np.float64))
    if len(region_points) == 0:
        return 0.0
    tree = cKDTree(region_points)
    d, _ = tree.query(fingertips)
    return float(np.sum(d))


def contact_region_indices(h_hand: ContactHeatmap, threshold: float) -> np.ndarray:
    """Object sample indices whose hand heatmap exceeds the threshold."""
    return np.flatnonzero(h_hand.values > threshold)


@dataclass
class FrozenAssignments:
    """Discrete state captured at one pose and held fixed while differentiating."""

    heat_nearest: np.ndarray | None = None       # (O,) gripper sample index per object sample
    obj_in_grip: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    obj_in_grip_nearest: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    grip_in_obj: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    grip_in_obj_nearest: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    pull_nearest: np.ndarray | None = None       # (M,) object sample index per gripper sample
    pull_active: np.ndarray | None = None        # (M,) bool: within contact distance
    self_moving: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    self_anchor: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    tip_nearest: np.ndarray | None = None        # (K,) contact-region point index per fingertip


class GraspObjective:
    """Bundles everything needed to evaluate and differentiate the objective.

    The hand side (heatmap and palm frame) is static; only the gripper
    configuration varies.
    """

    def __init__(
        self,
        model: GripperModel,
        object_mesh: TriMesh,
        h_hand: ContactHeatmap,
        demo_frame: PalmFrame,
        hp: Hyperparams,
        mask: LossMask = LossMask(),
        contact_region: np.ndarray | None = None,
        fingertip_weight: float = 1.0,
    ):
        self.model = model
        self.object_mesh = object_mesh
        self.h_hand = h_hand
        self.demo_frame = demo_frame
        self.hp = hp
        self.mask = mask
        self.fingertip_weight = fingertip_weight
        if contact_region is not None:
            self.region_points = object_mesh.sample_points[contact_region]
            self._region_tree = cKDTree(self.region_points) if len(contact_region) else None
        else:
            self.region_points = None
            self._region_tree = None
        if mask.fingertip and self._region_tree is None:
            raise ValidationError("fingertip term requires a non-empty contact region")

    def freeze(self, posed: PosedGripper) -> FrozenAssignments:
        frozen = FrozenAssignments()
        mask, hp, obj = self.mask, self.hp, self.object_mesh
        grip_pts = posed.sample_points
        need_grip_tree = mask.contact or mask.interpen
        grip_tree = cKDTree(grip_pts) if need_grip_tree else None

        if mask.contact:
            _, frozen.heat_nearest = grip_tree.query(obj.sample_points)

        if mask.interpen:
            d_pull, pull_nearest = obj.tree.query(grip_pts)
            frozen.pull_nearest = pull_nearest
            frozen.pull_active = d_pull < hp.contact_distance
            frozen.grip_in_obj = np.flatnonzero(points_inside(grip_pts, obj))
            frozen.grip_in_obj_nearest = pull_nearest[frozen.grip_in_obj]
            # object samples inside the gripper: per-link winding numbers add up
            frozen.obj_in_grip = self._object_samples_inside(posed)
            if len(frozen.obj_in_grip):
                _, frozen.obj_in_grip_nearest = grip_tree.query(
                    obj.sample_points[frozen.obj_in_grip]
                )

        if mask.self_pen:
            frozen.self_moving, frozen.self_anchor = self._freeze_self_pen(posed)

        if mask.fingertip and self._region_tree is not None:
            _, frozen.tip_nearest = self._region_tree.query(posed.fingertips)

        return frozen

    def _object_samples_inside(self, posed: PosedGripper) -> np.ndarray:
        obj_pts = self.object_mesh.sample_points
        total_winding = np.zeros(len(obj_pts))
        for i in range(len(self.model.links)):
            mesh_i = posed.link_mesh(i)
            lo, hi = mesh_i.aabb
            in_box = np.all((obj_pts >= lo) & (obj_pts <= hi), axis=1)
            if in_box.any():
                total_winding[in_box] += winding_numbers(obj_pts[in_box], mesh_i)
        return np.flatnonzero(total_winding > 0.5)

    def _freeze_self_pen(self, posed: PosedGripper) -> tuple[np.ndarray, np.ndarray]:
        moving: list[np.ndarray] = []
        anchor: list[np.ndarray] = []
        link_meshes = {}
        merged_idx = np.arange(len(posed.sample_points))
        for a, b in _self_pen_pairs(self.model):
            mask_a = posed.sample_link == a
            mask_b = posed.sample_link == b
            if not (mask_a.any() and mask_b.any()):
                continue
            if b not in link_meshes:
                link_meshes[b] = posed.link_mesh(b)
            mesh_b = link_meshes[b]
            pts_a = posed.sample_points[mask_a]
            inside = points_inside(pts_a, mesh_b)
            if not inside.any():
                continue
            idx_a = merged_idx[mask_a][inside]
            _, near_b = mesh_b.tree.query(posed.sample_points[idx_a])
            moving.append(idx_a)
            anchor.append(merged_idx[mask_b][near_b])
        if moving:
            return np.concatenate(moving), np.concatenate(anchor)
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)

    def evaluate_frozen(self, posed: PosedGripper, frozen: FrozenAssignments) -> LossBreakdown:
        """Loss value at a pose, holding discrete assignments fixed."""
        mask, hp, obj = self.mask, self.hp, self.object_mesh
        grip_pts = posed.sample_points

        contact = orientation = push = pull = normal = self_pen = fingertip = 0.0

        if mask.contact:
            d = np.linalg.norm(obj.sample_points - grip_pts[frozen.heat_nearest], axis=1)
            h_robot = np.exp(-d / hp.heatmap_falloff)
            contact = float(np.abs(self.h_hand.values - h_robot).sum())

        if mask.orientation:
            orientation = loss_orientation(posed.palm, self.demo_frame)

        if mask.interpen:
            if len(frozen.obj_in_grip):
                d = np.linalg.norm(
                    obj.sample_points[frozen.obj_in_grip]
                    - grip_pts[frozen.obj_in_grip_nearest],
                    axis=1,
                )
                push += float(np.tanh(d / hp.push_scale).sum())
            if len(frozen.grip_in_obj):
                d = np.linalg.norm(
                    grip_pts[frozen.grip_in_obj]
                    - obj.sample_points[frozen.grip_in_obj_nearest],
                    axis=1,
                )
                push += float(np.tanh(d / hp.push_scale).sum())
            # active samples follow their live distance, inactive ones stay at the
            # clamp constant; both branch choices are frozen with the assignments
            active = frozen.pull_active
            d_active = np.linalg.norm(
                grip_pts[active] - obj.sample_points[frozen.pull_nearest[active]], axis=1
            )
            n_inactive = int((~active).sum())
            pull = float(
                np.tanh(d_active / hp.pull_scale).sum()
                + n_inactive * np.tanh(hp.contact_distance / hp.pull_scale)
            )
            if active.any():
                cos = np.einsum(
                    "si,si->s",
                    posed.sample_normals[active],
                    obj.sample_normals[frozen.pull_nearest[active]],
                )
                normal = float((1.0 + cos).sum())

        if mask.self_pen and len(frozen.self_moving):
            d = np.linalg.norm(
                grip_pts[frozen.self_moving] - grip_pts[frozen.self_anchor], axis=1
            )
            self_pen = float(np.tanh(d / hp.push_scale).sum())

        if mask.fingertip and frozen.tip_nearest is not None:
            d = np.linalg.norm(
                posed.fingertips - self.region_points[frozen.tip_nearest], axis=1
            )
            fingertip = float(d.sum())

        interpen = loss_interpen(push, pull, normal, hp)
        total = (
            (hp.weight_contact * contact if mask.contact else 0.0)
            + (hp.weight_orientation * orientation if mask.orientation else 0.0)
            + (hp.weight_interpen * interpen if mask.interpen else 0.0)
            + (hp.weight_self_pen * self_pen if mask.self_pen else 0.0)
            + (self.fingertip_weight * fingertip if mask.fingertip else 0.0)
        )
        return LossBreakdown(
            total=total,
            contact=contact,
            orientation=orientation,
            interpen=interpen,
            push=push,
            pull=pull,
            normal=normal,
            self_pen=self_pen,
            fingertip=fingertip,
        )

    def value(self, config: GripperConfig) -> LossBreakdown:
        posed = forward_kinematics(self.model, config)
        return self.evaluate_frozen(posed, self.freeze(posed))

    def value_and_grad(self, config: GripperConfig) -> tuple[LossBreakdown, np.ndarray]:
        """Loss and its analytic gradient with respect to (t, rotation_6d, theta)."""
        posed = forward_kinematics(self.model, config)
        frozen = self.freeze(posed)
        breakdown = self.evaluate_frozen(posed, frozen)

        mask, hp, obj = self.mask, self.hp, self.object_mesh
        grip_pts = posed.sample_points
        d_samples = np.zeros_like(grip_pts)
        d_normals = np.zeros_like(grip_pts)
        d_tips = np.zeros_like(posed.fingertips)
        d_palm_forward = np.zeros(3)
        d_palm_normal = np.zeros(3)

        if mask.contact:
            g = grip_pts[frozen.heat_nearest]
            delta = g - obj.sample_points
            d = np.linalg.norm(delta, axis=1)
            h_robot = np.exp(-d / hp.heatmap_falloff)
            sign = np.sign(self.h_hand.values - h_robot)
            coeff = hp.weight_contact * sign * h_robot / hp.heatmap_falloff
            unit = delta / np.maximum(d, _TINY)[:, None]
            unit[d < _TINY] = 0.0
            np.add.at(d_samples, frozen.heat_nearest, coeff[:, None] * unit)

        if mask.orientation:
            w = hp.weight_orientation
            d_palm_normal += w * np.sign(posed.palm.normal - self.demo_frame.normal)
            d_palm_forward += w * np.sign(posed.palm.forward - self.demo_frame.forward)

        if mask.interpen:
            w_push = hp.weight_interpen * hp.push_weight
            if len(frozen.obj_in_grip):
                g = grip_pts[frozen.obj_in_grip_nearest]
                delta = g - obj.sample_points[frozen.obj_in_grip]
                d = np.linalg.norm(delta, axis=1)
                coeff = w_push * (1.0 - np.tanh(d / hp.push_scale) ** 2) / hp.push_scale
                unit = delta / np.maximum(d, _TINY)[:, None]
                unit[d < _TINY] = 0.0
                np.add.at(d_samples, frozen.obj_in_grip_nearest, coeff[:, None] * unit)
            if len(frozen.grip_in_obj):
                r = grip_pts[frozen.grip_in_obj]
                delta = r - obj.sample_points[frozen.grip_in_obj_nearest]
                d = np.linalg.norm(delta, axis=1)
                coeff = w_push * (1.0 - np.tanh(d / hp.push_scale) ** 2) / hp.push_scale
                unit = delta / np.maximum(d, _TINY)[:, None]
                unit[d < _TINY] = 0.0
                np.add.at(d_samples, frozen.grip_in_obj, coeff[:, None] * unit)

            w_pull = hp.weight_interpen * hp.pull_weight
            active = frozen.pull_active
            if active.any():
                r = grip_pts[active]
                o = obj.sample_points[frozen.pull_nearest[active]]
                delta = r - o
                d = np.linalg.norm(delta, axis=1)
                coeff = w_pull * (1.0 - np.tanh(d / hp.pull_scale) ** 2) / hp.pull_scale
                unit = delta / np.maximum(d, _TINY)[:, None]
                unit[d < _TINY] = 0.0
                contrib = np.zeros_like(grip_pts)
                contrib[active] = coeff[:, None] * unit
                d_samples += contrib

                w_normal = hp.weight_interpen * hp.normal_weight
                d_normals[active] += w_normal * obj.sample_normals[frozen.pull_nearest[active]]

        if mask.self_pen and len(frozen.self_moving):
            delta = grip_pts[frozen.self_moving] - grip_pts[frozen.self_anchor]
            d = np.linalg.norm(delta, axis=1)
            coeff = hp.weight_self_pen * (1.0 - np.tanh(d / hp.push_scale) ** 2) / hp.push_scale
            unit = delta / np.maximum(d, _TINY)[:, None]
            unit[d < _TINY] = 0.0
            np.add.at(d_samples, frozen.self_moving, coeff[:, None] * unit)
            np.add.at(d_samples, frozen.self_anchor, -coeff[:, None] * unit)

        if mask.fingertip and frozen.tip_nearest is not None:
            delta = posed.fingertips - self.region_points[frozen.tip_nearest]
            d = np.linalg.norm(delta, axis=1)
            unit = delta / np.maximum(d, _TINY)[:, None]
            unit[d < _TINY] = 0.0
            d_tips += self.fingertip_weight * unit

        jac = PoseJacobian(self.model, posed)
        grad = jac.backprop(
            d_samples=d_samples,
            d_normals=d_normals if mask.interpen else None,
            d_tips=d_tips if mask.fingertip else None,
            d_palm_forward=d_palm_forward if mask.orientation else None,
            d_palm_normal=d_palm_normal if mask.orientation else None,
        )
        if not np.isfinite(grad).all():
            raise NumericalError("non-finite gradient")
        return breakdown, grad


def total_loss(
    model: GripperModel,
    config: GripperConfig,
    object_mesh: TriMesh,
    h_hand: ContactHeatmap,
    demo_frame: PalmFrame,
    hp: Hyperparams,
    mask: LossMask = LossMask(),
) -> LossBreakdown:
    """Full objective at one configuration."""
    return GraspObjective(model, object_mesh, h_hand, demo_frame, hp, mask).value(config)


def loss_gradient(
    model: GripperModel,
    config: GripperConfig,
    object_mesh: TriMesh,
    h_hand: ContactHeatmap,
    demo_frame: PalmFrame,
    hp: Hyperparams,
    mask: LossMask = LossMask(),
) -> np.ndarray:
    """Gradient of the (masked) objective with respect to (t, rotation_6d, theta)."""
    _, grad = GraspObjective(model, object_mesh, h_hand, demo_frame, hp, mask).value_and_grad(config)
    return grad


def finite_difference_gradient(
    objective: GraspObjective, config: GripperConfig, h: float = 1e-5
) -> np.ndarray:
    """Central finite differences of the frozen-correspondence loss. Reference path."""
    posed = forward_kinematics(objective.model, config)
    frozen = objective.freeze(posed)
    vec = config.as_vector()
    grad = np.zeros_like(vec)
    for k in range(len(vec)):
        plus = vec.copy()
        plus[k] += h
        minus = vec.copy()
        minus[k] -= h
        f_plus = objective.evaluate_frozen(
            forward_kinematics(objective.model, GripperConfig.from_vector(plus)), frozen
        ).total
        f_minus = objective.evaluate_frozen(
            forward_kinematics(objective.model, GripperConfig.from_vector(minus)), frozen
        ).total
        grad[k] = (f_plus - f_minus) / (2.0 * h)
    return grad
