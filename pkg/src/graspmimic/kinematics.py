"""Gripper kinematic model, forward kinematics, and pose differentials.

Conventions: link meshes are authored in the base frame at the zero joint
configuration. Each revolute joint rotates its subtree about an axis line
(axis, pivot) expressed in the parent's authoring frame. The base link
receives the global pose (rotation from the 6D parametrization, plus a
translation).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalError, ValidationError
from .geometry import TriMesh, mesh_with_samples

_UNIT_TOL = 1e-6


@dataclass(frozen=True)
class PalmFrame:
    """Palm anchor: origin, forward vector (in-plane) and outward normal."""

    origin: np.ndarray
    forward: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        object.__setattr__(self, "forward", np.asarray(self.forward, dtype=np.float64))
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=np.float64))
        if abs(np.linalg.norm(self.forward) - 1.0) > _UNIT_TOL:
            raise ValidationError("palm forward vector must be unit length")
        if abs(np.linalg.norm(self.normal) - 1.0) > _UNIT_TOL:
            raise ValidationError("palm normal vector must be unit length")
        if abs(float(self.forward @ self.normal)) > _UNIT_TOL:
            raise ValidationError("palm forward and normal vectors must be perpendicular")

    def basis(self) -> np.ndarray:
        """Right-handed orthonormal basis [forward, normal, forward x normal] as columns."""
        third = np.cross(self.forward, self.normal)
        return np.stack([self.forward, self.normal, third], axis=1)

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "PalmFrame":
        return PalmFrame(
            origin=rotation @ self.origin + translation,
            forward=rotation @ self.forward,
            normal=rotation @ self.normal,
        )


@dataclass(frozen=True)
class Link:
    name: str
    mesh: TriMesh
    parent: int  # -1 for the base link


@dataclass(frozen=True)
class Joint:
    """Revolute joint driving one non-base link."""

    child_link: int
    axis: np.ndarray    # unit, in parent authoring frame
    pivot: np.ndarray   # in parent authoring frame
    limits: tuple[float, float]
    open_angle: float

    def __post_init__(self):
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=np.float64))
        object.__setattr__(self, "pivot", np.asarray(self.pivot, dtype=np.float64))
        if abs(np.linalg.norm(self.axis) - 1.0) > _UNIT_TOL:
            raise ValidationError(f"joint axis for link {self.child_link} must be unit length")
        lo, hi = self.limits
        if not (lo <= self.open_angle <= hi):
            raise ValidationError(
                f"open angle {self.open_angle} outside limits [{lo}, {hi}] for link {self.child_link}"
            )


@dataclass(frozen=True)
class GripperModel:
    """Kinematic tree of rigid links with revolute joints.

    joints[j] drives links[j + 1]; links must be in topological order with
    links[0] as the base. An optional coupling matrix maps the n actuated
    values onto the joint angles (identity when absent).
    """

    name: str
    links: tuple[Link, ...]
    joints: tuple[Joint, ...]
    fingertips: tuple[tuple[int, np.ndarray], ...]  # (link index, local point)
    palm_frame: PalmFrame
    coupling: np.ndarray | None = None          # (num_joints, n) or None for identity
    actuated_limits: np.ndarray | None = None   # (n, 2); derived from joints when identity
    actuated_open: np.ndarray | None = None     # (n,); derived when identity

    def __post_init__(self):
        if len(self.joints) != len(self.links) - 1:
            raise ValidationError("need exactly one joint per non-base link")
        if self.links[0].parent != -1:
            raise ValidationError("links[0] must be the base link")
        for i, link in enumerate(self.links[1:], start=1):
            if not (0 <= link.parent < i):
                raise ValidationError(f"link {link.name} parent must precede it (tree order)")
        for j, joint in enumerate(self.joints):
            if joint.child_link != j + 1:
                raise ValidationError("joints[j] must drive links[j + 1]")
        for link_idx, point in self.fingertips:
            if not (0 <= link_idx < len(self.links)):
                raise ValidationError("fingertip link index out of range")
        if self.coupling is None:
            limits = np.array([j.limits for j in self.joints], dtype=np.float64)
            opens = np.array([j.open_angle for j in self.joints], dtype=np.float64)
            object.__setattr__(self, "actuated_limits", limits)
            object.__setattr__(self, "actuated_open", opens)
        else:
            coupling = np.asarray(self.coupling, dtype=np.float64)
            if coupling.shape[0] != len(self.joints):
                raise ValidationError("coupling matrix must have one row per joint")
            object.__setattr__(self, "coupling", coupling)
            if self.actuated_limits is None or self.actuated_open is None:
                raise ValidationError("coupled models must provide actuated limits and open pose")
            object.__setattr__(
                self, "actuated_limits", np.asarray(self.actuated_limits, dtype=np.float64)
            )
            object.__setattr__(
                self, "actuated_open", np.asarray(self.actuated_open, dtype=np.float64)
            )

    @property
    def dof_count(self) -> int:
        if self.coupling is None:
            return len(self.joints)
        return self.coupling.shape[1]

    @property
    def open_theta(self) -> np.ndarray:
        return np.array(self.actuated_open, dtype=np.float64)

    def joint_angles(self, theta: np.ndarray) -> np.ndarray:
        if self.coupling is None:
            return np.asarray(theta, dtype=np.float64)
        return self.coupling @ np.asarray(theta, dtype=np.float64)

    def link_ancestor_joints(self) -> tuple[tuple[int, ...], ...]:
        """For each link, the joint indices on its path to the base."""
        out: list[tuple[int, ...]] = [()]
        for i in range(1, len(self.links)):
            parent = self.links[i].parent
            out.append(out[parent] + (i - 1,))
        return tuple(out)

    def adjacent_link_pairs(self) -> set[tuple[int, int]]:
        pairs = set()
        for i in range(1, len(self.links)):
            p = self.links[i].parent
            pairs.add((min(p, i), max(p, i)))
        return pairs


@dataclass(frozen=True)
class GripperConfig:
    """Optimization variables: translation, 6D rotation, actuated joint values."""

    translation: np.ndarray
    rotation_6d: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "translation", np.array(self.translation, dtype=np.float64))
        object.__setattr__(self, "rotation_6d", np.array(self.rotation_6d, dtype=np.float64))
        object.__setattr__(self, "theta", np.array(self.theta, dtype=np.float64))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.translation, self.rotation_6d, self.theta])

    @staticmethod
    def from_vector(vec: np.ndarray) -> "GripperConfig":
        vec = np.asarray(vec, dtype=np.float64)
        return GripperConfig(translation=vec[:3], rotation_6d=vec[3:9], theta=vec[9:])


@dataclass(frozen=True)
class HandDemo:
    """Grasp demonstration: posed hand mesh, palm frame, and root pose, all in object coordinates."""

    hand_mesh: TriMesh
    palm_frame: PalmFrame
    base_rotation: np.ndarray
    base_translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.base_rotation, dtype=np.float64)
        t = np.asarray(self.base_translation, dtype=np.float64)
        if r.shape != (3, 3):
            raise ValidationError("hand base rotation must be 3x3")
        if np.abs(r @ r.T - np.eye(3)).max() > 1e-5 or abs(np.linalg.det(r) - 1.0) > 1e-5:
            raise ValidationError("hand base rotation must be a proper rotation")
        object.__setattr__(self, "base_rotation", r)
        object.__setattr__(self, "base_translation", t)


def rot6d_to_matrix(r6: np.ndarray) -> np.ndarray:
    """Map a 6D rotation parametrization to a rotation matrix by Gram-Schmidt."""
    r6 = np.asarray(r6, dtype=np.float64)
    a1, a2 = r6[:3], r6[3:]
    n1 = np.linalg.norm(a1)
    if n1 < 1e-9:
        raise NumericalError("degenerate 6D rotation")
    b1 = a1 / n1
    u2 = a2 - (a2 @ b1) * b1
    n2 = np.linalg.norm(u2)
    if n2 < 1e-9:
        raise NumericalError("degenerate 6D rotation")
    b2 = u2 / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=1)


def matrix_to_rot6d(rotation: np.ndarray) -> np.ndarray:
    """First two columns of a rotation matrix; exact inverse of rot6d_to_matrix."""
    rotation = np.asarray(rotation, dtype=np.float64)
    return np.concatenate([rotation[:, 0], rotation[:, 1]])


def rot6d_jacobian(r6: np.ndarray) -> np.ndarray:
    """d rot6d_to_matrix / d r6 as a (3, 3, 6) tensor."""
    r6 = np.asarray(r6, dtype=np.float64)
    a1, a2 = r6[:3], r6[3:]
    n1 = np.linalg.norm(a1)
    if n1 < 1e-9:
        raise NumericalError("degenerate 6D rotation")
    b1 = a1 / n1
    db1 = np.zeros((3, 6))
    db1[:, :3] = (np.eye(3) - np.outer(b1, b1)) / n1

    dot = a2 @ b1
    u2 = a2 - dot * b1
    n2 = np.linalg.norm(u2)
    if n2 < 1e-9:
        raise NumericalError("degenerate 6D rotation")
    b2 = u2 / n2
    # du2 = da2 - (da2.b1 + a2.db1) b1 - dot * db1
    du2 = np.zeros((3, 6))
    du2[:, 3:] = np.eye(3) - np.outer(b1, b1)
    ddot_da1 = a2 @ db1[:, :3]                   # (3,) row vector over a1 coords
    du2[:, :3] = -np.outer(b1, ddot_da1) - dot * db1[:, :3]
    db2 = (np.eye(3) - np.outer(b2, b2)) @ du2 / n2

    jac = np.zeros((3, 3, 6))
    jac[:, 0, :] = db1
    jac[:, 1, :] = db2
    for k in range(6):
        jac[:, 2, k] = np.cross(db1[:, k], b2) + np.cross(b1, db2[:, k])
    return jac


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    axis = np.asarray(axis, dtype=np.float64)
    k = np.array(
        [[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]]
    )
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


@dataclass(frozen=True)
class PosedGripper:
    """Forward-kinematics result: world transforms and posed geometry."""

    model: GripperModel
    config: GripperConfig
    link_rotations: np.ndarray       # (L, 3, 3)
    link_translations: np.ndarray    # (L, 3)
    sample_points: np.ndarray        # (M, 3) merged across links
    sample_normals: np.ndarray       # (M, 3)
    sample_link: np.ndarray          # (M,) provenance
    fingertips: np.ndarray           # (K, 3)
    palm: PalmFrame
    joint_axes_world: np.ndarray     # (J, 3)
    joint_pivots_world: np.ndarray   # (J, 3)
    joint_angles: np.ndarray         # (J,) applied, after coupling and clamping
    clamped: bool

    def link_mesh(self, link_idx: int) -> TriMesh:
        """Posed mesh of a single link (faces fixed, geometry transformed)."""
        link = self.model.links[link_idx]
        rot = self.link_rotations[link_idx]
        trans = self.link_translations[link_idx]
        mask = self.sample_link == link_idx
        return mesh_with_samples(
            vertices=link.mesh.vertices @ rot.T + trans,
            faces=link.mesh.faces,
            sample_points=self.sample_points[mask],
            sample_normals=self.sample_normals[mask],
            sample_faces=link.mesh.sample_faces,
        )

    def merged_mesh(self) -> TriMesh:
        """All posed links merged into one mesh; winding numbers add per link."""
        verts = []
        faces = []
        offset = 0
        for i, link in enumerate(self.model.links):
            v = link.mesh.vertices @ self.link_rotations[i].T + self.link_translations[i]
            verts.append(v)
            faces.append(link.mesh.faces + offset)
            offset += len(v)
        return mesh_with_samples(
            vertices=np.concatenate(verts),
            faces=np.concatenate(faces),
            sample_points=self.sample_points,
            sample_normals=self.sample_normals,
            sample_faces=self.sample_link,
        )


def clamp_theta(model: GripperModel, theta: np.ndarray) -> tuple[np.ndarray, bool]:
    limits = model.actuated_limits
    clamped = np.clip(theta, limits[:, 0], limits[:, 1])
    return clamped, bool(np.any(clamped != theta))


def forward_kinematics(model: GripperModel, config: GripperConfig) -> PosedGripper:
    """Pose every link: base pose from (rotation_6d, translation), joints by angle."""
    theta = np.asarray(config.theta, dtype=np.float64)
    if theta.shape != (model.dof_count,):
        raise ValidationError(f"theta must have dimension {model.dof_count}")
    theta, was_clamped = clamp_theta(model, theta)
    angles = model.joint_angles(theta)

    base_rot = rot6d_to_matrix(config.rotation_6d)
    base_trans = np.asarray(config.translation, dtype=np.float64)

    n_links = len(model.links)
    rotations = np.empty((n_links, 3, 3))
    translations = np.empty((n_links, 3))
    rotations[0] = base_rot
    translations[0] = base_trans
    axes_world = np.empty((len(model.joints), 3))
    pivots_world = np.empty((len(model.joints), 3))
    for j, joint in enumerate(model.joints):
        child = joint.child_link
        parent = model.links[child].parent
        rp, tp = rotations[parent], translations[parent]
        local = rotation_about_axis(joint.axis, angles[j])
        rotations[child] = rp @ local
        translations[child] = rp @ (joint.pivot - local @ joint.pivot) + tp
        axes_world[j] = rp @ joint.axis
        pivots_world[j] = rp @ joint.pivot + tp

    points = []
    normals = []
    provenance = []
    for i, link in enumerate(model.links):
        points.append(link.mesh.sample_points @ rotations[i].T + translations[i])
        normals.append(link.mesh.sample_normals @ rotations[i].T)
        provenance.append(np.full(len(link.mesh.sample_points), i, dtype=np.int64))
    tips = np.array(
        [rotations[li] @ p + translations[li] for li, p in model.fingertips], dtype=np.float64
    ).reshape(-1, 3)

    return PosedGripper(
        model=model,
        config=replace(config, theta=theta),
        link_rotations=rotations,
        link_translations=translations,
        sample_points=np.concatenate(points),
        sample_normals=np.concatenate(normals),
        sample_link=np.concatenate(provenance),
        fingertips=tips,
        palm=model.palm_frame.transformed(base_rot, base_trans),
        joint_axes_world=axes_world,
        joint_pivots_world=pivots_world,
        joint_angles=angles,
        clamped=was_clamped,
    )


class PoseJacobian:
    """Backpropagates gradients on posed geometry into (t, rotation_6d, theta).

    Sample positions and normals, fingertip positions, and palm vectors are
    all rigid functions of the configuration; this accumulates their
    cotangents into one gradient vector of dimension 3 + 6 + n.
    """

    def __init__(self, model: GripperModel, posed: PosedGripper):
        self.model = model
        self.posed = posed
        base_rot = posed.link_rotations[0]
        base_trans = posed.link_translations[0]
        self._rot6d_jac = rot6d_jacobian(posed.config.rotation_6d)
        # base-frame coordinates: world = R6 @ x_base + t
        self._samples_base = (posed.sample_points - base_trans) @ base_rot
        self._normals_base = posed.sample_normals @ base_rot
        self._tips_base = (posed.fingertips - base_trans) @ base_rot
        ancestors = model.link_ancestor_joints()
        n_joints = len(model.joints)
        self._joint_sample_masks = []
        self._joint_tip_masks = []
        for j in range(n_joints):
            links = [i for i in range(len(model.links)) if j in ancestors[i]]
            self._joint_sample_masks.append(np.isin(posed.sample_link, links))
            self._joint_tip_masks.append(
                np.array([li in links for li, _ in model.fingertips], dtype=bool)
            )

    def backprop(
        self,
        d_samples: np.ndarray | None = None,
        d_normals: np.ndarray | None = None,
        d_tips: np.ndarray | None = None,
        d_palm_forward: np.ndarray | None = None,
        d_palm_normal: np.ndarray | None = None,
    ) -> np.ndarray:
        posed = self.posed
        model = self.model
        n = model.dof_count
        grad = np.zeros(3 + 6 + n)

        # translation: every posed point moves with t
        if d_samples is not None:
            grad[:3] += d_samples.sum(axis=0)
        if d_tips is not None:
            grad[:3] += d_tips.sum(axis=0)

        # rotation_6d: accumulate outer products against base-frame coordinates
        outer = np.zeros((3, 3))
        if d_samples is not None:
            outer += d_samples.T @ self._samples_base
        if d_normals is not None:
            outer += d_normals.T @ self._normals_base
        if d_tips is not None:
            outer += d_tips.T @ self._tips_base
        if d_palm_forward is not None:
            outer += np.outer(d_palm_forward, model.palm_frame.forward)
        if d_palm_normal is not None:
            outer += np.outer(d_palm_normal, model.palm_frame.normal)
        grad[3:9] = np.einsum("abk,ab->k", self._rot6d_jac, outer)

        # joint angles: geometric Jacobian, omega x (x - pivot) per subtree
        grad_joints = np.zeros(len(model.joints))
        for j in range(len(model.joints)):
            omega = posed.joint_axes_world[j]
            pivot = posed.joint_pivots_world[j]
            total = 0.0
            if d_samples is not None:
                mask = self._joint_sample_masks[j]
                if mask.any():
                    arm = posed.sample_points[mask] - pivot
                    total += np.einsum("si,si->", d_samples[mask], np.cross(omega, arm))
            if d_normals is not None:
                mask = self._joint_sample_masks[j]
                if mask.any():
                    total += np.einsum(
                        "si,si->", d_normals[mask], np.cross(omega, posed.sample_normals[mask])
                    )
            if d_tips is not None:
                tmask = self._joint_tip_masks[j]
                if tmask.any():
                    arm = posed.fingertips[tmask] - pivot
                    total += np.einsum("si,si->", d_tips[tmask], np.cross(omega, arm))
            grad_joints[j] = total
        if model.coupling is None:
            grad[9:] = grad_joints
        else:
            grad[9:] = model.coupling.T @ grad_joints
        return grad


def config_from_palm_target(model: GripperModel, target: PalmFrame) -> GripperConfig:
    """Base pose that puts the gripper's palm frame onto a target frame, joints open."""
    basis_model = model.palm_frame.basis()
    basis_target = target.basis()
    rotation = basis_target @ basis_model.T
    translation = target.origin - rotation @ model.palm_frame.origin
    return GripperConfig(
        translation=translation,
        rotation_6d=matrix_to_rot6d(rotation),
        theta=model.open_theta,
    )


def initial_config_from_hand(model: GripperModel, demo: HandDemo) -> GripperConfig:
    """Open-gripper initialization: align the gripper palm frame with the demo's."""
    return config_from_palm_target(model, demo.palm_frame)
