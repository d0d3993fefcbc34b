"""Analytic-vs-finite-difference gradient verification.

Random configurations perturb the open-pose initialization so the gripper
sits near the object with every loss term active. Errors are measured per
coordinate, normalized by the gradient's maximum magnitude.
"""

from __future__ import annotations

import numpy as np

from .geometry import TriMesh
from .kinematics import GripperConfig, GripperModel, HandDemo, initial_config_from_hand
from .losses import (
    GraspObjective,
    Hyperparams,
    LossMask,
    contact_heatmap,
    contact_region_indices,
    finite_difference_gradient,
)

TERM_MASKS = {
    "contact": LossMask(contact=True, orientation=False, interpen=False, self_pen=False),
    "orientation": LossMask(contact=False, orientation=True, interpen=False, self_pen=False),
    "interpen": LossMask(contact=False, orientation=False, interpen=True, self_pen=False),
    "self_pen": LossMask(contact=False, orientation=False, interpen=False, self_pen=True),
    "fingertip": LossMask(
        contact=False, orientation=False, interpen=False, self_pen=False, fingertip=True
    ),
    "all": LossMask(),
}


def _min_correspondence_distance(objective: GraspObjective, config: GripperConfig) -> float:
    """Smallest distance among all frozen correspondence pairs at this pose.

    The objective is smooth in a neighborhood only when no paired points
    coincide; finite differences with h = 1e-5 additionally need every pair
    to be several times farther apart than the step.
    """
    from .kinematics import forward_kinematics

    posed = forward_kinematics(objective.model, config)
    frozen = objective.freeze(posed)
    obj_pts = objective.object_mesh.sample_points
    grip = posed.sample_points
    dmin = np.inf
    if frozen.heat_nearest is not None:
        d = np.linalg.norm(obj_pts - grip[frozen.heat_nearest], axis=1)
        dmin = min(dmin, float(d.min()))
    if frozen.pull_nearest is not None:
        d = np.linalg.norm(grip - obj_pts[frozen.pull_nearest], axis=1)
        dmin = min(dmin, float(d.min()))
    if len(frozen.obj_in_grip):
        d = np.linalg.norm(obj_pts[frozen.obj_in_grip] - grip[frozen.obj_in_grip_nearest], axis=1)
        dmin = min(dmin, float(d.min()))
    if len(frozen.self_moving):
        d = np.linalg.norm(grip[frozen.self_moving] - grip[frozen.self_anchor], axis=1)
        dmin = min(dmin, float(d.min()))
    if frozen.tip_nearest is not None:
        d = np.linalg.norm(posed.fingertips - objective.region_points[frozen.tip_nearest], axis=1)
        dmin = min(dmin, float(d.min()))
    return dmin


def random_smooth_configs(
    model: GripperModel,
    demo: HandDemo,
    count: int,
    seed: int = 0,
    translation_scale: float = 0.01,
    rotation_scale: float = 0.15,
    theta_margin: float = 0.05,
    objective: GraspObjective | None = None,
    min_pair_distance: float = 5e-4,
) -> list[GripperConfig]:
    """Perturbations of the aligned open pose, joints strictly inside limits.

    When an objective is given, configurations whose closest correspondence
    pair is nearer than min_pair_distance are rejected and redrawn: the
    distance terms are non-smooth where paired points coincide, so such
    poses are outside the comparison's domain.
    """
    rng = np.random.default_rng(seed)
    base = initial_config_from_hand(model, demo)
    limits = model.actuated_limits
    lo = limits[:, 0] + theta_margin
    hi = limits[:, 1] - theta_margin
    configs: list[GripperConfig] = []
    attempts = 0
    while len(configs) < count:
        attempts += 1
        if attempts > 100 * count:
            raise RuntimeError("could not find enough smooth configurations")
        t = base.translation + rng.uniform(-translation_scale, translation_scale, 3)
        r6 = base.rotation_6d + rng.uniform(-rotation_scale, rotation_scale, 6)
        theta = rng.uniform(lo, hi)
        config = GripperConfig(translation=t, rotation_6d=r6, theta=theta)
        if objective is not None and _min_correspondence_distance(objective, config) < min_pair_distance:
            continue
        configs.append(config)
    return configs


def gradient_error(objective: GraspObjective, config: GripperConfig, h: float = 1e-5) -> float:
    """Max per-coordinate difference, normalized by the gradient magnitude."""
    _, analytic = objective.value_and_grad(config)
    fd = finite_difference_gradient(objective, config, h=h)
    scale = max(float(np.abs(fd).max()), 1e-8)
    return float(np.abs(analytic - fd).max() / scale)


def check_term_gradients(
    model: GripperModel,
    object_mesh: TriMesh,
    demo: HandDemo,
    hp: Hyperparams,
    terms: list[str],
    configs: int = 20,
    seed: int = 0,
    h: float = 1e-5,
) -> dict[str, float]:
    """Worst gradient error per term over random smooth configurations."""
    h_hand = contact_heatmap(object_mesh, demo.hand_mesh.sample_points, hp.heatmap_falloff)
    region = contact_region_indices(h_hand, hp.contact_region_threshold)
    full = GraspObjective(
        model, object_mesh, h_hand, demo.palm_frame, hp,
        LossMask(fingertip=len(region) > 0),
        contact_region=region if len(region) else None,
    )
    samples = random_smooth_configs(model, demo, configs, seed=seed, objective=full)
    worst: dict[str, float] = {}
    for term in terms:
        mask = TERM_MASKS[term]
        objective = GraspObjective(
            model,
            object_mesh,
            h_hand,
            demo.palm_frame,
            hp,
            mask,
            contact_region=region if mask.fingertip else None,
        )
        worst[term] = max(gradient_error(objective, c, h=h) for c in samples)
    return worst
