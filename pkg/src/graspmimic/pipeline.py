"""Three-stage grasp retargeting: open-pose initialization, finger
initialization (contact optimization or discrete closing), and full
refinement, followed by metric evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .geometry import TriMesh, points_inside
from .kinematics import (
    GripperConfig,
    GripperModel,
    HandDemo,
    PosedGripper,
    forward_kinematics,
    initial_config_from_hand,
)
from .losses import (
    ContactHeatmap,
    GraspObjective,
    Hyperparams,
    LossBreakdown,
    LossMask,
    contact_heatmap,
    contact_region_indices,
)
from .metrics import MetricsReport, WrenchModel, evaluate
from .optim import IterationRecord, OptSchedule, run_optimization

STRATEGY_CONTACT = "contact-optimization"
STRATEGY_DISCRETE = "discrete"


@dataclass(frozen=True)
class RetargetRequest:
    object_mesh: TriMesh
    demo: HandDemo
    model: GripperModel
    hyperparams: Hyperparams = Hyperparams()
    stage_b_schedule: OptSchedule = OptSchedule()
    stage_c_schedule: OptSchedule = OptSchedule()
    finger_init_strategy: str = STRATEGY_CONTACT
    loss_mask: LossMask = LossMask()
    discrete_bins: int = 20
    wrench: WrenchModel = WrenchModel()
    direction_samples: int = 20_000
    seed: int = 0

    def __post_init__(self):
        if self.finger_init_strategy not in (STRATEGY_CONTACT, STRATEGY_DISCRETE):
            raise ValidationError(
                f"unknown finger_init_strategy {self.finger_init_strategy!r}"
            )
        if self.discrete_bins < 1:
            raise ValidationError("discrete_bins must be >= 1")


@dataclass
class RetargetResult:
    final_config: GripperConfig
    breakdown_after_init: LossBreakdown
    breakdown_after_fingers: LossBreakdown
    breakdown_final: LossBreakdown
    trace: list[IterationRecord]
    metrics: MetricsReport
    warnings: list[str] = field(default_factory=list)


def hand_heatmap(req: RetargetRequest) -> ContactHeatmap:
    return contact_heatmap(
        req.object_mesh, req.demo.hand_mesh.sample_points, req.hyperparams.heatmap_falloff
    )


def _full_breakdown(req: RetargetRequest, h_hand: ContactHeatmap, config: GripperConfig) -> LossBreakdown:
    """All-terms loss at a stage boundary, independent of the request's ablation mask."""
    objective = GraspObjective(
        req.model, req.object_mesh, h_hand, req.demo.palm_frame, req.hyperparams, LossMask()
    )
    return objective.value(config)


def stage_a_init(req: RetargetRequest) -> GripperConfig:
    """Place the open gripper so its palm frame coincides with the demo's."""
    return initial_config_from_hand(req.model, req.demo)


def stage_b_finger_init(
    req: RetargetRequest, config_a: GripperConfig, h_hand: ContactHeatmap
) -> tuple[GripperConfig, list[str]]:
    """Close fingers toward the demonstrated contact region, joints only.

    The base pose stays exactly as stage (a) left it; only theta moves.
    """
    region = contact_region_indices(h_hand, req.hyperparams.contact_region_threshold)
    if len(region) == 0:
        return config_a, ["empty contact region: fingers left at the open pose"]
    objective = GraspObjective(
        req.model,
        req.object_mesh,
        h_hand,
        req.demo.palm_frame,
        req.hyperparams,
        LossMask(contact=False, orientation=False, interpen=True, self_pen=True, fingertip=True),
        contact_region=region,
    )
    n = req.model.dof_count
    param_mask = np.concatenate([np.zeros(9, dtype=bool), np.ones(n, dtype=bool)])
    final, _ = run_optimization(
        objective.value_and_grad,
        config_a,
        req.stage_b_schedule,
        theta_limits=req.model.actuated_limits,
        param_mask=param_mask,
        trace=False,
    )
    return final, []


def finger_joint_groups(model: GripperModel) -> list[list[int]]:
    """Joints grouped per finger (subtree under each child of the base),
    ordered proximal to distal within each group."""
    ancestors = model.link_ancestor_joints()
    groups: dict[int, list[tuple[int, int]]] = {}
    for link_idx in range(1, len(model.links)):
        chain = ancestors[link_idx]
        root_joint = chain[0]
        joint_idx = link_idx - 1
        groups.setdefault(root_joint, []).append((len(chain), joint_idx))
    ordered = []
    for root in sorted(groups):
        ordered.append([j for _, j in sorted(groups[root])])
    return ordered


def finger_links(model: GripperModel, joint_group: list[int]) -> list[int]:
    """All links moved by any joint of one finger group."""
    ancestors = model.link_ancestor_joints()
    group = set(joint_group)
    return [i for i in range(len(model.links)) if group & set(ancestors[i])]


def _finger_penetrates(posed: PosedGripper, link_indices: list[int], object_mesh: TriMesh) -> bool:
    mask = np.isin(posed.sample_link, link_indices)
    if mask.any() and points_inside(posed.sample_points[mask], object_mesh).any():
        return True
    for li in link_indices:
        if points_inside(object_mesh.sample_points, posed.link_mesh(li)).any():
            return True
    return False


def discrete_close(
    model: GripperModel,
    config: GripperConfig,
    object_mesh: TriMesh,
    bins: int = 20,
) -> GripperConfig:
    """Close each finger joint to the last collision-free bin.

    For every joint, proximal to distal within its finger, candidate values
    run from the open angle toward the limit farther from it; scanning stops
    at the first bin where the finger's links penetrate the object, keeping
    the previous bin. Fingers are processed independently (coupled models
    fall back to per-actuated-value closing with the same rule).
    """
    theta = np.array(config.theta, dtype=np.float64)
    if model.coupling is None:
        groups = finger_joint_groups(model)
    else:
        groups = [[j] for j in range(model.dof_count)]
    for group in groups:
        if model.coupling is None:
            links = finger_links(model, group)
        else:
            links = list(range(1, len(model.links)))
        for j in group:
            lo, hi = model.actuated_limits[j]
            open_angle = model.actuated_open[j]
            closed_end = hi if (hi - open_angle) >= (open_angle - lo) else lo
            candidates = np.linspace(open_angle, closed_end, bins)
            chosen = candidates[0]
            for value in candidates[1:]:
                trial = theta.copy()
                trial[j] = value
                posed = forward_kinematics(model, replace(config, theta=trial))
                if _finger_penetrates(posed, links, object_mesh):
                    break
                chosen = value
            theta[j] = chosen
    return replace(config, theta=theta)


def stage_b_discrete(req: RetargetRequest, config_a: GripperConfig) -> GripperConfig:
    return discrete_close(req.model, config_a, req.object_mesh, bins=req.discrete_bins)


def stage_c_refine(
    req: RetargetRequest, config_b: GripperConfig, h_hand: ContactHeatmap
) -> tuple[GripperConfig, list[IterationRecord]]:
    """Refine all degrees of freedom under the (possibly ablated) objective.

    With every loss switched off there is nothing to optimize and the stage
    is skipped entirely, leaving the finger-initialized configuration.
    """
    mask = replace(req.loss_mask, fingertip=False)
    if not mask.any_active():
        return config_b, []
    objective = GraspObjective(
        req.model, req.object_mesh, h_hand, req.demo.palm_frame, req.hyperparams, mask
    )
    return run_optimization(
        objective.value_and_grad,
        config_b,
        req.stage_c_schedule,
        theta_limits=req.model.actuated_limits,
        trace=True,
    )


def retarget(req: RetargetRequest) -> RetargetResult:
    """Run the full pipeline and evaluate the final grasp."""
    warnings: list[str] = []
    h_hand = hand_heatmap(req)

    config_a = stage_a_init(req)
    breakdown_a = _full_breakdown(req, h_hand, config_a)

    if req.finger_init_strategy == STRATEGY_DISCRETE:
        config_b = stage_b_discrete(req, config_a)
    else:
        config_b, stage_warnings = stage_b_finger_init(req, config_a, h_hand)
        warnings.extend(stage_warnings)
    breakdown_b = _full_breakdown(req, h_hand, config_b)

    config_c, trace = stage_c_refine(req, config_b, h_hand)
    breakdown_c = _full_breakdown(req, h_hand, config_c)

    if forward_kinematics(req.model, config_c).clamped:
        warnings.append("final joint values clamped to limits")

    metrics = evaluate(
        req.object_mesh,
        req.demo,
        req.model,
        config_c,
        req.hyperparams,
        req.wrench,
        direction_samples=req.direction_samples,
        seed=req.seed,
    )
    return RetargetResult(
        final_config=config_c,
        breakdown_after_init=breakdown_a,
        breakdown_after_fingers=breakdown_b,
        breakdown_final=breakdown_c,
        trace=trace,
        metrics=metrics,
        warnings=warnings,
    )
