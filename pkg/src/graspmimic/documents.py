"""JSON document schemas: gripper models, grasp problems, results, poses.

All documents carry a schema_version field and reject unknown keys with a
diagnostic naming the offending field. Lengths are meters and angles are
radians everywhere; only the metrics block reports centimeters.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .geometry import DEFAULT_LINK_SAMPLES, DEFAULT_OBJECT_SAMPLES, TriMesh, load_mesh
from .kinematics import (
    GripperConfig,
    GripperModel,
    HandDemo,
    Joint,
    Link,
    PalmFrame,
    matrix_to_rot6d,
    rot6d_to_matrix,
)
from .losses import Hyperparams, LossBreakdown, LossMask
from .metrics import MetricsReport, WrenchModel
from .optim import IterationRecord, OptSchedule

SCHEMA_VERSION = 1
TOOL_VERSION = "0.1.0"
SEED_ENV_VAR = "GRASPMIMIC_SEED"


def _check_keys(doc: dict, allowed: set[str], context: str) -> None:
    for key in doc:
        if key not in allowed:
            raise ValidationError(f"unknown field {key!r} in {context}")


def _require(doc: dict, key: str, context: str):
    if key not in doc:
        raise ValidationError(f"missing field {key!r} in {context}")
    return doc[key]


def _check_schema_version(doc: dict, context: str) -> None:
    version = _require(doc, "schema_version", context)
    if version != SCHEMA_VERSION:
        raise ValidationError(f"unsupported schema_version {version!r} in {context}")


def _vec3(value, context: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (3,):
        raise ValidationError(f"{context} must be a 3-vector")
    return arr


def _load_json(path: str | Path, context: str) -> dict:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{context} file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"cannot parse {context} {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"{context} {path} must be a JSON object")
    return doc


def _palm_frame_from_doc(doc: dict, context: str) -> PalmFrame:
    _check_keys(doc, {"origin", "forward", "normal"}, context)
    return PalmFrame(
        origin=_vec3(_require(doc, "origin", context), f"{context}.origin"),
        forward=_vec3(_require(doc, "forward", context), f"{context}.forward"),
        normal=_vec3(_require(doc, "normal", context), f"{context}.normal"),
    )


def _dataclass_from_doc(cls, doc: dict, context: str):
    """Build a frozen dataclass from a partial field dict, defaults elsewhere."""
    names = {f.name for f in dataclasses.fields(cls)}
    _check_keys(doc, names, context)
    return cls(**doc)


# ---------------------------------------------------------------------------
# gripper model documents
# ---------------------------------------------------------------------------

def load_gripper(
    path: str | Path,
    link_samples: int = DEFAULT_LINK_SAMPLES,
    seed: int = 0,
) -> GripperModel:
    """Load a gripper model document; link mesh paths resolve relative to it."""
    path = Path(path)
    doc = _load_json(path, "gripper document")
    _check_keys(
        doc,
        {"schema_version", "name", "links", "joints", "coupling",
         "actuated_limits", "actuated_open", "fingertips", "palm_frame"},
        "gripper document",
    )
    _check_schema_version(doc, "gripper document")
    name = _require(doc, "name", "gripper document")

    link_docs = _require(doc, "links", "gripper document")
    if not link_docs:
        raise ValidationError("gripper document has no links")
    name_to_index = {}
    links: list[Link] = []
    for i, link_doc in enumerate(link_docs):
        ctx = f"links[{i}]"
        _check_keys(link_doc, {"name", "mesh_path", "parent"}, ctx)
        link_name = _require(link_doc, "name", ctx)
        parent_name = _require(link_doc, "parent", ctx)
        if parent_name is None:
            parent = -1
        else:
            if parent_name not in name_to_index:
                raise ValidationError(
                    f"{ctx}: parent {parent_name!r} must be declared before its children"
                )
            parent = name_to_index[parent_name]
        mesh_path = path.parent / _require(link_doc, "mesh_path", ctx)
        mesh = load_mesh(mesh_path, target_sample_count=link_samples, seed=seed + i)
        name_to_index[link_name] = i
        links.append(Link(name=link_name, mesh=mesh, parent=parent))

    joint_docs = _require(doc, "joints", "gripper document")
    by_child: dict[int, Joint] = {}
    for i, joint_doc in enumerate(joint_docs):
        ctx = f"joints[{i}]"
        _check_keys(joint_doc, {"child_link", "axis", "pivot", "limits", "open_angle"}, ctx)
        child_name = _require(joint_doc, "child_link", ctx)
        if child_name not in name_to_index:
            raise ValidationError(f"{ctx}: unknown child_link {child_name!r}")
        child = name_to_index[child_name]
        limits = _require(joint_doc, "limits", ctx)
        if len(limits) != 2 or limits[0] > limits[1]:
            raise ValidationError(f"{ctx}: limits must be [lo, hi] with lo <= hi")
        by_child[child] = Joint(
            child_link=child,
            axis=_vec3(_require(joint_doc, "axis", ctx), f"{ctx}.axis"),
            pivot=_vec3(_require(joint_doc, "pivot", ctx), f"{ctx}.pivot"),
            limits=(float(limits[0]), float(limits[1])),
            open_angle=float(_require(joint_doc, "open_angle", ctx)),
        )
    if set(by_child) != set(range(1, len(links))):
        raise ValidationError("joints must cover every non-base link exactly once")
    joints = tuple(by_child[i] for i in range(1, len(links)))

    tip_docs = _require(doc, "fingertips", "gripper document")
    fingertips = []
    for i, tip_doc in enumerate(tip_docs):
        ctx = f"fingertips[{i}]"
        _check_keys(tip_doc, {"link", "point"}, ctx)
        link_name = _require(tip_doc, "link", ctx)
        if link_name not in name_to_index:
            raise ValidationError(f"{ctx}: unknown link {link_name!r}")
        fingertips.append(
            (name_to_index[link_name], _vec3(_require(tip_doc, "point", ctx), f"{ctx}.point"))
        )

    palm = _palm_frame_from_doc(_require(doc, "palm_frame", "gripper document"), "palm_frame")

    coupling = doc.get("coupling")
    kwargs = {}
    if coupling is not None:
        kwargs["coupling"] = np.asarray(coupling, dtype=np.float64)
        if "actuated_limits" not in doc or "actuated_open" not in doc:
            raise ValidationError("coupled gripper documents need actuated_limits and actuated_open")
        kwargs["actuated_limits"] = np.asarray(doc["actuated_limits"], dtype=np.float64)
        kwargs["actuated_open"] = np.asarray(doc["actuated_open"], dtype=np.float64)
    elif "actuated_limits" in doc or "actuated_open" in doc:
        raise ValidationError("actuated_limits/actuated_open require a coupling matrix")

    return GripperModel(
        name=name,
        links=tuple(links),
        joints=joints,
        fingertips=tuple(fingertips),
        palm_frame=palm,
        **kwargs,
    )


# ---------------------------------------------------------------------------
# problem documents
# ---------------------------------------------------------------------------

_PROBLEM_KEYS = {
    "schema_version", "object_mesh_path", "hand_mesh_path", "hand_palm_frame",
    "hand_base_pose", "hyperparams", "schedule", "stage_b_schedule", "wrench",
    "object_samples", "hand_samples", "gripper_link_samples", "seed",
    "finger_init_strategy", "discrete_bins", "loss_mask", "direction_samples",
}


@dataclass
class ResolvedProblem:
    """A problem document with meshes loaded and all defaults applied."""

    object_mesh: TriMesh
    demo: HandDemo
    hyperparams: Hyperparams
    stage_c_schedule: OptSchedule
    stage_b_schedule: OptSchedule
    wrench: WrenchModel
    loss_mask: LossMask
    finger_init_strategy: str
    discrete_bins: int
    direction_samples: int
    seed: int
    object_samples: int
    hand_samples: int
    gripper_link_samples: int
    object_mesh_path: str
    hand_mesh_path: str

    def echo(self) -> dict:
        """The fully resolved configuration, embedded into result documents."""
        return {
            "object_mesh_path": self.object_mesh_path,
            "hand_mesh_path": self.hand_mesh_path,
            "hyperparams": dataclasses.asdict(self.hyperparams),
            "schedule": dataclasses.asdict(self.stage_c_schedule),
            "stage_b_schedule": dataclasses.asdict(self.stage_b_schedule),
            "wrench": dataclasses.asdict(self.wrench),
            "loss_mask": dataclasses.asdict(self.loss_mask),
            "finger_init_strategy": self.finger_init_strategy,
            "discrete_bins": self.discrete_bins,
            "direction_samples": self.direction_samples,
            "seed": self.seed,
            "object_samples": self.object_samples,
            "hand_samples": self.hand_samples,
            "gripper_link_samples": self.gripper_link_samples,
        }


def resolve_seed(doc_seed, cli_seed: int | None = None) -> int:
    """Problem-document seed, then CLI/env fallback, then zero."""
    if doc_seed is not None:
        return int(doc_seed)
    if cli_seed is not None:
        return int(cli_seed)
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ValidationError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from exc
    return 0


def load_problem(path: str | Path, cli_seed: int | None = None) -> ResolvedProblem:
    path = Path(path)
    doc = _load_json(path, "problem document")
    _check_keys(doc, _PROBLEM_KEYS, "problem document")
    _check_schema_version(doc, "problem document")

    seed = resolve_seed(doc.get("seed"), cli_seed)
    object_samples = int(doc.get("object_samples", DEFAULT_OBJECT_SAMPLES))
    hand_samples = int(doc.get("hand_samples", DEFAULT_OBJECT_SAMPLES))
    link_samples = int(doc.get("gripper_link_samples", DEFAULT_LINK_SAMPLES))

    object_path = _require(doc, "object_mesh_path", "problem document")
    hand_path = _require(doc, "hand_mesh_path", "problem document")
    object_mesh = load_mesh(path.parent / object_path, target_sample_count=object_samples, seed=seed)
    hand_mesh = load_mesh(path.parent / hand_path, target_sample_count=hand_samples, seed=seed + 1)

    palm = _palm_frame_from_doc(
        _require(doc, "hand_palm_frame", "problem document"), "hand_palm_frame"
    )
    pose_doc = _require(doc, "hand_base_pose", "problem document")
    _check_keys(pose_doc, {"rotation", "translation"}, "hand_base_pose")
    rotation = np.asarray(_require(pose_doc, "rotation", "hand_base_pose"), dtype=np.float64)
    if rotation.shape != (3, 3):
        raise ValidationError("hand_base_pose.rotation must be a 3x3 matrix")
    translation = _vec3(
        _require(pose_doc, "translation", "hand_base_pose"), "hand_base_pose.translation"
    )
    demo = HandDemo(
        hand_mesh=hand_mesh, palm_frame=palm, base_rotation=rotation, base_translation=translation
    )

    hyperparams = _dataclass_from_doc(Hyperparams, doc.get("hyperparams", {}), "hyperparams")
    schedule = _dataclass_from_doc(OptSchedule, doc.get("schedule", {}), "schedule")
    stage_b = _dataclass_from_doc(
        OptSchedule, doc.get("stage_b_schedule", doc.get("schedule", {})), "stage_b_schedule"
    )
    wrench = _dataclass_from_doc(WrenchModel, doc.get("wrench", {}), "wrench")
    loss_mask = _dataclass_from_doc(LossMask, doc.get("loss_mask", {}), "loss_mask")

    return ResolvedProblem(
        object_mesh=object_mesh,
        demo=demo,
        hyperparams=hyperparams,
        stage_c_schedule=schedule,
        stage_b_schedule=stage_b,
        wrench=wrench,
        loss_mask=loss_mask,
        finger_init_strategy=doc.get("finger_init_strategy", "contact-optimization"),
        discrete_bins=int(doc.get("discrete_bins", 20)),
        direction_samples=int(doc.get("direction_samples", 20_000)),
        seed=seed,
        object_samples=object_samples,
        hand_samples=hand_samples,
        gripper_link_samples=link_samples,
        object_mesh_path=str(object_path),
        hand_mesh_path=str(hand_path),
    )


# ---------------------------------------------------------------------------
# pose and result documents
# ---------------------------------------------------------------------------

def config_to_doc(config: GripperConfig) -> dict:
    rotation = rot6d_to_matrix(config.rotation_6d)
    return {
        "translation": config.translation.tolist(),
        "rotation": rotation.tolist(),
        "rotation_6d": config.rotation_6d.tolist(),
        "theta": config.theta.tolist(),
    }


def config_from_doc(doc: dict, context: str = "pose document") -> GripperConfig:
    _check_keys(doc, {"schema_version", "translation", "rotation", "rotation_6d", "theta"}, context)
    translation = _vec3(_require(doc, "translation", context), f"{context}.translation")
    theta = np.asarray(_require(doc, "theta", context), dtype=np.float64)
    if "rotation_6d" in doc:
        r6 = np.asarray(doc["rotation_6d"], dtype=np.float64)
        if r6.shape != (6,):
            raise ValidationError(f"{context}.rotation_6d must have 6 entries")
    else:
        rotation = np.asarray(_require(doc, "rotation", context), dtype=np.float64)
        if rotation.shape != (3, 3):
            raise ValidationError(f"{context}.rotation must be 3x3")
        if np.abs(rotation @ rotation.T - np.eye(3)).max() > 1e-5:
            raise ValidationError(f"{context}.rotation must be orthonormal")
        r6 = matrix_to_rot6d(rotation)
    return GripperConfig(translation=translation, rotation_6d=r6, theta=theta)


def load_config_doc(path: str | Path) -> GripperConfig:
    """Read a pose from either an explicit pose document or a result document."""
    doc = _load_json(path, "pose document")
    if "final" in doc:
        return config_from_doc(doc["final"], "result final pose")
    _check_schema_version(doc, "pose document")
    return config_from_doc(doc)


def build_result_doc(
    problem: ResolvedProblem,
    gripper_name: str,
    final_config: GripperConfig,
    breakdowns: dict[str, LossBreakdown],
    metrics: MetricsReport,
    warnings: list[str],
) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": TOOL_VERSION,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "gripper": gripper_name,
        "problem": problem.echo(),
        "final": config_to_doc(final_config),
        "stages": {name: bd.to_dict() for name, bd in breakdowns.items()},
        "metrics": metrics.to_dict(),
        "warnings": list(warnings),
    }


def serialize_doc(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_doc(path: str | Path, doc: dict) -> None:
    Path(path).write_text(serialize_doc(doc))


def result_doc_equal(a: dict, b: dict) -> bool:
    """Compare result documents ignoring the timestamp field."""
    a, b = dict(a), dict(b)
    a.pop("timestamp", None)
    b.pop("timestamp", None)
    return serialize_doc(a) == serialize_doc(b)


def write_trace_csv(path: str | Path, records: list[IterationRecord]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["iteration", "total", "contact", "orientation", "interpen", "self_pen",
             "lr_translation", "lr_rotation", "lr_theta"]
        )
        for rec in records:
            bd = rec.breakdown
            writer.writerow(
                [rec.iteration, repr(bd.total), repr(bd.contact), repr(bd.orientation),
                 repr(bd.interpen), repr(bd.self_pen),
                 repr(rec.lr_translation), repr(rec.lr_rotation), repr(rec.lr_theta)]
            )
