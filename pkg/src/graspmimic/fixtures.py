"""Procedural test assets: primitive meshes, a synthetic two-finger gripper,
a smaller two-finger demonstration hand, and a suite of object/grasp pairs.

Everything here is deterministic given the seeds, so experiment runs and the
test suite see identical geometry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import meshio
from .documents import SCHEMA_VERSION
from .geometry import TriMesh, build_mesh
from .kinematics import (
    GripperConfig,
    GripperModel,
    HandDemo,
    Joint,
    Link,
    PalmFrame,
    config_from_palm_target,
    forward_kinematics,
    rot6d_to_matrix,
)
from .pipeline import discrete_close


# ---------------------------------------------------------------------------
# primitive meshes
# ---------------------------------------------------------------------------

def box_arrays(size, center=(0.0, 0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned box: 8 vertices, 12 outward-wound triangles."""
    hx, hy, hz = np.asarray(size, dtype=np.float64) / 2.0
    cx, cy, cz = center
    verts = np.array(
        [
            [cx - hx, cy - hy, cz - hz],
            [cx + hx, cy - hy, cz - hz],
            [cx + hx, cy + hy, cz - hz],
            [cx - hx, cy + hy, cz - hz],
            [cx - hx, cy - hy, cz + hz],
            [cx + hx, cy - hy, cz + hz],
            [cx + hx, cy + hy, cz + hz],
            [cx - hx, cy + hy, cz + hz],
        ]
    )
    faces = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom
            [4, 5, 6], [4, 6, 7],  # top
            [0, 1, 5], [0, 5, 4],  # front
            [2, 3, 7], [2, 7, 6],  # back
            [0, 4, 7], [0, 7, 3],  # left
            [1, 2, 6], [1, 6, 5],  # right
        ],
        dtype=np.int64,
    )
    return verts, faces


def icosphere_arrays(radius=1.0, subdivisions=3, center=(0.0, 0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """Subdivided icosahedron projected onto a sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    vert_list = [v for v in verts]
    for _ in range(subdivisions):
        midpoint_cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in midpoint_cache:
                m = vert_list[a] + vert_list[b]
                m /= np.linalg.norm(m)
                midpoint_cache[key] = len(vert_list)
                vert_list.append(m)
            return midpoint_cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
        faces = np.asarray(new_faces, dtype=np.int64)
    verts = np.asarray(vert_list) * radius + np.asarray(center)
    return verts, faces


def cylinder_arrays(
    radius=1.0, height=1.0, segments=24, center=(0.0, 0.0, 0.0)
) -> tuple[np.ndarray, np.ndarray]:
    """Capped cylinder along the z axis."""
    cx, cy, cz = center
    angles = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
    bottom = np.column_stack([ring[:, 0] + cx, ring[:, 1] + cy, np.full(segments, cz - height / 2)])
    top = np.column_stack([ring[:, 0] + cx, ring[:, 1] + cy, np.full(segments, cz + height / 2)])
    verts = np.concatenate([bottom, top, [[cx, cy, cz - height / 2]], [[cx, cy, cz + height / 2]]])
    bc, tc = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces.append([i, j, segments + j])
        faces.append([i, segments + j, segments + i])
        faces.append([bc, j, i])                      # bottom cap, -z outward
        faces.append([tc, segments + i, segments + j])  # top cap, +z outward
    return verts, np.asarray(faces, dtype=np.int64)


def torus_arrays(
    major_radius=1.0, minor_radius=0.25, major_segments=24, minor_segments=12,
    center=(0.0, 0.0, 0.0),
) -> tuple[np.ndarray, np.ndarray]:
    """Torus in the xy plane around the z axis."""
    verts = []
    for i in range(major_segments):
        phi = 2.0 * np.pi * i / major_segments
        for j in range(minor_segments):
            psi = 2.0 * np.pi * j / minor_segments
            r = major_radius + minor_radius * np.cos(psi)
            verts.append(
                [r * np.cos(phi) + center[0], r * np.sin(phi) + center[1],
                 minor_radius * np.sin(psi) + center[2]]
            )
    faces = []
    for i in range(major_segments):
        for j in range(minor_segments):
            a = i * minor_segments + j
            b = ((i + 1) % major_segments) * minor_segments + j
            c = ((i + 1) % major_segments) * minor_segments + (j + 1) % minor_segments
            d = i * minor_segments + (j + 1) % minor_segments
            faces.append([a, b, c])
            faces.append([a, c, d])
    return np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int64)


# ---------------------------------------------------------------------------
# two-finger pincher models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PincherDims:
    palm_size: tuple[float, float, float]
    finger_sep: float         # finger center offset from the palm center, along x
    prox_xsec: tuple[float, float]
    prox_len: float
    dist_xsec: tuple[float, float]
    dist_len: float
    joint_limits: tuple[float, float]
    tip_inset: float          # fingertip marker inset from the distal tip, along z


ROBOT_DIMS = PincherDims(
    palm_size=(0.096, 0.034, 0.018),
    finger_sep=0.038,
    prox_xsec=(0.014, 0.018),
    prox_len=0.048,
    dist_xsec=(0.012, 0.016),
    dist_len=0.044,
    joint_limits=(0.0, 1.4),
    tip_inset=0.003,
)

HAND_DIMS = PincherDims(
    palm_size=(0.064, 0.026, 0.014),
    finger_sep=0.026,
    prox_xsec=(0.009, 0.013),
    prox_len=0.036,
    dist_xsec=(0.008, 0.012),
    dist_len=0.032,
    joint_limits=(0.0, 1.5),
    tip_inset=0.003,
)


def _pincher_link_arrays(dims: PincherDims) -> list[tuple[str, np.ndarray, np.ndarray]]:
    """Authored link meshes (base frame, zero pose, palm surface at z = 0)."""
    parts = [
        ("palm", *box_arrays(dims.palm_size, center=(0.0, 0.0, -dims.palm_size[2] / 2))),
    ]
    for side, tag in ((1.0, "a"), (-1.0, "b")):
        x = side * dims.finger_sep
        parts.append(
            (f"finger_{tag}_prox",
             *box_arrays((dims.prox_xsec[0], dims.prox_xsec[1], dims.prox_len),
                         center=(x, 0.0, dims.prox_len / 2)))
        )
        parts.append(
            (f"finger_{tag}_dist",
             *box_arrays((dims.dist_xsec[0], dims.dist_xsec[1], dims.dist_len),
                         center=(x, 0.0, dims.prox_len + dims.dist_len / 2)))
        )
    return parts


def pincher_model(name: str, dims: PincherDims, link_samples: int = 500, seed: int = 0) -> GripperModel:
    """Two fingers with two links each (4 dof), closing toward the x = 0 plane."""
    parts = _pincher_link_arrays(dims)
    links = []
    parents = {"palm": -1, "finger_a_prox": 0, "finger_a_dist": 1,
               "finger_b_prox": 0, "finger_b_dist": 3}
    for i, (link_name, verts, faces) in enumerate(parts):
        mesh = build_mesh(verts, faces, sample_count=link_samples, seed=seed + i)
        links.append(Link(name=link_name, mesh=mesh, parent=parents[link_name]))
    joints = []
    for side, base_link in ((1.0, 1), (-1.0, 3)):
        axis = np.array([0.0, -side, 0.0])  # positive angle closes the finger inward
        x = side * dims.finger_sep
        joints.append(
            Joint(child_link=base_link, axis=axis, pivot=np.array([x, 0.0, 0.0]),
                  limits=dims.joint_limits, open_angle=0.0)
        )
        joints.append(
            Joint(child_link=base_link + 1, axis=axis, pivot=np.array([x, 0.0, dims.prox_len]),
                  limits=dims.joint_limits, open_angle=0.0)
        )
    tip_z = dims.prox_len + dims.dist_len - dims.tip_inset
    fingertips = (
        (2, np.array([dims.finger_sep - dims.dist_xsec[0] / 2, 0.0, tip_z])),
        (4, np.array([-dims.finger_sep + dims.dist_xsec[0] / 2, 0.0, tip_z])),
    )
    return GripperModel(
        name=name,
        links=tuple(links),
        joints=tuple(joints),
        fingertips=fingertips,
        palm_frame=PalmFrame(
            origin=np.zeros(3), forward=np.array([1.0, 0.0, 0.0]), normal=np.array([0.0, 0.0, 1.0])
        ),
    )


def two_finger_gripper(link_samples: int = 500, seed: int = 0) -> GripperModel:
    return pincher_model("two_finger", ROBOT_DIMS, link_samples=link_samples, seed=seed)


def demo_hand_model(link_samples: int = 400, seed: int = 100) -> GripperModel:
    return pincher_model("demo_hand", HAND_DIMS, link_samples=link_samples, seed=seed)


# ---------------------------------------------------------------------------
# demonstrations and the object suite
# ---------------------------------------------------------------------------

def make_demo(
    hand_model: GripperModel,
    object_mesh: TriMesh,
    palm_origin,
    forward,
    normal,
    bins: int = 24,
    hand_samples: int = 2000,
    seed: int = 1,
) -> tuple[HandDemo, GripperConfig]:
    """Pose the demonstration hand at a palm frame and close it onto the object."""
    frame = PalmFrame(
        origin=np.asarray(palm_origin, dtype=np.float64),
        forward=np.asarray(forward, dtype=np.float64),
        normal=np.asarray(normal, dtype=np.float64),
    )
    config = config_from_palm_target(hand_model, frame)
    config = discrete_close(hand_model, config, object_mesh, bins=bins)
    posed = forward_kinematics(hand_model, config)
    merged = posed.merged_mesh()
    hand_mesh = build_mesh(merged.vertices, merged.faces, sample_count=hand_samples, seed=seed)
    return HandDemo(
        hand_mesh=hand_mesh,
        palm_frame=posed.palm,
        base_rotation=rot6d_to_matrix(config.rotation_6d),
        base_translation=config.translation,
    ), config


@dataclass(frozen=True)
class SuiteCase:
    name: str
    object_mesh: TriMesh
    demo: HandDemo
    object_arrays: tuple[np.ndarray, np.ndarray]
    hand_config: GripperConfig


_HAND_STANDOFF = 0.045  # palm surface clearance above the grasped feature


def _suite_specs() -> list[tuple[str, tuple[np.ndarray, np.ndarray], tuple, tuple, tuple]]:
    sphere = icosphere_arrays(radius=0.018, subdivisions=3)
    box = box_arrays((0.036, 0.05, 0.03))
    cyl = cylinder_arrays(radius=0.015, height=0.09, segments=24)
    torus = torus_arrays(major_radius=0.028, minor_radius=0.007,
                         major_segments=24, minor_segments=12)
    plate = cylinder_arrays(radius=0.055, height=0.008, segments=32)
    s = _HAND_STANDOFF
    return [
        ("sphere_pinch", sphere, (0.0, 0.0, 0.018 + s), (1, 0, 0), (0, 0, -1)),
        ("box_wrap", box, (0.0, 0.0, 0.015 + s), (1, 0, 0), (0, 0, -1)),
        ("cylinder_side", cyl, (0.015 + s, 0.0, 0.0), (0, 1, 0), (-1, 0, 0)),
        ("handle_pinch", torus, (0.028, 0.0, 0.007 + s), (1, 0, 0), (0, 0, -1)),
        ("plate_edge", plate, (0.055 + s, 0.0, 0.0), (0, 0, 1), (-1, 0, 0)),
    ]


def synthetic_suite(
    object_samples: int = 2000,
    hand_samples: int = 2000,
    hand_link_samples: int = 400,
    seed: int = 0,
) -> list[SuiteCase]:
    """Five object/demonstration pairs covering pinch, wrap, and edge grasps."""
    hand = demo_hand_model(link_samples=hand_link_samples, seed=seed + 100)
    cases = []
    for i, (name, arrays, origin, fwd, nrm) in enumerate(_suite_specs()):
        obj = build_mesh(arrays[0], arrays[1], sample_count=object_samples, seed=seed + i)
        demo, hand_config = make_demo(
            hand, obj, origin, fwd, nrm, hand_samples=hand_samples, seed=seed + 50 + i
        )
        cases.append(SuiteCase(name=name, object_mesh=obj, demo=demo,
                               object_arrays=arrays, hand_config=hand_config))
    return cases


# ---------------------------------------------------------------------------
# on-disk suite for the command-line interface
# ---------------------------------------------------------------------------

def write_gripper_doc(outdir: str | Path, model_name: str = "two_finger") -> Path:
    """Write the synthetic gripper's link meshes and model document."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    dims = ROBOT_DIMS
    parts = _pincher_link_arrays(dims)
    parents = {"palm": None, "finger_a_prox": "palm", "finger_a_dist": "finger_a_prox",
               "finger_b_prox": "palm", "finger_b_dist": "finger_b_prox"}
    links = []
    for link_name, verts, faces in parts:
        mesh_file = f"{model_name}_{link_name}.obj"
        meshio.write_obj(outdir / mesh_file, [(link_name, verts, faces)])
        links.append({"name": link_name, "mesh_path": mesh_file, "parent": parents[link_name]})
    joints = []
    for side, tag in ((1.0, "a"), (-1.0, "b")):
        x = side * dims.finger_sep
        joints.append({
            "child_link": f"finger_{tag}_prox", "axis": [0.0, -side, 0.0],
            "pivot": [x, 0.0, 0.0], "limits": list(dims.joint_limits), "open_angle": 0.0,
        })
        joints.append({
            "child_link": f"finger_{tag}_dist", "axis": [0.0, -side, 0.0],
            "pivot": [x, 0.0, dims.prox_len], "limits": list(dims.joint_limits), "open_angle": 0.0,
        })
    tip_z = dims.prox_len + dims.dist_len - dims.tip_inset
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": model_name,
        "links": links,
        "joints": joints,
        "fingertips": [
            {"link": "finger_a_dist", "point": [dims.finger_sep - dims.dist_xsec[0] / 2, 0.0, tip_z]},
            {"link": "finger_b_dist", "point": [-dims.finger_sep + dims.dist_xsec[0] / 2, 0.0, tip_z]},
        ],
        "palm_frame": {"origin": [0.0, 0.0, 0.0], "forward": [1.0, 0.0, 0.0], "normal": [0.0, 0.0, 1.0]},
    }
    path = outdir / f"{model_name}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def write_suite(outdir: str | Path, seed: int = 0) -> dict[str, Path]:
    """Write the synthetic suite (meshes + problem documents + gripper model).

    Returns a name -> problem path mapping, plus a 'gripper' entry.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {"gripper": write_gripper_doc(outdir)}
    cases = synthetic_suite(seed=seed)
    for case in cases:
        obj_file = f"{case.name}_object.obj"
        hand_file = f"{case.name}_hand.obj"
        meshio.write_obj(outdir / obj_file, [(case.name, *case.object_arrays)])
        mesh = case.demo.hand_mesh
        meshio.write_obj(outdir / hand_file, [("hand", mesh.vertices, mesh.faces)])
        problem = {
            "schema_version": SCHEMA_VERSION,
            "object_mesh_path": obj_file,
            "hand_mesh_path": hand_file,
            "hand_palm_frame": {
                "origin": case.demo.palm_frame.origin.tolist(),
                "forward": case.demo.palm_frame.forward.tolist(),
                "normal": case.demo.palm_frame.normal.tolist(),
            },
            "hand_base_pose": {
                "rotation": case.demo.base_rotation.tolist(),
                "translation": case.demo.base_translation.tolist(),
            },
            "seed": seed,
        }
        path = outdir / f"{case.name}.json"
        path.write_text(json.dumps(problem, indent=2, sort_keys=True) + "\n")
        paths[case.name] = path
    return paths
