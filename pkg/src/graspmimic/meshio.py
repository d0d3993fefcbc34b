"""Wavefront OBJ reading/writing and binary PLY export.

OBJ support is deliberately minimal: triangles plus fan-triangulated
polygons, 1-based (optionally negative) vertex indices, materials and
texture/normal references ignored.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError


def read_obj(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Parse an OBJ file into (vertices, faces) arrays.

    Polygons with more than three vertices are fan-triangulated around
    their first vertex. Returns float64 (V, 3) and int64 (F, 3) arrays.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"mesh file not found: {path}")
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    try:
        text = path.read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise ValidationError(f"cannot read mesh file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ValidationError(f"{path}:{lineno}: vertex line needs 3 coordinates")
            try:
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: bad vertex coordinate") from exc
        elif tag == "f":
            if len(parts) < 4:
                raise ValidationError(f"{path}:{lineno}: face line needs at least 3 indices")
            idx = []
            for token in parts[1:]:
                head = token.split("/")[0]
                try:
                    i = int(head)
                except ValueError as exc:
                    raise ValidationError(f"{path}:{lineno}: bad face index {token!r}") from exc
                if i > 0:
                    idx.append(i - 1)
                elif i < 0:
                    idx.append(len(vertices) + i)
                else:
                    raise ValidationError(f"{path}:{lineno}: face index 0 is invalid")
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
        # vn/vt/usemtl/mtllib/o/g/s and anything else: ignored
    if not vertices:
        raise ValidationError(f"{path}: empty mesh (no vertices)")
    if not faces:
        raise ValidationError(f"{path}: empty mesh (no faces)")
    verts = np.asarray(vertices, dtype=np.float64)
    face_arr = np.asarray(faces, dtype=np.int64)
    if face_arr.max() >= len(verts) or face_arr.min() < 0:
        raise ValidationError(f"{path}: face index out of range")
    if not np.isfinite(verts).all():
        raise ValidationError(f"{path}: non-finite vertex coordinates")
    return verts, face_arr


def write_obj(path: str | Path, parts: list[tuple[str, np.ndarray, np.ndarray]]) -> None:
    """Write named mesh parts to one OBJ file, each under its own `o` group."""
    lines: list[str] = []
    offset = 0
    for name, vertices, faces in parts:
        lines.append(f"o {name}")
        for v in np.asarray(vertices, dtype=np.float64):
            lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
        for f in np.asarray(faces, dtype=np.int64):
            lines.append(f"f {f[0] + 1 + offset} {f[1] + 1 + offset} {f[2] + 1 + offset}")
        offset += len(vertices)
    Path(path).write_text("\n".join(lines) + "\n")


def write_ply(path: str | Path, vertices: np.ndarray, faces: np.ndarray, colors: np.ndarray) -> None:
    """Write a binary little-endian PLY with per-vertex x,y,z and red,green,blue."""
    vertices = np.asarray(vertices, dtype=np.float32)
    faces = np.asarray(faces, dtype=np.int32)
    colors = np.asarray(colors, dtype=np.uint8)
    if colors.shape != (len(vertices), 3):
        raise ValidationError("color array must be (V, 3)")
    header = "\n".join(
        [
            "ply",
            "format binary_little_endian 1.0",
            f"element vertex {len(vertices)}",
            "property float x",
            "property float y",
            "property float z",
            "property uchar red",
            "property uchar green",
            "property uchar blue",
            f"element face {len(faces)}",
            "property list uchar int vertex_indices",
            "end_header",
        ]
    )
    vert_dtype = np.dtype(
        [("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("r", "u1"), ("g", "u1"), ("b", "u1")]
    )
    vert_rec = np.empty(len(vertices), dtype=vert_dtype)
    vert_rec["x"], vert_rec["y"], vert_rec["z"] = vertices[:, 0], vertices[:, 1], vertices[:, 2]
    vert_rec["r"], vert_rec["g"], vert_rec["b"] = colors[:, 0], colors[:, 1], colors[:, 2]
    face_dtype = np.dtype([("n", "u1"), ("i", "<i4", (3,))])
    face_rec = np.empty(len(faces), dtype=face_dtype)
    face_rec["n"] = 3
    face_rec["i"] = faces
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(b"\n")
        fh.write(vert_rec.tobytes())
        fh.write(face_rec.tobytes())


def read_ply_vertices(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read back a PLY written by write_ply: (positions, colors, faces)."""
    data = Path(path).read_bytes()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    header = data[:end].decode("ascii")
    n_vert = n_face = 0
    for line in header.splitlines():
        if line.startswith("element vertex"):
            n_vert = int(line.split()[-1])
        elif line.startswith("element face"):
            n_face = int(line.split()[-1])
    vert_dtype = np.dtype(
        [("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("r", "u1"), ("g", "u1"), ("b", "u1")]
    )
    verts = np.frombuffer(data, dtype=vert_dtype, count=n_vert, offset=end)
    face_dtype = np.dtype([("n", "u1"), ("i", "<i4", (3,))])
    faces = np.frombuffer(data, dtype=face_dtype, count=n_face, offset=end + n_vert * vert_dtype.itemsize)
    pos = np.stack([verts["x"], verts["y"], verts["z"]], axis=1).astype(np.float64)
    col = np.stack([verts["r"], verts["g"], verts["b"]], axis=1)
    return pos, col, faces["i"].astype(np.int64)
