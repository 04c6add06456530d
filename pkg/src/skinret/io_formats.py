"""Strict file formats: JSON skeletons/motions/weights/bundles, OBJ meshes.

Loaders reject rather than guess: unknown fields, wrong shapes, cycles, and
out-of-range values are parse errors that name the offending path and field.
Save/load pairs round-trip at full float64 precision (JSON floats use
shortest-repr round-tripping).
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .geometry import InvalidRigError, SkinnedMesh, assign_parts
from .kinematics import MotionSequence, RootChannel, Skeleton


class ParseError(ValueError):
    def __init__(self, path, message: str):
        super().__init__(f"{path}: {message}")


def _expect_keys(path, data: dict, required: set[str], optional: set[str] = frozenset()):
    if not isinstance(data, dict):
        raise ParseError(path, f"expected a JSON object, got {type(data).__name__}")
    missing = required - set(data)
    unknown = set(data) - required - optional
    if missing:
        raise ParseError(path, f"missing fields: {sorted(missing)}")
    if unknown:
        raise ParseError(path, f"unknown fields: {sorted(unknown)}")


def _finite_array(path, value, shape, field: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != shape:
        raise ParseError(path, f"{field} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParseError(path, f"{field} contains non-finite values")
    return arr


# ---------------------------------------------------------------------------
# skeleton

def save_skeleton(skeleton: Skeleton, path) -> None:
    data = {
        "joint_names": list(skeleton.joint_names),
        "parents": [int(p) for p in skeleton.parents],
        "offsets": [[float(x) for x in row] for row in skeleton.offsets],
        "height": skeleton.height,
    }
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def load_skeleton(path) -> Skeleton:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(path, f"invalid JSON: {exc}") from exc
    _expect_keys(path, data, {"joint_names", "parents", "offsets"}, {"height"})
    names = data["joint_names"]
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise ParseError(path, "joint_names must be a list of strings")
    n = len(names)
    parents = np.asarray(data["parents"], dtype=np.int64)
    if parents.shape != (n,):
        raise ParseError(path, "parents length must match joint_names")
    offsets = _finite_array(path, data["offsets"], (n, 3), "offsets")
    # cycle/ordering diagnostics before handing to the constructor
    for i, p in enumerate(parents):
        if i == 0:
            if p != -1:
                raise ParseError(path, "joint 0 must be the root (parent -1)")
        elif not (0 <= p < i):
            if 0 <= p < n:
                raise ParseError(path, f"joint {i} ({names[i]}) creates a cycle or is out of order")
            raise ParseError(path, f"joint {i} has invalid parent index {p}")
    skeleton = Skeleton(tuple(names), parents, offsets)
    if "height" in data:
        stored = float(data["height"])
        if not math.isclose(stored, skeleton.height, rel_tol=1e-9, abs_tol=1e-9):
            raise ParseError(
                path, f"stored height {stored} disagrees with rest-pose extent {skeleton.height}"
            )
    return skeleton


# ---------------------------------------------------------------------------
# motion

def save_motion(motion: MotionSequence, path) -> None:
    frames = []
    for t in range(motion.n_frames):
        frames.append(
            {
                "root": {
                    "velocity": [float(x) for x in motion.root.linear_velocity[t]],
                    "yaw": float(motion.root.yaw[t]),
                },
                "rotations": [[float(x) for x in q] for q in motion.rotations[t]],
            }
        )
    data = {
        "fps": motion.fps,
        "joint_names": list(motion.skeleton.joint_names),
        "frames": frames,
    }
    Path(path).write_text(json.dumps(data) + "\n")


def load_motion(path, skeleton: Skeleton) -> MotionSequence:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(path, f"invalid JSON: {exc}") from exc
    _expect_keys(path, data, {"fps", "joint_names", "frames"})
    if list(skeleton.joint_names) != data["joint_names"]:
        raise ParseError(path, "motion joint names do not match the skeleton")
    frames = data["frames"]
    if not isinstance(frames, list) or len(frames) < 1:
        raise ParseError(path, "frames must be a non-empty list")
    n = skeleton.n_joints
    rotations = np.empty((len(frames), n, 4))
    velocity = np.empty((len(frames), 3))
    yaw = np.empty(len(frames))
    for t, frame in enumerate(frames):
        _expect_keys(path, frame, {"root", "rotations"})
        _expect_keys(path, frame["root"], {"velocity", "yaw"})
        velocity[t] = _finite_array(path, frame["root"]["velocity"], (3,), f"frames[{t}].root.velocity")
        yaw[t] = float(frame["root"]["yaw"])
        rots = np.asarray(frame["rotations"], dtype=np.float64)
        if rots.shape != (n, 4):
            raise ParseError(path, f"frames[{t}] has {rots.shape} rotations, expected ({n}, 4)")
        norms = np.linalg.norm(rots, axis=-1)
        if np.any(np.abs(norms - 1.0) > 1e-3):
            bad = int(np.argmax(np.abs(norms - 1.0)))
            raise ParseError(
                path,
                f"frames[{t}].rotations[{bad}] norm {norms[bad]:.6f} is beyond the 1e-3 unit tolerance",
            )
        rotations[t] = rots / norms[:, None]
    return MotionSequence(skeleton, rotations, RootChannel(velocity, yaw), float(data["fps"]))


# ---------------------------------------------------------------------------
# mesh (OBJ subset: v/f lines, triangles and quads only)

class UnsupportedFaceError(ValueError):
    pass


def load_mesh_obj(path) -> tuple[np.ndarray, np.ndarray]:
    vertices: list[list[float]] = []
    triangles: list[tuple[int, int, int]] = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            if len(parts) != 4:
                raise ParseError(path, f"line {lineno}: vertex needs 3 coordinates")
            vertices.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = []
            for token in parts[1:]:
                head = token.split("/", 1)[0]
                i = int(head)
                if i < 0:
                    i = len(vertices) + 1 + i
                idx.append(i - 1)
            if len(idx) == 3:
                triangles.append((idx[0], idx[1], idx[2]))
            elif len(idx) == 4:  # deterministic fan split
                triangles.append((idx[0], idx[1], idx[2]))
                triangles.append((idx[0], idx[2], idx[3]))
            else:
                raise UnsupportedFaceError(f"{path}: line {lineno}: {len(idx)}-gon faces unsupported")
        # other OBJ records (vn, vt, o, g, s, usemtl ...) are ignored
    verts = np.asarray(vertices, dtype=np.float64)
    tris = np.asarray(triangles, dtype=np.int64)
    if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
        raise ParseError(path, "face index out of range")
    return verts, tris


def save_mesh_obj(vertices: np.ndarray, triangles: np.ndarray, path) -> None:
    lines = [
        f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}"
        for v in np.asarray(vertices, dtype=np.float64)
    ]
    lines += [f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}" for t in np.asarray(triangles, dtype=np.int64)]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# weights (JSON keyed by joint name)

def save_weights(mesh: SkinnedMesh, skeleton: Skeleton, path) -> None:
    by_joint: dict[str, list[list[float]]] = {}
    for v, row in enumerate(mesh.weights):
        for j, w in row.items():
            by_joint.setdefault(skeleton.joint_names[j], []).append([v, float(w)])
    data = {"vertex_count": mesh.n_vertices, "weights": by_joint}
    Path(path).write_text(json.dumps(data) + "\n")


def load_weights(path, skeleton: Skeleton, n_vertices: int) -> list[dict[int, float]]:
    """Per-vertex weight rows; rows off unit sum by <= 0.05 are renormalized."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(path, f"invalid JSON: {exc}") from exc
    _expect_keys(path, data, {"vertex_count", "weights"})
    if int(data["vertex_count"]) != n_vertices:
        raise ParseError(
            path, f"vertex_count {data['vertex_count']} does not match mesh ({n_vertices})"
        )
    rows: list[dict[int, float]] = [dict() for _ in range(n_vertices)]
    for joint_name, entries in data["weights"].items():
        try:
            j = skeleton.index_of(joint_name)
        except KeyError:
            raise InvalidRigError(f"{path}: unknown joint name {joint_name!r}") from None
        for entry in entries:
            v, w = int(entry[0]), float(entry[1])
            if not (0 <= v < n_vertices):
                raise ParseError(path, f"weight vertex index {v} out of range")
            if w < 0:
                raise InvalidRigError(f"{path}: negative weight on vertex {v}")
            rows[v][j] = rows[v].get(j, 0.0) + w
    for v, row in enumerate(rows):
        total = sum(row.values())
        if abs(total - 1.0) > 0.05:
            raise InvalidRigError(f"{path}: vertex {v} weights sum to {total:.4f}")
        if total != 1.0:
            rows[v] = {j: w / total for j, w in row.items()}
    return rows


# ---------------------------------------------------------------------------
# shape descriptor + character bundle

def save_shape_descriptor(extents: np.ndarray, path) -> None:
    Path(path).write_text(
        json.dumps({"extents": [[float(x) for x in row] for row in extents]}) + "\n"
    )


def load_shape_descriptor(path, n_joints: int) -> np.ndarray:
    data = json.loads(Path(path).read_text())
    _expect_keys(path, data, {"extents"})
    return _finite_array(path, data["extents"], (n_joints, 3), "extents")


class CharacterBundle:
    """A character's skeleton, labeled mesh, and shape descriptor, loaded from disk."""

    def __init__(self, name: str, skeleton: Skeleton, mesh: SkinnedMesh, phi: np.ndarray):
        self.name = name
        self.skeleton = skeleton
        self.mesh = mesh
        self.phi = phi


def save_bundle(character, directory) -> Path:
    """Write a synthetic character as a bundle directory; returns the manifest path."""
    from .geometry import shape_descriptor

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_skeleton(character.skeleton, directory / "skeleton.json")
    save_mesh_obj(character.mesh.vertices, character.mesh.triangles, directory / "mesh.obj")
    save_weights(character.mesh, character.skeleton, directory / "weights.json")
    save_shape_descriptor(character.phi.extents, directory / "phi.json")
    manifest = {
        "name": character.name,
        "skeleton": "skeleton.json",
        "mesh": "mesh.obj",
        "weights": "weights.json",
        "shape_descriptor": "phi.json",
    }
    path = directory / "bundle.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_bundle(manifest_path) -> CharacterBundle:
    manifest_path = Path(manifest_path)
    data = json.loads(manifest_path.read_text())
    _expect_keys(
        manifest_path, data, {"name", "skeleton", "mesh", "weights"}, {"shape_descriptor"}
    )
    root = manifest_path.parent
    skeleton = load_skeleton(root / data["skeleton"])
    verts, tris = load_mesh_obj(root / data["mesh"])
    weights = load_weights(root / data["weights"], skeleton, len(verts))
    mesh = SkinnedMesh(verts, tris, weights)
    assign_parts(mesh, skeleton)
    if "shape_descriptor" in data:
        phi = load_shape_descriptor(root / data["shape_descriptor"], skeleton.n_joints)
    else:
        from .geometry import shape_descriptor

        phi = shape_descriptor(mesh, skeleton).extents
    return CharacterBundle(str(data["name"]), skeleton, mesh, phi)
