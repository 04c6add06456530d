"""Synthetic desk-scale characters, meshes, and motions.

Characters share a 22-joint Mixamo-style topology; meshes are watertight by
construction (capsule limbs, ellipsoid torso, sphere head) with rigid
per-part skin weights, so inside/outside tests and part labels are exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quat
from .geometry import ShapeDescriptor, SkinnedMesh, assign_parts, shape_descriptor
from .kinematics import MotionSequence, RootChannel, Skeleton

# name, parent, offset (length units); topologically sorted
_BASE_JOINTS = [
    ("Hips", -1, (0.0, 0.0, 0.0)),
    ("Spine", 0, (0.0, 0.12, 0.0)),
    ("Spine1", 1, (0.0, 0.13, 0.0)),
    ("Spine2", 2, (0.0, 0.13, 0.0)),
    ("Neck", 3, (0.0, 0.12, 0.0)),
    ("Head", 4, (0.0, 0.11, 0.0)),
    ("LeftShoulder", 3, (0.06, 0.08, 0.0)),
    ("LeftArm", 6, (0.11, 0.0, 0.0)),
    ("LeftForeArm", 7, (0.26, 0.0, 0.0)),
    ("LeftHand", 8, (0.25, 0.0, 0.0)),
    ("RightShoulder", 3, (-0.06, 0.08, 0.0)),
    ("RightArm", 10, (-0.11, 0.0, 0.0)),
    ("RightForeArm", 11, (-0.26, 0.0, 0.0)),
    ("RightHand", 12, (-0.25, 0.0, 0.0)),
    ("LeftUpLeg", 0, (0.09, -0.05, 0.0)),
    ("LeftLeg", 14, (0.0, -0.42, 0.0)),
    ("LeftFoot", 15, (0.0, -0.40, 0.0)),
    ("LeftToeBase", 16, (0.0, -0.06, 0.12)),
    ("RightUpLeg", 0, (-0.09, -0.05, 0.0)),
    ("RightLeg", 18, (0.0, -0.42, 0.0)),
    ("RightFoot", 19, (0.0, -0.40, 0.0)),
    ("RightToeBase", 20, (0.0, -0.06, 0.12)),
]

N_JOINTS = len(_BASE_JOINTS)


# ---------------------------------------------------------------------------
# watertight primitives

def icosphere(subdivisions: int = 2, radius: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Subdivided icosahedron projected onto a sphere; watertight, outward-facing."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [v for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(verts) * radius, np.array(faces, dtype=np.int64)


def ellipsoid(center, radii, subdivisions: int = 2) -> tuple[np.ndarray, np.ndarray]:
    v, f = icosphere(subdivisions)
    return v * np.asarray(radii, dtype=np.float64) + np.asarray(center, dtype=np.float64), f


def capsule(
    p0,
    p1,
    radius: float,
    segments: int = 8,
    cap_rings: int = 3,
) -> tuple[np.ndarray, np.ndarray]:
    """Closed capsule from p0 to p1; built along +y then rigidly placed."""
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    axis = p1 - p0
    length = np.linalg.norm(axis)

    verts = [np.array([0.0, -radius, 0.0])]
    rings = []
    # bottom cap (excluding pole), equator, top equator, top cap (excluding pole)
    for i in range(1, cap_rings + 1):
        phi = -np.pi / 2 + (np.pi / 2) * i / cap_rings
        rings.append((radius * np.cos(phi), radius * np.sin(phi)))
    rings.append((radius, length))
    for i in range(1, cap_rings + 1):
        phi = (np.pi / 2) * i / cap_rings
        rings.append((radius * np.cos(phi), length + radius * np.sin(phi)))
    rings = rings[:-1]  # final ring degenerates into the top pole
    for r, y in rings:
        for s in range(segments):
            ang = 2 * np.pi * s / segments
            verts.append(np.array([r * np.cos(ang), y, r * np.sin(ang)]))
    top = len(verts)
    verts.append(np.array([0.0, length + radius, 0.0]))
    verts = np.array(verts)

    faces = []
    for s in range(segments):
        faces.append((0, 1 + s, 1 + (s + 1) % segments))
    for ring in range(len(rings) - 1):
        base0 = 1 + ring * segments
        base1 = base0 + segments
        for s in range(segments):
            a = base0 + s
            b = base0 + (s + 1) % segments
            c = base1 + s
            d = base1 + (s + 1) % segments
            faces.append((a, d, b))
            faces.append((a, c, d))
    last = 1 + (len(rings) - 1) * segments
    for s in range(segments):
        faces.append((top, last + (s + 1) % segments, last + s))
    faces = np.array(faces, dtype=np.int64)

    if length > 0:
        y_axis = np.array([0.0, 1.0, 0.0])
        direction = axis / length
        dot = float(np.clip(np.dot(y_axis, direction), -1.0, 1.0))
        if dot < 1.0 - 1e-12:
            if dot > -1.0 + 1e-12:
                rot_axis = np.cross(y_axis, direction)
                q = quat.from_axis_angle(rot_axis, float(np.arccos(dot)))
            else:
                q = quat.from_axis_angle([0.0, 0.0, 1.0], np.pi)
            verts = quat.rotate_vec(q, verts)
    return verts + p0, faces


def signed_volume(vertices: np.ndarray, triangles: np.ndarray) -> float:
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


# ---------------------------------------------------------------------------
# characters

@dataclass
class SyntheticCharacter:
    name: str
    skeleton: Skeleton
    mesh: SkinnedMesh
    phi: ShapeDescriptor


@dataclass
class SyntheticFamily:
    characters: list[SyntheticCharacter]
    motions: dict[str, MotionSequence]

    def character(self, name: str) -> SyntheticCharacter:
        for c in self.characters:
            if c.name == name:
                return c
        raise KeyError(f"unknown character {name!r}")


def make_skeleton(
    forearm_scale: float = 1.0,
    arm_scale: float = 1.0,
    leg_scale: float = 1.0,
    size_scale: float = 1.0,
) -> Skeleton:
    names = tuple(j[0] for j in _BASE_JOINTS)
    parents = np.array([j[1] for j in _BASE_JOINTS], dtype=np.int64)
    offsets = np.array([j[2] for j in _BASE_JOINTS], dtype=np.float64).copy()
    # a joint's offset is the bone from its parent: Hand offsets are the
    # forearm bones, ForeArm offsets the upper-arm bones
    for i, name in enumerate(names):
        if name.endswith("Hand"):
            offsets[i] *= forearm_scale
        elif name.endswith("ForeArm"):
            offsets[i] *= arm_scale
        elif name.endswith(("Leg", "Foot")) or "UpLeg" in name:
            offsets[i] *= leg_scale
    return Skeleton(names, parents, offsets * size_scale)


def make_character(
    name: str,
    forearm_scale: float = 1.0,
    arm_scale: float = 1.0,
    leg_scale: float = 1.0,
    size_scale: float = 1.0,
    torso_breadth: float = 1.0,
    torso_depth: float = 1.0,
    limb_radius: float = 0.034,
    segments: int = 8,
    forearm_segments: int = 12,
    forearm_rings: int = 4,
    torso_subdiv: int = 2,
) -> SyntheticCharacter:
    skeleton = make_skeleton(forearm_scale, arm_scale, leg_scale, size_scale)
    rest = skeleton.rest_positions
    j = {n: i for i, n in enumerate(skeleton.joint_names)}
    s = size_scale

    pieces: list[tuple[np.ndarray, np.ndarray, int]] = []  # verts, tris, bound joint

    def add(verts, tris, joint):
        pieces.append((verts, tris, joint))

    spine1_y = rest[j["Spine1"], 1]
    # breadth (x) stays clear of the T-pose arms so limb rotations can always
    # resolve interpenetration; depth (z) is the bulk knob
    torso_center = np.array([0.0, spine1_y + 0.10 * s, 0.0])
    torso_radii = np.array([0.17 * torso_breadth, 0.30, 0.11 * torso_depth]) * s
    add(*ellipsoid(torso_center, torso_radii, torso_subdiv), j["Spine1"])
    head_center = rest[j["Head"]] + np.array([0.0, 0.06 * s, 0.0])
    add(*ellipsoid(head_center, np.array([0.085, 0.10, 0.09]) * s, 1), j["Head"])

    r = limb_radius * s
    for side in ("Left", "Right"):
        sign = 1.0 if side == "Left" else -1.0
        add(*capsule(rest[j[f"{side}Arm"]], rest[j[f"{side}ForeArm"]], r, segments, 2), j[f"{side}Arm"])
        add(
            *capsule(rest[j[f"{side}ForeArm"]], rest[j[f"{side}Hand"]], r * 0.85, forearm_segments, forearm_rings),
            j[f"{side}ForeArm"],
        )
        hand_tip = rest[j[f"{side}Hand"]] + np.array([sign * 0.08 * s, 0.0, 0.0])
        add(*capsule(rest[j[f"{side}Hand"]], hand_tip, r * 0.8, 6, 2), j[f"{side}Hand"])
        add(*capsule(rest[j[f"{side}UpLeg"]], rest[j[f"{side}Leg"]], r * 1.6, 6, 2), j[f"{side}UpLeg"])
        add(*capsule(rest[j[f"{side}Leg"]], rest[j[f"{side}Foot"]], r * 1.25, 6, 2), j[f"{side}Leg"])
        add(*capsule(rest[j[f"{side}Foot"]], rest[j[f"{side}ToeBase"]], r * 1.1, 6, 2), j[f"{side}Foot"])

    verts_all = []
    tris_all = []
    weights: list[dict[int, float]] = []
    offset = 0
    for verts, tris, joint in pieces:
        if signed_volume(verts, tris) < 0:
            tris = tris[:, ::-1]
        verts_all.append(verts)
        tris_all.append(tris + offset)
        weights += [{joint: 1.0}] * len(verts)
        offset += len(verts)
    mesh = SkinnedMesh(np.concatenate(verts_all), np.concatenate(tris_all), weights)
    assign_parts(mesh, skeleton)
    return SyntheticCharacter(name, skeleton, mesh, shape_descriptor(mesh, skeleton))


# ---------------------------------------------------------------------------
# motions (rotations on the shared base topology)

def _joint_index(name: str) -> int:
    for i, (n, _, _) in enumerate(_BASE_JOINTS):
        if n == name:
            return i
    raise KeyError(name)


def _identity_frames(t: int) -> np.ndarray:
    out = np.zeros((t, N_JOINTS, 4))
    out[:, :, 0] = 1.0
    return out


def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def motion_arm_fold(
    skeleton: Skeleton,
    n_frames: int = 40,
    fps: float = 30.0,
    shoulder_deg: float = 72.0,
    elbow_deg: float = 85.0,
    ramp_fraction: float = 0.45,
    sway_deg: float = 4.0,
) -> MotionSequence:
    """Fold both arms across the chest and hold; the staple retargeting stressor."""
    rot = _identity_frames(n_frames)
    ramp = _smoothstep(np.arange(n_frames) / max(1.0, ramp_fraction * n_frames))
    sway = np.sin(np.linspace(0, 2 * np.pi, n_frames)) * np.deg2rad(sway_deg)
    for t in range(n_frames):
        for side, sign in (("Left", 1.0), ("Right", -1.0)):
            shoulder = np.deg2rad(shoulder_deg) * ramp[t]
            elbow = np.deg2rad(elbow_deg) * ramp[t]
            rot[t, _joint_index(f"{side}Arm")] = quat.from_axis_angle([0, 1, 0], -sign * shoulder)
            rot[t, _joint_index(f"{side}ForeArm")] = quat.from_axis_angle([0, 1, 0], -sign * elbow)
        rot[t, _joint_index("Spine")] = quat.from_axis_angle([0, 0, 1], float(sway[t]))
    root = RootChannel(np.zeros((n_frames, 3)), np.zeros(n_frames))
    return MotionSequence(skeleton, rot, root, fps)


def motion_clap(
    skeleton: Skeleton,
    n_frames: int = 40,
    fps: float = 30.0,
    ramp_fraction: float = 0.4,
    touch_gap: float = 0.0,
    sway_deg: float = 3.0,
) -> MotionSequence:
    """Swing both straight arms forward until the hands meet at the midline.

    The swing angle is solved from this skeleton's own arm reach, so the
    character's hands touch (up to touch_gap); copied onto different arm
    proportions the hands miss or cross, which is the classic semantics
    failure of motion copy.
    """
    rot = _identity_frames(n_frames)
    j = {n: i for i, n in enumerate(skeleton.joint_names)}
    pivot_x = abs(skeleton.rest_positions[j["LeftArm"], 0])
    reach = float(
        np.linalg.norm(skeleton.offsets[j["LeftForeArm"]])
        + np.linalg.norm(skeleton.offsets[j["LeftHand"]])
    )
    half_gap = max(0.0, 0.5 * touch_gap)
    lateral = max(1e-6, pivot_x - half_gap)
    if reach <= lateral:
        raise ValueError("arms too short to clap on this skeleton")
    swing = float(np.arctan2(np.sqrt(reach**2 - lateral**2), -lateral))
    # split between shoulder and elbow so each joint's y-angle stays within
    # the +-100 degree rotation constraint
    shoulder = min(swing, np.deg2rad(95.0))
    elbow = swing - shoulder
    ramp = _smoothstep(np.arange(n_frames) / max(1.0, ramp_fraction * n_frames))
    sway = np.sin(np.linspace(0, 2 * np.pi, n_frames)) * np.deg2rad(sway_deg)
    for t in range(n_frames):
        rot[t, j["LeftArm"]] = quat.from_axis_angle([0, 1, 0], -shoulder * ramp[t])
        rot[t, j["LeftForeArm"]] = quat.from_axis_angle([0, 1, 0], -elbow * ramp[t])
        rot[t, j["RightArm"]] = quat.from_axis_angle([0, 1, 0], shoulder * ramp[t])
        rot[t, j["RightForeArm"]] = quat.from_axis_angle([0, 1, 0], elbow * ramp[t])
        rot[t, j["Spine1"]] = quat.from_axis_angle([0, 0, 1], float(sway[t]) * ramp[t])
    root = RootChannel(np.zeros((n_frames, 3)), np.zeros(n_frames))
    return MotionSequence(skeleton, rot, root, fps)


def motion_wave(skeleton: Skeleton, n_frames: int = 40, fps: float = 30.0) -> MotionSequence:
    """Raise the right arm and wave the forearm."""
    rot = _identity_frames(n_frames)
    ramp = _smoothstep(np.arange(n_frames) / (0.3 * n_frames))
    wave = np.sin(np.linspace(0, 4 * np.pi, n_frames))
    for t in range(n_frames):
        rot[t, _joint_index("RightArm")] = quat.from_axis_angle([0, 0, 1], np.deg2rad(70) * ramp[t])
        rot[t, _joint_index("RightForeArm")] = quat.from_axis_angle(
            [0, 0, 1], np.deg2rad(25) * ramp[t] * wave[t]
        )
        rot[t, _joint_index("Spine1")] = quat.from_axis_angle([1, 0, 0], np.deg2rad(3) * wave[t])
    root = RootChannel(np.zeros((n_frames, 3)), np.zeros(n_frames))
    return MotionSequence(skeleton, rot, root, fps)


def motion_stroll(skeleton: Skeleton, n_frames: int = 40, fps: float = 30.0) -> MotionSequence:
    """Forward drift with gentle leg/arm swing and a slow turn; exercises the root channel."""
    rot = _identity_frames(n_frames)
    phase = np.linspace(0, 2 * np.pi * n_frames / 24.0, n_frames)
    for t in range(n_frames):
        swing = np.deg2rad(22) * np.sin(phase[t])
        rot[t, _joint_index("LeftUpLeg")] = quat.from_axis_angle([1, 0, 0], swing)
        rot[t, _joint_index("RightUpLeg")] = quat.from_axis_angle([1, 0, 0], -swing)
        rot[t, _joint_index("LeftArm")] = quat.from_axis_angle([1, 0, 0], -0.5 * swing)
        rot[t, _joint_index("RightArm")] = quat.from_axis_angle([1, 0, 0], 0.5 * swing)
    velocity = np.zeros((n_frames, 3))
    velocity[:, 2] = 0.012
    yaw = np.full(n_frames, np.deg2rad(0.4))
    return MotionSequence(skeleton, rot, RootChannel(velocity, yaw), fps)


# ---------------------------------------------------------------------------
# family presets

def build_family(preset: str = "demo", n_frames: int = 40) -> SyntheticFamily:
    if preset == "arm_fold_pair":
        # forearm bones at 0.5x / 2.0x of base; longarms also doubles the
        # upper arm so the forearm:upper-arm ratios differ by exactly 2x
        chars = [
            make_character("shortarms", forearm_scale=0.5),
            make_character("longarms", forearm_scale=2.0, arm_scale=2.0),
        ]
    elif preset == "penetration_pair":
        chars = [
            make_character("slim", torso_breadth=0.7, torso_depth=0.7, forearm_rings=6),
            make_character("bulky", torso_breadth=0.7, torso_depth=4.0, forearm_rings=6),
        ]
    elif preset == "demo":
        chars = [
            make_character("medium"),
            make_character("lanky", forearm_scale=1.35, leg_scale=1.15, torso_breadth=0.8, torso_depth=0.8),
            make_character("stocky", forearm_scale=0.75, size_scale=0.85, torso_depth=2.2),
        ]
    else:
        raise KeyError(f"unknown family preset {preset!r}")
    base = chars[0].skeleton
    if preset == "penetration_pair":
        # press the fold deep enough that motion copy buries the forearms in
        # the bulky torso for most of the clip
        fold = motion_arm_fold(base, n_frames, shoulder_deg=78.0, elbow_deg=100.0, ramp_fraction=0.15)
    elif preset == "arm_fold_pair":
        # shallow fold: this stays in the regime where the copied pose's
        # distance-matrix error is almost entirely recoverable
        fold = motion_arm_fold(base, n_frames, shoulder_deg=10.0, elbow_deg=18.0, ramp_fraction=0.4, sway_deg=6.0)
    else:
        fold = motion_arm_fold(base, n_frames)
    motions = {
        "arm_fold": fold,
        "clap": motion_clap(base, n_frames),
        "wave": motion_wave(base, n_frames),
        "stroll": motion_stroll(base, n_frames),
    }
    return SyntheticFamily(chars, motions)
