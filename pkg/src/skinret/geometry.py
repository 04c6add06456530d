"""Skinned meshes: linear blend skinning, body-part labels, shape descriptors.

Part labels follow the Mixamo-style joint naming convention (Arm/ForeArm,
Hand, UpLeg/Leg/Foot/Toe with a Left/Right side; everything else is body).
The shape descriptor row of a joint is the axis-aligned bounding box of the
rest vertices bound to it, measured in the joint's local rest frame so it
is pose-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import quat
from .autodiff import Variable
from .kinematics import DimensionError, Skeleton, fk_graph

PART_LABELS = ("left_arm", "right_arm", "left_leg", "right_leg", "left_hand", "right_hand", "body")
LIMB_LABELS = ("left_arm", "right_arm", "left_leg", "right_leg")


class InvalidRigError(ValueError):
    pass


class LabelingError(ValueError):
    pass


class NonWatertightError(ValueError):
    pass


def classify_joint(name: str) -> str:
    """Body-part group of a joint name; raises LabelingError for sideless limbs."""
    base = name.rsplit(":", 1)[-1]
    if "Left" in base:
        side = "left"
    elif "Right" in base:
        side = "right"
    else:
        side = None
    limbish = any(tag in base for tag in ("Hand", "Arm", "Leg", "Foot", "Toe"))
    if limbish and side is None:
        raise LabelingError(f"cannot infer side of limb joint {name!r}")
    if not limbish:
        return "body"
    if "Hand" in base:
        return f"{side}_hand"
    if "Arm" in base:
        return f"{side}_arm"
    return f"{side}_leg"


def limb_chains(skeleton: Skeleton) -> dict[str, list[int]]:
    """Joint indices of the four limb chains (hands belong to the arm chains)."""
    chains: dict[str, list[int]] = {label: [] for label in LIMB_LABELS}
    errors = []
    for i, name in enumerate(skeleton.joint_names):
        try:
            group = classify_joint(name)
        except LabelingError:
            errors.append(name)
            continue
        if group.endswith("_hand"):
            chains[group.replace("_hand", "_arm")].append(i)
        elif group != "body":
            chains[group].append(i)
    if errors:
        raise LabelingError(f"unmatched joint names: {errors}")
    return chains


@dataclass
class SkinnedMesh:
    """Rest-pose triangle mesh with per-vertex skinning weights.

    weights[v] maps joint index -> weight; rows must be nonnegative and sum
    to 1 within 1e-6. part_labels is filled by assign_parts.
    """

    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (F, 3) int
    weights: list[dict[int, float]]
    part_labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        v = self.vertices.shape[0]
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise DimensionError("vertices must be (V, 3)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise DimensionError("triangles must be (F, 3)")
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= v):
            raise IndexError("triangle indices out of range")
        if len(self.weights) != v:
            raise InvalidRigError("one weight row per vertex required")
        for i, row in enumerate(self.weights):
            total = sum(row.values())
            if abs(total - 1.0) > 1e-6 or any(w < 0 for w in row.values()):
                raise InvalidRigError(f"weight row {i} sums to {total}, expected 1")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def max_weight_joint(self) -> np.ndarray:
        """Per-vertex dominant joint; ties go to the lowest joint index."""
        out = np.empty(self.n_vertices, dtype=np.int64)
        for i, row in enumerate(self.weights):
            best = max(sorted(row.items()), key=lambda kv: (kv[1], -kv[0]))
            out[i] = best[0]
        return out

    def joint_groups(self) -> list[tuple[int, np.ndarray, np.ndarray]]:
        """(joint, vertex indices, weights) triples for vectorized skinning."""
        groups: dict[int, tuple[list[int], list[float]]] = {}
        for v, row in enumerate(self.weights):
            for j, w in row.items():
                groups.setdefault(j, ([], []))[0].append(v)
                groups[j][1].append(w)
        return [
            (j, np.array(idx, dtype=np.int64), np.array(w, dtype=np.float64))
            for j, (idx, w) in sorted(groups.items())
        ]


@dataclass(frozen=True)
class ShapeDescriptor:
    """Per-joint bounding-box edge lengths of the bound rest vertices, (N, 3)."""

    extents: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "extents", np.asarray(self.extents, dtype=np.float64))
        if np.any(self.extents < 0):
            raise ValueError("extents must be nonnegative")


@dataclass(frozen=True)
class VertexSets:
    """Limb vertex index lists (repulsion queries) and hand list (attraction)."""

    limbs: dict[str, np.ndarray]
    hands: np.ndarray

    def all_limb_indices(self) -> np.ndarray:
        return np.concatenate([self.limbs[label] for label in LIMB_LABELS])


def assign_parts(mesh: SkinnedMesh, skeleton: Skeleton) -> SkinnedMesh:
    """Label each vertex with the part group of its dominant joint (in place)."""
    dominant = mesh.max_weight_joint()
    labels = []
    errors = set()
    joint_groups = []
    for name in skeleton.joint_names:
        try:
            joint_groups.append(classify_joint(name))
        except LabelingError:
            joint_groups.append(None)
            errors.add(name)
    used_bad = {skeleton.joint_names[j] for j in dominant if joint_groups[j] is None}
    if used_bad:
        raise LabelingError(f"unmatched joint names: {sorted(used_bad)}")
    for j in dominant:
        labels.append(joint_groups[j])
    mesh.part_labels = labels
    return mesh


def extract_vertex_sets(mesh: SkinnedMesh) -> VertexSets:
    if not mesh.part_labels:
        raise LabelingError("run assign_parts first")
    labels = np.array(mesh.part_labels)
    limbs = {label: np.flatnonzero(labels == label) for label in LIMB_LABELS}
    hands = np.flatnonzero((labels == "left_hand") | (labels == "right_hand"))
    return VertexSets(limbs, hands)


def body_surface(mesh: SkinnedMesh) -> tuple[np.ndarray, np.ndarray]:
    """(vertex indices, reindexed triangles) of the body-labeled surface.

    Triangles are kept only when all three corners are body vertices; for
    the synthetic characters this is the closed torso+head component.
    """
    if not mesh.part_labels:
        raise LabelingError("run assign_parts first")
    labels = np.array(mesh.part_labels)
    body_idx = np.flatnonzero(labels == "body")
    remap = -np.ones(mesh.n_vertices, dtype=np.int64)
    remap[body_idx] = np.arange(len(body_idx))
    keep = np.all(np.isin(mesh.triangles, body_idx), axis=1)
    tris = remap[mesh.triangles[keep]]
    return body_idx, tris


def check_watertight(triangles: np.ndarray) -> None:
    """Closed orientable check: every undirected edge used exactly twice, once per direction."""
    triangles = np.asarray(triangles, dtype=np.int64)
    directed: dict[tuple[int, int], int] = {}
    for a, b, c in triangles:
        for e in ((a, b), (b, c), (c, a)):
            directed[e] = directed.get(e, 0) + 1
    for (a, b), count in directed.items():
        if count != 1 or directed.get((b, a), 0) != 1:
            raise NonWatertightError(
                f"edge ({a}, {b}) is not shared by exactly two opposed triangles"
            )


def shape_descriptor(mesh: SkinnedMesh, skeleton: Skeleton) -> ShapeDescriptor:
    """Bounding-box extents per joint over its dominant-weight rest vertices."""
    rest = skeleton.rest_positions
    dominant = mesh.max_weight_joint()
    extents = np.zeros((skeleton.n_joints, 3))
    for j in range(skeleton.n_joints):
        verts = mesh.vertices[dominant == j]
        if len(verts) == 0:
            continue
        local = verts - rest[j]
        extents[j] = local.max(axis=0) - local.min(axis=0)
    return ShapeDescriptor(extents)


def lbs_graph(mesh: SkinnedMesh, skeleton: Skeleton, rotations, root_translation) -> Variable:
    """Differentiable LBS: (T, N, 4) rotations -> (T, V, 3) deformed vertices.

    v' = sum_j w_vj (R_j^global (v - p_j^rest) + p_j^posed); identity pose
    reproduces the rest mesh.
    """
    rotations = ad.wrap(rotations)
    t = rotations.value.shape[0]
    pos, grot = fk_graph(skeleton, rotations, root_translation)
    rest = skeleton.rest_positions
    out = ad.constant(np.zeros((t, mesh.n_vertices, 3)))
    for j, idx, w in mesh.joint_groups():
        local = ad.constant(mesh.vertices[idx] - rest[j])  # (Vj, 3)
        q_j = grot[:, j]  # (T, 4)
        moved = quat.quat_rotate_var(q_j[:, None, :], local[None, :, :]) + pos[:, j][:, None, :]
        out = out + scatter_rows(moved * ad.constant(w[:, None]), idx, mesh.n_vertices)
    return out


def scatter_rows(updates, idx: np.ndarray, n_rows: int) -> Variable:
    """Place (T, K, 3) updates into a zero (T, n_rows, 3) array at row indices idx."""
    updates = ad.wrap(updates)
    t = updates.value.shape[0]
    buf = np.zeros((t, n_rows, updates.value.shape[2]))
    buf[:, idx] = updates.value
    return ad.record(buf, (updates,), (lambda g: g[:, idx],))


def linear_blend_skinning(
    mesh: SkinnedMesh,
    skeleton: Skeleton,
    rotations: np.ndarray,
    root_translation: np.ndarray,
) -> np.ndarray:
    """Deformed vertex positions for one frame: (N, 4) rotations -> (V, 3)."""
    rotations = np.asarray(rotations, dtype=np.float64)
    if rotations.shape != (skeleton.n_joints, 4):
        raise DimensionError(
            f"expected ({skeleton.n_joints}, 4) rotations, got {rotations.shape}"
        )
    out = lbs_graph(mesh, skeleton, rotations[None], np.asarray(root_translation, dtype=np.float64)[None])
    return out.value[0]
