"""Skeleton and motion containers plus forward kinematics.

Conventions: y is up; offsets are rest-pose local translations in length
units. A joint's global rotation is the Hamilton chain from the root. The
root offset lives in the root's own rotated frame (pre-rotating the root
rotation therefore rotates every global position about the root origin);
non-root offsets live in the parent's frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import quat
from .autodiff import Variable


class InvalidSkeletonError(ValueError):
    pass


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class Skeleton:
    """Rest-pose joint hierarchy: names, parent indices (-1 root), offsets."""

    joint_names: tuple[str, ...]
    parents: np.ndarray  # (N,) int
    offsets: np.ndarray  # (N, 3) float64

    def __post_init__(self):
        parents = np.asarray(self.parents, dtype=np.int64)
        offsets = np.asarray(self.offsets, dtype=np.float64)
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "offsets", offsets)
        n = len(self.joint_names)
        if parents.shape != (n,) or offsets.shape != (n, 3):
            raise InvalidSkeletonError("joint_names/parents/offsets lengths disagree")
        if n == 0:
            raise InvalidSkeletonError("skeleton needs at least one joint")
        roots = np.flatnonzero(parents == -1)
        if len(roots) != 1 or roots[0] != 0:
            raise InvalidSkeletonError("exactly one root expected, at index 0")
        for i, p in enumerate(parents):
            if i > 0 and not (0 <= p < i):
                raise InvalidSkeletonError(
                    f"parents must be topologically sorted (joint {i} has parent {p})"
                )
        if not np.all(np.isfinite(offsets)):
            raise InvalidSkeletonError("offsets contain non-finite values")

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    @property
    def rest_positions(self) -> np.ndarray:
        """Global joint positions of the rest pose (identity rotations, zero root)."""
        identity = np.broadcast_to(quat.IDENTITY, (self.n_joints, 4))
        return forward_kinematics(self, identity, np.zeros(3))

    @property
    def height(self) -> float:
        """Vertical (y) extent of the rest pose; the normalization scale h."""
        ys = self.rest_positions[:, 1]
        h = float(ys.max() - ys.min())
        if h <= 0.0:
            raise InvalidSkeletonError("rest pose has no vertical extent")
        return h

    def index_of(self, name: str) -> int:
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise KeyError(f"unknown joint {name!r}") from None


@dataclass
class RootChannel:
    """Per-frame global root motion: world-frame linear velocity + yaw delta."""

    linear_velocity: np.ndarray  # (T, 3) length units per frame
    yaw: np.ndarray  # (T,) radians per frame

    def __post_init__(self):
        self.linear_velocity = np.asarray(self.linear_velocity, dtype=np.float64)
        self.yaw = np.asarray(self.yaw, dtype=np.float64)
        if self.linear_velocity.ndim != 2 or self.linear_velocity.shape[1] != 3:
            raise DimensionError("linear_velocity must be (T, 3)")
        if self.yaw.shape != (self.linear_velocity.shape[0],):
            raise DimensionError("yaw must be (T,)")
        if not (np.all(np.isfinite(self.linear_velocity)) and np.all(np.isfinite(self.yaw))):
            raise ValueError("root channel has non-finite values")

    def __len__(self) -> int:
        return self.linear_velocity.shape[0]

    def positions(self) -> np.ndarray:
        """Global root positions: cumulative sum of velocities from a zero origin."""
        return np.cumsum(self.linear_velocity, axis=0)

    def headings(self) -> np.ndarray:
        """Cumulative yaw (radians) about the vertical axis per frame."""
        return np.cumsum(self.yaw)


@dataclass
class MotionSequence:
    """T frames of local joint rotations plus the root channel."""

    skeleton: Skeleton
    rotations: np.ndarray  # (T, N, 4) unit quaternions
    root: RootChannel
    fps: float = 30.0

    def __post_init__(self):
        self.rotations = np.asarray(self.rotations, dtype=np.float64)
        t, n = self.rotations.shape[:2]
        if self.rotations.ndim != 3 or self.rotations.shape[2] != 4:
            raise DimensionError("rotations must be (T, N, 4)")
        if n != self.skeleton.n_joints:
            raise DimensionError(
                f"rotation count {n} != skeleton joints {self.skeleton.n_joints}"
            )
        if t < 1 or len(self.root) != t:
            raise DimensionError("frame counts of rotations and root disagree")
        norms = np.linalg.norm(self.rotations, axis=-1)
        if not np.allclose(norms, 1.0, atol=1e-6):
            raise quat.InvalidQuaternionError("motion rotations must be unit quaternions")

    @property
    def n_frames(self) -> int:
        return self.rotations.shape[0]

    def global_root_quats(self) -> np.ndarray:
        """Root rotations with the accumulated yaw pre-rotation applied."""
        headings = self.root.headings()
        out = np.empty_like(self.rotations[:, 0])
        for t, theta in enumerate(headings):
            yaw_q = quat.from_axis_angle([0.0, 1.0, 0.0], float(theta))
            out[t] = quat.hamilton_product(yaw_q, self.rotations[t, 0])
        return out


def fk_graph(skeleton: Skeleton, rotations, root_translation) -> tuple[Variable, Variable]:
    """Differentiable FK: (T, N, 4) rotations + (T, 3) root -> positions, global rotations.

    Returns ((T, N, 3) positions, (T, N, 4) global quaternions).
    """
    rotations = ad.wrap(rotations)
    root_translation = ad.wrap(root_translation)
    if rotations.value.ndim != 3 or rotations.value.shape[2] != 4:
        raise DimensionError("rotations must be (T, N, 4)")
    if rotations.value.shape[1] != skeleton.n_joints:
        raise DimensionError(
            f"rotation count {rotations.value.shape[1]} != skeleton joints {skeleton.n_joints}"
        )
    globals_q: list[Variable] = []
    positions: list[Variable] = []
    for i in range(skeleton.n_joints):
        local = rotations[:, i]
        offset = ad.constant(skeleton.offsets[i])
        parent = int(skeleton.parents[i])
        if parent < 0:
            g = local
            p = root_translation + quat.quat_rotate_var(g, offset)
        else:
            g = quat.quat_mul_var(globals_q[parent], local)
            p = positions[parent] + quat.quat_rotate_var(globals_q[parent], offset)
        globals_q.append(g)
        positions.append(p)
    return ad.stack(positions, axis=1), ad.stack(globals_q, axis=1)


def forward_kinematics(skeleton: Skeleton, rotations: np.ndarray, root_translation: np.ndarray) -> np.ndarray:
    """Global joint positions for one frame: (N, 4) rotations, (3,) translation."""
    rotations = np.asarray(rotations, dtype=np.float64)
    if rotations.shape != (skeleton.n_joints, 4):
        raise DimensionError(
            f"expected ({skeleton.n_joints}, 4) rotations, got {rotations.shape}"
        )
    pos, _ = fk_graph(skeleton, rotations[None], np.asarray(root_translation, dtype=np.float64)[None])
    return pos.value[0]


def retarget_root(root: RootChannel, h_source: float, h_target: float) -> RootChannel:
    """Scale linear velocity by the height ratio; yaw is scale-invariant."""
    if h_source <= 0.0 or h_target <= 0.0:
        raise InvalidSkeletonError("character heights must be positive")
    return RootChannel(root.linear_velocity * (h_target / h_source), root.yaw.copy())


def global_joint_positions(motion: MotionSequence) -> np.ndarray:
    """(T, N, 3) world positions: FK plus integrated root translation and yaw."""
    sk = motion.skeleton
    root_pos = motion.root.positions()
    root_quats = motion.global_root_quats()
    out = np.empty((motion.n_frames, sk.n_joints, 3))
    for t in range(motion.n_frames):
        rotations = motion.rotations[t].copy()
        rotations[0] = root_quats[t]
        out[t] = forward_kinematics(sk, rotations, root_pos[t])
    return out
