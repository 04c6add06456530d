"""Single-pass retargeting: motion copy, residual modifications, balancing gate.

Per frame: q_cp = q_A, q_sem = dq_s (x) q_cp, q_geo = dq_g (x) q_sem, and
q_out = nlerp(q_sem, q_geo, w) per joint. With no mesh (or no shape-aware
checkpoint) the pipeline runs in skeleton-only mode: the geometry stage and
the gate are skipped and q_out = q_sem. Identity residuals pass rotations
through bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quat
from .geometry import ShapeDescriptor, SkinnedMesh
from .kinematics import DimensionError, MotionSequence, Skeleton, retarget_root
from .networks import (
    GateParams,
    ShapeAwareParams,
    TransformerLiteParams,
    gate_forward,
    shape_aware_forward,
    skeleton_aware_forward,
)


class ConfigurationError(ValueError):
    pass


class ValidationError(ValueError):
    pass


@dataclass
class RetargetRequest:
    source_motion: MotionSequence
    source_skeleton: Skeleton
    target_skeleton: Skeleton
    target_mesh: SkinnedMesh | None = None
    target_phi: ShapeDescriptor | None = None
    skeleton_params: TransformerLiteParams | None = None
    shape_params: ShapeAwareParams | None = None
    gate_params: GateParams | None = None
    w_override: np.ndarray | None = None
    w_scale: float | None = None

    def __post_init__(self):
        if self.source_skeleton.n_joints != self.target_skeleton.n_joints:
            raise DimensionError("source and target joint counts differ")
        if self.w_override is not None:
            self.w_override = np.asarray(self.w_override, dtype=np.float64)
            if self.w_override.shape != (self.target_skeleton.n_joints,):
                raise ValidationError("w_override must have one entry per joint")
            if np.any(self.w_override < 0.0) or np.any(self.w_override > 1.0):
                raise ValidationError("w_override entries must lie in [0, 1]")
        if self.w_scale is not None and self.w_scale < 0.0:
            raise ValidationError("w_scale must be nonnegative")

    @property
    def geometry_enabled(self) -> bool:
        return self.shape_params is not None

    def require_mesh(self) -> SkinnedMesh:
        if self.target_mesh is None:
            raise ConfigurationError("geometry stage enabled but no target mesh given")
        return self.target_mesh

    def phi(self) -> ShapeDescriptor:
        if self.target_phi is not None:
            return self.target_phi
        from .geometry import shape_descriptor

        return shape_descriptor(self.require_mesh(), self.target_skeleton)


@dataclass
class FrameResult:
    q_cp: np.ndarray  # (N, 4) motion copy
    q_sem: np.ndarray  # (N, 4) after the skeleton-aware residual
    q_geo: np.ndarray  # (N, 4) after the shape-aware residual
    w_network: np.ndarray  # (N,) gate output before overrides
    w: np.ndarray  # (N,) weights actually used
    q_out: np.ndarray  # (N, 4) final rotations


def apply_w_control(w_network: np.ndarray, w_override: np.ndarray | None, w_scale: float | None) -> np.ndarray:
    """Override wins; otherwise scale the network weights and clamp to [0, 1]."""
    if w_override is not None:
        w_override = np.asarray(w_override, dtype=np.float64)
        if np.any(w_override < 0.0) or np.any(w_override > 1.0):
            raise ValidationError("w_override entries must lie in [0, 1]")
        return w_override.copy()
    if w_scale is None:
        return np.asarray(w_network, dtype=np.float64).copy()
    if w_scale < 0.0:
        raise ValidationError("w_scale must be nonnegative")
    return np.clip(np.asarray(w_network, dtype=np.float64) * w_scale, 0.0, 1.0)


def blend_gate(q_sem: np.ndarray, q_geo: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Per-joint nlerp between the two corrected poses; endpoints are bit-exact."""
    out = np.empty_like(q_sem)
    for j in range(q_sem.shape[0]):
        out[j] = quat.nlerp(q_sem[j], q_geo[j], float(w[j]))
    return out


def retarget_frame(request: RetargetRequest, frame_index: int) -> FrameResult:
    motion = request.source_motion
    if not (0 <= frame_index < motion.n_frames):
        raise IndexError(f"frame {frame_index} out of range [0, {motion.n_frames})")
    n = request.target_skeleton.n_joints
    q_cp = motion.rotations[frame_index].copy()

    if request.skeleton_params is not None:
        dq_s = skeleton_aware_forward(
            request.skeleton_params,
            request.source_skeleton.offsets,
            request.target_skeleton.offsets,
            q_cp,
        ).value
        q_sem = quat.hamilton_product(dq_s, q_cp)
    else:
        q_sem = q_cp.copy()

    if request.geometry_enabled:
        request.require_mesh()
        phi = request.phi().extents
        dq_g = shape_aware_forward(request.shape_params, phi, q_sem).value
        q_geo = quat.hamilton_product(dq_g, q_sem)
        if request.gate_params is not None:
            w_network = gate_forward(
                request.gate_params, request.target_skeleton.offsets, phi, q_sem
            ).value
        else:
            w_network = np.full(n, 0.5)
        w = apply_w_control(w_network, request.w_override, request.w_scale)
        q_out = blend_gate(q_sem, q_geo, w)
    else:
        q_geo = q_sem.copy()
        w_network = np.zeros(n)
        w = apply_w_control(w_network, request.w_override, request.w_scale)
        q_out = q_sem.copy()

    return FrameResult(q_cp, q_sem, q_geo, w_network, w, q_out)


def retarget_sequence(request: RetargetRequest) -> MotionSequence:
    """Frame-wise retarget plus height-normalized root channel transfer."""
    motion = request.source_motion
    rotations = np.empty_like(motion.rotations)
    for t in range(motion.n_frames):
        rotations[t] = retarget_frame(request, t).q_out
    root = retarget_root(
        motion.root, request.source_skeleton.height, request.target_skeleton.height
    )
    return MotionSequence(request.target_skeleton, rotations, root, motion.fps)
