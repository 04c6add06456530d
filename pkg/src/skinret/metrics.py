"""Evaluation metrics: height-normalized MSE, penetration rate, contact distance.

Penetration uses the exact winding-number inside test on the body surface
(not the truncated field), so the number is independent of field resolution.
Contact distances are in character length units; EvalReport scales them
by 100 (centimeters for meter-scaled characters).
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import backend
from .fields import EmptyVertexSetError
from .geometry import body_surface, check_watertight, extract_vertex_sets, linear_blend_skinning
from .io_formats import CharacterBundle
from .kinematics import MotionSequence, RootChannel, global_joint_positions


@dataclass(frozen=True)
class EvalReport:
    mse: float
    local_mse: float
    penetration_rate: float  # percent of limb vertices strictly inside, frame-averaged
    contact_distance: float  # centimeters, assuming meter-scaled characters
    per_frame_penetration: tuple[float, ...]
    per_frame_contact: tuple[float, ...]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_frame_penetration"] = list(self.per_frame_penetration)
        d["per_frame_contact"] = list(self.per_frame_contact)
        return d


def eval_mse(result: MotionSequence, reference: MotionSequence, skeleton=None) -> dict:
    """Height-normalized global and root-aligned (local) position MSE."""
    if result.n_frames != reference.n_frames:
        raise ValueError("sequences must have equal frame counts")
    if result.rotations.shape[1] != reference.rotations.shape[1]:
        raise ValueError("sequences must have equal joint counts")
    skeleton = skeleton or result.skeleton
    h2 = skeleton.height ** 2
    p_res = global_joint_positions(result)
    p_ref = global_joint_positions(reference)
    mse = float(np.mean(np.sum((p_res - p_ref) ** 2, axis=-1)) / h2)
    # root-aligned variant: translation drops out exactly when FK runs with a
    # zero root channel (yaw still counts; only translation is aligned)
    local_diff = _rootless_positions(result) - _rootless_positions(reference)
    local = float(np.mean(np.sum(local_diff**2, axis=-1)) / h2)
    return {"mse": mse, "local_mse": local}


def _rootless_positions(motion: MotionSequence) -> np.ndarray:
    stationary = MotionSequence(
        motion.skeleton,
        motion.rotations,
        RootChannel(np.zeros((motion.n_frames, 3)), motion.root.yaw),
        motion.fps,
    )
    return global_joint_positions(stationary)


def _deformed_frames(result: MotionSequence, bundle: CharacterBundle) -> np.ndarray:
    root_pos = result.root.positions()
    root_quats = result.global_root_quats()
    out = np.empty((result.n_frames, bundle.mesh.n_vertices, 3))
    for t in range(result.n_frames):
        rotations = result.rotations[t].copy()
        rotations[0] = root_quats[t]
        out[t] = linear_blend_skinning(bundle.mesh, bundle.skeleton, rotations, root_pos[t])
    return out


def penetration_series(result: MotionSequence, bundle: CharacterBundle) -> np.ndarray:
    """Per-frame percentage of limb vertices strictly inside the body surface."""
    vsets = extract_vertex_sets(bundle.mesh)
    limb_idx = vsets.all_limb_indices()
    if len(limb_idx) == 0:
        raise EmptyVertexSetError("character has no limb vertices")
    body_idx, body_tris = body_surface(bundle.mesh)
    check_watertight(body_tris)
    frames = _deformed_frames(result, bundle)
    out = np.empty(result.n_frames)
    for t in range(result.n_frames):
        winding = backend.winding_numbers(frames[t, limb_idx], frames[t, body_idx], body_tris)
        out[t] = 100.0 * float(np.mean(winding > 0.5))
    return out


def eval_penetration(result: MotionSequence, bundle: CharacterBundle) -> float:
    return float(np.mean(penetration_series(result, bundle)))


def contact_series(result: MotionSequence, bundle: CharacterBundle) -> np.ndarray:
    """Per-frame mean unsigned hand-vertex distance to the body surface (length units)."""
    vsets = extract_vertex_sets(bundle.mesh)
    if len(vsets.hands) == 0:
        raise EmptyVertexSetError("character has no hand vertices")
    body_idx, body_tris = body_surface(bundle.mesh)
    check_watertight(body_tris)
    frames = _deformed_frames(result, bundle)
    out = np.empty(result.n_frames)
    for t in range(result.n_frames):
        dist = backend.point_mesh_distances(frames[t, vsets.hands], frames[t, body_idx], body_tris)
        out[t] = float(np.mean(dist))
    return out


def eval_contact(result: MotionSequence, bundle: CharacterBundle) -> float:
    return float(np.mean(contact_series(result, bundle)))


def end_effector_trace(result: MotionSequence, joint_name: str) -> np.ndarray:
    """Per-frame vertical (y) coordinate of the named joint, world frame."""
    j = result.skeleton.index_of(joint_name)
    return global_joint_positions(result)[:, j, 1]


def evaluate(result: MotionSequence, reference: MotionSequence | None, bundle: CharacterBundle) -> EvalReport:
    """Full report; MSE terms are zero when no reference motion is given."""
    if reference is not None:
        errs = eval_mse(result, reference, bundle.skeleton)
    else:
        errs = {"mse": 0.0, "local_mse": 0.0}
    pen = penetration_series(result, bundle)
    con = contact_series(result, bundle)
    return EvalReport(
        mse=errs["mse"],
        local_mse=errs["local_mse"],
        penetration_rate=float(pen.mean()),
        contact_distance=float(con.mean()) * 100.0,
        per_frame_penetration=tuple(float(x) for x in pen),
        per_frame_contact=tuple(float(x) for x in con),
    )
