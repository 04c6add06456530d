"""Reconstruction / rotation-constraint / regularization losses and the
composite objectives of the two training stages.

All losses sum over joints and average over frames. Quaternion differences
are sign-aligned per joint (flip the estimate when the dot is negative)
because q and -q encode the same rotation. The adversarial slot of the base
loss exists in LossWeights for fidelity but ships disabled: no discriminator
here, so lam never multiplies anything.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import quat, semantics
from .autodiff import Variable
from .fields import VoxelField, attractive_loss_var, repulsive_loss_var
from .geometry import LIMB_LABELS, SkinnedMesh, VertexSets, lbs_graph
from .kinematics import Skeleton, fk_graph


@dataclass(frozen=True)
class LossWeights:
    """Loss balancing factors; defaults follow the reference configuration."""

    lam: float = 2.0  # adversarial slot, disabled (kept for config fidelity)
    mu: float = 10.0
    nu: float = 100.0
    kappa: float = 0.5
    iota: float = 0.5
    tau: float = 0.005
    alpha_deg: float = 100.0

    @classmethod
    def from_dict(cls, data: dict) -> "LossWeights":
        allowed = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(data) - set(allowed)
        if unknown:
            raise KeyError(f"unknown loss weight keys: {sorted(unknown)}")
        return cls(**data)


def _aligned_difference(q, q_hat) -> Variable:
    q, q_hat = ad.wrap(q), ad.wrap(q_hat)
    dot = np.sum(q.value * q_hat.value, axis=-1, keepdims=True)
    sign = ad.constant(np.where(dot < 0.0, -1.0, 1.0))
    return q - q_hat * sign


def reconstruction_loss_var(q, q_hat, skeleton: Skeleton) -> Variable:
    """Rotation + FK-position squared error, joints summed, frames averaged."""
    q, q_hat = ad.wrap(q), ad.wrap(q_hat)
    if q.value.shape != q_hat.value.shape:
        raise ValueError(f"shape mismatch {q.value.shape} vs {q_hat.value.shape}")
    diff = _aligned_difference(q, q_hat)
    rot_term = ad.mean(ad.sum(diff * diff, axis=(-2, -1)))
    t = q.value.shape[0]
    zero_root = np.zeros((t, 3))
    p, _ = fk_graph(skeleton, q, zero_root)
    p_hat, _ = fk_graph(skeleton, q_hat, zero_root)
    pdiff = p - p_hat
    pos_term = ad.mean(ad.sum(pdiff * pdiff, axis=(-2, -1)))
    return rot_term + pos_term


def rotation_constraint_loss_var(q_hat, alpha_deg: float) -> Variable:
    """Sum of max(0, |y-angle| - alpha)^2 in squared degrees, frames averaged."""
    if alpha_deg <= 0:
        raise ValueError("alpha must be positive")
    angles = quat.euler_y_deg_var(ad.wrap(q_hat))  # (T, N)
    excess = ad.maximum(ad.absolute(angles) - alpha_deg, 0.0)
    return ad.mean(ad.sum(excess * excess, axis=-1))


def gate_regularizer_var(w) -> Variable:
    """Squared L2 norm of the balancing weights, frames averaged."""
    w = ad.wrap(w)
    total = ad.sum(w * w, axis=-1)
    return ad.mean(total) if w.value.ndim > 1 else total


def base_loss_var(weights: LossWeights, q, q_hat, skeleton: Skeleton, include_rec: bool = True):
    """L_rec + mu * L_rot (adversarial slot disabled); returns (total, parts)."""
    parts: dict[str, float] = {}
    l_rot = rotation_constraint_loss_var(q_hat, weights.alpha_deg)
    parts["rot"] = float(l_rot.value)
    total = l_rot * weights.mu
    if include_rec:
        l_rec = reconstruction_loss_var(q, q_hat, skeleton)
        parts["rec"] = float(l_rec.value)
        total = l_rec + total
    else:
        parts["rec"] = 0.0
    return total, parts


def stage1_objective_var(
    weights: LossWeights,
    skeleton_src: Skeleton,
    skeleton_tgt: Skeleton,
    q_cp,
    q_sem,
    is_self: bool,
):
    """Skeleton-aware objective: base loss (rec gated on self-retarget) + nu * L_sem."""
    q_cp, q_sem = ad.wrap(q_cp), ad.wrap(q_sem)
    total, parts = base_loss_var(weights, q_cp, q_sem, skeleton_tgt, include_rec=is_self)
    t = q_cp.value.shape[0]
    zero_root = np.zeros((t, 3))
    p_src, _ = fk_graph(skeleton_src, ad.constant(q_cp.value), zero_root)
    p_tgt, _ = fk_graph(skeleton_tgt, q_sem, zero_root)
    l_sem = semantics.semantics_loss_var(
        ad.constant(p_src.value), skeleton_src.height, p_tgt, skeleton_tgt.height
    )
    parts["sem"] = float(l_sem.value)
    total = total + l_sem * weights.nu
    parts["total"] = float(total.value)
    return total, parts


def limb_repulsive_losses_var(
    mesh: SkinnedMesh,
    skeleton: Skeleton,
    vertex_sets: VertexSets,
    rotations,
    rep_fields: list[VoxelField],
) -> dict[str, Variable]:
    """Per-limb mean interior depth of the deformed limb vertices, frames averaged."""
    rotations = ad.wrap(rotations)
    t = rotations.value.shape[0]
    if len(rep_fields) != t:
        raise ValueError("one repulsive field per frame required")
    verts = lbs_graph(mesh, skeleton, rotations, np.zeros((t, 3)))
    out: dict[str, Variable] = {}
    for label in LIMB_LABELS:
        idx = vertex_sets.limbs[label]
        per_frame = [repulsive_loss_var(rep_fields[k], verts[k, idx]) for k in range(t)]
        out[label] = ad.mean(ad.stack(per_frame))
    return out


def stage2_geometry_objective_var(
    weights: LossWeights,
    skeleton: Skeleton,
    mesh: SkinnedMesh,
    vertex_sets: VertexSets,
    q_sem,
    q_geo,
    rep_fields: list[VoxelField],
):
    """Shape-aware objective: base(q_sem, q_geo) + kappa * sum of per-limb repulsion."""
    total, parts = base_loss_var(weights, q_sem, q_geo, skeleton, include_rec=True)
    limb_losses = limb_repulsive_losses_var(mesh, skeleton, vertex_sets, q_geo, rep_fields)
    rep_sum = None
    for label in LIMB_LABELS:
        parts[f"rep_{label}"] = float(limb_losses[label].value)
        rep_sum = limb_losses[label] if rep_sum is None else rep_sum + limb_losses[label]
    parts["rep"] = float(rep_sum.value)
    total = total + rep_sum * weights.kappa
    parts["total"] = float(total.value)
    return total, parts


def stage2_gate_objective_var(
    weights: LossWeights,
    skeleton: Skeleton,
    mesh: SkinnedMesh,
    vertex_sets: VertexSets,
    q_geo,
    q_out,
    w,
    rep_fields: list[VoxelField],
    att_fields: list[VoxelField],
):
    """Gate objective: base(q_geo, q_out) + kappa L_rep + iota L_att + tau ||w||^2."""
    q_out = ad.wrap(q_out)
    total, parts = base_loss_var(weights, q_geo, q_out, skeleton, include_rec=True)
    t = q_out.value.shape[0]
    if len(rep_fields) != t or len(att_fields) != t:
        raise ValueError("one field pair per frame required")
    verts = lbs_graph(mesh, skeleton, q_out, np.zeros((t, 3)))
    limb_idx = vertex_sets.all_limb_indices()
    l_rep = ad.mean(ad.stack([repulsive_loss_var(rep_fields[k], verts[k, limb_idx]) for k in range(t)]))
    l_att = ad.mean(ad.stack([attractive_loss_var(att_fields[k], verts[k, vertex_sets.hands]) for k in range(t)]))
    l_reg = gate_regularizer_var(w)
    parts["rep"] = float(l_rep.value)
    parts["att"] = float(l_att.value)
    parts["reg"] = float(l_reg.value)
    total = total + l_rep * weights.kappa + l_att * weights.iota + l_reg * weights.tau
    parts["total"] = float(total.value)
    return total, parts


# plain wrappers -------------------------------------------------------------

def reconstruction_loss(q: np.ndarray, q_hat: np.ndarray, skeleton: Skeleton) -> float:
    q = np.asarray(q, dtype=np.float64)
    if q.ndim == 2:
        q, q_hat = q[None], np.asarray(q_hat, dtype=np.float64)[None]
    return float(reconstruction_loss_var(q, q_hat, skeleton).value)


def rotation_constraint_loss(q_hat: np.ndarray, alpha_deg: float) -> float:
    q_hat = np.asarray(q_hat, dtype=np.float64)
    if q_hat.ndim == 2:
        q_hat = q_hat[None]
    return float(rotation_constraint_loss_var(q_hat, alpha_deg).value)


def gate_regularizer(w: np.ndarray) -> float:
    return float(gate_regularizer_var(np.asarray(w, dtype=np.float64)).value)
