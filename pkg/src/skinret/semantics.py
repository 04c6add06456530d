"""Pose semantics as normalized pair-wise joint distance matrices.

The distance matrix of a pose is divided by the character height and then
row-L1-normalized, which cancels bone-length and height differences; the
semantics loss is the squared Frobenius distance between the source and
target normalized matrices, averaged over frames.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Variable
from .kinematics import DimensionError, InvalidSkeletonError

# Rows whose distance sum falls below this are left as zeros (all joints
# coincident); keeps degenerate poses from poisoning training with NaNs.
_DEGENERATE_ROW_SUM = 1e-30


def pairwise_distances_var(positions) -> Variable:
    """(T, N, 3) positions -> (T, N, N) Euclidean distances, zero diagonal.

    Fused op: the backward pass skips zero-distance pairs (subgradient 0),
    so the diagonal never produces NaNs.
    """
    positions = ad.wrap(positions)
    p = positions.value
    if p.ndim != 3 or p.shape[2] != 3:
        raise DimensionError("positions must be (T, N, 3)")
    diff = p[:, :, None, :] - p[:, None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))

    def pull(g):
        safe = np.where(dist > 0.0, dist, 1.0)
        scale = np.where(dist > 0.0, (g + np.swapaxes(g, 1, 2)) / safe, 0.0)
        return np.sum(scale[:, :, :, None] * diff, axis=2)

    return ad.record(dist, (positions,), (pull,))


def normalize_rows_var(d, h: float) -> Variable:
    if h <= 0.0:
        raise InvalidSkeletonError("height must be positive")
    d = ad.wrap(d)
    scaled = d * (1.0 / h)
    row_sums = ad.sum(scaled, axis=-1, keepdims=True)
    safe = ad.maximum(row_sums, _DEGENERATE_ROW_SUM)
    return scaled / safe


def semantics_loss_var(source_positions, h_source: float, target_positions, h_target: float) -> Variable:
    src = ad.wrap(source_positions)
    tgt = ad.wrap(target_positions)
    if src.value.shape[1] != tgt.value.shape[1]:
        raise DimensionError(
            f"joint counts differ: {src.value.shape[1]} vs {tgt.value.shape[1]}"
        )
    d_src = normalize_rows_var(pairwise_distances_var(src), h_source)
    d_tgt = normalize_rows_var(pairwise_distances_var(tgt), h_target)
    diff = d_src - d_tgt
    per_frame = ad.sum(diff * diff, axis=-1)
    return ad.mean(ad.sum(per_frame, axis=-1))


# plain ndarray wrappers -----------------------------------------------------

def distance_matrix(positions: np.ndarray) -> np.ndarray:
    """Pairwise joint distances of one pose: (N, 3) -> (N, N)."""
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 2 or positions.shape[1] != 3 or positions.shape[0] < 2:
        raise DimensionError("expected (N >= 2, 3) positions")
    if not np.all(np.isfinite(positions)):
        raise ValueError("positions contain non-finite values")
    return pairwise_distances_var(positions[None]).value[0]


def normalize_rows(d: np.ndarray, h: float) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    return normalize_rows_var(d[None] if d.ndim == 2 else d, h).value.reshape(d.shape)


def semantics_loss(
    source_positions: np.ndarray,
    h_source: float,
    target_positions: np.ndarray,
    h_target: float,
) -> float:
    src = np.asarray(source_positions, dtype=np.float64)
    tgt = np.asarray(target_positions, dtype=np.float64)
    if src.ndim == 2:
        src = src[None]
    if tgt.ndim == 2:
        tgt = tgt[None]
    return float(semantics_loss_var(src, h_source, tgt, h_target).value)
