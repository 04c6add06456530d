"""Quaternion algebra in the (w, x, y, z) convention, right-handed, y-up.

Quaternions are rows of shape (..., 4). All rotation composition is the
Hamilton product, so R(a ⊗ b) = R(a) R(b) for column vectors. The ``*_var``
functions operate on autodiff Variables (or raw arrays, which stay
constants); the plain functions are thin ndarray wrappers with exact
identity fast paths used by the inference pipeline.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Variable

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


class InvalidQuaternionError(ValueError):
    """Input quaternion is non-finite or too far from unit norm."""


def _check_finite(q: np.ndarray) -> None:
    if not np.all(np.isfinite(q)):
        raise InvalidQuaternionError("quaternion has non-finite components")


# ---------------------------------------------------------------------------
# autodiff ops (fused pullbacks, shapes broadcast)

def quat_mul_var(a, b) -> Variable:
    """Hamilton product a ⊗ b on (..., 4) rows; adjoints are g⊗conj(b), conj(a)⊗g."""
    a, b = ad.wrap(a), ad.wrap(b)
    out = _mul_values(a.value, b.value)
    return ad.record(
        out,
        (a, b),
        (
            lambda g: ad._unbroadcast(_mul_values(g, _conj_values(b.value)), a.value.shape),
            lambda g: ad._unbroadcast(_mul_values(_conj_values(a.value), g), b.value.shape),
        ),
    )


def quat_normalize_var(q) -> Variable:
    q = ad.wrap(q)
    n = np.linalg.norm(q.value, axis=-1, keepdims=True)
    out = q.value / n

    def pull(g):
        return (g - out * np.sum(out * g, axis=-1, keepdims=True)) / n

    return ad.record(out, (q,), (pull,))


def quat_conj_var(q) -> Variable:
    q = ad.wrap(q)
    flip = np.array([1.0, -1.0, -1.0, -1.0])
    return ad.record(q.value * flip, (q,), (lambda g: g * flip,))


def quat_rotate_var(q, v) -> Variable:
    """Rotate vectors v (..., 3) by unit quaternions q (..., 4)."""
    q, v = ad.wrap(q), ad.wrap(v)
    zeros = ad.constant(np.zeros(v.value.shape[:-1] + (1,)))
    pure = ad.concat([zeros, v], axis=-1)
    rotated = quat_mul_var(quat_mul_var(q, pure), quat_conj_var(q))
    return rotated[..., 1:4]


def euler_y_deg_var(q) -> Variable:
    """y-axis Euler angle (degrees) of the intrinsic ZXY decomposition.

    Extracted as atan2(2(wy - xz), 1 - 2(x^2 + y^2)), which covers the full
    (-180, 180] range; at gimbal lock (x = ±90°) both arguments vanish and
    atan2 deterministically yields 0.
    """
    q = ad.wrap(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    s = 2.0 * (w * y - x * z)
    c = 1.0 - 2.0 * (x * x + y * y)
    return ad.atan2(s, c) * (180.0 / np.pi)


# ---------------------------------------------------------------------------
# plain ndarray API

def _mul_values(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def _conj_values(q: np.ndarray) -> np.ndarray:
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    _check_finite(q)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise InvalidQuaternionError("cannot normalize a zero quaternion")
    return q / n


def conjugate(q: np.ndarray) -> np.ndarray:
    return _conj_values(np.asarray(q, dtype=np.float64))


def hamilton_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Composed rotation a ⊗ b, renormalized.

    Composing with an exact identity returns the other operand unchanged
    (no renormalization), which keeps residual-identity pipelines bit-exact.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_finite(a)
    _check_finite(b)
    if a.shape == b.shape:
        if np.array_equal(a, np.broadcast_to(IDENTITY, a.shape)):
            return b.copy()
        if np.array_equal(b, np.broadcast_to(IDENTITY, b.shape)):
            return a.copy()
    return normalize(_mul_values(a, b))


def rotate_vec(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    pure = np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)
    return _mul_values(_mul_values(q, pure), _conj_values(q))[..., 1:4]


def to_matrix(q: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix of a unit quaternion (column-vector convention)."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
        ],
        axis=-2,
    )


def from_axis_angle(axis, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle_rad
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def from_euler_y(angle_deg: float) -> np.ndarray:
    return from_axis_angle([0.0, 1.0, 0.0], np.deg2rad(angle_deg))


def euler_y_deg(q: np.ndarray) -> np.ndarray:
    """Plain-value version of euler_y_deg_var; maps -180 to +180."""
    q = np.asarray(q, dtype=np.float64)
    _check_finite(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    deg = np.degrees(np.arctan2(2.0 * (w * y - x * z), 1.0 - 2.0 * (x * x + y * y)))
    return np.where(deg == -180.0, 180.0, deg)


def nlerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    """Normalized lerp with hemisphere alignment (flip b when dot < 0).

    Endpoints are exact: t=0 returns a, t=1 returns b, and equal endpoints
    pass through unchanged, so interpolating identical rotations is a no-op.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if t == 0.0:
        return a.copy()
    if t == 1.0:
        return b.copy()
    if np.array_equal(a, b):
        return a.copy()
    d = np.sum(a * b, axis=-1, keepdims=True)
    b_aligned = np.where(d < 0.0, -b, b)
    mixed = (1.0 - t) * a + t * b_aligned
    return normalize(mixed)


def angle_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Geodesic rotation angle (radians) between unit quaternions, sign-agnostic."""
    d = np.clip(np.abs(np.sum(a * b, axis=-1)), 0.0, 1.0)
    return 2.0 * np.arccos(d)


def nlerp_var(a, b, w) -> Variable:
    """Differentiable nlerp: a, b (..., 4), w (...,) per-row interpolation weight.

    Hemisphere alignment flips b where dot(a, b) < 0 (kept as-is at 0); the
    flip sign is a detached constant, so gradients flow through a, b and w.
    """
    a, b, w = ad.wrap(a), ad.wrap(b), ad.wrap(w)
    dot = np.sum(a.value * b.value, axis=-1, keepdims=True)
    sign = ad.constant(np.where(dot < 0.0, -1.0, 1.0))
    b_aligned = b * sign
    w_col = ad.reshape(w, w.value.shape + (1,))
    mixed = a * (1.0 - w_col) + b_aligned * w_col
    return quat_normalize_var(mixed)
