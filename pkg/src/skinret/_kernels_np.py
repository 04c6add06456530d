"""Pure-numpy kernels: point-mesh distance, winding numbers, trilinear sampling.

Drop-in fallback for the compiled `skinret._kernels` extension; same
signatures, vectorized over (point chunk x triangles) to bound memory.
"""

from __future__ import annotations

import numpy as np

_CHUNK_BUDGET = 2_000_000  # point-triangle pairs per chunk


def _chunks(n_points: int, n_tris: int):
    step = max(1, _CHUNK_BUDGET // max(1, n_tris))
    for start in range(0, n_points, step):
        yield start, min(n_points, start + step)


def point_mesh_distances(points: np.ndarray, vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Unsigned distance from each point to the closest triangle."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    out = np.empty(len(points))
    for lo, hi in _chunks(len(points), len(triangles)):
        out[lo:hi] = _closest_sq(points[lo:hi], a, b, c).min(axis=1)
    return np.sqrt(out)


def _closest_sq(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Squared distance from points (P,3) to triangles (F,3 corners); (P,F).

    Region-based closest-point-on-triangle (Ericson), evaluated branch-free
    with where-cascades.
    """
    ab = b - a
    ac = c - a
    bc = c - b
    ap = p[:, None, :] - a[None, :, :]
    bp = p[:, None, :] - b[None, :, :]
    cp = p[:, None, :] - c[None, :, :]

    d1 = np.einsum("fk,pfk->pf", ab, ap)
    d2 = np.einsum("fk,pfk->pf", ac, ap)
    d3 = np.einsum("fk,pfk->pf", ab, bp)
    d4 = np.einsum("fk,pfk->pf", ac, bp)
    d5 = np.einsum("fk,pfk->pf", ab, cp)
    d6 = np.einsum("fk,pfk->pf", ac, cp)

    with np.errstate(divide="ignore", invalid="ignore"):
        vc = d1 * d4 - d3 * d2
        vb = d5 * d2 - d1 * d6
        va = d3 * d6 - d5 * d4
        denom = va + vb + vc
        v_in = np.where(denom != 0.0, vb / denom, 0.0)
        w_in = np.where(denom != 0.0, vc / denom, 0.0)
        t_ab = np.where(d1 != d3, d1 / (d1 - d3), 0.0)
        t_ac = np.where(d2 != d6, d2 / (d2 - d6), 0.0)
        e43 = d4 - d3
        e56 = d5 - d6
        t_bc = np.where(e43 + e56 != 0.0, e43 / (e43 + e56), 0.0)

    # interior by default, then overwrite by edge/vertex regions
    close = a[None] + v_in[..., None] * ab[None] + w_in[..., None] * ac[None]

    on_bc = (va <= 0) & (e43 >= 0) & (e56 >= 0)
    close = np.where(on_bc[..., None], b[None] + t_bc[..., None] * bc[None], close)
    on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    close = np.where(on_ac[..., None], a[None] + t_ac[..., None] * ac[None], close)
    on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    close = np.where(on_ab[..., None], a[None] + t_ab[..., None] * ab[None], close)
    at_c = (d6 >= 0) & (d5 <= d6)
    close = np.where(at_c[..., None], np.broadcast_to(c[None], close.shape), close)
    at_b = (d3 >= 0) & (d4 <= d3)
    close = np.where(at_b[..., None], np.broadcast_to(b[None], close.shape), close)
    at_a = (d1 <= 0) & (d2 <= 0)
    close = np.where(at_a[..., None], np.broadcast_to(a[None], close.shape), close)

    diff = p[:, None, :] - close
    return np.einsum("pfk,pfk->pf", diff, diff)


def winding_numbers(points: np.ndarray, vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Generalized winding number per point (~1 inside a watertight mesh, ~0 outside)."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    va = vertices[triangles[:, 0]]
    vb = vertices[triangles[:, 1]]
    vc = vertices[triangles[:, 2]]
    out = np.empty(len(points))
    for lo, hi in _chunks(len(points), len(triangles)):
        p = points[lo:hi]
        a = va[None] - p[:, None, :]
        b = vb[None] - p[:, None, :]
        c = vc[None] - p[:, None, :]
        la = np.linalg.norm(a, axis=-1)
        lb = np.linalg.norm(b, axis=-1)
        lc = np.linalg.norm(c, axis=-1)
        num = np.einsum("pfk,pfk->pf", a, np.cross(b, c))
        den = (
            la * lb * lc
            + np.einsum("pfk,pfk->pf", a, b) * lc
            + np.einsum("pfk,pfk->pf", b, c) * la
            + np.einsum("pfk,pfk->pf", c, a) * lb
        )
        omega = 2.0 * np.arctan2(num, den)
        out[lo:hi] = omega.sum(axis=1) / (4.0 * np.pi)
    return out


def trilinear(
    values: np.ndarray,
    origin: np.ndarray,
    spacing: float,
    points: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Trilinear interpolation and spatial gradient at each point.

    Cell indices are clamped to the grid, so callers must mask points that
    lie outside the node bounds themselves.
    """
    points = np.asarray(points, dtype=np.float64)
    dims = values.shape
    u = (points - origin) / spacing
    i = np.clip(np.floor(u).astype(np.int64), 0, np.array(dims) - 2)
    f = np.clip(u - i, 0.0, 1.0)
    ix, iy, iz = i[:, 0], i[:, 1], i[:, 2]
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]

    v000 = values[ix, iy, iz]
    v100 = values[ix + 1, iy, iz]
    v010 = values[ix, iy + 1, iz]
    v110 = values[ix + 1, iy + 1, iz]
    v001 = values[ix, iy, iz + 1]
    v101 = values[ix + 1, iy, iz + 1]
    v011 = values[ix, iy + 1, iz + 1]
    v111 = values[ix + 1, iy + 1, iz + 1]

    c00 = v000 + fx * (v100 - v000)
    c10 = v010 + fx * (v110 - v010)
    c01 = v001 + fx * (v101 - v001)
    c11 = v011 + fx * (v111 - v011)
    c0 = c00 + fy * (c10 - c00)
    c1 = c01 + fy * (c11 - c01)
    vals = c0 + fz * (c1 - c0)

    d00 = v100 - v000
    d10 = v110 - v010
    d01 = v101 - v001
    d11 = v111 - v011
    dx = (d00 + fy * (d10 - d00)) + fz * ((d01 + fy * (d11 - d01)) - (d00 + fy * (d10 - d00)))
    dy = (c10 - c00) + fz * ((c11 - c01) - (c10 - c00))
    dz = c1 - c0

    grads = np.stack([dx, dy, dz], axis=-1) / spacing
    return vals, grads
