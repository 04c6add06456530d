"""Truncated voxel distance fields around a watertight body surface.

The repulsive field stores interior depth (0 at and outside the surface),
the attractive field exterior distance (0 at and inside); both clamp at the
truncation radius. Sampling is 8-node trilinear with an analytic spatial
gradient; queries outside the grid return the field's resting value (0
repulsive, truncation attractive) with zero gradient. During training the
grid is treated as constant per step: gradients flow through query points
only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import backend
from .autodiff import Variable
from .geometry import check_watertight

KINDS = ("repulsive", "attractive")


class EmptyVertexSetError(ValueError):
    pass


@dataclass(frozen=True)
class VoxelField:
    origin: np.ndarray  # (3,) grid node [0,0,0] position
    spacing: float
    values: np.ndarray  # (X, Y, Z) float64 in [0, truncation]
    kind: str
    truncation: float

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.spacing <= 0 or self.truncation <= 0:
            raise ValueError("spacing and truncation must be positive")
        if self.values.ndim != 3 or min(self.values.shape) < 2:
            raise ValueError("values must be a (>=2)^3 grid")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def outside_value(self) -> float:
        return 0.0 if self.kind == "repulsive" else self.truncation

    def node_positions(self) -> np.ndarray:
        axes = [self.origin[k] + self.spacing * np.arange(self.dims[k]) for k in range(3)]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.reshape(-1) for g in grid], axis=-1)

    def contains(self, points: np.ndarray) -> np.ndarray:
        hi = self.origin + self.spacing * (np.array(self.dims) - 1)
        return np.all((points >= self.origin) & (points <= hi), axis=-1)


def voxelize(
    body_vertices: np.ndarray,
    body_triangles: np.ndarray,
    spacing: float,
    truncation: float,
    kind: str,
) -> VoxelField:
    """Build a truncated distance field on a grid covering the padded AABB.

    Inside/outside is decided by the generalized winding number, so the
    surface must be closed and consistently oriented. Exact triangle
    distances are only computed where they can fall below the truncation
    (a KD-tree vertex bound prunes the rest), and winding numbers only in
    the near-surface band plus one representative per far component: two
    nodes more than one spacing from the surface and adjacent to each
    other are provably on the same side.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    body_vertices = np.asarray(body_vertices, dtype=np.float64)
    body_triangles = np.asarray(body_triangles, dtype=np.int64)
    check_watertight(body_triangles)
    lo = body_vertices.min(axis=0) - truncation
    hi = body_vertices.max(axis=0) + truncation
    dims = np.maximum(np.ceil((hi - lo) / spacing).astype(np.int64) + 1, 2)

    axes = [lo[k] + spacing * np.arange(dims[k]) for k in range(3)]
    grid = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([g.reshape(-1) for g in grid], axis=-1)

    from scipy.spatial import cKDTree

    edges = body_vertices[body_triangles] - body_vertices[np.roll(body_triangles, 1, axis=1)]
    max_edge = float(np.linalg.norm(edges, axis=-1).max())
    vertex_dist, _ = cKDTree(body_vertices).query(nodes)
    dist_floor = vertex_dist - max_edge  # lower bound on the true distance

    dist = np.maximum(dist_floor, truncation)
    exact = dist_floor <= truncation
    if exact.any():
        dist[exact] = backend.point_mesh_distances(nodes[exact], body_vertices, body_triangles)

    inside = _classify_inside(dist.reshape(dims), spacing, nodes, body_vertices, body_triangles).reshape(-1)
    keep = inside if kind == "repulsive" else ~inside
    values = np.where(keep, np.clip(dist, 0.0, truncation), 0.0).reshape(dims)
    return VoxelField(lo, float(spacing), values, kind, float(truncation))


def _classify_inside(
    dist3d: np.ndarray,
    spacing: float,
    nodes: np.ndarray,
    vertices: np.ndarray,
    triangles: np.ndarray,
) -> np.ndarray:
    """Inside mask for every grid node with few winding evaluations.

    Far nodes (distance > spacing) cannot be separated from an adjacent
    node by the surface, so each connected far component shares one side,
    decided by a single winding number; band nodes are evaluated directly.
    """
    from scipy import ndimage

    far = dist3d > spacing
    structure = ndimage.generate_binary_structure(3, 1)  # 6-connectivity
    labels, n_components = ndimage.label(far, structure=structure)
    flat_labels = labels.reshape(-1)

    query_idx = list(np.flatnonzero(~far.reshape(-1)))
    rep_of_component = {}
    for comp in range(1, n_components + 1):
        rep = int(np.argmax(flat_labels == comp))
        rep_of_component[comp] = len(query_idx)
        query_idx.append(rep)
    query_idx = np.array(query_idx, dtype=np.int64)

    inside_q = np.zeros(0, dtype=bool)
    if len(query_idx):
        inside_q = backend.winding_numbers(nodes[query_idx], vertices, triangles) > 0.5

    inside = np.zeros(dist3d.size, dtype=bool)
    n_band = int((~far).sum())
    inside[query_idx[:n_band]] = inside_q[:n_band]
    for comp, qpos in rep_of_component.items():
        if inside_q[qpos]:
            inside[flat_labels == comp] = True
    return inside.reshape(dist3d.shape)


def sample_var(field: VoxelField, points) -> Variable:
    """Differentiable field lookup at (..., 3) points.

    The pullback multiplies the adjoint by the analytic trilinear spatial
    gradient; out-of-grid points contribute the resting value and zero
    gradient.
    """
    points = ad.wrap(points)
    p = points.value
    flat = p.reshape(-1, 3)
    inner = field.contains(flat)
    vals = np.full(len(flat), field.outside_value)
    grads = np.zeros((len(flat), 3))
    if inner.any():
        v, g = backend.trilinear(field.values, field.origin, field.spacing, flat[inner])
        vals[inner] = v
        grads[inner] = g
    out_shape = p.shape[:-1]

    def pull(g_out):
        return (g_out.reshape(-1, 1) * grads).reshape(p.shape)

    return ad.record(vals.reshape(out_shape), (points,), (pull,))


def sample(field: VoxelField, point: np.ndarray) -> float:
    return float(sample_var(field, np.asarray(point, dtype=np.float64)).value)


def sample_gradient(field: VoxelField, point: np.ndarray) -> np.ndarray:
    """Spatial gradient of the sampled value at one point."""
    p = np.asarray(point, dtype=np.float64).reshape(1, 3)
    if not field.contains(p)[0]:
        return np.zeros(3)
    _, g = backend.trilinear(field.values, field.origin, field.spacing, p)
    return g[0]


def repulsive_loss_var(field: VoxelField, limb_vertices) -> Variable:
    """Mean interior depth sampled at limb vertices; 0 iff none is strictly inside."""
    if field.kind != "repulsive":
        raise ValueError("repulsive_loss requires a repulsive field")
    limb_vertices = ad.wrap(limb_vertices)
    if limb_vertices.value.shape[-2] == 0:
        raise EmptyVertexSetError("mean over an empty vertex set is undefined")
    return ad.mean(sample_var(field, limb_vertices))


def attractive_loss_var(field: VoxelField, hand_vertices) -> Variable:
    """Mean exterior distance sampled at hand vertices; 0 iff all touch or enter."""
    if field.kind != "attractive":
        raise ValueError("attractive_loss requires an attractive field")
    hand_vertices = ad.wrap(hand_vertices)
    if hand_vertices.value.shape[-2] == 0:
        raise EmptyVertexSetError("mean over an empty vertex set is undefined")
    return ad.mean(sample_var(field, hand_vertices))


def repulsive_loss(field: VoxelField, limb_vertices: np.ndarray) -> float:
    return float(repulsive_loss_var(field, np.asarray(limb_vertices, dtype=np.float64)).value)


def attractive_loss(field: VoxelField, hand_vertices: np.ndarray) -> float:
    return float(attractive_loss_var(field, np.asarray(hand_vertices, dtype=np.float64)).value)


def save_field(field: VoxelField, json_path, raw_path) -> None:
    """Dump as a JSON header plus raw little-endian float32 grid (C order)."""
    import json
    from pathlib import Path

    header = {
        "origin": [float(x) for x in field.origin],
        "spacing": field.spacing,
        "dims": list(field.dims),
        "kind": field.kind,
        "truncation": field.truncation,
        "dtype": "float32-le",
        "data": str(Path(raw_path).name),
    }
    Path(json_path).write_text(json.dumps(header, indent=2) + "\n")
    field.values.astype("<f4").tofile(raw_path)
