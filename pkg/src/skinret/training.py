"""Adam, the two-stage training procedure, and a network-free direct optimizer.

Stage 1 trains the skeleton-aware transformer on sampled (source, target,
window) triples, enabling the reconstruction term only on self-retargets.
Stage 2 freezes it, then trains the four limb MLPs under the repulsion
objective and the gate under the repulsion/attraction/regularization
objective (sequential by default, joint behind a flag).

Distance fields are rebuilt per sampled frame, memoized on the body-pose
digest: with limb-only residuals the body surface of a frame never moves,
so the memo hit is exact, and any rig whose body does move gets a rebuild.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import quat, semantics
from .autodiff import Tape
from .fields import VoxelField, voxelize
from .geometry import (
    LIMB_LABELS,
    SkinnedMesh,
    body_surface,
    extract_vertex_sets,
    limb_chains,
    linear_blend_skinning,
)
from .kinematics import MotionSequence, Skeleton, fk_graph
from .networks import (
    GateParams,
    ShapeAwareParams,
    TransformerLiteParams,
    gate_forward,
    shape_aware_forward,
    skeleton_aware_decode,
    skeleton_aware_forward,
    skeleton_encode,
)
from .objectives import (
    LossWeights,
    reconstruction_loss_var,
    stage1_objective_var,
    stage2_gate_objective_var,
    stage2_geometry_objective_var,
)
from .synthetic import SyntheticFamily


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    stage1_iterations: int = 400
    stage2_geometry_iterations: int = 200
    stage2_gate_iterations: int = 120
    batch_size: int = 8
    window: int = 4
    self_retarget_prob: float = 0.5
    weights: LossWeights = field(default_factory=LossWeights)
    field_spacing_ratio: float = 0.02
    repulsive_truncation_ratio: float = 0.2
    attractive_truncation_ratio: float = 0.1
    field_rebuild_every: int = 1
    joint_stage2: bool = False
    pairs: tuple[tuple[str, str], ...] | None = None  # pin (source, target) sampling

    def __post_init__(self):
        if not (0.0 <= self.self_retarget_prob <= 1.0):
            raise ValueError("self_retarget_prob must be a probability")
        for name in ("stage1_iterations", "stage2_geometry_iterations", "stage2_gate_iterations", "batch_size", "window"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        weights = LossWeights.from_dict(data.pop("weights", {}))
        allowed = set(cls.__dataclass_fields__)  # type: ignore[attr-defined]
        unknown = set(data) - allowed
        if unknown:
            raise KeyError(f"unknown config keys: {sorted(unknown)}")
        if "pairs" in data and data["pairs"] is not None:
            data["pairs"] = tuple((str(a), str(b)) for a, b in data["pairs"])
        return cls(weights=weights, **data)


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def init(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """Standard bias-corrected update, in place; returns the same containers."""
    state.step += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {k}")
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        p -= config.learning_rate * (state.m[k] / c1) / (np.sqrt(state.v[k] / c2) + config.adam_eps)
    return params, state


def params_checksum(params: dict[str, np.ndarray]) -> str:
    digest = hashlib.sha256()
    for k in sorted(params):
        digest.update(k.encode())
        digest.update(np.ascontiguousarray(params[k]).tobytes())
    return digest.hexdigest()


def write_loss_curve(path, rows: list[dict]) -> None:
    if not rows:
        return
    keys = ["iteration"] + [k for k in rows[0] if k != "iteration"]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# distance-field cache

class FieldCache:
    """Per (character, frame-pose) truncated fields, keyed on the body-pose digest."""

    def __init__(self, config: TrainConfig):
        self._config = config
        self._store: dict[tuple, tuple[str, int, VoxelField]] = {}

    def _body_pose_digest(self, mesh: SkinnedMesh, rotations: np.ndarray) -> str:
        # joints driving body-labeled vertices decide the surface pose
        body_joints = sorted(
            {
                j
                for v, row in enumerate(mesh.weights)
                if mesh.part_labels[v] == "body"
                for j in row
            }
        )
        return hashlib.sha1(np.ascontiguousarray(rotations[body_joints]).tobytes()).hexdigest()

    def get(
        self,
        character_key: str,
        frame_key: str,
        mesh: SkinnedMesh,
        skeleton: Skeleton,
        rotations: np.ndarray,
        kind: str,
    ) -> VoxelField:
        digest = self._body_pose_digest(mesh, rotations)
        key = (character_key, frame_key, kind)
        hit = self._store.get(key)
        every = self._config.field_rebuild_every
        if hit is not None:
            old_digest, age, fld = hit
            if old_digest == digest:
                self._store[key] = (digest, age + 1, fld)
                return fld
            if every == 0 or age + 1 < every:
                self._store[key] = (old_digest, age + 1, fld)
                return fld
        fld = self._build(mesh, skeleton, rotations, kind)
        self._store[key] = (digest, 0, fld)
        return fld

    def _build(self, mesh: SkinnedMesh, skeleton: Skeleton, rotations: np.ndarray, kind: str) -> VoxelField:
        h = skeleton.height
        cfg = self._config
        truncation = (
            cfg.repulsive_truncation_ratio if kind == "repulsive" else cfg.attractive_truncation_ratio
        ) * h
        deformed = linear_blend_skinning(mesh, skeleton, rotations, np.zeros(3))
        body_idx, body_tris = body_surface(mesh)
        return voxelize(deformed[body_idx], body_tris, cfg.field_spacing_ratio * h, truncation, kind)


# ---------------------------------------------------------------------------
# sampling

def _sample_window(rng: np.random.Generator, motion: MotionSequence, window: int) -> np.ndarray:
    w = min(window, motion.n_frames)
    start = int(rng.integers(0, motion.n_frames - w + 1))
    return motion.rotations[start : start + w]


def _sample_pair(
    rng: np.random.Generator,
    family: SyntheticFamily,
    config: TrainConfig,
    self_ok: bool,
    force_self: bool | None = None,
):
    names = [c.name for c in family.characters]
    if config.pairs is not None:
        src_name, tgt_name = config.pairs[int(rng.integers(0, len(config.pairs)))]
    else:
        src_name = names[int(rng.integers(0, len(names)))]
        others = [n for n in names if n != src_name]
        if force_self is None:
            force_self = self_ok and rng.random() < config.self_retarget_prob
        if not others or force_self:
            tgt_name = src_name
        else:
            tgt_name = others[int(rng.integers(0, len(others)))]
    return family.character(src_name), family.character(tgt_name)


# ---------------------------------------------------------------------------
# stage 1

def train_stage1(
    config: TrainConfig,
    family: SyntheticFamily,
    log_path=None,
) -> tuple[TransformerLiteParams, list[dict]]:
    """Fit the skeleton-aware module; returns (params, per-iteration loss rows)."""
    if len(family.characters) < 1:
        raise ValueError("family must have at least one character")
    rng = np.random.default_rng(config.seed)
    params = TransformerLiteParams.init(family.characters[0].skeleton.n_joints, rng)
    tensors = params.named_tensors()
    state = AdamState.init(tensors)
    motion_names = sorted(family.motions)
    rows: list[dict] = []

    for it in range(config.stage1_iterations):
        tape = Tape()
        leaves = {k: ad.variable(tape, v) for k, v in tensors.items()}
        total = None
        terms_sum: dict[str, float] = {}
        for element in range(config.batch_size):
            # stratified: the self-retarget rate is met exactly within each
            # batch, which removes composition noise from the gradient mix
            force_self = element < round(config.self_retarget_prob * config.batch_size)
            src, tgt = _sample_pair(rng, family, config, self_ok=True, force_self=force_self)
            motion = family.motions[motion_names[int(rng.integers(0, len(motion_names)))]]
            q_cp = _sample_window(rng, motion, config.window)
            skel_feat = skeleton_encode(params, src.skeleton.offsets, tgt.skeleton.offsets, leaves)
            q_sem_rows = [
                quat.quat_mul_var(
                    skeleton_aware_decode(params, skel_feat, q_cp[t], leaves),
                    ad.constant(q_cp[t]),
                )
                for t in range(q_cp.shape[0])
            ]
            q_sem = ad.stack(q_sem_rows, axis=0)
            objective, parts = stage1_objective_var(
                config.weights, src.skeleton, tgt.skeleton, q_cp, q_sem, is_self=src.name == tgt.name
            )
            total = objective if total is None else total + objective
            for k, v in parts.items():
                terms_sum[k] = terms_sum.get(k, 0.0) + v
        total = total * (1.0 / config.batch_size)
        loss_value = float(total.value)
        if not np.isfinite(loss_value):
            raise DivergenceError(f"stage 1 loss diverged at iteration {it}")
        grads = tape.backward(total)
        adam_step(tensors, {k: grads.get(v) for k, v in leaves.items()}, state, config)
        row = {"iteration": it, "loss": loss_value}
        row.update({k: v / config.batch_size for k, v in sorted(terms_sum.items())})
        rows.append(row)
    if log_path is not None:
        write_loss_curve(log_path, rows)
    return params, rows


def apply_skeleton_residual(
    params: TransformerLiteParams | None,
    source_skeleton: Skeleton,
    target_skeleton: Skeleton,
    q_cp: np.ndarray,
) -> np.ndarray:
    """q_sem for a (T, N, 4) window with frozen parameters (identity when None)."""
    if params is None:
        return q_cp.copy()
    out = np.empty_like(q_cp)
    for t in range(q_cp.shape[0]):
        dq = skeleton_aware_forward(
            params, source_skeleton.offsets, target_skeleton.offsets, q_cp[t]
        ).value
        out[t] = quat.hamilton_product(dq, q_cp[t])
    return out


def motion_copy_semantics(
    source_skeleton: Skeleton, target_skeleton: Skeleton, rotations_src: np.ndarray, rotations_tgt: np.ndarray
) -> float:
    """Semantics loss between a source window and rotations on the target skeleton."""
    p_src, _ = fk_graph(source_skeleton, rotations_src, np.zeros((rotations_src.shape[0], 3)))
    p_tgt, _ = fk_graph(target_skeleton, rotations_tgt, np.zeros((rotations_tgt.shape[0], 3)))
    return float(
        semantics.semantics_loss_var(
            p_src.value, source_skeleton.height, p_tgt.value, target_skeleton.height
        ).value
    )


# ---------------------------------------------------------------------------
# stage 2

def _frame_fields(
    cache: FieldCache,
    character,
    motion_name: str,
    frame_ids,
    rotations: np.ndarray,
    kinds: tuple[str, ...],
) -> dict[str, list[VoxelField]]:
    out: dict[str, list[VoxelField]] = {k: [] for k in kinds}
    for t, fid in enumerate(frame_ids):
        for kind in kinds:
            out[kind].append(
                cache.get(character.name, f"{motion_name}:{fid}", character.mesh, character.skeleton, rotations[t], kind)
            )
    return out


def train_stage2(
    config: TrainConfig,
    family: SyntheticFamily,
    skeleton_params: TransformerLiteParams | None,
    log_dir=None,
) -> tuple[ShapeAwareParams, GateParams, dict[str, list[dict]]]:
    """Train the shape-aware MLPs then the gate with the skeleton module frozen."""
    rng = np.random.default_rng(config.seed + 1)
    base_skeleton = family.characters[0].skeleton
    shape_params = ShapeAwareParams.init(base_skeleton, rng)
    gate_params = GateParams.init(base_skeleton.n_joints, rng)
    cache = FieldCache(config)
    motion_names = sorted(family.motions)
    frozen_before = None if skeleton_params is None else params_checksum(skeleton_params.named_tensors())

    sem_cache: dict[tuple, np.ndarray] = {}

    def q_sem_for(src, tgt, motion_name, start, window):
        key = (src.name, tgt.name, motion_name, start, window)
        if key not in sem_cache:
            q_cp = family.motions[motion_name].rotations[start : start + window]
            sem_cache[key] = apply_skeleton_residual(skeleton_params, src.skeleton, tgt.skeleton, q_cp)
        return sem_cache[key]

    def sample_element():
        src, tgt = _sample_pair(rng, family, config, self_ok=False)
        motion_name = motion_names[int(rng.integers(0, len(motion_names)))]
        motion = family.motions[motion_name]
        w = min(config.window, motion.n_frames)
        start = int(rng.integers(0, motion.n_frames - w + 1))
        q_sem = q_sem_for(src, tgt, motion_name, start, w)
        return tgt, motion_name, list(range(start, start + w)), q_sem

    curves: dict[str, list[dict]] = {"geometry": [], "gate": []}

    # phase A: limb MLPs under Eq.-style repulsion objective
    g_tensors = shape_params.named_tensors()
    g_state = AdamState.init(g_tensors)
    for it in range(config.stage2_geometry_iterations):
        tape = Tape()
        leaves = {k: ad.variable(tape, v) for k, v in g_tensors.items()}
        total = None
        terms_sum: dict[str, float] = {}
        for _ in range(config.batch_size):
            tgt, motion_name, frame_ids, q_sem = sample_element()
            vsets = extract_vertex_sets(tgt.mesh)
            dq_rows = [
                shape_aware_forward(shape_params, tgt.phi.extents, q_sem[t], leaves)
                for t in range(q_sem.shape[0])
            ]
            q_geo = ad.stack(
                [quat.quat_mul_var(dq_rows[t], ad.constant(q_sem[t])) for t in range(q_sem.shape[0])],
                axis=0,
            )
            rep_fields = _frame_fields(cache, tgt, motion_name, frame_ids, q_sem, ("repulsive",))["repulsive"]
            objective, parts = stage2_geometry_objective_var(
                config.weights, tgt.skeleton, tgt.mesh, vsets, q_sem, q_geo, rep_fields
            )
            total = objective if total is None else total + objective
            for k, v in parts.items():
                terms_sum[k] = terms_sum.get(k, 0.0) + v
        total = total * (1.0 / config.batch_size)
        if not np.isfinite(float(total.value)):
            raise DivergenceError(f"stage 2 geometry loss diverged at iteration {it}")
        grads = tape.backward(total)
        adam_step(g_tensors, {k: grads.get(v) for k, v in leaves.items()}, g_state, config)
        row = {"iteration": it, "loss": float(total.value)}
        row.update({k: v / config.batch_size for k, v in sorted(terms_sum.items())})
        curves["geometry"].append(row)

    # phase B: balancing gate (limb MLPs now frozen unless joint_stage2)
    w_tensors = gate_params.named_tensors()
    w_state = AdamState.init(w_tensors)
    for it in range(config.stage2_gate_iterations):
        tape = Tape()
        leaves = {k: ad.variable(tape, v) for k, v in w_tensors.items()}
        g_leaves = {k: ad.variable(tape, v) for k, v in g_tensors.items()} if config.joint_stage2 else None
        total = None
        terms_sum = {}
        for _ in range(config.batch_size):
            tgt, motion_name, frame_ids, q_sem = sample_element()
            vsets = extract_vertex_sets(tgt.mesh)
            q_geo_rows = []
            w_rows = []
            for t in range(q_sem.shape[0]):
                dq = shape_aware_forward(shape_params, tgt.phi.extents, q_sem[t], g_leaves)
                q_geo_rows.append(quat.quat_mul_var(dq, ad.constant(q_sem[t])))
                w_rows.append(
                    gate_forward(gate_params, tgt.skeleton.offsets, tgt.phi.extents, q_sem[t], leaves)
                )
            q_geo = ad.stack(q_geo_rows, axis=0)
            w_var = ad.stack(w_rows, axis=0)
            q_out = quat.nlerp_var(ad.constant(q_sem), q_geo, w_var)
            fields_by_kind = _frame_fields(
                cache, tgt, motion_name, frame_ids, q_sem, ("repulsive", "attractive")
            )
            objective, parts = stage2_gate_objective_var(
                config.weights,
                tgt.skeleton,
                tgt.mesh,
                vsets,
                q_geo,
                q_out,
                w_var,
                fields_by_kind["repulsive"],
                fields_by_kind["attractive"],
            )
            total = objective if total is None else total + objective
            for k, v in parts.items():
                terms_sum[k] = terms_sum.get(k, 0.0) + v
        total = total * (1.0 / config.batch_size)
        if not np.isfinite(float(total.value)):
            raise DivergenceError(f"stage 2 gate loss diverged at iteration {it}")
        grads = tape.backward(total)
        adam_step(w_tensors, {k: grads.get(v) for k, v in leaves.items()}, w_state, config)
        if config.joint_stage2:
            adam_step(g_tensors, {k: grads.get(v) for k, v in g_leaves.items()}, g_state, config)
        row = {"iteration": it, "loss": float(total.value)}
        row.update({k: v / config.batch_size for k, v in sorted(terms_sum.items())})
        curves["gate"].append(row)

    if frozen_before is not None:
        frozen_after = params_checksum(skeleton_params.named_tensors())
        if frozen_before != frozen_after:
            raise RuntimeError("stage 2 modified frozen skeleton-aware parameters")
    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        write_loss_curve(log_dir / "stage2_geometry.csv", curves["geometry"])
        write_loss_curve(log_dir / "stage2_gate.csv", curves["gate"])
    return shape_params, gate_params, curves


# ---------------------------------------------------------------------------
# direct optimization oracle

def direct_optimize(
    objective: str,
    config: TrainConfig,
    source_skeleton: Skeleton,
    target_skeleton: Skeleton,
    q_cp: np.ndarray,
    target_mesh: SkinnedMesh | None = None,
    iterations: int = 300,
    q_base: np.ndarray | None = None,
) -> dict:
    """Optimize per-frame residual quaternions directly under a stage objective.

    objective: 'reconstruction' (base rec only), 'semantics' (stage-1 form) or
    'geometry' (stage-2 form, limb joints only). Serves as the network-free
    oracle for what each training stage should achieve.
    """
    if objective not in ("reconstruction", "semantics", "geometry"):
        raise ValueError(f"unknown objective {objective!r}")
    q_cp = np.asarray(q_cp, dtype=np.float64)
    t, n = q_cp.shape[:2]
    base = q_cp if q_base is None else np.asarray(q_base, dtype=np.float64)

    limb_joint_list: list[int] = []
    if objective == "geometry":
        if target_mesh is None:
            raise ValueError("geometry objective requires the target mesh")
        chains = limb_chains(target_skeleton)
        for label in LIMB_LABELS:
            limb_joint_list.extend(chains[label])
        raw0 = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (t, len(limb_joint_list), 1))
        vsets = extract_vertex_sets(target_mesh)
        cache = FieldCache(config)
        rep_fields = [
            cache.get("direct", f"f{k}", target_mesh, target_skeleton, base[k], "repulsive")
            for k in range(t)
        ]
    else:
        raw0 = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (t, n, 1))

    params = {"raw": raw0.copy()}
    state = AdamState.init(params)
    losses: list[float] = []

    for _ in range(iterations):
        tape = Tape()
        raw = ad.variable(tape, params["raw"])
        residual = quat.quat_normalize_var(raw)
        if objective == "geometry":
            rows: list = [ad.constant(base[:, j]) for j in range(n)]
            for pos, j in enumerate(limb_joint_list):
                rows[j] = quat.quat_mul_var(residual[:, pos], ad.constant(base[:, j]))
            q_hat = ad.stack(rows, axis=1)
            total, parts = stage2_geometry_objective_var(
                config.weights, target_skeleton, target_mesh, vsets, base, q_hat, rep_fields
            )
        else:
            q_hat = quat.quat_mul_var(residual, ad.constant(q_cp))
            if objective == "reconstruction":
                total = reconstruction_loss_var(ad.constant(q_cp), q_hat, target_skeleton)
            else:
                total, parts = stage1_objective_var(
                    config.weights, source_skeleton, target_skeleton, q_cp, q_hat, is_self=False
                )
        loss_value = float(total.value)
        if not np.isfinite(loss_value):
            raise DivergenceError("direct optimization diverged")
        losses.append(loss_value)
        grads = tape.backward(total)
        adam_step(params, {"raw": grads.get(raw)}, state, config)

    residual = quat.normalize(params["raw"])
    if objective == "geometry":
        out = base.copy()
        for pos, j in enumerate(limb_joint_list):
            for k in range(t):
                out[k, j] = quat.hamilton_product(residual[k, pos], base[k, j])
    else:
        out = np.empty_like(q_cp)
        for k in range(t):
            out[k] = quat.hamilton_product(residual[k], q_cp[k])
    return {"rotations": out, "losses": losses, "residual": residual}
