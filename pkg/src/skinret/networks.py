"""The three learnable modules at desk scale.

Skeleton-aware: two single-block transformer encoders (one over rest-offset
tokens, one over rotation tokens, N joints = N tokens), concatenated per
joint, plus a learned per-joint position table, decoded by a shared MLP into
residual quaternions. Shape-aware: four independent MLPs, one per limb
chain, each reading its limb's shape-descriptor and rotation rows. Gate: a
per-joint shared MLP with a sigmoid head.

All decode heads are zero-initialized onto an identity-quaternion bias, so a
fresh pipeline is an exact motion copy. Forwards run on autodiff Variables;
passing plain arrays gives an untaped (inference) evaluation of the exact
same code path. During training, pass `tensors` = the params' named_tensors
dict re-wrapped as tape Variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import quat
from .autodiff import Variable
from .geometry import LIMB_LABELS, limb_chains
from .kinematics import DimensionError, Skeleton

IDENTITY_ROW = np.array([1.0, 0.0, 0.0, 0.0])


class ConfigurationError(ValueError):
    pass


@dataclass
class MlpParams:
    """Dense layers stored as a flat tensor dict: w0,b0,w1,b1,... (w: out x in)."""

    sizes: tuple[int, ...]
    activation: str
    tensors: dict[str, np.ndarray]

    @classmethod
    def init(cls, sizes, rng: np.random.Generator, activation: str = "relu", zero_last: bool = True):
        tensors = {}
        for k in range(len(sizes) - 1):
            scale = 1.0 / np.sqrt(sizes[k])
            if zero_last and k == len(sizes) - 2:
                tensors[f"w{k}"] = np.zeros((sizes[k + 1], sizes[k]))
            else:
                tensors[f"w{k}"] = rng.uniform(-scale, scale, size=(sizes[k + 1], sizes[k]))
            tensors[f"b{k}"] = np.zeros(sizes[k + 1])
        return cls(tuple(sizes), activation, tensors)

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1


_ACTIVATIONS = {"relu": ad.relu, "tanh": ad.tanh}


def transpose(x) -> Variable:
    x = ad.wrap(x)
    return ad.record(x.value.T.copy(), (x,), (lambda g: g.T,))


def mlp_forward(params: MlpParams, x, tensors=None, prefix: str = "") -> Variable:
    """x: (rows, sizes[0]) -> (rows, sizes[-1]); activation on hidden layers only."""
    t = tensors if tensors is not None else params.tensors
    act = _ACTIVATIONS[params.activation]
    h = ad.wrap(x)
    for k in range(params.n_layers):
        w, b = ad.wrap(t[f"{prefix}w{k}"]), ad.wrap(t[f"{prefix}b{k}"])
        h = ad.matmul(h, transpose(w)) + b
        if k < params.n_layers - 1:
            h = act(h)
    return h


def _decode_residual(raw) -> Variable:
    """Raw 4-vectors shifted onto the identity quaternion, then normalized."""
    return quat.quat_normalize_var(raw + ad.constant(IDENTITY_ROW))


def layer_norm(x, scale, offset, eps: float = 1e-6) -> Variable:
    """Normalize over the channel (last) axis per token."""
    x = ad.wrap(x)
    mu = ad.mean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = ad.mean(centered * centered, axis=-1, keepdims=True)
    inv = 1.0 / ad.sqrt(var + eps)
    return centered * inv * ad.wrap(scale) + ad.wrap(offset)


def multi_head_attention(t, prefix: str, x, heads: int) -> tuple[Variable, Variable]:
    """Self-attention over joint tokens x: (N, C); returns (out, attention (H, N, N))."""
    x = ad.wrap(x)
    c = x.value.shape[1]
    d = c // heads
    q = ad.matmul(x, transpose(t[f"{prefix}.wq.w"])) + ad.wrap(t[f"{prefix}.wq.b"])
    k = ad.matmul(x, transpose(t[f"{prefix}.wk.w"])) + ad.wrap(t[f"{prefix}.wk.b"])
    v = ad.matmul(x, transpose(t[f"{prefix}.wv.w"])) + ad.wrap(t[f"{prefix}.wv.b"])
    outs = []
    attns = []
    for h in range(heads):
        sl = slice(h * d, (h + 1) * d)
        scores = ad.matmul(q[:, sl], transpose(k[:, sl])) * (1.0 / np.sqrt(d))
        attn = ad.softmax(scores, axis=-1)
        outs.append(ad.matmul(attn, v[:, sl]))
        attns.append(attn)
    merged = ad.concat(outs, axis=-1)
    out = ad.matmul(merged, transpose(t[f"{prefix}.wo.w"])) + ad.wrap(t[f"{prefix}.wo.b"])
    return out, ad.stack(attns, axis=0)


def _encoder(t, prefix: str, tokens, heads: int) -> Variable:
    attended, _ = multi_head_attention(t, prefix, tokens, heads)
    return layer_norm(tokens + attended, t[f"{prefix}.ln.scale"], t[f"{prefix}.ln.offset"])


@dataclass
class TransformerLiteParams:
    n_joints: int
    c_tk: int
    c_eb: int
    heads: int
    tensors: dict[str, np.ndarray]
    decoder: MlpParams

    @classmethod
    def init(
        cls,
        n_joints: int,
        rng: np.random.Generator,
        c_tk: int = 32,
        c_eb: int = 64,
        heads: int = 4,
        hidden: int = 64,
    ):
        if c_tk % heads != 0:
            raise ConfigurationError("token width must divide into heads")
        t: dict[str, np.ndarray] = {}

        def dense(name, n_out, n_in):
            s = 1.0 / np.sqrt(n_in)
            t[f"{name}.w"] = rng.uniform(-s, s, size=(n_out, n_in))
            t[f"{name}.b"] = np.zeros(n_out)

        dense("enc_skel.embed", c_tk, 6)  # [gamma_A row, gamma_B row]
        dense("enc_rot.embed", c_tk, 4)
        for enc in ("enc_skel", "enc_rot"):
            for proj in ("wq", "wk", "wv", "wo"):
                dense(f"{enc}.{proj}", c_tk, c_tk)
            t[f"{enc}.ln.scale"] = np.ones(c_tk)
            t[f"{enc}.ln.offset"] = np.zeros(c_tk)
        t["pos_table"] = rng.uniform(-0.1, 0.1, size=(n_joints, 2 * c_tk))
        dense("embed", c_eb, 2 * c_tk)
        decoder = MlpParams.init((c_eb, hidden, 4), rng)
        return cls(n_joints, c_tk, c_eb, heads, t, decoder)

    def named_tensors(self) -> dict[str, np.ndarray]:
        out = dict(self.tensors)
        out.update({f"decoder.{k}": v for k, v in self.decoder.tensors.items()})
        return out


def skeleton_encode(params: TransformerLiteParams, gamma_a, gamma_b, tensors=None) -> Variable:
    """Encoder pass over the rest-offset tokens; reusable across a window's frames."""
    t = tensors if tensors is not None else params.named_tensors()
    gamma_a, gamma_b = ad.wrap(gamma_a), ad.wrap(gamma_b)
    n = params.n_joints
    if gamma_a.value.shape != (n, 3) or gamma_b.value.shape != (n, 3):
        raise DimensionError("rest offsets must be (N, 3)")
    skel_tokens = ad.matmul(
        ad.concat([gamma_a, gamma_b], axis=-1), transpose(t["enc_skel.embed.w"])
    ) + ad.wrap(t["enc_skel.embed.b"])
    return _encoder(t, "enc_skel", skel_tokens, params.heads)


def skeleton_aware_decode(params: TransformerLiteParams, skel_feat, q_cp, tensors=None) -> Variable:
    """Pose encoder plus shared decoder, given a precomputed skeleton encoding."""
    t = tensors if tensors is not None else params.named_tensors()
    q_cp = ad.wrap(q_cp)
    if q_cp.value.shape != (params.n_joints, 4):
        raise DimensionError("q_cp must be (N, 4)")
    rot_tokens = ad.matmul(q_cp, transpose(t["enc_rot.embed.w"])) + ad.wrap(t["enc_rot.embed.b"])
    rot_feat = _encoder(t, "enc_rot", rot_tokens, params.heads)
    joined = ad.concat([ad.wrap(skel_feat), rot_feat], axis=-1) + ad.wrap(t["pos_table"])
    embedding = ad.relu(ad.matmul(joined, transpose(t["embed.w"])) + ad.wrap(t["embed.b"]))
    return _decode_residual(mlp_forward(params.decoder, embedding, t, prefix="decoder."))


def skeleton_aware_forward(params: TransformerLiteParams, gamma_a, gamma_b, q_cp, tensors=None) -> Variable:
    """Residual rotations (N, 4) from rest offsets of both characters and the copied pose."""
    skel_feat = skeleton_encode(params, gamma_a, gamma_b, tensors)
    return skeleton_aware_decode(params, skel_feat, q_cp, tensors)


@dataclass
class ShapeAwareParams:
    """One MLP per limb; each maps its limb's phi and rotation rows to residuals."""

    chains: dict[str, tuple[int, ...]]
    limbs: dict[str, MlpParams]
    n_joints: int

    @classmethod
    def init(cls, skeleton: Skeleton, rng: np.random.Generator, hidden: int = 64):
        chains = {k: tuple(v) for k, v in limb_chains(skeleton).items()}
        limbs = {}
        for label in LIMB_LABELS:
            chain = chains[label]
            if not chain:
                raise ConfigurationError(f"skeleton has no joints for limb {label}")
            n_in = len(chain) * 7  # 3 phi + 4 rotation per joint
            limbs[label] = MlpParams.init((n_in, hidden, hidden, len(chain) * 4), rng)
        return cls(chains, limbs, skeleton.n_joints)

    def named_tensors(self) -> dict[str, np.ndarray]:
        return {
            f"{label}.{k}": v
            for label in LIMB_LABELS
            for k, v in self.limbs[label].tensors.items()
        }


def shape_aware_forward(params: ShapeAwareParams, phi_b, q_sem, tensors=None) -> Variable:
    """Residual rotations (N, 4): identity rows except on the four limb chains."""
    t = tensors if tensors is not None else params.named_tensors()
    phi_b, q_sem = ad.wrap(phi_b), ad.wrap(q_sem)
    if q_sem.value.shape != (params.n_joints, 4):
        raise DimensionError("q_sem must be (N, 4)")
    rows: list = [ad.constant(IDENTITY_ROW)] * params.n_joints
    for label in LIMB_LABELS:
        chain = np.array(params.chains[label], dtype=np.int64)
        feats = ad.concat(
            [ad.reshape(phi_b[chain], (-1,)), ad.reshape(q_sem[chain], (-1,))], axis=0
        )
        out = mlp_forward(params.limbs[label], ad.reshape(feats, (1, -1)), t, prefix=f"{label}.")
        res = _decode_residual(ad.reshape(out, (len(chain), 4)))
        for pos, joint in enumerate(chain):
            rows[int(joint)] = res[pos]
    return ad.stack(rows, axis=0)


@dataclass
class GateParams:
    """Per-joint shared MLP with a sigmoid head; zero last layer starts at w = 0.5."""

    mlp: MlpParams
    n_joints: int

    @classmethod
    def init(cls, n_joints: int, rng: np.random.Generator, hidden: int = 64):
        return cls(MlpParams.init((10, hidden, 1), rng, activation="tanh"), n_joints)

    def named_tensors(self) -> dict[str, np.ndarray]:
        return dict(self.mlp.tensors)


def gate_forward(params: GateParams, gamma_b, phi_b, q_sem, tensors=None) -> Variable:
    """Per-joint balancing weights in [0, 1] from (gamma_B, phi_B, q_sem) rows."""
    gamma_b, phi_b, q_sem = ad.wrap(gamma_b), ad.wrap(phi_b), ad.wrap(q_sem)
    if q_sem.value.shape != (params.n_joints, 4):
        raise DimensionError("q_sem must be (N, 4)")
    feats = ad.concat([gamma_b, phi_b, q_sem], axis=-1)  # (N, 10)
    logits = mlp_forward(params.mlp, feats, tensors)
    return ad.sigmoid(ad.reshape(logits, (-1,)))


# ---------------------------------------------------------------------------
# checkpoint file: one-line JSON header + concatenated float64 LE blobs in
# the header's tensor order

CHECKPOINT_FORMAT = "skinret-checkpoint"
CHECKPOINT_VERSION = 1


def _mlp_meta(mlp: MlpParams) -> dict:
    return {"sizes": list(mlp.sizes), "activation": mlp.activation}


def save_checkpoint(
    path,
    skeleton_params: TransformerLiteParams | None = None,
    shape_params: ShapeAwareParams | None = None,
    gate_params: GateParams | None = None,
    meta: dict | None = None,
) -> None:
    import json

    networks: dict = {}
    tensors: dict[str, np.ndarray] = {}
    if skeleton_params is not None:
        networks["skeleton"] = {
            "n_joints": skeleton_params.n_joints,
            "c_tk": skeleton_params.c_tk,
            "c_eb": skeleton_params.c_eb,
            "heads": skeleton_params.heads,
            "decoder": _mlp_meta(skeleton_params.decoder),
        }
        tensors.update({f"skeleton/{k}": v for k, v in skeleton_params.named_tensors().items()})
    if shape_params is not None:
        networks["shape"] = {
            "n_joints": shape_params.n_joints,
            "chains": {k: list(v) for k, v in shape_params.chains.items()},
            "limbs": {k: _mlp_meta(m) for k, m in shape_params.limbs.items()},
        }
        tensors.update({f"shape/{k}": v for k, v in shape_params.named_tensors().items()})
    if gate_params is not None:
        networks["gate"] = {"n_joints": gate_params.n_joints, "mlp": _mlp_meta(gate_params.mlp)}
        tensors.update({f"gate/{k}": v for k, v in gate_params.named_tensors().items()})

    order = sorted(tensors)
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "networks": networks,
        "tensors": [{"name": k, "shape": list(tensors[k].shape)} for k in order],
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode() + b"\n")
        for k in order:
            f.write(np.ascontiguousarray(tensors[k], dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (skeleton_params | None, shape_params | None, gate_params | None, meta)."""
    import json

    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ConfigurationError(f"not a checkpoint file: {path}")
        tensors: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(count * 8)
            if len(buf) != count * 8:
                raise ConfigurationError(f"truncated checkpoint blob for {entry['name']}")
            tensors[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()

    def sub(prefix: str) -> dict[str, np.ndarray]:
        return {k.split("/", 1)[1]: v for k, v in tensors.items() if k.startswith(prefix + "/")}

    skeleton_params = shape_params = gate_params = None
    nets = header["networks"]
    if "skeleton" in nets:
        m = nets["skeleton"]
        flat = sub("skeleton")
        decoder_tensors = {k.split(".", 1)[1]: v for k, v in flat.items() if k.startswith("decoder.")}
        body = {k: v for k, v in flat.items() if not k.startswith("decoder.")}
        skeleton_params = TransformerLiteParams(
            m["n_joints"],
            m["c_tk"],
            m["c_eb"],
            m["heads"],
            body,
            MlpParams(tuple(m["decoder"]["sizes"]), m["decoder"]["activation"], decoder_tensors),
        )
    if "shape" in nets:
        m = nets["shape"]
        flat = sub("shape")
        limbs = {}
        for label, meta_mlp in m["limbs"].items():
            limbs[label] = MlpParams(
                tuple(meta_mlp["sizes"]),
                meta_mlp["activation"],
                {k.split(".", 1)[1]: v for k, v in flat.items() if k.startswith(label + ".")},
            )
        shape_params = ShapeAwareParams(
            {k: tuple(v) for k, v in m["chains"].items()}, limbs, m["n_joints"]
        )
    if "gate" in nets:
        m = nets["gate"]
        gate_params = GateParams(
            MlpParams(tuple(m["mlp"]["sizes"]), m["mlp"]["activation"], sub("gate")), m["n_joints"]
        )
    return skeleton_params, shape_params, gate_params, header.get("meta", {})
