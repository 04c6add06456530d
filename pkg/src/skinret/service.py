"""HTTP/JSON service for interactive balancing-gate control.

GET /characters lists assets; GET /sequence retargets (cached per
src/tgt/motion) and returns every per-frame intermediate the viewer needs;
POST /rebalance re-interpolates cached intermediates for a new w without
re-running the networks (w only enters the final blend); GET /mesh serves
wireframe geometry. Responses are pure functions of the immutable asset
snapshot, identified by `snapshot` in every payload.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import backend
from .geometry import body_surface, extract_vertex_sets, linear_blend_skinning
from .io_formats import CharacterBundle, load_bundle, load_motion
from .kinematics import MotionSequence, global_joint_positions
from .networks import load_checkpoint
from .pipeline import (
    RetargetRequest,
    ValidationError,
    apply_w_control,
    blend_gate,
    retarget_frame,
)
from .kinematics import RootChannel, retarget_root


@dataclass
class SequenceData:
    """Cached per-frame intermediates for one (src, tgt, motion) triple."""

    src: str
    tgt: str
    motion: str
    fps: float
    q_cp: np.ndarray  # (T, N, 4)
    q_sem: np.ndarray
    q_geo: np.ndarray
    w_network: np.ndarray  # (T, N)
    w: np.ndarray
    q_out: np.ndarray
    root: RootChannel


class AssetStore:
    """Immutable characters, motions, and checkpoints plus sequence caches."""

    def __init__(self, bundles, motions, skeleton_params=None, shape_params=None, gate_params=None):
        self.bundles: dict[str, CharacterBundle] = dict(bundles)
        self.motions: dict[str, MotionSequence] = dict(motions)
        self.skeleton_params = skeleton_params
        self.shape_params = shape_params
        self.gate_params = gate_params
        self._sequences: dict[tuple[str, str, str], SequenceData] = {}
        self.snapshot = self._digest()

    @classmethod
    def from_directory(cls, assets_dir, checkpoint=None) -> "AssetStore":
        assets_dir = Path(assets_dir)
        bundles = {}
        for manifest in sorted(assets_dir.glob("characters/*/bundle.json")):
            bundle = load_bundle(manifest)
            bundles[bundle.name] = bundle
        if not bundles:
            raise FileNotFoundError(f"no character bundles under {assets_dir}/characters")
        reference_skeleton = next(iter(bundles.values())).skeleton
        motions = {}
        for motion_path in sorted(assets_dir.glob("motions/*.json")):
            motions[motion_path.stem] = load_motion(motion_path, reference_skeleton)
        skeleton_params = shape_params = gate_params = None
        if checkpoint is not None:
            skeleton_params, shape_params, gate_params, _ = load_checkpoint(checkpoint)
        return cls(bundles, motions, skeleton_params, shape_params, gate_params)

    def _digest(self) -> str:
        digest = hashlib.sha256()
        for name in sorted(self.bundles):
            b = self.bundles[name]
            digest.update(name.encode())
            digest.update(b.mesh.vertices.tobytes())
            digest.update(b.skeleton.offsets.tobytes())
        for name in sorted(self.motions):
            digest.update(name.encode())
            digest.update(self.motions[name].rotations.tobytes())
        for params in (self.skeleton_params, self.shape_params, self.gate_params):
            if params is not None:
                for key, tensor in sorted(params.named_tensors().items()):
                    digest.update(key.encode())
                    digest.update(np.ascontiguousarray(tensor).tobytes())
        return digest.hexdigest()[:16]

    def sequence(self, src: str, tgt: str, motion: str) -> SequenceData:
        key = (src, tgt, motion)
        if key in self._sequences:
            return self._sequences[key]
        if src not in self.bundles:
            raise HTTPException(404, f"unknown character {src!r}")
        if tgt not in self.bundles:
            raise HTTPException(404, f"unknown character {tgt!r}")
        if motion not in self.motions:
            raise HTTPException(404, f"unknown motion {motion!r}")
        src_b, tgt_b = self.bundles[src], self.bundles[tgt]
        seq = self.motions[motion]
        source_motion = MotionSequence(src_b.skeleton, seq.rotations, seq.root, seq.fps)
        request = RetargetRequest(
            source_motion,
            src_b.skeleton,
            tgt_b.skeleton,
            target_mesh=tgt_b.mesh,
            skeleton_params=self.skeleton_params,
            shape_params=self.shape_params,
            gate_params=self.gate_params,
        )
        if request.geometry_enabled:
            from .geometry import ShapeDescriptor

            request.target_phi = ShapeDescriptor(tgt_b.phi)
        t, n = seq.rotations.shape[:2]
        data = SequenceData(
            src,
            tgt,
            motion,
            seq.fps,
            np.empty((t, n, 4)),
            np.empty((t, n, 4)),
            np.empty((t, n, 4)),
            np.empty((t, n)),
            np.empty((t, n)),
            np.empty((t, n, 4)),
            retarget_root(seq.root, src_b.skeleton.height, tgt_b.skeleton.height),
        )
        for k in range(t):
            fr = retarget_frame(request, k)
            data.q_cp[k] = fr.q_cp
            data.q_sem[k] = fr.q_sem
            data.q_geo[k] = fr.q_geo
            data.w_network[k] = fr.w_network
            data.w[k] = fr.w
            data.q_out[k] = fr.q_out
        self._sequences[key] = data
        return data


def _listify(arr: np.ndarray):
    return arr.tolist()


def _frame_payload(store: AssetStore, data: SequenceData, rotations: np.ndarray, w: np.ndarray, frames):
    """Per-frame payloads incl. world positions and penetrating-vertex flags."""
    tgt = store.bundles[data.tgt]
    src = store.bundles[data.src]
    src_seq = MotionSequence(src.skeleton, store.motions[data.motion].rotations, store.motions[data.motion].root, data.fps)
    out_seq = MotionSequence(tgt.skeleton, rotations, data.root, data.fps)
    pos_src = global_joint_positions(src_seq)
    pos_out = global_joint_positions(out_seq)
    vsets = extract_vertex_sets(tgt.mesh)
    limb_idx = vsets.all_limb_indices()
    body_idx, body_tris = body_surface(tgt.mesh)
    root_pos = out_seq.root.positions()
    root_quats = out_seq.global_root_quats()
    payloads = []
    for k in frames:
        rot = rotations[k].copy()
        rot[0] = root_quats[k]
        verts = linear_blend_skinning(tgt.mesh, tgt.skeleton, rot, root_pos[k])
        winding = backend.winding_numbers(verts[limb_idx], verts[body_idx], body_tris)
        penetrating = [int(limb_idx[i]) for i in np.flatnonzero(winding > 0.5)]
        payloads.append(
            {
                "frame": int(k),
                "root": {"velocity": _listify(data.root.linear_velocity[k]), "yaw": float(data.root.yaw[k])},
                "q_cp": _listify(data.q_cp[k]),
                "q_sem": _listify(data.q_sem[k]),
                "q_geo": _listify(data.q_geo[k]),
                "w_network": _listify(data.w_network[k]),
                "w": _listify(w[k]),
                "q_out": _listify(rotations[k]),
                "positions_src": _listify(pos_src[k]),
                "positions_out": _listify(pos_out[k]),
                "vertices_out": _listify(verts),
                "penetrating": penetrating,
            }
        )
    return payloads


def create_app(store: AssetStore, frontend_dir=None) -> FastAPI:
    app = FastAPI(title="skinret balancing-gate service")

    @app.get("/characters")
    def characters():
        return JSONResponse(
            {
                "snapshot": store.snapshot,
                "characters": [
                    {
                        "name": name,
                        "joints": store.bundles[name].skeleton.n_joints,
                        "height": store.bundles[name].skeleton.height,
                    }
                    for name in sorted(store.bundles)
                ],
                "motions": sorted(store.motions),
            }
        )

    @app.get("/sequence")
    def sequence(src: str, tgt: str, motion: str):
        data = store.sequence(src, tgt, motion)
        payload = {
            "snapshot": store.snapshot,
            "src": src,
            "tgt": tgt,
            "motion": motion,
            "fps": data.fps,
            "joint_names": list(store.bundles[tgt].skeleton.joint_names),
            "parents": [int(p) for p in store.bundles[tgt].skeleton.parents],
            "n_frames": int(data.q_out.shape[0]),
            "frames": _frame_payload(store, data, data.q_out, data.w, range(data.q_out.shape[0])),
        }
        return JSONResponse(payload)

    @app.get("/mesh")
    def mesh(character: str):
        if character not in store.bundles:
            raise HTTPException(404, f"unknown character {character!r}")
        bundle = store.bundles[character]
        vsets = extract_vertex_sets(bundle.mesh)
        return JSONResponse(
            {
                "snapshot": store.snapshot,
                "character": character,
                "vertices": _listify(bundle.mesh.vertices),
                "triangles": _listify(bundle.mesh.triangles),
                "part_labels": list(bundle.mesh.part_labels),
                "limb_sets": {k: _listify(v) for k, v in vsets.limbs.items()},
                "hand_set": _listify(vsets.hands),
            }
        )

    @app.post("/rebalance")
    async def rebalance(request: Request):
        body = await request.json()
        for field in ("src", "tgt", "motion"):
            if field not in body:
                raise HTTPException(400, f"missing field {field!r}")
        if body.get("snapshot") not in (None, store.snapshot):
            raise HTTPException(400, "stale snapshot id")
        data = store.sequence(body["src"], body["tgt"], body["motion"])
        t, n = data.w_network.shape
        w_override = body.get("w_override")
        w_scale = body.get("w_scale")
        if w_override is None and w_scale is None:
            raise HTTPException(400, "one of w_override or w_scale is required")
        if w_override is not None and w_scale is not None:
            raise HTTPException(400, "w_override and w_scale are mutually exclusive")
        if w_override is not None:
            w_override = np.asarray(w_override, dtype=np.float64)
            if w_override.shape != (n,):
                raise HTTPException(400, f"w_override must have {n} entries")
        frame_range = body.get("frame_range", [0, t])
        if (
            not isinstance(frame_range, (list, tuple))
            or len(frame_range) != 2
            or not (0 <= int(frame_range[0]) < int(frame_range[1]) <= t)
        ):
            raise HTTPException(400, f"frame_range must be [start, end) within [0, {t}]")
        frames = range(int(frame_range[0]), int(frame_range[1]))
        new_w = data.w.copy()
        new_rot = data.q_out.copy()
        try:
            for k in frames:
                new_w[k] = apply_w_control(data.w_network[k], w_override, w_scale)
                new_rot[k] = blend_gate(data.q_sem[k], data.q_geo[k], new_w[k])
        except ValidationError as exc:
            raise HTTPException(400, str(exc)) from exc
        return JSONResponse(
            {
                "snapshot": store.snapshot,
                "src": body["src"],
                "tgt": body["tgt"],
                "motion": body["motion"],
                "frames": _frame_payload(store, data, new_rot, new_w, frames),
            }
        )

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app
