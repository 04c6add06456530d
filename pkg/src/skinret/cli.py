"""Command-line entry points.

Subcommands: assets (generate a synthetic asset directory), retarget, train
stage1|stage2, eval, voxelize, trace, serve. Train flags mirror TrainConfig
keys; a --config JSON file supplies defaults and explicit CLI flags override
it. Exit code 0 only when every requested output was written.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import fields, metrics, synthetic
from .geometry import ShapeDescriptor, body_surface, linear_blend_skinning
from .io_formats import load_bundle, load_motion, save_bundle, save_motion
from .networks import load_checkpoint, save_checkpoint
from .pipeline import RetargetRequest, retarget_sequence
from .training import TrainConfig, train_stage1, train_stage2


def _add_assets(sub):
    p = sub.add_parser("assets", help="write a synthetic character/motion asset directory")
    p.add_argument("--preset", default="demo", choices=["demo", "arm_fold_pair", "penetration_pair"])
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=48)
    p.set_defaults(func=cmd_assets)


def cmd_assets(args) -> int:
    family = synthetic.build_family(args.preset, n_frames=args.frames)
    out = Path(args.out)
    for character in family.characters:
        save_bundle(character, out / "characters" / character.name)
    (out / "motions").mkdir(parents=True, exist_ok=True)
    for name, motion in family.motions.items():
        save_motion(motion, out / "motions" / f"{name}.json")
    print(f"wrote {len(family.characters)} characters, {len(family.motions)} motions to {out}")
    return 0


def _add_retarget(sub):
    p = sub.add_parser("retarget", help="retarget a motion file onto a target character")
    p.add_argument("--source-bundle", required=True)
    p.add_argument("--target-bundle", required=True)
    p.add_argument("--motion", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--skeleton-only", action="store_true", help="skip the geometry stage and gate")
    p.add_argument("--w-scale", type=float)
    p.add_argument("--w-override", help="comma-separated per-joint weights in [0,1]")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_retarget)


def cmd_retarget(args) -> int:
    src = load_bundle(args.source_bundle)
    tgt = load_bundle(args.target_bundle)
    motion = load_motion(args.motion, src.skeleton)
    skeleton_params = shape_params = gate_params = None
    if args.checkpoint:
        skeleton_params, shape_params, gate_params, _ = load_checkpoint(args.checkpoint)
    if args.skeleton_only:
        shape_params = gate_params = None
    w_override = None
    if args.w_override:
        w_override = np.array([float(x) for x in args.w_override.split(",")])
    request = RetargetRequest(
        motion,
        src.skeleton,
        tgt.skeleton,
        target_mesh=tgt.mesh,
        target_phi=ShapeDescriptor(tgt.phi),
        skeleton_params=skeleton_params,
        shape_params=shape_params,
        gate_params=gate_params,
        w_override=w_override,
        w_scale=args.w_scale,
    )
    result = retarget_sequence(request)
    save_motion(result, args.output)
    print(f"wrote {args.output} ({result.n_frames} frames)")
    return 0


def _add_train(sub):
    p = sub.add_parser("train", help="train the desk-scale networks on a synthetic family")
    p.add_argument("stage", choices=["stage1", "stage2"])
    p.add_argument("--family", default="demo", choices=["demo", "arm_fold_pair", "penetration_pair"])
    p.add_argument("--frames", type=int, default=48)
    p.add_argument("--config", help="JSON file of TrainConfig keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--checkpoint", help="stage-1 checkpoint (required for stage2)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)


def _build_config(args) -> TrainConfig:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
    overrides = {
        "seed": args.seed,
        "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
        "window": args.window,
    }
    if args.iterations is not None:
        key = "stage1_iterations" if args.stage == "stage1" else "stage2_geometry_iterations"
        overrides[key] = args.iterations
    data.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(data)


def cmd_train(args) -> int:
    config = _build_config(args)
    family = synthetic.build_family(args.family, n_frames=args.frames)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.stage == "stage1":
        params, rows = train_stage1(config, family, log_path=out / "stage1_loss.csv")
        save_checkpoint(out / "stage1.ckpt", skeleton_params=params, meta={"seed": config.seed})
        print(f"wrote {out / 'stage1.ckpt'} (final loss {rows[-1]['loss']:.6f})")
    else:
        skeleton_params = None
        if args.checkpoint:
            skeleton_params, _, _, _ = load_checkpoint(args.checkpoint)
        shape_params, gate_params, curves = train_stage2(config, family, skeleton_params, log_dir=out)
        save_checkpoint(
            out / "stage2.ckpt",
            skeleton_params=skeleton_params,
            shape_params=shape_params,
            gate_params=gate_params,
            meta={"seed": config.seed},
        )
        print(f"wrote {out / 'stage2.ckpt'}")
    return 0


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a retargeted motion against a character")
    p.add_argument("--result", required=True)
    p.add_argument("--target-bundle", required=True)
    p.add_argument("--reference", help="reference motion for MSE terms")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_eval)


def cmd_eval(args) -> int:
    bundle = load_bundle(args.target_bundle)
    result = load_motion(args.result, bundle.skeleton)
    reference = load_motion(args.reference, bundle.skeleton) if args.reference else None
    report = metrics.evaluate(result, reference, bundle)
    Path(args.output).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(
        f"mse={report.mse:.6f} local_mse={report.local_mse:.6f} "
        f"penetration={report.penetration_rate:.2f}% contact={report.contact_distance:.2f}cm"
    )
    return 0


def _add_voxelize(sub):
    p = sub.add_parser("voxelize", help="dump a truncated distance field of a character's body")
    p.add_argument("--bundle", required=True)
    p.add_argument("--motion", help="pose the character with this motion before voxelizing")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--kind", choices=["repulsive", "attractive"], default="repulsive")
    p.add_argument("--spacing", type=float)
    p.add_argument("--truncation", type=float)
    p.add_argument("--output", required=True, help="basename; writes <output>.json and <output>.raw")
    p.set_defaults(func=cmd_voxelize)


def cmd_voxelize(args) -> int:
    bundle = load_bundle(args.bundle)
    h = bundle.skeleton.height
    spacing = args.spacing if args.spacing else 0.02 * h
    default_trunc = 0.2 * h if args.kind == "repulsive" else 0.1 * h
    truncation = args.truncation if args.truncation else default_trunc
    if args.motion:
        motion = load_motion(args.motion, bundle.skeleton)
        rotations = motion.rotations[args.frame]
        verts = linear_blend_skinning(bundle.mesh, bundle.skeleton, rotations, np.zeros(3))
    else:
        verts = bundle.mesh.vertices
    body_idx, body_tris = body_surface(bundle.mesh)
    field = fields.voxelize(verts[body_idx], body_tris, spacing, truncation, args.kind)
    fields.save_field(field, f"{args.output}.json", f"{args.output}.raw")
    print(f"wrote {args.output}.json and {args.output}.raw (dims {field.dims})")
    return 0


def _add_trace(sub):
    p = sub.add_parser("trace", help="CSV of a joint's world height per frame")
    p.add_argument("--motion", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--joint", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_trace)


def cmd_trace(args) -> int:
    bundle = load_bundle(args.bundle)
    motion = load_motion(args.motion, bundle.skeleton)
    heights = metrics.end_effector_trace(motion, args.joint)
    with open(args.output, "w") as f:
        f.write("frame,height\n")
        for t, h in enumerate(heights):
            f.write(f"{t},{float(h)!r}\n")
    print(f"wrote {args.output} ({len(heights)} frames)")
    return 0


def _add_serve(sub):
    p = sub.add_parser("serve", help="run the balancing-gate HTTP service")
    p.add_argument("--assets", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--frontend", help="directory of built viewer files to mount at /ui")
    p.set_defaults(func=cmd_serve)


def cmd_serve(args) -> int:
    import uvicorn

    from .service import AssetStore, create_app

    store = AssetStore.from_directory(args.assets, checkpoint=args.checkpoint)
    app = create_app(store, frontend_dir=args.frontend)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="skinret", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for adder in (_add_assets, _add_retarget, _add_train, _add_eval, _add_voxelize, _add_trace, _add_serve):
        adder(sub)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface a one-line diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
