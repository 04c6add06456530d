import json

import numpy as np
import pytest

from skinret.geometry import InvalidRigError
from skinret.io_formats import (
    ParseError,
    UnsupportedFaceError,
    load_bundle,
    load_mesh_obj,
    load_motion,
    load_skeleton,
    load_weights,
    save_bundle,
    save_mesh_obj,
    save_motion,
    save_skeleton,
    save_weights,
)
from skinret.kinematics import MotionSequence, RootChannel
from skinret.synthetic import build_family, make_character, make_skeleton, motion_arm_fold

RNG = np.random.default_rng(13)


class TestSkeletonIO:
    def test_roundtrip_identity(self, tmp_path):
        sk = make_skeleton(forearm_scale=1.2345678901234567)
        save_skeleton(sk, tmp_path / "s.json")
        back = load_skeleton(tmp_path / "s.json")
        assert back.joint_names == sk.joint_names
        assert np.array_equal(back.parents, sk.parents)
        assert np.array_equal(back.offsets, sk.offsets)

    def test_minimal_two_joint_height(self, tmp_path):
        (tmp_path / "s.json").write_text(
            json.dumps(
                {
                    "joint_names": ["root", "top"],
                    "parents": [-1, 0],
                    "offsets": [[0, 0, 0], [0, 1.5, 0]],
                }
            )
        )
        sk = load_skeleton(tmp_path / "s.json")
        assert sk.height == pytest.approx(1.5)

    def test_cycle_rejected_with_diagnostic(self, tmp_path):
        (tmp_path / "s.json").write_text(
            json.dumps(
                {
                    "joint_names": ["a", "b", "c"],
                    "parents": [-1, 2, 1],
                    "offsets": [[0, 0, 0]] * 3,
                }
            )
        )
        with pytest.raises(ParseError, match="cycle"):
            load_skeleton(tmp_path / "s.json")

    def test_unknown_field_rejected(self, tmp_path):
        (tmp_path / "s.json").write_text(
            json.dumps(
                {
                    "joint_names": ["a"],
                    "parents": [-1],
                    "offsets": [[0, 0, 0]],
                    "color": "red",
                }
            )
        )
        with pytest.raises(ParseError, match="unknown fields"):
            load_skeleton(tmp_path / "s.json")

    def test_standard_character_is_22_joints(self, tmp_path):
        save_skeleton(make_skeleton(), tmp_path / "s.json")
        assert load_skeleton(tmp_path / "s.json").n_joints == 22


class TestMotionIO:
    def test_roundtrip_precision(self, tmp_path):
        sk = make_skeleton()
        motion = motion_arm_fold(sk, 5)
        motion.root.linear_velocity[:] = RNG.normal(size=(5, 3)) * 0.01
        save_motion(motion, tmp_path / "m.json")
        back = load_motion(tmp_path / "m.json", sk)
        assert np.allclose(back.rotations, motion.rotations, atol=1e-12)
        assert np.array_equal(back.root.linear_velocity, motion.root.linear_velocity)
        assert back.fps == motion.fps

    def test_single_frame_motion(self, tmp_path):
        sk = make_skeleton()
        motion = motion_arm_fold(sk, 1)
        save_motion(motion, tmp_path / "m.json")
        assert load_motion(tmp_path / "m.json", sk).n_frames == 1

    def test_near_unit_quaternion_renormalized(self, tmp_path):
        sk = make_skeleton()
        motion = motion_arm_fold(sk, 1)
        save_motion(motion, tmp_path / "m.json")
        data = json.loads((tmp_path / "m.json").read_text())
        data["frames"][0]["rotations"][3] = [1.0005, 0.0, 0.0, 0.0]
        (tmp_path / "m.json").write_text(json.dumps(data))
        back = load_motion(tmp_path / "m.json", sk)
        assert np.linalg.norm(back.rotations[0, 3]) == pytest.approx(1.0, abs=1e-12)

    def test_badly_denormalized_rejected(self, tmp_path):
        sk = make_skeleton()
        motion = motion_arm_fold(sk, 1)
        save_motion(motion, tmp_path / "m.json")
        data = json.loads((tmp_path / "m.json").read_text())
        data["frames"][0]["rotations"][3] = [0.5, 0.0, 0.0, 0.0]
        (tmp_path / "m.json").write_text(json.dumps(data))
        with pytest.raises(ParseError, match="tolerance"):
            load_motion(tmp_path / "m.json", sk)

    def test_wrong_joint_count_names_frame(self, tmp_path):
        sk = make_skeleton()
        motion = motion_arm_fold(sk, 2)
        save_motion(motion, tmp_path / "m.json")
        data = json.loads((tmp_path / "m.json").read_text())
        data["frames"][1]["rotations"] = data["frames"][1]["rotations"][:-1]
        (tmp_path / "m.json").write_text(json.dumps(data))
        with pytest.raises(ParseError, match=r"frames\[1\]"):
            load_motion(tmp_path / "m.json", sk)


class TestMeshIO:
    def test_unit_cube(self, tmp_path):
        lines = ["v 0 0 0", "v 1 0 0", "v 1 1 0", "v 0 1 0",
                 "v 0 0 1", "v 1 0 1", "v 1 1 1", "v 0 1 1"]
        faces = ["f 1 3 2", "f 1 4 3", "f 5 6 7", "f 5 7 8",
                 "f 1 2 6", "f 1 6 5", "f 2 3 7", "f 2 7 6",
                 "f 3 4 8", "f 3 8 7", "f 4 1 5", "f 4 5 8"]
        (tmp_path / "cube.obj").write_text("\n".join(lines + faces))
        verts, tris = load_mesh_obj(tmp_path / "cube.obj")
        assert verts.shape == (8, 3)
        assert tris.shape == (12, 3)

    def test_quads_fan_split(self, tmp_path):
        (tmp_path / "q.obj").write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        _, tris = load_mesh_obj(tmp_path / "q.obj")
        assert np.array_equal(tris, [[0, 1, 2], [0, 2, 3]])

    def test_ngon_rejected(self, tmp_path):
        (tmp_path / "n.obj").write_text(
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 2 2 0\nf 1 2 3 4 5\n"
        )
        with pytest.raises(UnsupportedFaceError):
            load_mesh_obj(tmp_path / "n.obj")

    def test_roundtrip(self, tmp_path):
        ch = make_character("t")
        save_mesh_obj(ch.mesh.vertices, ch.mesh.triangles, tmp_path / "c.obj")
        verts, tris = load_mesh_obj(tmp_path / "c.obj")
        assert np.array_equal(verts, ch.mesh.vertices)
        assert np.array_equal(tris, ch.mesh.triangles)

    def test_slash_face_indices(self, tmp_path):
        (tmp_path / "s.obj").write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\n")
        _, tris = load_mesh_obj(tmp_path / "s.obj")
        assert np.array_equal(tris, [[0, 1, 2]])


class TestWeightsIO:
    def test_roundtrip(self, tmp_path):
        ch = make_character("t")
        save_weights(ch.mesh, ch.skeleton, tmp_path / "w.json")
        rows = load_weights(tmp_path / "w.json", ch.skeleton, ch.mesh.n_vertices)
        assert rows == ch.mesh.weights

    def test_small_deficit_renormalized(self, tmp_path):
        sk = make_skeleton()
        (tmp_path / "w.json").write_text(
            json.dumps({"vertex_count": 1, "weights": {"Hips": [[0, 0.98]]}})
        )
        rows = load_weights(tmp_path / "w.json", sk, 1)
        assert rows[0][0] == pytest.approx(1.0)

    def test_large_deficit_rejected(self, tmp_path):
        sk = make_skeleton()
        (tmp_path / "w.json").write_text(
            json.dumps({"vertex_count": 1, "weights": {"Hips": [[0, 0.5]]}})
        )
        with pytest.raises(InvalidRigError):
            load_weights(tmp_path / "w.json", sk, 1)

    def test_unknown_joint_rejected(self, tmp_path):
        sk = make_skeleton()
        (tmp_path / "w.json").write_text(
            json.dumps({"vertex_count": 1, "weights": {"Tail": [[0, 1.0]]}})
        )
        with pytest.raises(InvalidRigError, match="Tail"):
            load_weights(tmp_path / "w.json", sk, 1)


def test_bundle_roundtrip(tmp_path):
    fam = build_family("demo", n_frames=4)
    ch = fam.characters[2]
    manifest = save_bundle(ch, tmp_path / ch.name)
    bundle = load_bundle(manifest)
    assert bundle.name == ch.name
    assert np.array_equal(bundle.mesh.vertices, ch.mesh.vertices)
    assert bundle.mesh.weights == ch.mesh.weights
    assert bundle.mesh.part_labels == ch.mesh.part_labels
    assert np.array_equal(bundle.phi, ch.phi.extents)
    assert np.array_equal(bundle.skeleton.offsets, ch.skeleton.offsets)


def test_random_motion_roundtrip_property(tmp_path):
    from skinret import quat

    sk = make_skeleton()
    for trial in range(5):
        t = int(RNG.integers(1, 6))
        rots = quat.normalize(RNG.normal(size=(t, sk.n_joints, 4)))
        motion = MotionSequence(
            sk, rots, RootChannel(RNG.normal(size=(t, 3)), RNG.normal(size=t)), float(RNG.integers(24, 61))
        )
        save_motion(motion, tmp_path / f"m{trial}.json")
        back = load_motion(tmp_path / f"m{trial}.json", sk)
        assert np.allclose(back.rotations, motion.rotations, atol=1e-12)
        assert np.array_equal(back.root.yaw, motion.root.yaw)
