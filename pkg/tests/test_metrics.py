import numpy as np
import pytest

from skinret import quat
from skinret.fields import EmptyVertexSetError
from skinret.io_formats import CharacterBundle
from skinret.kinematics import MotionSequence, RootChannel
from skinret.metrics import (
    contact_series,
    end_effector_trace,
    eval_contact,
    eval_mse,
    eval_penetration,
    evaluate,
    penetration_series,
)
from skinret.synthetic import build_family, make_character, motion_arm_fold, motion_stroll

RNG = np.random.default_rng(23)


@pytest.fixture(scope="module")
def bulky_bundle():
    ch = make_character("bulky", torso_breadth=0.7, torso_depth=4.0, forearm_rings=6)
    return ch, CharacterBundle(ch.name, ch.skeleton, ch.mesh, ch.phi.extents)


def static_motion(skeleton, rotations, frames=1):
    rots = np.tile(rotations, (frames, 1, 1))
    return MotionSequence(skeleton, rots, RootChannel(np.zeros((frames, 3)), np.zeros(frames)), 30.0)


class TestMse:
    def test_identical_motions_zero(self):
        ch = make_character("t")
        motion = motion_stroll(ch.skeleton, 6)
        out = eval_mse(motion, motion)
        assert out == {"mse": 0.0, "local_mse": 0.0}

    def test_root_shift_only_breaks_global(self):
        ch = make_character("t")
        motion = motion_stroll(ch.skeleton, 6)
        shifted_root = RootChannel(
            motion.root.linear_velocity + np.array([0.5, 0.0, 0.0]) * (np.arange(6) == 0)[:, None],
            motion.root.yaw,
        )
        shifted = MotionSequence(ch.skeleton, motion.rotations, shifted_root, motion.fps)
        out = eval_mse(shifted, motion)
        assert out["mse"] > 0.0
        assert out["local_mse"] == pytest.approx(0.0, abs=1e-24)

    def test_single_joint_offset_matches_bruteforce(self):
        ch = make_character("t")
        motion = static_motion(ch.skeleton, np.tile(quat.IDENTITY, (22, 1)), frames=4)
        bent = motion.rotations.copy()
        bent[2, ch.skeleton.index_of("LeftArm")] = quat.from_axis_angle([0, 0, 1], 0.3)
        result = MotionSequence(ch.skeleton, bent, motion.root, motion.fps)
        out = eval_mse(result, motion)
        from skinret.kinematics import global_joint_positions

        p_res = global_joint_positions(result)
        p_ref = global_joint_positions(motion)
        brute = float(np.mean(np.sum((p_res - p_ref) ** 2, axis=-1)) / ch.skeleton.height**2)
        assert out["mse"] == pytest.approx(brute, rel=1e-12)

    def test_length_mismatch_rejected(self):
        ch = make_character("t")
        with pytest.raises(ValueError):
            eval_mse(motion_stroll(ch.skeleton, 4), motion_stroll(ch.skeleton, 5))


class TestPenetration:
    def test_rest_pose_no_penetration(self, bulky_bundle):
        ch, bundle = bulky_bundle
        motion = static_motion(ch.skeleton, np.tile(quat.IDENTITY, (22, 1)))
        assert eval_penetration(motion, bundle) == 0.0

    def test_fold_penetrates(self, bulky_bundle):
        ch, bundle = bulky_bundle
        motion = motion_arm_fold(ch.skeleton, 8, shoulder_deg=78, elbow_deg=100, ramp_fraction=0.2)
        assert eval_penetration(motion, bundle) > 15.0

    def test_non_watertight_body_rejected(self, bulky_bundle):
        import copy

        from skinret.geometry import NonWatertightError

        ch, _ = bulky_bundle
        broken = copy.copy(ch.mesh)
        broken.triangles = ch.mesh.triangles[:-1]  # opens the last capsule
        broken.part_labels = list(ch.mesh.part_labels)
        bundle = CharacterBundle(ch.name, ch.skeleton, broken, ch.phi.extents)
        # breaking a body triangle specifically must trip the watertight check
        body_tris = [i for i, t in enumerate(ch.mesh.triangles)
                     if all(ch.mesh.part_labels[v] == "body" for v in t)]
        broken.triangles = np.delete(ch.mesh.triangles, body_tris[0], axis=0)
        motion = static_motion(ch.skeleton, np.tile(quat.IDENTITY, (22, 1)))
        with pytest.raises(NonWatertightError):
            eval_penetration(motion, bundle)

    def test_constructed_ten_percent(self, bulky_bundle):
        """Pose exactly 10% of limb vertices inside via a synthetic winding check."""
        ch, bundle = bulky_bundle
        from skinret.geometry import body_surface, extract_vertex_sets, linear_blend_skinning
        from skinret import backend

        motion = motion_arm_fold(ch.skeleton, 1, shoulder_deg=78, elbow_deg=100, ramp_fraction=0.01)
        series = penetration_series(motion, bundle)
        # oracle: direct winding count on the deformed mesh
        verts = linear_blend_skinning(ch.mesh, ch.skeleton, motion.rotations[0], np.zeros(3))
        vsets = extract_vertex_sets(ch.mesh)
        limb = vsets.all_limb_indices()
        body_idx, body_tris = body_surface(ch.mesh)
        winding = backend.winding_numbers(verts[limb], verts[body_idx], body_tris)
        expected = 100.0 * np.mean(winding > 0.5)
        assert series[0] == pytest.approx(expected, abs=1e-12)


class TestContact:
    def test_distant_hands(self, bulky_bundle):
        ch, bundle = bulky_bundle
        motion = static_motion(ch.skeleton, np.tile(quat.IDENTITY, (22, 1)))
        d = eval_contact(motion, bundle)
        assert d > 0.1  # T-pose hands are far from the torso

    def test_folded_hands_closer(self, bulky_bundle):
        ch, bundle = bulky_bundle
        tpose = static_motion(ch.skeleton, np.tile(quat.IDENTITY, (22, 1)))
        fold = motion_arm_fold(ch.skeleton, 6, shoulder_deg=78, elbow_deg=100, ramp_fraction=0.2)
        assert eval_contact(fold, bundle) < eval_contact(tpose, bundle)

    def test_empty_hand_set_rejected(self, bulky_bundle):
        ch, bundle = bulky_bundle
        stripped = CharacterBundle(ch.name, ch.skeleton, ch.mesh, ch.phi.extents)
        labels = ["body" if l.endswith("hand") else l for l in ch.mesh.part_labels]
        import copy

        mesh2 = copy.copy(ch.mesh)
        mesh2.part_labels = labels
        stripped.mesh = mesh2
        with pytest.raises(EmptyVertexSetError):
            eval_contact(static_motion(ch.skeleton, np.tile(quat.IDENTITY, (22, 1))), stripped)


class TestTrace:
    def test_static_pose_constant(self):
        ch = make_character("t")
        motion = static_motion(ch.skeleton, np.tile(quat.IDENTITY, (22, 1)), frames=5)
        trace = end_effector_trace(motion, "LeftHand")
        assert np.allclose(trace, trace[0])

    def test_rising_root_rises_linearly(self):
        ch = make_character("t")
        rots = np.tile(quat.IDENTITY, (5, 22, 1))
        velocity = np.zeros((5, 3))
        velocity[:, 1] = 0.1
        motion = MotionSequence(ch.skeleton, rots, RootChannel(velocity, np.zeros(5)), 30.0)
        trace = end_effector_trace(motion, "Head")
        assert np.allclose(np.diff(trace), 0.1, atol=1e-12)

    def test_matches_fk_column(self):
        ch = make_character("t")
        motion = motion_arm_fold(ch.skeleton, 4)
        from skinret.kinematics import global_joint_positions

        j = ch.skeleton.index_of("LeftHand")
        assert np.array_equal(end_effector_trace(motion, "LeftHand"), global_joint_positions(motion)[:, j, 1])

    def test_unknown_joint(self):
        ch = make_character("t")
        with pytest.raises(KeyError):
            end_effector_trace(motion_arm_fold(ch.skeleton, 2), "Wing")


def test_full_report_shape(bulky_bundle):
    ch, bundle = bulky_bundle
    motion = motion_arm_fold(ch.skeleton, 4)
    report = evaluate(motion, motion, bundle)
    assert report.mse == 0.0 and report.local_mse == 0.0
    assert 0.0 <= report.penetration_rate <= 100.0
    assert report.contact_distance == pytest.approx(np.mean(contact_series(motion, bundle)) * 100.0)
    d = report.to_dict()
    assert len(d["per_frame_penetration"]) == 4
