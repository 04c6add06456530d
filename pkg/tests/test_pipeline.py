import numpy as np
import pytest

from skinret import quat
from skinret.networks import GateParams, ShapeAwareParams, TransformerLiteParams
from skinret.pipeline import (
    RetargetRequest,
    ValidationError,
    apply_w_control,
    blend_gate,
    retarget_frame,
    retarget_sequence,
)
from skinret.synthetic import build_family

RNG = np.random.default_rng(17)


@pytest.fixture(scope="module")
def family():
    return build_family("arm_fold_pair", n_frames=10)


@pytest.fixture(scope="module")
def fresh_request(family):
    src, tgt = family.characters
    rng = np.random.default_rng(1)
    return RetargetRequest(
        family.motions["arm_fold"],
        src.skeleton,
        tgt.skeleton,
        target_mesh=tgt.mesh,
        target_phi=tgt.phi,
        skeleton_params=TransformerLiteParams.init(src.skeleton.n_joints, rng),
        shape_params=ShapeAwareParams.init(tgt.skeleton, rng),
        gate_params=GateParams.init(tgt.skeleton.n_joints, rng),
    )


class TestWControl:
    def test_scale_one_unchanged(self):
        w = RNG.uniform(0, 1, 22)
        assert np.array_equal(apply_w_control(w, None, 1.0), w)

    def test_scale_zero_gives_zeros(self):
        assert np.array_equal(apply_w_control(RNG.uniform(0, 1, 5), None, 0.0), np.zeros(5))

    def test_scale_clamps_at_one(self):
        out = apply_w_control(np.full(3, 0.7), None, 2.0)
        assert np.array_equal(out, np.ones(3))

    def test_override_wins(self):
        override = np.linspace(0, 1, 4)
        assert np.array_equal(apply_w_control(np.zeros(4), override, 3.0), override)

    def test_out_of_range_override_rejected(self):
        with pytest.raises(ValidationError):
            apply_w_control(np.zeros(2), np.array([0.5, 1.2]), None)


class TestGateBlend:
    def test_endpoints_bit_exact(self):
        a = quat.normalize(RNG.normal(size=(22, 4)))
        b = quat.normalize(RNG.normal(size=(22, 4)))
        assert np.array_equal(blend_gate(a, b, np.zeros(22)), a)
        assert np.array_equal(blend_gate(a, b, np.ones(22)), b)

    def test_half_blend_of_half_turn(self):
        a = np.tile(quat.IDENTITY, (1, 1))
        b = quat.from_axis_angle([0, 0, 1], np.pi)[None]
        out = blend_gate(a, b, np.array([0.5]))
        expected = quat.from_axis_angle([0, 0, 1], np.pi / 2)
        assert np.allclose(out[0], expected, atol=1e-12)

    def test_monotone_geodesic_angle(self):
        a = quat.normalize(RNG.normal(size=4))
        b = quat.normalize(RNG.normal(size=4))
        angles = [
            float(quat.angle_between(a, blend_gate(a[None], b[None], np.array([w]))[0]))
            for w in np.linspace(0, 1, 21)
        ]
        assert all(angles[i + 1] >= angles[i] - 1e-12 for i in range(20))

    def test_outputs_unit_norm(self):
        a = quat.normalize(RNG.normal(size=(22, 4)))
        b = quat.normalize(RNG.normal(size=(22, 4)))
        out = blend_gate(a, b, RNG.uniform(0, 1, 22))
        assert np.allclose(np.linalg.norm(out, axis=-1), 1.0, atol=1e-12)


class TestRetarget:
    def test_residual_identity_bit_exact(self, family, fresh_request):
        out = retarget_sequence(fresh_request)
        assert np.array_equal(out.rotations, family.motions["arm_fold"].rotations)

    def test_w_override_endpoints(self, fresh_request):
        n = fresh_request.target_skeleton.n_joints
        fresh_request.w_override = np.zeros(n)
        r0 = retarget_frame(fresh_request, 5)
        assert np.array_equal(r0.q_out, r0.q_sem)
        fresh_request.w_override = np.ones(n)
        r1 = retarget_frame(fresh_request, 5)
        assert np.array_equal(r1.q_out, r1.q_geo)
        fresh_request.w_override = None

    def test_skeleton_only_mode(self, family):
        src, tgt = family.characters
        request = RetargetRequest(family.motions["wave"], src.skeleton, tgt.skeleton)
        result = retarget_frame(request, 3)
        assert np.array_equal(result.q_out, result.q_sem)
        assert np.array_equal(result.q_geo, result.q_sem)

    def test_root_channel_scales_with_height_ratio(self, family):
        src, tgt = family.characters
        request = RetargetRequest(family.motions["stroll"], src.skeleton, tgt.skeleton)
        out = retarget_sequence(request)
        ratio = tgt.skeleton.height / src.skeleton.height
        assert np.allclose(
            out.root.linear_velocity, family.motions["stroll"].root.linear_velocity * ratio
        )
        assert np.array_equal(out.root.yaw, family.motions["stroll"].root.yaw)
        assert out.fps == family.motions["stroll"].fps

    def test_uniform_scaled_target_keeps_rotations(self, family):
        from skinret.synthetic import make_skeleton

        src, _ = family.characters
        scaled = make_skeleton(size_scale=2.0)
        base = make_skeleton()
        request = RetargetRequest(family.motions["arm_fold"], base, scaled)
        out = retarget_sequence(request)
        assert np.array_equal(out.rotations, family.motions["arm_fold"].rotations)
        assert np.allclose(
            out.root.linear_velocity, family.motions["arm_fold"].root.linear_velocity * 2.0
        )

    def test_determinism(self, fresh_request):
        a = retarget_sequence(fresh_request)
        b = retarget_sequence(fresh_request)
        assert np.array_equal(a.rotations, b.rotations)

    def test_output_unit_norm_with_trained_like_params(self, family):
        src, tgt = family.characters
        rng = np.random.default_rng(3)
        skel = TransformerLiteParams.init(src.skeleton.n_joints, rng)
        shape = ShapeAwareParams.init(tgt.skeleton, rng)
        gate = GateParams.init(tgt.skeleton.n_joints, rng)
        for params in (skel, shape, gate):
            for key, tensor in params.named_tensors().items():
                tensor += 0.2 * rng.normal(size=tensor.shape)
        request = RetargetRequest(
            family.motions["arm_fold"], src.skeleton, tgt.skeleton,
            target_mesh=tgt.mesh, target_phi=tgt.phi,
            skeleton_params=skel, shape_params=shape, gate_params=gate,
        )
        out = retarget_sequence(request)
        assert np.allclose(np.linalg.norm(out.rotations, axis=-1), 1.0, atol=1e-9)
        frame = retarget_frame(request, 4)
        assert not np.allclose(frame.q_sem, frame.q_cp)  # residuals engaged

    def test_missing_mesh_with_geometry_enabled(self, family):
        src, tgt = family.characters
        rng = np.random.default_rng(3)
        request = RetargetRequest(
            family.motions["arm_fold"], src.skeleton, tgt.skeleton,
            shape_params=ShapeAwareParams.init(tgt.skeleton, rng),
        )
        from skinret.pipeline import ConfigurationError

        with pytest.raises(ConfigurationError):
            retarget_frame(request, 0)
