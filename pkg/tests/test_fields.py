import numpy as np
import pytest

from skinret import autodiff as ad
from skinret.fields import (
    EmptyVertexSetError,
    VoxelField,
    attractive_loss,
    repulsive_loss,
    sample,
    sample_var,
    save_field,
    voxelize,
)
from skinret.geometry import NonWatertightError
from skinret.synthetic import icosphere

RNG = np.random.default_rng(2)


@pytest.fixture(scope="module")
def sphere():
    return icosphere(3)


@pytest.fixture(scope="module")
def rep_field(sphere):
    v, f = sphere
    return voxelize(v, f, 0.08, 0.5, "repulsive")


@pytest.fixture(scope="module")
def att_field(sphere):
    v, f = sphere
    return voxelize(v, f, 0.08, 0.25, "attractive")


def analytic_depth(points, truncation):
    r = np.linalg.norm(points, axis=-1)
    return np.clip(np.where(r < 1.0, 1.0 - r, 0.0), 0.0, truncation)


class TestVoxelize:
    def test_interior_nodes_match_sphere_sdf(self, rep_field):
        nodes = rep_field.node_positions()
        r = np.linalg.norm(nodes, axis=1)
        expected = analytic_depth(nodes, rep_field.truncation)
        vals = rep_field.values.reshape(-1)
        assert np.abs(vals[r < 1.0] - expected[r < 1.0]).max() <= 1.5 * rep_field.spacing

    def test_exterior_nodes_zero_for_repulsive(self, rep_field):
        nodes = rep_field.node_positions()
        r = np.linalg.norm(nodes, axis=1)
        assert np.all(rep_field.values.reshape(-1)[r > 1.05] == 0.0)

    def test_attractive_clamps_to_truncation(self, att_field):
        nodes = att_field.node_positions()
        r = np.linalg.norm(nodes, axis=1)
        far = r > 1.0 + att_field.truncation + att_field.spacing
        assert np.all(att_field.values.reshape(-1)[far] == att_field.truncation)

    def test_fields_mutually_exclusive(self, sphere):
        v, f = sphere
        rep = voxelize(v, f, 0.1, 0.3, "repulsive")
        att = voxelize(v, f, 0.1, 0.3, "attractive")
        assert not np.any((rep.values > 0) & (att.values > 0))

    def test_open_mesh_rejected(self, sphere):
        v, f = sphere
        with pytest.raises(NonWatertightError):
            voxelize(v, f[:-2], 0.1, 0.3, "repulsive")

    def test_center_depth(self, rep_field):
        assert sample(rep_field, np.zeros(3)) == pytest.approx(
            min(1.0, rep_field.truncation), abs=0.02
        )


class TestSample:
    def test_exact_node_value(self, rep_field):
        idx = tuple(d // 2 for d in rep_field.dims)
        point = rep_field.origin + rep_field.spacing * np.array(idx)
        assert sample(rep_field, point) == pytest.approx(rep_field.values[idx], abs=1e-12)

    def test_cell_center_is_corner_mean(self):
        values = RNG.normal(size=(3, 3, 3))
        field = VoxelField(np.zeros(3), 1.0, np.abs(values), "repulsive", 10.0)
        center = np.array([0.5, 0.5, 0.5])
        corners = field.values[:2, :2, :2].mean()
        assert sample(field, center) == pytest.approx(corners, rel=1e-12)

    def test_outside_grid_returns_resting_value(self, rep_field, att_field):
        far = np.array([50.0, 0.0, 0.0])
        assert sample(rep_field, far) == 0.0
        assert sample(att_field, far) == att_field.truncation

    def test_continuity_across_cell_faces(self, rep_field):
        base = rep_field.origin + rep_field.spacing * 3.0
        for axis in range(3):
            p = base.copy()
            lo = p.copy()
            lo[axis] -= 1e-10
            hi = p.copy()
            hi[axis] += 1e-10
            assert sample(rep_field, lo) == pytest.approx(sample(rep_field, hi), abs=1e-9)

    def test_gradient_matches_finite_differences(self, rep_field):
        pts = RNG.normal(size=(800, 3))
        pts = pts / np.linalg.norm(pts, axis=1, keepdims=True) * RNG.uniform(0.1, 0.9, 800)[:, None]
        # keep away from cell faces so central differences stay one-sided-free
        u = (pts - rep_field.origin) / rep_field.spacing
        frac = u - np.floor(u)
        ok = np.all((frac > 0.05) & (frac < 0.95), axis=1)
        pts = pts[ok][:500]

        def f(tape, p):
            return ad.sum(sample_var(rep_field, p))

        assert ad.gradcheck(f, [pts], eps=1e-7) < 1e-4


class TestLosses:
    def test_outside_limb_is_zero(self, rep_field):
        pts = np.array([[2.0, 0, 0], [0, 3.0, 0]])
        assert repulsive_loss(rep_field, pts) == 0.0

    def test_uniform_depth_matches_analytic(self, rep_field):
        directions = RNG.normal(size=(10, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        pts = directions * 0.95  # depth 0.05
        assert repulsive_loss(rep_field, pts) == pytest.approx(0.05, abs=0.01)

    def test_duplicating_vertices_keeps_mean(self, rep_field):
        pts = RNG.normal(size=(6, 3)) * 0.3
        single = repulsive_loss(rep_field, pts)
        doubled = repulsive_loss(rep_field, np.concatenate([pts, pts]))
        assert doubled == pytest.approx(single, rel=1e-12)

    def test_attractive_on_surface_is_small(self, att_field):
        directions = RNG.normal(size=(8, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        assert attractive_loss(att_field, directions * 1.0) <= att_field.spacing

    def test_attractive_at_known_distance(self, att_field):
        directions = RNG.normal(size=(8, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        assert attractive_loss(att_field, directions * 1.08) == pytest.approx(0.08, abs=0.01)

    def test_attractive_beyond_truncation_clamps(self, att_field):
        pts = np.array([[0.0, 0.0, 1.0 + att_field.truncation + 0.2]])
        assert attractive_loss(att_field, pts) == att_field.truncation

    def test_empty_vertex_set_rejected(self, rep_field):
        with pytest.raises(EmptyVertexSetError):
            repulsive_loss(rep_field, np.zeros((0, 3)))

    def test_kind_mismatch_rejected(self, rep_field, att_field):
        with pytest.raises(ValueError):
            repulsive_loss(att_field, np.zeros((1, 3)))
        with pytest.raises(ValueError):
            attractive_loss(rep_field, np.zeros((1, 3)))


def test_save_field_roundtrip(tmp_path, rep_field):
    save_field(rep_field, tmp_path / "f.json", tmp_path / "f.raw")
    import json

    header = json.loads((tmp_path / "f.json").read_text())
    assert header["dims"] == list(rep_field.dims)
    assert header["kind"] == "repulsive"
    raw = np.fromfile(tmp_path / "f.raw", dtype="<f4").reshape(rep_field.dims)
    assert np.allclose(raw, rep_field.values, atol=1e-6)


def test_repulsive_gradient_chains_through_skinning(rep_field):
    """Capsule-in-sphere scene: d(L_rep)/d(rotations) via LBS matches FD."""
    from skinret.geometry import SkinnedMesh, lbs_graph
    from skinret.kinematics import Skeleton
    from skinret.synthetic import capsule
    from skinret import quat
    from skinret.fields import sample_var

    sk = Skeleton(("root", "LeftArm"), np.array([-1, 0]), np.array([[0.0, 0, 0], [0.3, 0, 0]]))
    verts, tris = capsule([0.3, 0.0, 0.0], [0.75, 0.0, 0.0], 0.06, segments=6, cap_rings=2)
    mesh = SkinnedMesh(verts, tris, [{1: 1.0}] * len(verts))

    def f(tape, q):
        deformed = lbs_graph(mesh, sk, quat.quat_normalize_var(q), np.zeros((1, 3)))
        return ad.mean(sample_var(rep_field, deformed[0]))

    q0 = np.stack([quat.IDENTITY, quat.from_axis_angle([0, 0, 1], 0.35)])[None]
    assert ad.gradcheck(f, [q0], eps=1e-6) < 5e-4


def test_backends_agree_when_compiled(sphere):
    from skinret import backend as bk
    from skinret import _kernels_np as np_impl

    if not bk.COMPILED:
        pytest.skip("compiled backend not built")
    v, f = sphere
    pts = RNG.normal(size=(200, 3)) * 1.2
    assert np.allclose(
        bk.point_mesh_distances(pts, v, f), np_impl.point_mesh_distances(pts, v, f), atol=1e-10
    )
    assert np.allclose(
        bk.winding_numbers(pts, v, f), np_impl.winding_numbers(pts, v, f), atol=1e-9
    )
    values = np.abs(RNG.normal(size=(4, 5, 6)))
    origin = np.array([-1.0, -1.0, -1.0])
    inner = RNG.uniform(0.1, 1.9, size=(100, 3)) + origin
    va, ga = bk.trilinear(values, origin, 1.0, inner)
    vb, gb = np_impl.trilinear(values, origin, 1.0, inner)
    assert np.allclose(va, vb, atol=1e-12)
    assert np.allclose(ga, gb, atol=1e-12)
