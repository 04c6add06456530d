import numpy as np
import pytest
from fastapi.testclient import TestClient

from skinret.io_formats import CharacterBundle
from skinret.networks import GateParams, ShapeAwareParams, TransformerLiteParams
from skinret.pipeline import RetargetRequest, retarget_frame
from skinret.service import AssetStore, create_app
from skinret.synthetic import build_family


@pytest.fixture(scope="module")
def store():
    fam = build_family("penetration_pair", n_frames=6)
    rng = np.random.default_rng(4)
    skel = TransformerLiteParams.init(22, rng)
    shape = ShapeAwareParams.init(fam.characters[0].skeleton, rng)
    gate = GateParams.init(22, rng)
    for params in (skel, shape, gate):
        for tensor in params.named_tensors().values():
            tensor += 0.1 * rng.normal(size=tensor.shape)
    bundles = {
        c.name: CharacterBundle(c.name, c.skeleton, c.mesh, c.phi.extents) for c in fam.characters
    }
    return AssetStore(bundles, {"arm_fold": fam.motions["arm_fold"]}, skel, shape, gate)


@pytest.fixture(scope="module")
def client(store):
    return TestClient(create_app(store))


def test_characters_endpoint(client, store):
    payload = client.get("/characters").json()
    assert [c["name"] for c in payload["characters"]] == ["bulky", "slim"]
    assert payload["motions"] == ["arm_fold"]
    assert payload["snapshot"] == store.snapshot


def test_sequence_returns_intermediates(client):
    payload = client.get("/sequence", params={"src": "slim", "tgt": "bulky", "motion": "arm_fold"}).json()
    assert payload["n_frames"] == 6
    frame = payload["frames"][2]
    for key in ("q_cp", "q_sem", "q_geo", "q_out", "w", "w_network", "positions_src", "positions_out", "penetrating"):
        assert key in frame
    assert len(frame["q_out"]) == 22
    norms = np.linalg.norm(np.array(frame["q_out"]), axis=-1)
    assert np.allclose(norms, 1.0, atol=1e-9)


def test_unknown_assets_404(client):
    assert client.get("/sequence", params={"src": "slim", "tgt": "nobody", "motion": "arm_fold"}).status_code == 404
    assert client.get("/mesh", params={"character": "nobody"}).status_code == 404


def test_mesh_endpoint(client):
    payload = client.get("/mesh", params={"character": "bulky"}).json()
    assert len(payload["vertices"]) == len(payload["part_labels"])
    assert set(payload["limb_sets"]) == {"left_arm", "right_arm", "left_leg", "right_leg"}


def test_rebalance_zero_override_returns_q_sem(client):
    seq = client.get("/sequence", params={"src": "slim", "tgt": "bulky", "motion": "arm_fold"}).json()
    body = {"src": "slim", "tgt": "bulky", "motion": "arm_fold", "w_override": [0.0] * 22}
    out = client.post("/rebalance", json=body).json()
    for frame, ref in zip(out["frames"], seq["frames"]):
        assert frame["q_out"] == ref["q_sem"]


def test_rebalance_scale_one_is_original(client):
    seq = client.get("/sequence", params={"src": "slim", "tgt": "bulky", "motion": "arm_fold"}).json()
    out = client.post(
        "/rebalance", json={"src": "slim", "tgt": "bulky", "motion": "arm_fold", "w_scale": 1.0}
    ).json()
    for frame, ref in zip(out["frames"], seq["frames"]):
        assert frame["q_out"] == ref["q_out"]


def test_rebalance_matches_offline_pipeline(client, store):
    """Service output is bit-identical to a recomputed retarget_frame."""
    rng = np.random.default_rng(0)
    fam_src = store.bundles["slim"]
    fam_tgt = store.bundles["bulky"]
    motion = store.motions["arm_fold"]
    from skinret.kinematics import MotionSequence
    from skinret.geometry import ShapeDescriptor

    w = rng.uniform(0, 1, 22)
    out = client.post(
        "/rebalance",
        json={"src": "slim", "tgt": "bulky", "motion": "arm_fold", "w_override": w.tolist()},
    ).json()
    request = RetargetRequest(
        MotionSequence(fam_src.skeleton, motion.rotations, motion.root, motion.fps),
        fam_src.skeleton,
        fam_tgt.skeleton,
        target_mesh=fam_tgt.mesh,
        target_phi=ShapeDescriptor(fam_tgt.phi),
        skeleton_params=store.skeleton_params,
        shape_params=store.shape_params,
        gate_params=store.gate_params,
        w_override=w,
    )
    for k in (0, 3, 5):
        offline = retarget_frame(request, k)
        assert np.array_equal(np.array(out["frames"][k]["q_out"]), offline.q_out)


def test_rebalance_validation_errors(client):
    base = {"src": "slim", "tgt": "bulky", "motion": "arm_fold"}
    assert client.post("/rebalance", json=base).status_code == 400
    assert client.post("/rebalance", json={**base, "w_scale": 1.0, "w_override": [0.0] * 22}).status_code == 400
    assert client.post("/rebalance", json={**base, "w_override": [0.5] * 3}).status_code == 400
    assert client.post("/rebalance", json={**base, "w_override": [1.5] * 22}).status_code == 400
    assert client.post("/rebalance", json={**base, "w_scale": 1.0, "frame_range": [4, 2]}).status_code == 400
    assert client.post("/rebalance", json={**base, "w_scale": 1.0, "snapshot": "stale"}).status_code == 400


def test_frame_range_rebalances_subset(client):
    out = client.post(
        "/rebalance",
        json={"src": "slim", "tgt": "bulky", "motion": "arm_fold", "w_scale": 0.0, "frame_range": [2, 4]},
    ).json()
    assert [f["frame"] for f in out["frames"]] == [2, 3]


def test_identical_requests_identical_bytes(client):
    params = {"src": "slim", "tgt": "bulky", "motion": "arm_fold"}
    a = client.get("/sequence", params=params)
    b = client.get("/sequence", params=params)
    assert a.content == b.content
    body = {"src": "slim", "tgt": "bulky", "motion": "arm_fold", "w_scale": 0.55}
    assert client.post("/rebalance", json=body).content == client.post("/rebalance", json=body).content
