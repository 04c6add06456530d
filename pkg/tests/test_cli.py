import json

import numpy as np
import pytest

from skinret.cli import main


@pytest.fixture(scope="module")
def assets(tmp_path_factory):
    out = tmp_path_factory.mktemp("assets")
    assert main(["assets", "--preset", "arm_fold_pair", "--out", str(out), "--frames", "8"]) == 0
    return out


def test_assets_layout(assets):
    assert (assets / "characters" / "shortarms" / "bundle.json").exists()
    assert (assets / "characters" / "longarms" / "mesh.obj").exists()
    assert (assets / "motions" / "arm_fold.json").exists()


def test_retarget_eval_trace_voxelize(assets, tmp_path):
    src = assets / "characters" / "shortarms" / "bundle.json"
    tgt = assets / "characters" / "longarms" / "bundle.json"
    motion = assets / "motions" / "arm_fold.json"
    out_motion = tmp_path / "out.json"
    assert main([
        "retarget", "--source-bundle", str(src), "--target-bundle", str(tgt),
        "--motion", str(motion), "--output", str(out_motion),
    ]) == 0
    assert out_motion.exists()

    report = tmp_path / "report.json"
    assert main([
        "eval", "--result", str(out_motion), "--target-bundle", str(tgt), "--output", str(report),
    ]) == 0
    data = json.loads(report.read_text())
    assert 0.0 <= data["penetration_rate"] <= 100.0

    trace = tmp_path / "trace.csv"
    assert main([
        "trace", "--motion", str(out_motion), "--bundle", str(tgt),
        "--joint", "LeftHand", "--output", str(trace),
    ]) == 0
    lines = trace.read_text().strip().splitlines()
    assert lines[0] == "frame,height"
    assert len(lines) == 9

    field = tmp_path / "field"
    assert main([
        "voxelize", "--bundle", str(tgt), "--kind", "repulsive",
        "--spacing", "0.05", "--truncation", "0.3", "--output", str(field),
    ]) == 0
    header = json.loads((tmp_path / "field.json").read_text())
    raw = np.fromfile(tmp_path / "field.raw", dtype="<f4")
    assert raw.size == int(np.prod(header["dims"]))
    assert header["kind"] == "repulsive"


def test_w_override_roundtrip(assets, tmp_path):
    src = assets / "characters" / "shortarms" / "bundle.json"
    tgt = assets / "characters" / "longarms" / "bundle.json"
    motion = assets / "motions" / "arm_fold.json"
    out = tmp_path / "o.json"
    override = ",".join(["0.0"] * 22)
    assert main([
        "retarget", "--source-bundle", str(src), "--target-bundle", str(tgt),
        "--motion", str(motion), "--w-override", override, "--output", str(out),
    ]) == 0


def test_train_stage1_writes_checkpoint(assets, tmp_path):
    out_dir = tmp_path / "run"
    assert main([
        "train", "stage1", "--family", "arm_fold_pair", "--frames", "8",
        "--iterations", "3", "--batch-size", "2", "--window", "2",
        "--out-dir", str(out_dir),
    ]) == 0
    assert (out_dir / "stage1.ckpt").exists()
    assert (out_dir / "stage1_loss.csv").exists()


def test_bad_input_exits_nonzero(tmp_path):
    assert main(["retarget", "--source-bundle", "missing.json", "--target-bundle", "x",
                 "--motion", "y", "--output", str(tmp_path / "o.json")]) == 1
