import json
import os
import subprocess

import numpy as np
import pytest

import fracsynth as fs


def test_version():
    assert fs.__version__.count(".") == 2


def test_thickness_endpoints():
    assert fs.thickness(0.0) == pytest.approx(0.01)
    assert fs.thickness(100.0) == pytest.approx(0.10)
    assert fs.thickness(50.0, 0.02, 0.04) == pytest.approx(0.03)
    with pytest.raises(fs.ValidationError):
        fs.thickness(1.0, 0.2, 0.1)


def test_metrics_match_numpy():
    rng = np.random.default_rng(0)
    pred = np.where(rng.random((32, 32)) < 0.3, 0, 255).astype(np.uint8)
    label = np.where(rng.random((32, 32)) < 0.2, 0, 255).astype(np.uint8)
    c = fs.confusion(pred, label)
    tp = int(np.sum((pred == 0) & (label == 0)))
    fp = int(np.sum((pred == 0) & (label == 255)))
    fn = int(np.sum((pred == 255) & (label == 0)))
    assert (c["tp"], c["fp"], c["fn"], c["tn"]) == (tp, fp, fn, 1024 - tp - fp - fn)
    m = fs.metrics(pred, label)
    assert m["dice"] == pytest.approx(2 * tp / (2 * tp + fp + fn))
    assert m["iou"] == pytest.approx(tp / (tp + fp + fn))
    with pytest.raises(ValueError):
        fs.confusion(pred, label[:16])


def test_binarize_threshold_convention():
    prob = np.array([[0.0, 0.49], [0.5, 1.0]])
    out = fs.binarize(prob)
    assert out.dtype == np.uint8
    assert out.tolist() == [[255, 255], [0, 0]]


def test_topology_fixtures():
    x = fs.topology([[(-1, 0), (1, 0)], [(0, -1), (0, 1)]])
    assert (x["n_i"], x["n_x"], x["n_y"], x["c_l"]) == (4, 1, 0, 1.0)
    t = fs.topology([[(-1, 0), (1, 0)], [(0, 0), (0, 1)]])
    assert (t["n_i"], t["n_y"], t["c_l"]) == (3, 1, 1.0)


def test_blocks():
    a = fs.sample_blocks(64, 3)
    assert a.shape == (64, 6)
    assert np.all(np.diff(a[:, :3], axis=1) >= 0)
    assert np.array_equal(a, fs.sample_blocks(64, 3))
    assert fs.classify_block((1, 1, 1)) == ("Equidimensional", "Cubic")
    assert fs.classify_block((1, 1, 5))[0] == "Long"


def test_png_round_trip(tmp_path):
    rgb = (np.arange(4 * 5 * 3) % 256).astype(np.uint8).reshape(4, 5, 3)
    fs.write_png(str(tmp_path / "a.png"), rgb)
    assert np.array_equal(fs.read_png(str(tmp_path / "a.png")), rgb)


def test_run_cli_in_process(tmp_path):
    code, out, err = fs.run_cli(["blocks", "sample", "--n", "16", "--seed", "4", "--out", str(tmp_path)])
    assert code == 0, err
    rows = (tmp_path / "blocks.csv").read_text().strip().splitlines()
    assert len(rows) == 17
    code, _, err = fs.run_cli(["nonsense"])
    assert code == 64


@pytest.mark.skipif("FRACSYNTH_CLI" not in os.environ, reason="CLI path not provided")
def test_cli_binary_error_report(tmp_path):
    res = subprocess.run(
        [os.environ["FRACSYNTH_CLI"], "render", "--mesh", "m.obj", "--traces", "t.jsonl", "--poses", "0",
         "--seed", "1", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert res.returncode == 2
    report = json.loads(res.stderr)
    assert report["kind"] == "validation"
