"""Python smoke tests for the fdl extension module."""

import math
import os

import numpy as np
import pytest

import fdl


def test_pair_loss_identical_unit_vectors():
    v = np.array([1.0, 0.0])
    assert fdl.pair_loss(v, v) == pytest.approx(11.0, rel=1e-6)


def test_pair_loss_orthogonal():
    vi = np.array([1.0, 0.0])
    vj = np.array([0.0, 1.0])
    assert fdl.pair_loss(vi, vj) == pytest.approx(10.0 * math.exp(-2.0), rel=1e-9)


def test_pair_loss_kinds_and_bounds():
    rng = np.random.default_rng(0)
    for _ in range(50):
        vi = rng.uniform(0, 2, size=8)
        vj = rng.uniform(0, 2, size=8)
        cos = fdl.pair_loss(vi, vj, kind="cosine_only", alpha=1.0, beta=0.0)
        euc = fdl.pair_loss(vi, vj, kind="euclidean_only", alpha=0.0, beta=1.0)
        both = fdl.pair_loss(vi, vj)
        assert -1e-9 <= cos <= 1.0 + 1e-9
        assert 0.0 < euc <= 1.0
        assert 0.0 <= both <= 11.0


def test_aggregate_and_mask():
    maps = np.zeros((2, 2, 2))
    maps[:, :, 0] = [[1, 2], [3, 4]]
    maps[:, :, 1] = [[0, 1], [1, 0]]
    agg = fdl.aggregate(maps)
    assert agg.tolist() == [[1, 3], [4, 4]]
    masked, tau = fdl.mask(agg)
    assert tau == pytest.approx(3.0)
    assert masked.tolist() == [[0, 0], [4, 4]]
    vec, tau2 = fdl.represent(maps)
    assert vec.shape == (4,)
    assert tau2 == pytest.approx(3.0)


def test_mask_rejects_bad_rank():
    with pytest.raises(ValueError):
        fdl.mask(np.zeros((2, 2, 2)))


def test_overlap_identical_and_disjoint():
    rng = np.random.default_rng(1)
    a = rng.uniform(size=(4, 4))
    assert fdl.overlap([a, a]) == pytest.approx(1.0)
    b = np.zeros((4, 4))
    c = np.zeros((4, 4))
    b[0, :] = 1.0
    c[2, :] = 1.0
    assert fdl.overlap([b, c]) == pytest.approx(0.0)


def test_two_patch_shapes():
    ds = fdl.two_patch(10, 16, seed=3)
    assert len(ds["images"]) == 20
    assert ds["images"][0].shape == (16, 16, 1)
    assert len(ds["train_idx"]) == 12
    assert sorted(ds["labels"]) == [0] * 10 + [1] * 10


def test_cli_pipeline(tmp_path):
    cfg = tmp_path / "toy.cfg"
    out = tmp_path / "run"
    cfg.write_text(
        "dataset=two_patch\n"
        "two_patch_n=12\n"
        "two_patch_size=16\n"
        "arch=vgg_like\n"
        "width_scale=1/4\n"
        "m=2\n"
        "epochs=1\n"
        "batch_size=8\n"
        "learning_rate=0.003\n"
        "augmentation=none\n"
        f"out_dir={out}\n"
    )
    assert fdl.run_cli(["train", "--config", str(cfg)]) == 0
    assert (out / "ensemble.manifest").exists()
    assert (out / "metrics.log").read_text().startswith("epoch=1 ")

    model = fdl.Model.load(str(out / "model_0.ckpt"))
    assert model.input_shape == [16, 16, 1]
    ds = fdl.two_patch(12, 16, seed=0)
    image = ds["images"][0]
    cls, probs = model.predict(image)
    assert cls in (0, 1)
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)

    cam = model.cam(image, 1)
    assert cam.ndim == 2
    assert cam.min() >= 0.0
    assert cam.max() <= 1.0

    assert fdl.run_cli(["train"]) == 2  # missing --config


def test_run_cli_rejects_unknown_method(tmp_path):
    assert fdl.run_cli(["eval", "--manifest", str(tmp_path / "none.manifest"),
                        "--method", "hard_vote"]) == 1
