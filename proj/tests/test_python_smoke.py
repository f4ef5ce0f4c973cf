"""Smoke tests for the _dlaseg extension module."""

import numpy as np
import pytest

import _dlaseg as m


def softmax_channels(logits):
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def test_materialize_dla_pattern():
    params = np.arange(1, 13, dtype=np.float64).reshape(1, 2, 6)
    dense = m.materialize_dla(params)
    assert dense.shape == (1, 2, 3, 3)
    for c in range(2):
        a11, a22, a33, b13, b22, b31 = params[0, c]
        k = dense[0, c]
        assert k[0, 0] == a11 and k[2, 2] == a33
        assert k[0, 2] == b13 and k[2, 0] == b31
        assert k[1, 1] == a22 + b22
        # everything off the two diagonals is exactly zero
        assert k[0, 1] == 0 and k[1, 0] == 0 and k[1, 2] == 0 and k[2, 1] == 0


def test_conv2d_matches_numpy_oracle():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 3, 6, 6))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    y = m.conv2d(x, w, b, pad=1, stride=1)
    assert y.shape == (2, 4, 6, 6)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    want = np.einsum("nchw,dc->ndhw", np.zeros_like(x), np.zeros((4, 3)))
    want = np.zeros((2, 4, 6, 6))
    for dy in range(3):
        for dx in range(3):
            want += np.einsum("ncij,dc->ndij", xp[:, :, dy:dy + 6, dx:dx + 6], w[:, :, dy, dx])
    want += b[None, :, None, None]
    np.testing.assert_allclose(y, want, atol=1e-12)


def test_fold_batchnorm_equivalence():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 2, 5, 5))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    mean = rng.normal(size=3)
    std = rng.uniform(0.5, 2.0, size=3)
    scale = rng.uniform(0.5, 2.0, size=3)
    shift = rng.normal(size=3)
    fw, fb = m.fold_batchnorm(w, b, mean, std, scale, shift)
    folded = m.conv2d(x, fw, fb)
    unfolded = (m.conv2d(x, w, b) - mean[None, :, None, None]) / (
        std[None, :, None, None] + 1e-5
    ) * scale[None, :, None, None] + shift[None, :, None, None]
    np.testing.assert_allclose(folded, unfolded, atol=1e-10)


def test_apply_patch_noise_keeps_simplex():
    rng = np.random.default_rng(2)
    probs = softmax_channels(rng.normal(size=(1, 4, 16, 16)))
    noisy = m.apply_patch_noise(probs, patch_size=4, seed=7)
    assert noisy.min() >= 0.0 and noisy.max() <= 1.0
    np.testing.assert_allclose(noisy.sum(axis=1), 1.0, atol=1e-12)
    # deterministic in the seed
    again = m.apply_patch_noise(probs, patch_size=4, seed=7)
    np.testing.assert_array_equal(noisy, again)


def test_loss_seg_uniform_prediction():
    probs = np.full((1, 4, 2, 2), 0.25)
    one_hot = np.zeros((1, 4, 2, 2))
    one_hot[0, 0] = 1.0
    assert m.loss_seg(probs, one_hot) == pytest.approx(np.log(4.0), abs=1e-10)


def test_generate_floorplan_and_metrics():
    image, boundary, room = m.generate_floorplan(64, 64, seed=3)
    assert image.shape == (3, 64, 64)
    assert boundary.shape == (64, 64) and room.shape == (64, 64)
    assert boundary.max() < m.BOUNDARY_CLASSES
    assert room.max() < m.ROOM_CLASSES
    # identical prediction scores perfectly
    res = m.segmentation_metrics(boundary, boundary, m.BOUNDARY_CLASSES)
    assert res["overall_accuracy"] == 1.0
    assert res["mean_iou"] == 1.0
    # determinism
    image2, boundary2, room2 = m.generate_floorplan(64, 64, seed=3)
    np.testing.assert_array_equal(image, image2)
    np.testing.assert_array_equal(boundary, boundary2)


def test_one_hot_round_trip():
    _, boundary, _ = m.generate_floorplan(64, 64, seed=4)
    oh = m.one_hot(boundary, m.BOUNDARY_CLASSES)
    assert oh.shape == (m.BOUNDARY_CLASSES, 64, 64)
    np.testing.assert_allclose(oh.sum(axis=0), 1.0)
    np.testing.assert_array_equal(oh.argmax(axis=0).astype(np.uint8), boundary)
