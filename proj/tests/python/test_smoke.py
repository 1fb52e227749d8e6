# Copyright 2026 The DMKD Workbench Authors
# SPDX-License-Identifier: Apache-2.0
import numpy as np
import pytest

import dmkd


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@pytest.fixture
def teacher():
    return np.random.default_rng(0).uniform(-1.0, 1.0, size=(4, 5, 6))


def test_attention_matches_numpy(teacher):
    c, h, w = teacher.shape
    t = 0.5
    spatial = sigmoid((teacher**2).sum(axis=0) / (c * t))
    channel = sigmoid(teacher.sum(axis=(1, 2)) / (h * w * t))
    np.testing.assert_allclose(dmkd.spatial_attention(teacher, t).reshape(h, w), spatial, rtol=0, atol=1e-15)
    np.testing.assert_allclose(dmkd.channel_attention(teacher, t).reshape(c), channel, rtol=0, atol=1e-15)


def test_masks_are_inclusive_thresholds(teacher):
    attn = np.array([[0.2, 0.55], [0.56, 0.9]])
    np.testing.assert_array_equal(dmkd.threshold_mask(attn, 0.55), [[1.0, 0.0], [0.0, 0.0]])
    ms, mc = dmkd.make_masks(teacher)
    assert set(np.unique(ms)) <= {0.0, 1.0}
    assert set(np.unique(mc)) <= {0.0, 1.0}
    assert dmkd.mask_ratio(np.array([0.0, 1.0, 0.0, 0.0])) == 0.75


def test_errors_map_to_python(teacher):
    with pytest.raises(dmkd.NonPositiveTemperature):
        dmkd.spatial_attention(teacher, 0.0)
    with pytest.raises(dmkd.ThresholdOutOfRange):
        dmkd.threshold_mask(np.zeros(3), 1.0)
    with pytest.raises(dmkd.NonBinaryInput):
        dmkd.mask_ratio(np.array([0.5]))
    with pytest.raises(dmkd.ConfigError):
        dmkd.DistillConfig().variant = "sideways"
    assert issubclass(dmkd.ShapeMismatch, dmkd.Error)


def test_conv2d_identity_kernel():
    x = np.random.default_rng(1).normal(size=(1, 2, 4, 4))
    w = np.zeros((2, 2, 3, 3))
    w[0, 0, 1, 1] = w[1, 1, 1, 1] = 1.0
    np.testing.assert_array_equal(dmkd.conv2d(x, w), x)


def test_dmkd_forward_gradients(teacher):
    student = np.random.default_rng(2).uniform(-1.0, 1.0, size=(3, 5, 6))
    head = dmkd.DistillHead(3, 4, seed=5)
    cfg = dmkd.DistillConfig()
    out = dmkd.dmkd_forward(student, teacher, head, cfg)
    assert out["reconstruction"].shape == teacher.shape
    np.testing.assert_allclose(out["loss"], ((out["reconstruction"] - teacher) ** 2).sum(), rtol=1e-12)
    assert out["student_grad"].shape == student.shape
    assert np.abs(out["student_grad"]).sum() > 0

    # Central difference on one student entry.
    eps = 1e-6
    idx = (1, 2, 3)
    plus, minus = student.copy(), student.copy()
    plus[idx] += eps
    minus[idx] -= eps
    numeric = (dmkd.dmkd_forward(plus, teacher, head, cfg)["loss"]
               - dmkd.dmkd_forward(minus, teacher, head, cfg)["loss"]) / (2 * eps)
    assert out["student_grad"][idx] == pytest.approx(numeric, rel=1e-5, abs=1e-8)


def test_dual_reduces_to_spatial_only(teacher):
    student = np.random.default_rng(3).uniform(-1.0, 1.0, size=(4, 5, 6))
    head = dmkd.DistillHead(4, 4, seed=1)
    head.alpha, head.beta = 1.0, 0.0
    dual = dmkd.DistillConfig()
    spatial = dmkd.DistillConfig()
    spatial.variant = "spatial-only"
    a = dmkd.dmkd_forward(student, teacher, head, dual)
    b = dmkd.dmkd_forward(student, teacher, head, spatial)
    assert a["loss"] == b["loss"]


def test_dataset_and_variants():
    ds = dmkd.generate_dataset(0, 30, 9)
    assert ds["train_images"].shape == (30, 1, 16, 16)
    assert np.bincount(ds["train_labels"]).tolist() == [10, 10, 10]
    assert "dual" in dmkd.variants()
    assert all(r["passed"] for r in dmkd.gradcheck([0]))
