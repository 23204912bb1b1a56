# -*- coding: utf-8 -*-
# Attention block tests
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
import numpy as np
import pytest
from scipy.special import expit

from mkcnet.attention import (fc_block_forward, gab_forward, init_fc_block, init_gab, init_mab, mab_forward,
                              spatial_kernel_for)
from mkcnet.exception import ShapeError
from mkcnet.params import ParamSet
from mkcnet.tensor import Tensor


def _correlate_same(x, weight, bias):
    # x (N, C, H, W), weight (1, C, k, k)
    kernel = weight.shape[2]
    pad = kernel // 2
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    n, _, h, w = x.shape
    out = np.zeros((n, 1, h, w))
    for i in range(h):
        for j in range(w):
            out[:, 0, i, j] = np.sum(padded[:, :, i:i + kernel, j:j + kernel] * weight[0], axis=(1, 2, 3))
    return out + bias[0]


def _gab_reference(fm, p):
    def mlp(v):
        return np.maximum(v @ p["g.fc1.weight"].data + p["g.fc1.bias"].data, 0.0) \
            @ p["g.fc2.weight"].data + p["g.fc2.bias"].data

    attention = expit(mlp(fm.mean(axis=(2, 3))) + mlp(fm.max(axis=(2, 3))))
    refined = fm * attention[:, :, None, None]
    descriptor = np.concatenate([refined.mean(axis=1, keepdims=True), refined.max(axis=1, keepdims=True)], axis=1)
    spatial = expit(_correlate_same(descriptor, p["g.spatial.weight"].data, p["g.spatial.bias"].data))
    return refined * spatial


def test_gab_matches_reference():
    rng = np.random.default_rng(0)
    params = ParamSet()
    init_gab(rng, params, "g", 4, 2, 3)
    params["g.spatial.bias"] = Tensor([0.3], requires_grad=True)
    feature_map = rng.normal(size=(2, 4, 5, 5))
    out = gab_forward(Tensor(feature_map), params, "g")
    assert out.shape == feature_map.shape
    np.testing.assert_allclose(out.data, _gab_reference(feature_map, params), rtol=1e-10, atol=1e-12)


def test_gab_parameter_names():
    params = ParamSet()
    init_gab(np.random.default_rng(0), params, "gab_q", 8, 4, 7)
    assert list(params) == ["gab_q.fc1.weight", "gab_q.fc1.bias", "gab_q.fc2.weight", "gab_q.fc2.bias",
                            "gab_q.spatial.weight", "gab_q.spatial.bias"]
    assert params["gab_q.fc1.weight"].shape == (8, 2)
    assert params["gab_q.spatial.weight"].shape == (1, 2, 7, 7)


def test_gab_reduction_must_divide():
    with pytest.raises(ShapeError):
        init_gab(np.random.default_rng(0), ParamSet(), "g", 6, 4, 3)


def test_gab_channel_mismatch():
    params = ParamSet()
    init_gab(np.random.default_rng(0), params, "g", 4, 2, 3)
    with pytest.raises(ShapeError):
        gab_forward(Tensor(np.ones((1, 8, 3, 3))), params, "g")


def test_spatial_kernel_shrinks_on_small_maps():
    assert spatial_kernel_for(8, 7) == 7
    assert spatial_kernel_for(4, 7) == 3
    assert spatial_kernel_for(2, 1) == 1


def test_mab_without_auxiliary_feature():
    rng = np.random.default_rng(1)
    params = ParamSet()
    init_mab(rng, params, "mab", 4, 2, 3)
    f_d = rng.normal(size=(2, 4))
    out = mab_forward(Tensor(f_d), Tensor(np.zeros((2, 4))), params, "mab")
    head = params["mab.head.weight"].data
    assert head.shape == (8, 3)
    expected = f_d @ head[:4] + params["mab.head.bias"].data
    np.testing.assert_allclose(out.logits.data, expected, atol=1e-12)
    assert out.f_d_star.shape == (2, 8)
    assert np.all(out.f_d_star.data[:, 4:] == 0.0)
    assert np.all((out.gate.data > 0.0) & (out.gate.data < 1.0))


def test_mab_gate_filters_the_auxiliary_feature():
    rng = np.random.default_rng(2)
    params = ParamSet()
    init_mab(rng, params, "mab", 4, 2, 3)
    f_d, f_omega = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    out = mab_forward(Tensor(f_d), Tensor(f_omega), params, "mab")
    np.testing.assert_allclose(out.f_d_star.data[:, :4], f_d)
    np.testing.assert_allclose(out.f_d_star.data[:, 4:], f_omega * out.gate.data)


def test_mab_concatenation_mode():
    rng = np.random.default_rng(3)
    params = ParamSet()
    init_mab(rng, params, "mab", 4, 2, 3, gated=False)
    assert "mab.gate1.weight" not in params
    f_d, f_omega = rng.normal(size=(2, 4)), rng.normal(size=(2, 4))
    out = mab_forward(Tensor(f_d), Tensor(f_omega), params, "mab")
    assert out.gate is None
    np.testing.assert_allclose(out.f_d_star.data, np.concatenate([f_d, f_omega], axis=1))


def test_mab_width_mismatch():
    params = ParamSet()
    init_mab(np.random.default_rng(0), params, "mab", 4, 2, 3)
    with pytest.raises(ShapeError):
        mab_forward(Tensor(np.ones((2, 4))), Tensor(np.ones((2, 3))), params, "mab")


def test_fc_block_keeps_the_shape():
    params = ParamSet()
    init_fc_block(np.random.default_rng(0), params, "dense_q", 4)
    out = fc_block_forward(Tensor(np.random.default_rng(1).normal(size=(2, 4, 3, 3))), params, "dense_q")
    assert out.shape == (2, 4, 3, 3)
    assert np.all(out.data >= 0.0)
