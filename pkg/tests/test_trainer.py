# -*- coding: utf-8 -*-
# Two-stage training tests
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
import inspect

import numpy as np
import pytest

from mkcnet.config import ModelConfig, TrainConfig
from mkcnet.dataset import Dataset, DatasetManifest, SampleRecord
from mkcnet.exception import AutodiffError, DataError, OracleError, StaleRecordError
from mkcnet.model import MKCModel
from mkcnet.params import GradientMap, ParamSet
from mkcnet.tensor import Tensor
from mkcnet.trainer import (constant_target, fd_meta_grad_oracle, fit, meta_gradient, meta_update, pseudo_update,
                            regulariser, sgd_step, task_step)

TINY = ModelConfig(image_size=8, backbone_channels=(4,), convs_per_block=1, meta_channels=(2,), reduction=2,
                   spatial_kernel=3)


def _dataset(n=12, seed=0, splits=None):
    rng = np.random.default_rng(seed)
    samples = [SampleRecord("s%02d" % i, i % 3, (i // 3) % 2, split=(splits[i] if splits else "train"))
               for i in range(n)]
    return Dataset(rng.normal(size=(n, 1, 8, 8)), DatasetManifest(3, 2, 8, samples))


def _batch(n=4, seed=0):
    dataset = _dataset(n, seed)
    return next(dataset.batches(n))


def test_sgd_step_with_weight_decay():
    params = ParamSet([("w", Tensor([1.0], requires_grad=True))])
    updated = sgd_step(params, GradientMap([("w", Tensor([0.0]))]), lr=0.01, weight_decay=0.0005)
    assert updated["w"].item() == pytest.approx(0.999995, abs=1e-12)
    assert updated["w"].requires_grad
    assert params["w"].item() == 1.0


def test_sgd_step_checks_alignment():
    params = ParamSet([("w", Tensor([1.0], requires_grad=True))])
    with pytest.raises(AutodiffError):
        sgd_step(params, GradientMap([("v", Tensor([0.0]))]), lr=0.1)


def test_regulariser_modes():
    y_omega = Tensor([[1.0, 0.0], [0.0, 1.0]])
    assert regulariser(y_omega, "batch").item() == pytest.approx(-np.log(2.0))
    assert regulariser(y_omega, "per_sample").item() == 0.0
    with pytest.raises(AutodiffError):
        regulariser(y_omega, "nope")


def test_task_step_keeps_the_meta_learner_constant():
    model = MKCModel(TINY, TrainConfig())
    theta, phi = model.init_params(0)
    batch = _batch()
    before = phi.flatten()
    new_theta, losses = task_step(model, theta, phi, batch)
    assert losses.is_finite()
    assert losses.total.item() == pytest.approx(losses.l_d.item() + losses.l_q.item() + losses.l_omega.item())
    assert not np.array_equal(new_theta.flatten(), theta.flatten())
    assert np.array_equal(phi.flatten(), before)
    target, masks = constant_target(model, phi, batch)
    assert not target.requires_grad
    np.testing.assert_allclose(target.data.sum(axis=1), np.ones(4))
    assert np.all(target.data[masks == 0.0] == 0.0)


def test_task_step_without_meta_learner():
    model = MKCModel(TINY, TrainConfig(no_meta=True))
    theta, phi = model.init_params(0)
    assert constant_target(model, phi, _batch()) == (None, None)
    _, losses = task_step(model, theta, phi, _batch())
    assert losses.l_omega.item() == 0.0


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_meta_gradient_matches_finite_differences(seed):
    model = MKCModel(TINY, TrainConfig(alpha=0.1, lambda_reg=0.2))
    theta, phi = model.init_params(seed)
    batch = _batch(8, seed=seed)
    pseudo = pseudo_update(model, theta, phi, batch)
    exact = meta_gradient(model, pseudo).flatten()
    oracle = fd_meta_grad_oracle(model, phi, theta, batch).flatten()
    cosine = exact @ oracle / (np.linalg.norm(exact) * np.linalg.norm(oracle))
    assert cosine >= 0.999
    assert np.linalg.norm(exact - oracle) / np.linalg.norm(oracle) <= 1e-3


def test_oracle_step():
    assert inspect.signature(fd_meta_grad_oracle).parameters["h"].default == 1e-4


def test_regulariser_alone_lowers_the_negative_entropy():
    # alpha = 0: the pseudo step is the identity, only the regulariser moves phi
    model = MKCModel(TINY, TrainConfig(alpha=0.0))
    theta, phi = model.init_params(0)
    batch = _batch(8)
    values = []
    for _ in range(50):
        y_omega, _ = constant_target(model, phi, batch)
        values.append(regulariser(y_omega).item())
        phi = meta_update(model, phi, theta, batch, pseudo_update(model, theta, phi, batch))
    steps = np.diff(values)
    assert np.mean(steps <= 1e-12) >= 0.9
    assert values[-1] < values[0]


def test_meta_gradient_without_inner_step_or_regulariser_is_zero():
    model = MKCModel(TINY, TrainConfig(alpha=0.0, lambda_reg=0.0))
    theta, phi = model.init_params(0)
    batch = _batch()
    grads = meta_gradient(model, pseudo_update(model, theta, phi, batch))
    assert list(grads) == list(phi)
    assert not grads.flatten().any()


def test_pseudo_update_leaves_theta_alone():
    model = MKCModel(TINY, TrainConfig(alpha=0.5))
    theta, phi = model.init_params(0)
    before = theta.flatten()
    pseudo = pseudo_update(model, theta, phi, _batch())
    assert np.array_equal(theta.flatten(), before)
    assert not np.array_equal(pseudo.theta_tilde.flatten(), before)


def test_meta_update_needs_its_pseudo_update():
    model = MKCModel(TINY, TrainConfig())
    theta, phi = model.init_params(0)
    batch, other = _batch(seed=0), _batch(seed=1)
    with pytest.raises(StaleRecordError):
        meta_update(model, phi, theta, batch, None)
    pseudo = pseudo_update(model, theta, phi, batch)
    with pytest.raises(StaleRecordError):
        meta_update(model, phi, theta, other, pseudo)
    new_phi = meta_update(model, phi, theta, batch, pseudo)
    assert list(new_phi) == list(phi)
    try:
        meta_update(model, phi, theta, batch, pseudo)
        assert False, 'Pseudo update used twice'
    except StaleRecordError:
        pass


def test_pseudo_update_needs_a_meta_learner():
    model = MKCModel(TINY, TrainConfig(no_meta=True))
    theta, phi = model.init_params(0)
    with pytest.raises(AutodiffError):
        pseudo_update(model, theta, phi, _batch())


def test_oracle_refuses_large_meta_learners():
    model = MKCModel(TINY.model_copy(update={"meta_channels": (8, 16)}), TrainConfig())
    theta, phi = model.init_params(0)
    assert phi.num_parameters() > 1000
    with pytest.raises(OracleError):
        fd_meta_grad_oracle(model, phi, theta, _batch())


def test_fit_without_epochs_returns_the_initial_parameters():
    model = MKCModel(TINY, TrainConfig(epochs=0, seed=4))
    theta, phi, report = fit(model, _dataset())
    initial_theta, initial_phi = model.init_params(4)
    assert np.array_equal(theta.flatten(), initial_theta.flatten())
    assert np.array_equal(phi.flatten(), initial_phi.flatten())
    assert report.history == [] and report.steps == 0 and report.best_epoch is None
    assert "wall_clock_s" not in report.to_json()
    assert "wall_clock_s" in report.to_json(include_timing=True)


def test_fit_runs_both_stages():
    model = MKCModel(TINY, TrainConfig(epochs=2, batch_size=4, seed=1))
    splits = ["train"] * 8 + ["val"] * 4
    dataset = _dataset(12, splits=splits)
    seen = []
    theta, phi, report = fit(model, dataset.split("train"), dataset.split("val"),
                             on_epoch=lambda epoch, t, p, record: seen.append((epoch, record.total)),
                             config_echo={"name": "tiny"})
    initial_theta, initial_phi = model.init_params(1)
    assert [epoch for epoch, _ in seen] == [1, 2]
    assert report.steps == 4
    assert report.config == {"name": "tiny"}
    assert report.best_epoch in (1, 2)
    record = report.history[-1]
    assert record.meta_objective is not None and np.isfinite(record.meta_objective)
    assert record.total == pytest.approx(record.l_d + record.l_q + record.l_omega)
    assert set(record.val) == {"all", "hq", "lq"}
    assert 1 <= record.codes_seen <= 6
    assert not np.array_equal(theta.flatten(), initial_theta.flatten())
    assert not np.array_equal(phi.flatten(), initial_phi.flatten())


def test_fit_is_deterministic():
    model = MKCModel(TINY, TrainConfig(epochs=1, batch_size=4, seed=2))
    first = fit(model, _dataset(8))
    second = fit(model, _dataset(8))
    assert np.array_equal(first[0].flatten(), second[0].flatten())
    assert np.array_equal(first[1].flatten(), second[1].flatten())
    assert first[2].to_json() == second[2].to_json()


def test_vanilla_fit_has_no_meta_objective():
    model = MKCModel(TINY.model_copy(update={"kind": "vanilla"}), TrainConfig(epochs=1, batch_size=6))
    _, phi, report = fit(model, _dataset())
    assert not phi
    assert report.history[0].meta_objective is None
    assert report.history[0].l_omega == 0.0


def test_fit_refuses_an_empty_set():
    model = MKCModel(TINY, TrainConfig(epochs=1))
    with pytest.raises(DataError):
        fit(model, _dataset().subset([]))
