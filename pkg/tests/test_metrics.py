# -*- coding: utf-8 -*-
# Metric tests
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
import numpy as np
import pytest

from mkcnet.config import ModelConfig, TrainConfig
from mkcnet.dataset import Dataset, DatasetManifest, SampleRecord
from mkcnet.metrics import (MetricError, accuracy, auc_macro_ovr, auc_per_class, binary_auc, evaluate, f1_macro,
                            metrics_bundle, predict)
from mkcnet.model import MKCModel


def test_binary_auc():
    scores = np.array([0.1, 0.4, 0.35, 0.8])
    labels = np.array([0, 0, 1, 1])
    assert binary_auc(scores, labels == 1) == 0.75
    assert auc_macro_ovr(scores, labels) == 0.75


def test_auc_ties_count_half():
    assert binary_auc(np.full(4, 0.5), np.array([True, False, True, False])) == 0.5


def test_auc_perfect_and_reversed():
    labels = np.array([0, 1, 2, 0, 1, 2])
    perfect = np.eye(3)[labels]
    assert auc_macro_ovr(perfect, labels) == 1.0
    assert auc_macro_ovr(1.0 - perfect, labels) == 0.0


def test_auc_skips_absent_classes(caplog):
    scores = np.array([[0.8, 0.1, 0.1], [0.2, 0.7, 0.1], [0.6, 0.3, 0.1], [0.1, 0.8, 0.1]])
    labels = np.array([0, 1, 0, 1])
    per_class = auc_per_class(scores, labels)
    assert per_class[2] is None
    assert auc_macro_ovr(scores, labels) == 1.0
    assert "without positives" in caplog.text


def test_auc_needs_two_classes():
    with pytest.raises(MetricError):
        auc_macro_ovr(np.eye(3), np.zeros(3))
    with pytest.raises(MetricError):
        binary_auc(np.ones(3), np.ones(3, dtype=bool))


def test_accuracy_and_f1():
    labels = np.array([0, 1, 2])
    zeros = np.zeros(3, dtype=np.int64)
    assert accuracy(zeros, labels) == pytest.approx(1.0 / 3.0)
    assert f1_macro(zeros, labels) == pytest.approx(1.0 / 6.0)
    assert f1_macro(labels, labels) == 1.0
    with pytest.raises(MetricError):
        accuracy(np.zeros(0), np.zeros(0))


@pytest.mark.parametrize("transform", [np.exp, lambda s: s ** 3, lambda s: 2.0 * s - 7.0, np.arctan])
def test_auc_ignores_monotone_transforms(transform):
    rng = np.random.default_rng(8)
    labels = rng.integers(0, 3, 60)
    scores = rng.normal(size=(60, 3)) + np.eye(3)[labels]
    assert auc_macro_ovr(transform(scores), labels) == pytest.approx(auc_macro_ovr(scores, labels), abs=1e-12)
    assert binary_auc(transform(scores[:, 0]), labels == 0) == \
        pytest.approx(binary_auc(scores[:, 0], labels == 0), abs=1e-12)


def test_metrics_ignore_a_relabelling():
    rng = np.random.default_rng(9)
    labels = rng.integers(0, 3, 50)
    predictions = np.where(rng.random(50) < 0.7, labels, rng.integers(0, 3, 50))
    scores = rng.random((50, 3)) + np.eye(3)[labels]
    for permutation in ([1, 2, 0], [2, 1, 0], [0, 2, 1]):
        relabel = np.array(permutation)
        assert accuracy(relabel[predictions], relabel[labels]) == accuracy(predictions, labels)
        assert f1_macro(relabel[predictions], relabel[labels]) == pytest.approx(f1_macro(predictions, labels))
        columns = np.empty((50, 3))
        columns[:, relabel] = scores
        assert auc_macro_ovr(columns, relabel[labels]) == pytest.approx(auc_macro_ovr(scores, labels))


def test_f1_counts_predicted_only_classes():
    # class 2 is predicted but absent: it counts with F1 = 0
    assert f1_macro(np.array([0, 2]), np.array([0, 0])) == pytest.approx((2.0 / 3.0) / 2.0)


def test_metrics_bundle():
    scores = np.array([[0.7, 0.2, 0.1], [0.1, 0.6, 0.3], [0.2, 0.2, 0.6], [0.5, 0.3, 0.2]])
    labels = np.array([0, 1, 2, 1])
    bundle = metrics_bundle(scores, labels, "lq")
    assert bundle.subset == "lq" and bundle.n == 4
    assert bundle.accuracy == 0.75
    assert bundle.per_class["1"]["support"] == 2
    assert bundle.per_class["0"]["recall"] == 1.0
    assert bundle.skipped_classes == []
    values = bundle.to_json()
    assert set(values) == {"subset", "n", "auc_macro_ovr", "accuracy", "f1_macro", "per_class", "skipped_classes"}


def test_metrics_bundle_of_nothing():
    bundle = metrics_bundle(np.zeros((0, 3)), np.zeros(0), "hq")
    assert (bundle.n, bundle.auc_macro_ovr, bundle.accuracy, bundle.f1_macro) == (0, None, None, None)


def test_evaluate_reports_each_quality_subset():
    config = ModelConfig(image_size=8, backbone_channels=(4,), convs_per_block=1, meta_channels=(2,),
                         reduction=2, spatial_kernel=3)
    model = MKCModel(config, TrainConfig())
    theta, _ = model.init_params(0)
    samples = [SampleRecord("s%d" % i, i % 3, int(i >= 4)) for i in range(7)]
    dataset = Dataset(np.random.default_rng(0).normal(size=(7, 1, 8, 8)), DatasetManifest(3, 2, 8, samples))
    scores = predict(model, theta, dataset, batch_size=3)
    assert scores.shape == (7, 3)
    np.testing.assert_allclose(scores.sum(axis=1), np.ones(7))
    bundles = evaluate(model, theta, dataset, batch_size=3)
    assert [bundles[name].n for name in ("all", "hq", "lq")] == [7, 4, 3]
    assert bundles["all"].auc_macro_ovr is not None
