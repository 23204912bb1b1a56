# -*- coding: utf-8 -*-
# Analysis export tests
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
import json

import numpy as np
import pytest
from PIL import Image

from mkcnet.analysis import (CosineMatrix, class_activation_maps, cosine_matrix, export_activation_maps,
                             export_features, grad_cosine_matrix, median_matrix, normalize_map, upsample_nearest,
                             write_pgm)
from mkcnet.config import ModelConfig, TrainConfig
from mkcnet.dataset import Dataset, DatasetManifest, SampleRecord
from mkcnet.exception import MkcException
from mkcnet.model import MKCModel

TINY = ModelConfig(image_size=8, backbone_channels=(4,), convs_per_block=1, meta_channels=(2,), reduction=2,
                   spatial_kernel=3)


def _dataset(n=5):
    samples = [SampleRecord("s%d" % i, i % 3, i % 2) for i in range(n)]
    return Dataset(np.random.default_rng(0).normal(size=(n, 1, 8, 8)), DatasetManifest(3, 2, 8, samples))


def _model(config=TINY, **train):
    model = MKCModel(config, TrainConfig(**train))
    theta, phi = model.init_params(0)
    return model, theta, phi


def test_cosine_matrix():
    matrix = cosine_matrix({"a": np.array([1.0, 0.0]), "b": np.array([1.0, 1.0]), "c": np.array([-2.0, 0.0])})
    assert matrix.get("a", "a") == pytest.approx(1.0)
    assert matrix.get("a", "b") == pytest.approx(np.sqrt(0.5))
    assert matrix.get("b", "a") == matrix.get("a", "b")
    assert matrix.get("a", "c") == pytest.approx(-1.0)


def test_cosine_matrix_is_exact_on_the_diagonal_and_bounded():
    rng = np.random.default_rng(4)
    base = rng.normal(size=1000) * 1e-3
    vectors = {"a": base, "b": 3.7 * base, "c": -0.1 * base, "d": rng.normal(size=1000)}
    values = cosine_matrix(vectors).values
    assert np.all(np.diag(values) == 1.0)
    assert np.all(values >= -1.0) and np.all(values <= 1.0)
    assert values[0, 1] == pytest.approx(1.0) and values[0, 2] == pytest.approx(-1.0)


def test_cosine_of_a_zero_gradient(caplog):
    matrix = cosine_matrix({"a": np.array([1.0, 2.0]), "z": np.zeros(2)})
    assert matrix.get("a", "z") is None
    assert matrix.get("a", "a") == pytest.approx(1.0)
    assert "cosine undefined" in caplog.text
    assert json.loads(json.dumps(matrix.to_json()["names"])) == ["a", "z"]


def test_grad_cosine_matrix():
    model, theta, phi = _model()
    batch = next(_dataset(4).batches(4))
    matrix = grad_cosine_matrix(model, theta, phi, batch)
    assert matrix.names == ("l_d", "l_q", "l_omega")
    assert np.allclose(np.diag(matrix.values), 1.0)
    assert np.allclose(matrix.values, matrix.values.T, equal_nan=True)
    assert np.all(np.abs(matrix.values) <= 1.0 + 1e-12)


def test_grad_cosine_matrix_without_auxiliary_branch():
    model, theta, phi = _model(no_meta=True)
    matrix = grad_cosine_matrix(model, theta, phi, next(_dataset(4).batches(4)))
    assert matrix.get("l_d", "l_omega") is None
    assert matrix.get("l_d", "l_q") is not None


def test_median_matrix():
    names = ("a", "b")
    first = CosineMatrix(names, np.array([[1.0, 0.2], [0.2, 1.0]]))
    second = CosineMatrix(names, np.array([[1.0, np.nan], [np.nan, 1.0]]))
    third = CosineMatrix(names, np.array([[1.0, 0.6], [0.6, 1.0]]))
    median = median_matrix([first, second, third])
    assert median.get("a", "b") == pytest.approx(0.4)
    assert median_matrix([second]).get("a", "b") is None
    with pytest.raises(MkcException):
        median_matrix([])


def test_map_helpers():
    assert np.array_equal(normalize_map(np.array([[1.0, 3.0], [2.0, 5.0]])), np.array([[0.0, 0.5], [0.25, 1.0]]))
    assert np.array_equal(normalize_map(np.full((2, 2), 7.0)), np.full((2, 2), 0.5))
    big = upsample_nearest(np.array([[0.0, 1.0], [2.0, 3.0]]), 4)
    assert big.tolist() == [[0.0, 0.0, 1.0, 1.0], [0.0, 0.0, 1.0, 1.0], [2.0, 2.0, 3.0, 3.0], [2.0, 2.0, 3.0, 3.0]]


def test_write_pgm(tmp_path):
    path = tmp_path / "map.pgm"
    write_pgm(path, np.array([[0.0, 0.5], [1.0, 2.0]]))
    assert path.read_bytes().startswith(b"P5")
    with Image.open(path) as image:
        assert np.asarray(image).tolist() == [[0, 128], [255, 255]]


def test_final_map_is_the_diagnosis_logit():
    # the spatial mean of the final map is the diagnosis logit, bias excluded
    model, theta, _ = _model()
    x = next(_dataset(3).batches(3)).x
    cams, predictions = class_activation_maps(model, theta, x)
    assert set(cams) == {"d", "q", "omega", "final"}
    logits = model.forward(x, theta).logits_d.data
    bias = theta["mab.head.bias"].data
    for row, predicted in enumerate(predictions):
        assert cams["final"][row].mean() == pytest.approx(logits[row, predicted] - bias[predicted])


@pytest.mark.parametrize("variant", [{"kind": "vanilla"}, {"no_mab": True}, {"mab_mode": "concat"}])
def test_final_map_of_the_variants(variant):
    config = TINY.model_copy(update={k: v for k, v in variant.items() if k in ("kind", "mab_mode")})
    model, theta, _ = _model(config, **{k: v for k, v in variant.items() if k == "no_mab"})
    x = next(_dataset(2).batches(2)).x
    cams, predictions = class_activation_maps(model, theta, x)
    logits = model.forward(x, theta).logits_d.data
    bias = theta["head_d.bias" if "head_d.bias" in theta else "mab.head.bias"].data
    for row, predicted in enumerate(predictions):
        assert cams["final"][row].mean() == pytest.approx(logits[row, predicted] - bias[predicted])


def test_export_activation_maps(tmp_path):
    model, theta, _ = _model()
    header = {"config": {"train": {"seed": 3}}, "seed": 3}
    index = export_activation_maps(model, theta, _dataset(), tmp_path / "cams", limit=2, batch_size=1,
                                   metadata=header)
    assert len(index) == 8
    assert {entry["sample"] for entry in index} == {"s0", "s1"}
    with Image.open(tmp_path / "cams" / "s1_final.pgm") as image:
        assert image.size == (8, 8)
    written = json.loads((tmp_path / "cams" / "index.json").read_text(encoding="utf-8"))
    assert written == dict(header, maps=index)


def test_export_features():
    model, theta, phi = _model()
    grid = export_features(model, theta, phi, _dataset(), batch_size=2, metadata={"split": "test"})
    assert len(grid) == 5
    columns = list(grid.column.keys())
    assert columns[:4] == ["sample", "y_d", "y_q", "code"]
    assert len([c for c in columns if c.startswith("m_")]) == 12
    assert len([c for c in columns if c.startswith("f_")]) == 8
    assert grid.column_values("code") == [0, 3, 4, 1, 2]
    assert sum(grid[0]["m_%d" % i] for i in range(12)) == pytest.approx(1.0)
    assert grid.metadata["split"] == "test"


def test_export_features_without_meta_learner():
    model, theta, phi = _model(TINY.model_copy(update={"kind": "vanilla"}))
    grid = export_features(model, theta, phi, _dataset(2))
    assert not [c for c in grid.column if c.startswith("m_")]
    assert len([c for c in grid.column if c.startswith("f_")]) == 4
