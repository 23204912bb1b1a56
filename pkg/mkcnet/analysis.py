# -*- coding: utf-8 -*-
# Analysis exports
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
Diagnostics of a trained model:

- cosine similarity between the backbone gradients of the three loss terms
- class activation maps of each branch, written as PGM images
- per-sample Meta Learner outputs and diagnosis-head features
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from .autograd import backward
from .dataset import Batch, Dataset
from .dumper import dump_json
from .exception import MkcException
from .grid import Grid
from .masking import codes_for
from .model import MKCModel, TaskNet
from .objective import task_loss
from .params import ParamSet
from .record import ComputationRecord, no_record
from .tensor import Tensor
from .trainer import constant_target

log = logging.getLogger(__name__)

LOSS_NAMES = ("l_d", "l_q", "l_omega")


@dataclass
class CosineMatrix:
    """Symmetric matrix of cosines; NaN where a gradient is zero."""
    names: Tuple[str, ...]
    values: np.ndarray

    def get(self, first: str, second: str) -> Optional[float]:
        value = self.values[self.names.index(first), self.names.index(second)]
        return None if np.isnan(value) else float(value)

    def to_json(self) -> Dict[str, Any]:
        return {"names": list(self.names), "values": self.values}


def cosine_matrix(vectors: Dict[str, np.ndarray]) -> CosineMatrix:
    """
    Args:
        vectors: name -> flat gradient, all the same length
    """
    names = tuple(vectors)
    norms = {name: float(np.linalg.norm(vectors[name])) for name in names}
    zero = [name for name in names if norms[name] == 0.0]
    if zero:
        log.warning("zero gradient for %s, cosine undefined", zero)
    values = np.full((len(names), len(names)), np.nan)
    for i, first in enumerate(names):
        for j, second in enumerate(names):
            if norms[first] > 0.0 and norms[second] > 0.0:
                values[i, j] = 1.0 if i == j else \
                    float(np.clip(np.dot(vectors[first], vectors[second]) / (norms[first] * norms[second]), -1.0, 1.0))
    return CosineMatrix(names, values)


def grad_cosine_matrix(model: MKCModel, theta: ParamSet, phi: ParamSet, batch: Batch) -> CosineMatrix:
    """
    Cosines between the gradients of l_d, l_q and l_omega w.r.t. the shared
    backbone, the auxiliary target held constant.
    """
    backbone = theta.with_prefix("backbone.")
    y_omega, masks = constant_target(model, phi, batch)
    with ComputationRecord() as record:
        record.watch(backbone)
        losses = task_loss(model.forward(batch.x, theta), batch.y_d, batch.y_q, y_omega, masks,
                           model.train.gamma_focal)
    vectors = {}
    for name in LOSS_NAMES:
        term = getattr(losses, name)
        if record.node_id_of(term) is None:
            vectors[name] = np.zeros(backbone.num_parameters())
        else:
            vectors[name] = backward(record, term, backbone).flatten()
    return cosine_matrix(vectors)


def normalize_map(cam: np.ndarray) -> np.ndarray:
    """Min-max to [0, 1]; a constant map becomes 0.5 everywhere."""
    low, high = float(cam.min()), float(cam.max())
    if high - low <= 0.0:
        return np.full(cam.shape, 0.5)
    return (cam - low) / (high - low)


def upsample_nearest(cam: np.ndarray, size: int) -> np.ndarray:
    rows = (np.arange(size) * cam.shape[0]) // size
    cols = (np.arange(size) * cam.shape[1]) // size
    return cam[np.ix_(rows, cols)]


def _weighted(maps: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_c weights[n, c] * maps[n, c] -> (N, h, w)"""
    return np.einsum("nc,nchw->nhw", weights, maps)


def class_activation_maps(model: MKCModel, theta: ParamSet, x: Tensor) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """
    Raw maps of every branch for the predicted classes, and the predicted
    diagnosis.

    Returns:
        ({branch: (N, h, w)}, (N,) predictions); branches among `d`, `q`,
        `omega` and `final`, the map behind the diagnosis logit
    """
    with no_record():
        out = model.forward(x, theta)
    features = out.features
    pred_d = np.argmax(out.logits_d.data, axis=1)
    cams = {}
    if not isinstance(model.task, TaskNet):
        weights = theta["head_d.weight"].data[:, pred_d].T
        cams["d"] = cams["final"] = _weighted(features.backbone.data, weights)
        return cams, pred_d
    maps = {name: m.data for name, m in features.maps.items()}
    cams["q"] = _weighted(maps["q"], theta["head_q.weight"].data[:, np.argmax(out.logits_q.data, axis=1)].T)
    if out.logits_omega is not None:
        cams["omega"] = _weighted(maps["omega"],
                                  theta["head_omega.weight"].data[:, np.argmax(out.logits_omega.data, axis=1)].T)
    if model.task.no_mab:
        cams["d"] = cams["final"] = _weighted(maps["d"], theta["head_d.weight"].data[:, pred_d].T)
        return cams, pred_d
    head = theta["mab.head.weight"].data[:, pred_d].T  # (N, 2W)
    width = maps["d"].shape[1]
    cams["d"] = _weighted(maps["d"], head[:, :width])
    gate = features.gate.data if features.gate is not None else np.ones((x.shape[0], width))
    assistant = maps["q"] if model.task.no_meta else maps["omega"]
    cams["final"] = cams["d"] + _weighted(assistant, head[:, width:] * gate)
    return cams, pred_d


def write_pgm(path: Union[str, Path], image: np.ndarray) -> None:
    """8-bit binary PGM of values in [0, 1]."""
    pixels = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(pixels).save(path, format="PPM")


def export_activation_maps(model: MKCModel, theta: ParamSet, dataset: Dataset, out_dir: Union[str, Path],
                           limit: Optional[int] = None, batch_size: int = 64,
                           metadata: Optional[Dict[str, Any]] = None) -> List[Dict[str, Any]]:
    """
    Write `<sample>_<branch>.pgm`, upsampled to the input size, and
    `index.json`: the `metadata` with the entries under `maps`.
    Returns:
        The index entries
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    subset = dataset if limit is None else dataset.subset(range(min(limit, len(dataset))))
    size = subset.manifest.image_size
    index = []
    for batch in subset.batches(batch_size):
        cams, predictions = class_activation_maps(model, theta, batch.x)
        for row, sample_index in enumerate(batch.indices):
            sample = subset.samples[int(sample_index)]
            for branch in sorted(cams):
                name = "%s_%s.pgm" % (sample.sample_id, branch)
                write_pgm(out_dir / name, upsample_nearest(normalize_map(cams[branch][row]), size))
                index.append({"sample": sample.sample_id, "branch": branch, "file": name,
                              "predicted": int(predictions[row]), "y_d": sample.y_d, "y_q": sample.y_q})
    (out_dir / "index.json").write_text(dump_json(dict(metadata or {}, maps=index)), encoding="utf-8")
    log.info("%d activation maps written to %s", len(index), out_dir)
    return index


def export_features(model: MKCModel, theta: ParamSet, phi: ParamSet, dataset: Dataset,
                    batch_size: int = 64, metadata: Optional[Dict[str, Any]] = None) -> Grid:
    """
    One row per sample: id, labels, code, Meta Learner output `m_i` and the
    diagnosis-head input `f_i`.
    """
    config = model.config
    codes = codes_for(dataset.y_d, dataset.y_q, config.num_diagnosis, config.num_quality, model.train.mask_mode)
    rows = []  # type: List[Dict[str, Any]]
    meta_width = feature_width = 0
    for batch in dataset.batches(batch_size):
        with no_record():
            out = model.forward(batch.x, theta)
            if model.meta is not None:
                meta = model.meta.forward(batch.x, phi).full.data
            else:
                meta = np.zeros((len(batch.indices), 0))
        features = out.features.f_d_star if out.features.f_d_star is not None else out.features.vectors["d"]
        meta_width, feature_width = meta.shape[1], features.shape[1]
        for row, sample_index in enumerate(batch.indices):
            sample = dataset.samples[int(sample_index)]
            values = {"sample": sample.sample_id, "y_d": sample.y_d, "y_q": sample.y_q,
                      "code": int(codes[sample_index])}
            values.update(("m_%d" % i, float(v)) for i, v in enumerate(meta[row]))
            values.update(("f_%d" % i, float(v)) for i, v in enumerate(features.data[row]))
            rows.append(values)
    columns = ["sample", "y_d", "y_q", "code"] + ["m_%d" % i for i in range(meta_width)] \
        + ["f_%d" % i for i in range(feature_width)]
    grid = Grid(metadata=metadata, columns=columns)
    grid.extend(rows)
    return grid


def median_matrix(matrices: Sequence[CosineMatrix]) -> CosineMatrix:
    """Entry-wise median, ignoring undefined entries."""
    if not matrices:
        raise MkcException("no matrix")
    stacked = np.stack([m.values for m in matrices])
    with np.errstate(all="ignore"):
        defined = ~np.isnan(stacked)
        values = np.full(stacked.shape[1:], np.nan)
        for i, j in np.ndindex(*values.shape):
            column = stacked[:, i, j][defined[:, i, j]]
            if column.size:
                values[i, j] = float(np.median(column))
    return CosineMatrix(matrices[0].names, values)
