# -*- coding: utf-8 -*-
# Datasets
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
Labelled image sets, their manifest, their files and their splits.

On disk a dataset is a directory with

- `images.mkct`, a tensor store with one blob per sample
- `manifest.json`, the labels, the generation metadata and the blob offsets
"""
import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .blob import read_at, write_store
from .dumper import dump_json
from .exception import DataError
from .tensor import Tensor

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
IMAGES_FILE = "images.mkct"
MANIFEST_FILE = "manifest.json"
VARIANCE_FLOOR = 1e-6


@dataclass
class SampleRecord:
    """Labels and provenance of one image."""
    sample_id: str
    y_d: int
    y_q: int
    split: str = "train"
    offset: int = -1
    lesions: List[List[float]] = field(default_factory=list)
    spots: List[List[float]] = field(default_factory=list)
    degradations: List[Dict[str, Any]] = field(default_factory=list)

    @classmethod
    def from_json(cls, values: Dict[str, Any]) -> 'SampleRecord':
        return cls(**values)


@dataclass
class DatasetManifest:
    """Everything about a dataset except the pixels."""
    num_diagnosis: int
    num_quality: int
    image_size: int
    samples: List[SampleRecord]
    seed: int = 0
    config: Dict[str, Any] = field(default_factory=dict)
    in_channels: int = 1

    def to_json(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, values: Dict[str, Any]) -> 'DatasetManifest':
        try:
            values = dict(values)
            values["samples"] = [SampleRecord.from_json(s) for s in values["samples"]]
            return cls(**values)
        except (KeyError, TypeError) as ex:
            raise DataError("invalid manifest: %s" % ex) from ex


@dataclass
class Batch:
    x: Tensor
    y_d: np.ndarray
    y_q: np.ndarray
    indices: np.ndarray


class Dataset:
    """
    Normalized images (N, C, H, W) with their manifest.
    """

    def __init__(self, images: np.ndarray, manifest: DatasetManifest):
        if images.ndim != 4 or images.shape[0] != len(manifest.samples):
            raise DataError("%d samples in the manifest for images of shape %s"
                            % (len(manifest.samples), images.shape))
        self.images = images
        self.manifest = manifest
        self.y_d = np.array([s.y_d for s in manifest.samples], dtype=np.int64)
        self.y_q = np.array([s.y_q for s in manifest.samples], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.manifest.samples)

    def __repr__(self) -> str:
        return "Dataset(n=%d, D=%d, Q=%d)" % (len(self), self.manifest.num_diagnosis, self.manifest.num_quality)

    @property
    def samples(self) -> List[SampleRecord]:
        return self.manifest.samples

    def subset(self, indices: Sequence[int]) -> 'Dataset':
        indices = list(indices)
        manifest = DatasetManifest(self.manifest.num_diagnosis, self.manifest.num_quality,
                                   self.manifest.image_size, [self.samples[i] for i in indices],
                                   self.manifest.seed, self.manifest.config, self.manifest.in_channels)
        return Dataset(self.images[indices], manifest)

    def split(self, tag: str) -> 'Dataset':
        if tag not in SPLITS:
            raise DataError("unknown split %r" % tag)
        return self.subset([i for i, s in enumerate(self.samples) if s.split == tag])

    def quality_subset(self, subset: str) -> 'Dataset':
        """`all`, `hq` (y_q = 0) or `lq` (y_q > 0)."""
        if subset == "all":
            return self
        if subset == "hq":
            return self.subset(np.flatnonzero(self.y_q == 0))
        if subset == "lq":
            return self.subset(np.flatnonzero(self.y_q > 0))
        raise DataError("unknown subset %r" % subset)

    def batches(self, batch_size: int, rng: Optional[np.random.Generator] = None) -> Iterator[Batch]:
        """Consecutive batches, shuffled when `rng` is given."""
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        for start in range(0, len(self), batch_size):
            indices = order[start:start + batch_size]
            yield Batch(Tensor(self.images[indices]), self.y_d[indices], self.y_q[indices], indices)


def normalize(image: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance, variance floored."""
    centered = image - image.mean()
    return centered / np.sqrt(max(float(centered.var()), VARIANCE_FLOOR))


def largest_remainder(total: int, weights: Sequence[float]) -> List[int]:
    """
    Integer counts summing to `total`, proportional to `weights`; the
    leftover units go to the largest fractional parts, ties to the first.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if total < 0 or weights.sum() <= 0:
        raise DataError("cannot allocate %r over %s" % (total, weights))
    shares = np.round(total * weights / weights.sum(), 9)
    counts = np.floor(shares).astype(np.int64)
    leftover = total - int(counts.sum())
    order = sorted(range(len(weights)), key=lambda i: (-(shares[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return [int(c) for c in counts]


def split(manifest: DatasetManifest, ratios: Sequence[float] = (0.7, 0.1, 0.2),
          seed: int = 0) -> Dict[str, List[int]]:
    """
    Stratified split by (y_d, y_q) cell.

    The split totals are the largest-remainder allocation of the whole set;
    inside each cell every split gets its share within one sample.

    Returns:
        split name -> sorted sample indices
    """
    if len(ratios) != len(SPLITS) or abs(sum(ratios) - 1.0) > 1e-6 or min(ratios) < 0:
        raise DataError("split ratios must be 3 values >= 0 summing to 1, got %s" % (ratios,))
    cells = {}  # type: Dict[Tuple[int, int], List[int]]
    for i, sample in enumerate(manifest.samples):
        cells.setdefault((sample.y_d, sample.y_q), []).append(i)
    keys = sorted(cells)
    totals = largest_remainder(len(manifest.samples), ratios)
    active = sum(1 for r in ratios if r > 0)

    counts = []
    fractions = []
    for key in keys:
        size = len(cells[key])
        if size < active:
            log.warning("cell %s has %d samples for %d splits; proportional fallback", key, size, active)
        shares = np.round(size * np.asarray(ratios), 9)
        floors = np.floor(shares).astype(np.int64)
        counts.append(floors)
        fractions.append(shares - floors)
    need = [totals[s] - int(sum(c[s] for c in counts)) for s in range(len(SPLITS))]
    leftover = [len(cells[key]) - int(counts[c].sum()) for c, key in enumerate(keys)]

    candidates = sorted((-fractions[c][s], c, s) for c in range(len(keys)) for s in range(len(SPLITS)))
    for neg_fraction, c, s in candidates:
        if neg_fraction < 0 and leftover[c] > 0 and need[s] > 0:
            counts[c][s] += 1
            leftover[c] -= 1
            need[s] -= 1
    for c, key in enumerate(keys):
        while leftover[c] > 0:
            s = next(i for i in range(len(SPLITS)) if need[i] > 0)
            log.warning("cell %s: extra sample moved to %s", key, SPLITS[s])
            counts[c][s] += 1
            leftover[c] -= 1
            need[s] -= 1

    result = {name: [] for name in SPLITS}  # type: Dict[str, List[int]]
    for c, key in enumerate(keys):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(c,)))
        shuffled = rng.permutation(cells[key])
        start = 0
        for s, name in enumerate(SPLITS):
            result[name].extend(int(i) for i in shuffled[start:start + counts[c][s]])
            start += counts[c][s]
    return {name: sorted(indices) for name, indices in result.items()}


def assign_splits(manifest: DatasetManifest, ratios: Sequence[float], seed: int) -> None:
    for name, indices in split(manifest, ratios, seed).items():
        for i in indices:
            manifest.samples[i].split = name


def subsample_lq(dataset: Dataset, ratio: float, seed: int) -> Dataset:
    """
    Keep every HQ image and the first `4 * ratio` of four equal,
    seed-determined parts of the LQ images.
    """
    parts = 4 * ratio
    if parts != int(parts) or not 0 <= parts <= 4:
        raise DataError("LQ ratio must be a multiple of 0.25 in [0, 1], got %r" % ratio)
    lq = np.flatnonzero(dataset.y_q > 0)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(4,)))
    kept_lq = np.concatenate([np.zeros(0, dtype=np.int64)] + np.array_split(rng.permutation(lq), 4)[:int(parts)])
    keep = np.sort(np.concatenate([np.flatnonzero(dataset.y_q == 0), kept_lq]))
    log.info("LQ ratio %.2f: %d of %d LQ images kept", ratio, kept_lq.size, lq.size)
    return dataset.subset(keep)


def save_dataset(dataset: Dataset, directory: Union[str, Path]) -> Path:
    """Write the tensor store and the manifest; fills the offsets."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    offsets = write_store(directory / IMAGES_FILE,
                          ((s.sample_id, dataset.images[i]) for i, s in enumerate(dataset.samples)))
    for sample, offset in zip(dataset.samples, offsets):
        sample.offset = offset
    (directory / MANIFEST_FILE).write_text(dump_json(dataset.manifest.to_json()), encoding="utf-8")
    log.info("%d samples written to %s", len(dataset), directory)
    return directory


def load_dataset(directory: Union[str, Path]) -> Dataset:
    directory = Path(directory)
    try:
        manifest = DatasetManifest.from_json(
            json.loads((directory / MANIFEST_FILE).read_text(encoding="utf-8")))
    except OSError as ex:
        raise DataError("cannot read dataset %s: %s" % (directory, ex)) from ex
    except ValueError as ex:
        raise DataError("invalid manifest in %s: %s" % (directory, ex)) from ex
    try:
        arrays = read_at(directory / IMAGES_FILE, [s.offset for s in manifest.samples])
    except OSError as ex:
        raise DataError("cannot read images of %s: %s" % (directory, ex)) from ex
    return Dataset(np.stack(list(arrays.values())), manifest)


def resize_bilinear(image: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resampling of a 2-D float image to size x size."""
    resized = Image.fromarray(image.astype(np.float32)).resize((size, size), Image.Resampling.BILINEAR)
    return np.asarray(resized, dtype=np.float64)


def _read_image(path: Path) -> np.ndarray:
    with Image.open(path) as image:
        if image.mode in ("I;16", "I;16B", "I;16L", "I"):
            return np.asarray(image, dtype=np.float64) / 65535.0
        return np.asarray(image.convert("L"), dtype=np.float64) / 255.0


def load_folder(path: Union[str, Path], labels_csv: Union[str, Path], image_size: int = 32,
                num_diagnosis: int = 3, num_quality: int = 2) -> Dataset:
    """
    Grayscale PGM/PNG files with a label CSV `filename,y_d,y_q`.

    Images are resized and normalized like the synthetic ones.
    """
    path = Path(path)
    images = []
    samples = []
    try:
        with open(labels_csv, newline="", encoding="utf-8") as stream:
            rows = list(csv.DictReader(stream))
    except OSError as ex:
        raise DataError("cannot read %s: %s" % (labels_csv, ex)) from ex
    for row_number, row in enumerate(rows, start=2):
        try:
            file_name, y_d, y_q = row["filename"], int(row["y_d"]), int(row["y_q"])
        except (KeyError, TypeError, ValueError) as ex:
            raise DataError("%s row %d: expected filename,y_d,y_q (%s)" % (labels_csv, row_number, ex)) from ex
        if not 0 <= y_d < num_diagnosis or not 0 <= y_q < num_quality:
            raise DataError("%s row %d: label out of range" % (labels_csv, row_number))
        try:
            pixels = _read_image(path / file_name)
        except (OSError, UnidentifiedImageError) as ex:
            raise DataError("%s row %d: cannot read image %s (%s)" % (labels_csv, row_number, file_name, ex)) from ex
        images.append(normalize(resize_bilinear(pixels, image_size))[None])
        samples.append(SampleRecord(Path(file_name).stem, y_d, y_q))
    if not samples:
        raise DataError("%s has no rows" % labels_csv)
    manifest = DatasetManifest(num_diagnosis, num_quality, image_size, samples)
    return Dataset(np.stack(images), manifest)
