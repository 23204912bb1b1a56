# -*- coding: utf-8 -*-
# Synthetic image-quality-aware diagnosis benchmark
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
Generator of small grayscale "fundus-like" images.

Each image has a textured background, a few bright vessel lines and 0 to 4
dark circular lesions; the number of lesions sets the diagnosis class
(0: none, 1: one or two, 2: three or four). Low-quality images receive one or
two degradations:

- blur: gaussian blur, sigma in [0.8, 1.6]
- shadow: a band of 6 to 12 pixels darkened by a factor in [0.3, 0.6]
- spots: one to three bright discs that look like lesions but never count
- contrast: deviations from the mean halved

Every sample draws from its own stream, derived from the dataset seed and
the sample index, so samples can be produced in any order or in parallel.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from .config import DEGRADATION_KINDS, SynthConfig
from .dataset import Dataset, DatasetManifest, SampleRecord, assign_splits, largest_remainder, normalize
from .exception import DataError

log = logging.getLogger(__name__)

NUM_DIAGNOSIS = 3
BACKGROUND = 0.4
BASE_CEILING = 0.9
VESSEL_AMPLITUDE = 0.2
LESION_FACTOR = 0.35
SPOT_VALUE = 1.0
CONTRAST_FACTOR = 0.5


def sample_stream(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def disc_mask(size: int, row: float, col: float, radius: float) -> np.ndarray:
    rows, cols = np.mgrid[0:size, 0:size]
    return (rows - row) ** 2 + (cols - col) ** 2 <= radius ** 2


def base_image(rng: np.random.Generator, size: int) -> np.ndarray:
    """Background texture with three vessel lines, values in [0, 0.9]."""
    image = BACKGROUND + rng.normal(0.0, 0.02, (size, size))
    rows, cols = np.mgrid[0:size, 0:size]
    for _ in range(3):
        angle = rng.uniform(0.0, np.pi)
        center_row, center_col = rng.uniform(0.25 * size, 0.75 * size, 2)
        distance = np.abs((rows - center_row) * np.cos(angle) - (cols - center_col) * np.sin(angle))
        image += VESSEL_AMPLITUDE * np.exp(-distance ** 2 / (2 * 0.6 ** 2))
    return np.clip(image, 0.0, BASE_CEILING)


def lesion_count(rng: np.random.Generator, y_d: int) -> int:
    if y_d == 0:
        return 0
    if y_d == 1:
        return int(rng.integers(1, 3))
    return int(rng.integers(3, 5))


def place_discs(rng: np.random.Generator, count: int, size: int, radius_range: Tuple[float, float],
                avoid: Optional[List[List[float]]] = None) -> List[List[float]]:
    """Non-overlapping discs [row, col, radius] away from the border."""
    discs = []  # type: List[List[float]]
    others = list(avoid or [])
    margin = 3.0
    for _ in range(count):
        for _attempt in range(200):
            radius = float(rng.uniform(*radius_range))
            row, col = (float(v) for v in rng.uniform(margin, size - 1 - margin, 2))
            if all((row - r) ** 2 + (col - c) ** 2 > (radius + rad + 1.0) ** 2 for r, c, rad in discs + others):
                discs.append([row, col, radius])
                break
        else:
            raise DataError("cannot place %d discs in a %dx%d image" % (count, size, size))
    return discs


def paint_lesions(image: np.ndarray, lesions: List[List[float]]) -> np.ndarray:
    out = image.copy()
    for row, col, radius in lesions:
        out[disc_mask(image.shape[0], row, col, radius)] *= LESION_FACTOR
    return out


def apply_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    return np.clip(gaussian_filter(image, sigma, mode="reflect"), 0.0, 1.0)


def apply_shadow(image: np.ndarray, axis: int, start: int, width: int, factor: float) -> np.ndarray:
    """Darken rows (axis 0) or columns (axis 1) [start, start + width)."""
    out = image.copy()
    band = (slice(start, start + width), slice(None)) if axis == 0 else (slice(None), slice(start, start + width))
    out[band] *= factor
    return np.clip(out, 0.0, 1.0)


def apply_spots(image: np.ndarray, spots: List[List[float]]) -> np.ndarray:
    out = image.copy()
    for row, col, radius in spots:
        out[disc_mask(image.shape[0], row, col, radius)] = SPOT_VALUE
    return out


def apply_contrast(image: np.ndarray, factor: float = CONTRAST_FACTOR) -> np.ndarray:
    center = image.mean()
    return np.clip(center + factor * (image - center), 0.0, 1.0)


def degrade(image: np.ndarray, kind: str, rng: np.random.Generator,
            lesions: Optional[List[List[float]]] = None) -> Tuple[np.ndarray, Dict[str, Any]]:
    """
    Apply one degradation with parameters drawn from `rng`.

    Args:
        image: (S, S) values in [0, 1]
        kind: One of blur, shadow, spots, contrast
        rng: Stream of the sample
        lesions: True lesions, to flag shadows covering one and to keep spots apart
    Returns:
        The degraded image and the parameters used
    """
    size = image.shape[0]
    if kind == "blur":
        sigma = float(rng.uniform(0.8, 1.6))
        return apply_blur(image, sigma), {"kind": kind, "sigma": sigma}
    if kind == "shadow":
        axis = int(rng.integers(0, 2))
        width = int(rng.integers(6, 13))
        start = int(rng.integers(0, size - width + 1))
        factor = float(rng.uniform(0.3, 0.6))
        covers = any(start <= (row if axis == 0 else col) < start + width for row, col, _ in lesions or [])
        return apply_shadow(image, axis, start, width, factor), \
            {"kind": kind, "axis": axis, "start": start, "width": width, "factor": factor, "covers_lesion": covers}
    if kind == "spots":
        spots = place_discs(rng, int(rng.integers(1, 4)), size, (1.0, 2.0), avoid=lesions)
        return apply_spots(image, spots), {"kind": kind, "spots": spots}
    if kind == "contrast":
        return apply_contrast(image), {"kind": kind, "factor": CONTRAST_FACTOR}
    raise DataError("unknown degradation %r" % kind)


def _draw_kinds(rng: np.random.Generator, mix: Dict[str, float]) -> List[str]:
    kinds = [k for k in DEGRADATION_KINDS if mix.get(k, 0.0) > 0]
    weights = np.array([mix[k] for k in kinds]) / sum(mix[k] for k in kinds)
    count = min(int(rng.integers(1, 3)), len(kinds))
    chosen = set(rng.choice(len(kinds), size=count, replace=False, p=weights).tolist())
    return [k for i, k in enumerate(kinds) if i in chosen]  # canonical order


def make_sample(config: SynthConfig, index: int, y_d: int, low_quality: bool) -> Tuple[np.ndarray, SampleRecord]:
    """
    One normalized image (1, S, S) and its record.
    """
    rng = sample_stream(config.seed, index)
    size = config.image_size
    lesions = place_discs(rng, lesion_count(rng, y_d), size, (1.5, 2.2))
    image = paint_lesions(base_image(rng, size), lesions)
    degradations = []
    spots = []  # type: List[List[float]]
    if low_quality:
        for kind in _draw_kinds(rng, config.degradation_mix):
            image, params = degrade(image, kind, rng, lesions)
            degradations.append(params)
            spots.extend(params.get("spots", []))
    if not low_quality:
        y_q = 0
    elif config.quality_levels == 2:
        y_q = 1
    else:
        y_q = min(len(degradations), 2)
    record = SampleRecord("s%05d" % index, y_d, y_q, lesions=lesions, spots=spots, degradations=degradations)
    return normalize(image)[None], record


def is_confounded(record: SampleRecord) -> bool:
    """Spots that look like lesions, or a shadow over a true lesion."""
    return bool(record.spots) or any(d.get("covers_lesion", False) for d in record.degradations)


def confounded_fraction(samples: List[SampleRecord]) -> float:
    """Share of confounded images among the low-quality ones, 0 without any."""
    low = [s for s in samples if s.y_q > 0]
    return sum(is_confounded(s) for s in low) / len(low) if low else 0.0


def allocate_labels(config: SynthConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact class and low-quality counts, in a seed-determined order.
    Returns:
        (diagnosis labels, low-quality flags), one per sample
    """
    n = config.n_samples
    class_counts = largest_remainder(n, config.priors)
    lq_total = int(np.floor(config.lq_fraction * n + 0.5))
    lq_counts = largest_remainder(lq_total, class_counts) if lq_total else [0] * NUM_DIAGNOSIS
    labels = np.concatenate([np.full(count, d, dtype=np.int64) for d, count in enumerate(class_counts)])
    flags = np.concatenate([np.arange(count) < lq for count, lq in zip(class_counts, lq_counts)])
    order = np.random.default_rng(config.seed).permutation(n)
    return labels[order], flags[order]


def gen_dataset(config: SynthConfig, num_threads: int = 1) -> Dataset:
    """
    Generate, label and split a synthetic dataset.

    Args:
        config: Generation parameters
        num_threads: Samples generated concurrently
    Returns:
        The dataset, offsets unset until saved
    Raises:
        DataError with fewer samples than diagnosis classes
    """
    if config.n_samples < NUM_DIAGNOSIS:
        raise DataError("%d samples cannot cover %d diagnosis classes" % (config.n_samples, NUM_DIAGNOSIS))
    labels, flags = allocate_labels(config)
    with ThreadPoolExecutor(max_workers=max(1, num_threads)) as pool:
        results = list(pool.map(lambda i: make_sample(config, i, int(labels[i]), bool(flags[i])),
                                range(config.n_samples)))
    manifest = DatasetManifest(NUM_DIAGNOSIS, config.quality_levels, config.image_size,
                               [record for _, record in results], config.seed, config.model_dump(mode="json"))
    assign_splits(manifest, config.split_ratios, config.seed)
    log.info("generated %d samples, %d low quality, %.0f%% of them confounded", config.n_samples, int(flags.sum()),
             100.0 * confounded_fraction(manifest.samples))
    return Dataset(np.stack([image for image, _ in results]), manifest)
