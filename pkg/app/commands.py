# -*- coding: utf-8 -*-
# Command implementations
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
The work behind each sub-command. These functions take validated values,
write their artifacts and return what they wrote; `app.main` maps the
command-line flags on them and the exceptions on exit codes.

Every artifact carries `config` (the full `RunConfig` echo) and `seed`.
"""
import json
import logging
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from mkcnet.analysis import CosineMatrix, export_activation_maps, export_features, grad_cosine_matrix, \
    median_matrix
from mkcnet.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from mkcnet.config import RunConfig, num_threads, parse_run_config
from mkcnet.dataset import Dataset, assign_splits, load_dataset, load_folder, save_dataset, subsample_lq
from mkcnet.dumper import MODE_CSV, MODE_TEXT, dump, dump_header, dump_json, suffix_to_mode
from mkcnet.exception import CheckpointError, DataError, NumericalAbort
from mkcnet.grid import Grid
from mkcnet.metrics import evaluate
from mkcnet.model import MKCModel
from mkcnet.params import ParamSet
from mkcnet.synth import gen_dataset
from mkcnet.trainer import EpochRecord, fit

log = logging.getLogger(__name__)

REPORT_FILE = "report.json"
BEST_DIR = "checkpoint_best"
LAST_DIR = "checkpoint_last"
EPOCHS_DIR = "epochs"

MASK_MODES = {"joint": "joint", "quality": "quality_only", "diagnosis": "diagnosis_only"}

# variant -> section -> fields
VARIANTS = {
    "mkcnet": {},
    "vanilla": {"model": {"kind": "vanilla"}},
    "vanilla_iqa": {"model": {"kind": "vanilla_iqa"}},
    "no-meta": {"train": {"no_meta": True}},
    "no-mab": {"train": {"no_mab": True}},
    "mask-quality": {"train": {"mask_mode": "quality_only"}},
    "mask-diagnosis": {"train": {"mask_mode": "diagnosis_only"}},
    "fc": {"model": {"gab_mode": "fc"}},
    "con": {"model": {"mab_mode": "concat"}},
}  # type: Dict[str, Dict[str, Dict[str, Any]]]

Progress = Callable[[Dict[str, Any]], None]


def _header(run: RunConfig) -> Dict[str, Any]:
    return {"config": run.echo(), "seed": run.train.seed}


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    log.info("%s written", path)
    return path


def _bundles_json(bundles: Dict[str, Any]) -> Dict[str, Any]:
    return {name: bundle.to_json() for name, bundle in bundles.items()}


def metrics_grid(bundles: Dict[str, Any], metadata: Optional[Dict[str, Any]] = None) -> Grid:
    """One row per subset, for the aligned-text summary."""
    grid = Grid(metadata=metadata, columns=["subset", "n", "auc", "accuracy", "f1"])
    grid.extend({"subset": name, "n": bundle.n, "auc": bundle.auc_macro_ovr,
                 "accuracy": bundle.accuracy, "f1": bundle.f1_macro}
                for name, bundle in bundles.items())
    return grid


def cmd_gen_data(run: RunConfig, out_dir: Path, from_folder: Optional[Path] = None,
                 labels_csv: Optional[Path] = None) -> Dataset:
    """
    Generate the synthetic dataset, or import a folder of labelled images,
    and write it with its splits.
    """
    data = run.data
    if from_folder is not None:
        if labels_csv is None:
            labels_csv = from_folder / "labels.csv"
        dataset = load_folder(from_folder, labels_csv, data.image_size,
                              run.model.num_diagnosis, data.quality_levels)
        assign_splits(dataset.manifest, data.split_ratios, data.seed)
    else:
        dataset = gen_dataset(data, num_threads())
    dataset.manifest.seed = data.seed
    dataset.manifest.config = run.echo()
    save_dataset(dataset, out_dir)
    return dataset


def _fit_run(run: RunConfig, dataset: Dataset) -> RunConfig:
    """The configuration with the network sized on the dataset."""
    manifest = dataset.manifest
    return run.replace(model={"num_diagnosis": manifest.num_diagnosis, "num_quality": manifest.num_quality,
                              "in_channels": manifest.in_channels, "image_size": manifest.image_size})


def _val_auc(record: EpochRecord) -> Optional[float]:
    if record.val is None:
        return None
    return record.val["all"]["auc_macro_ovr"]


def cmd_train(run: RunConfig, data_dir: Path, out_dir: Path, keep_epochs: bool = False,
              record_timing: bool = False, progress: Optional[Progress] = None) -> Dict[str, Any]:
    """
    Train on the `train` split, select on `val`, report on `test`.

    Writes `checkpoint_best/`, `checkpoint_last/`, `report.json` and, with
    `keep_epochs`, `epochs/<n>/` after every epoch.
    Raises:
        NumericalAbort after writing the partial report
    """
    dataset = load_dataset(data_dir)
    run = _fit_run(run, dataset)
    config = run.train
    train_set = dataset.split("train")
    if config.lq_ratio < 1.0:
        train_set = subsample_lq(train_set, config.lq_ratio, config.seed)
    val_set = dataset.split("val")
    model = MKCModel.from_run(run)
    header = _header(run)
    out_dir.mkdir(parents=True, exist_ok=True)
    best = {"auc": None, "epoch": 0}  # type: Dict[str, Any]

    def on_epoch(epoch: int, theta: ParamSet, phi: ParamSet, record: EpochRecord) -> None:
        info = {"epoch": epoch, "val": record.val}
        if keep_epochs:
            save_checkpoint(out_dir / EPOCHS_DIR / ("%03d" % epoch), theta, phi, run, info)
        auc = _val_auc(record)
        if config.selection == "best" and auc is not None and (best["auc"] is None or auc > best["auc"]):
            best.update(auc=auc, epoch=epoch)
            save_checkpoint(out_dir / BEST_DIR, theta, phi, run, info)
        if progress is not None:
            progress(dict(asdict(record), seed=config.seed))

    try:
        theta, phi, report = fit(model, train_set, val_set, on_epoch, header["config"])
    except NumericalAbort as ex:
        partial = dict(header, aborted=ex.msg, step=ex.step,
                       train=ex.report.to_json(record_timing) if ex.report is not None else None)
        _write(out_dir / REPORT_FILE, dump_json(partial))
        raise
    last_info = {"epoch": config.epochs, "val": report.history[-1].val if report.history else None}
    save_checkpoint(out_dir / LAST_DIR, theta, phi, run, last_info)
    if best["auc"] is None:
        # no validation AUC, or selection of the last epoch
        shutil.rmtree(out_dir / BEST_DIR, ignore_errors=True)
        save_checkpoint(out_dir / BEST_DIR, theta, phi, run, last_info)
    selected = load_checkpoint(out_dir / (BEST_DIR if config.selection == "best" else LAST_DIR))
    test = evaluate(model, selected.theta, dataset.split("test"), config.batch_size)
    result = dict(header,
                  data=str(data_dir),
                  train_samples=len(train_set),
                  selected=BEST_DIR if config.selection == "best" else LAST_DIR,
                  selected_epoch=selected.info.get("epoch"),
                  train=report.to_json(record_timing),
                  test=_bundles_json(test))
    _write(out_dir / REPORT_FILE, dump_json(result))
    return result


def resolve_checkpoint(path: Path) -> Path:
    """A checkpoint directory, or a run directory standing for its selected checkpoint."""
    if (path / REPORT_FILE).exists():
        selected = json.loads((path / REPORT_FILE).read_text(encoding="utf-8")).get("selected")
        if not selected:
            raise CheckpointError("run %s has no selected checkpoint" % path)
        return path / selected
    return path


def _load(path: Path, dataset: Dataset) -> Checkpoint:
    checkpoint = load_checkpoint(resolve_checkpoint(path))
    model = checkpoint.run.model
    manifest = dataset.manifest
    if (model.num_diagnosis, model.num_quality, model.image_size, model.in_channels) != \
            (manifest.num_diagnosis, manifest.num_quality, manifest.image_size, manifest.in_channels):
        raise DataError("the dataset does not match the network of the checkpoint")
    return checkpoint


def cmd_eval(checkpoint_path: Path, data_dir: Path, split_name: str = "test",
             out_file: Optional[Path] = None) -> Tuple[Dict[str, Any], str]:
    """
    Metrics of a checkpoint on all, high- and low-quality images of a split.
    Returns:
        (the JSON report, the aligned-text table)
    """
    dataset = load_dataset(data_dir)
    checkpoint = _load(checkpoint_path, dataset)
    bundles = evaluate(checkpoint.model(), checkpoint.theta, dataset.split(split_name),
                       checkpoint.run.train.batch_size)
    header = _header(checkpoint.run)
    result = dict(header, checkpoint=str(checkpoint_path), split=split_name, metrics=_bundles_json(bundles))
    text = dump(metrics_grid(bundles, header), MODE_TEXT)
    if out_file is not None:
        _write(out_file, dump_json(result))
        _write(out_file.with_suffix(".txt"), text)
    return result, text


def _ablate_one(task: Tuple[Dict[str, Any], str, str, str, float, int]) -> Dict[str, Any]:
    """One cell of the matrix; runs in its own process."""
    values, data_dir, out_dir, variant, lq_ratio, seed = task
    logging.basicConfig(level=logging.WARNING)
    run = parse_run_config(values)
    row = {"variant": variant, "lq_ratio": lq_ratio, "seed": seed}  # type: Dict[str, Any]
    try:
        report = cmd_train(run, Path(data_dir), Path(out_dir))
    except NumericalAbort as ex:
        row["error"] = ex.msg
        return row
    for subset in ("all", "hq", "lq"):
        row["auc_" + subset] = report["test"][subset]["auc_macro_ovr"]
    row["accuracy"] = report["test"]["all"]["accuracy"]
    row["f1"] = report["test"]["all"]["f1_macro"]
    row["best_epoch"] = report["train"]["best_epoch"]
    return row


def _median(values: List[Optional[float]]) -> Optional[float]:
    defined = [v for v in values if v is not None]
    return float(np.median(defined)) if defined else None


def cmd_ablate(run: RunConfig, data_dir: Path, out_dir: Path, variants: Sequence[str],
               seeds: Sequence[int], lq_ratios: Sequence[float] = (1.0,),
               workers: Optional[int] = None) -> Dict[str, Grid]:
    """
    Train every (variant, LQ ratio, seed) in parallel processes and
    summarise the test metrics.

    Writes `summary.json` and `summary.txt`, one row per run, and
    `median.json` / `median.txt`, one row per (variant, LQ ratio).
    """
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise DataError("unknown variants %s, expected among %s" % (unknown, list(VARIANTS)))
    tasks = []
    for variant in variants:
        for lq_ratio in lq_ratios:
            for seed in seeds:
                sections = {name: dict(fields) for name, fields in VARIANTS[variant].items()}
                sections.setdefault("train", {}).update(seed=seed, lq_ratio=lq_ratio)
                cell = run.replace(**sections)
                tasks.append((cell.echo(), str(data_dir), str(out_dir / variant / ("lq%.2f" % lq_ratio) / str(seed)),
                              variant, lq_ratio, seed))
    max_workers = min(workers or num_threads(), len(tasks)) or 1
    log.info("ablation: %d runs on %d processes", len(tasks), max_workers)
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        rows = list(pool.map(_ablate_one, tasks))

    metadata = dict(_header(run), seeds=list(seeds), lq_ratios=list(lq_ratios), variants=list(variants))
    metrics = ["auc_all", "auc_hq", "auc_lq", "accuracy", "f1"]
    summary = Grid(metadata=metadata, columns=["variant", "lq_ratio", "seed"] + metrics + ["best_epoch", "error"])
    summary.extend(rows)
    median = Grid(metadata=metadata, columns=["variant", "lq_ratio", "runs"] + metrics)
    for variant in variants:
        for lq_ratio in lq_ratios:
            cell = summary.filter(variant=variant, lq_ratio=lq_ratio)
            values = {"variant": variant, "lq_ratio": lq_ratio, "runs": len(cell)}  # type: Dict[str, Any]
            values.update((name, _median(cell.column_values(name))) for name in metrics)
            median.append(values)
    for name, grid in (("summary", summary), ("median", median)):
        for path in (out_dir / (name + ".json"), out_dir / (name + ".txt")):
            _write(path, dump(grid, suffix_to_mode(path.suffix)))
    return {"summary": summary, "median": median}


def _epoch_dirs(run_dir: Path) -> List[Path]:
    epochs = sorted(p for p in (run_dir / EPOCHS_DIR).glob("*") if p.is_dir()) \
        if (run_dir / EPOCHS_DIR).is_dir() else []
    if not epochs:
        raise CheckpointError("no per-epoch checkpoint in %s, train with --keep-epochs" % run_dir)
    return epochs


def cmd_grad_analysis(run_dir: Path, data_dir: Path, split_name: str = "train", samples: int = 64,
                      out_file: Optional[Path] = None) -> Dict[str, Any]:
    """
    Cosines between the backbone gradients of l_d, l_q and l_omega at every
    per-epoch checkpoint of a run, on the first `samples` images of a split,
    and their epoch median.
    """
    dataset = load_dataset(data_dir).split(split_name)
    if len(dataset) == 0:
        raise DataError("split %r is empty" % split_name)
    batch = next(dataset.subset(range(min(samples, len(dataset)))).batches(samples))
    matrices = []  # type: List[CosineMatrix]
    epochs = []
    header = None
    for path in _epoch_dirs(run_dir):
        checkpoint = _load(path, dataset)
        header = header or _header(checkpoint.run)
        matrix = grad_cosine_matrix(checkpoint.model(), checkpoint.theta, checkpoint.phi, batch)
        matrices.append(matrix)
        epochs.append({"epoch": checkpoint.info.get("epoch"), "cosine": matrix.to_json()})
    result = dict(header or {}, run=str(run_dir), split=split_name, samples=len(batch.indices),
                  epochs=epochs, median=median_matrix(matrices).to_json())
    if out_file is not None:
        _write(out_file, dump_json(result))
    return result


def cmd_export(checkpoint_path: Path, data_dir: Path, out_dir: Path, split_name: str = "test",
               limit: int = 16, features: bool = True, cams: bool = True) -> Dict[str, Any]:
    """
    Write `features.csv` (Meta Learner outputs and diagnosis-head inputs)
    with its header `features.meta.json`,
    `cams/` (activation maps of the first `limit` images) and `export.json`.
    """
    dataset = load_dataset(data_dir)
    checkpoint = _load(checkpoint_path, dataset)
    subset = dataset.split(split_name)
    model = checkpoint.model()
    header = _header(checkpoint.run)
    files = []
    if features:
        grid = export_features(model, checkpoint.theta, checkpoint.phi, subset,
                               checkpoint.run.train.batch_size, header)
        _write(out_dir / "features.csv", dump(grid, MODE_CSV))
        _write(out_dir / "features.meta.json", dump_header(grid))
        files.extend(["features.csv", "features.meta.json"])
    if cams:
        index = export_activation_maps(model, checkpoint.theta, subset, out_dir / "cams", limit, metadata=header)
        files.extend("cams/" + entry["file"] for entry in index)
        files.append("cams/index.json")
    result = dict(header, checkpoint=str(checkpoint_path), split=split_name, files=files)
    _write(out_dir / "export.json", dump_json(result))
    return result
