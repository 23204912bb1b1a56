# -*- coding: utf-8 -*-
# MKCNet command line
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
The `mkcnet` command.

Exit codes: 0 on success, 2 on a configuration or input error (missing or
invalid file, invalid value, incompatible checkpoint), 3 when the training
stops on a non-finite loss.

Envs:

    LOG_LEVEL: logging level (WARNING)
    MKC_NUM_THREADS: cap on the worker threads and processes
    MKC_DEBUG: 1 to check every primitive for NaN and Inf
"""
import functools
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import click

from mkcnet.config import LQ_RATIOS, RunConfig, load_run_config
from mkcnet.dumper import dump_json, dump_scalar
from mkcnet.exception import CheckpointError, ConfigError, DataError, NumericalAbort

from app.commands import MASK_MODES, VARIANTS, cmd_ablate, cmd_eval, cmd_export, cmd_gen_data, \
    cmd_grad_analysis, cmd_train

log = logging.getLogger(__name__)

EXIT_INPUT_ERROR = 2
EXIT_NUMERICAL_ABORT = 3

_EXISTING_DIR = click.Path(exists=True, file_okay=False, path_type=Path)
_OUT_PATH = click.Path(path_type=Path)


def _floats(text: Optional[str]) -> Optional[Tuple[float, ...]]:
    if text is None:
        return None
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise click.BadParameter("expected comma-separated numbers, got %r" % text) from None


def _ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise click.BadParameter("expected comma-separated integers, got %r" % text) from None


def exit_codes(func: Callable[..., Any]) -> Callable[..., Any]:
    """Map the domain errors of a sub-command on the exit codes."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return func(*args, **kwargs)
        except (ConfigError, DataError, CheckpointError) as ex:
            click.echo("Error: %s" % ex.msg, err=True)
            ctx.exit(EXIT_INPUT_ERROR)
        except NumericalAbort as ex:
            click.echo("Numerical abort: %s" % ex.msg, err=True)
            ctx.exit(EXIT_NUMERICAL_ABORT)
        return None

    return wrapper


def _run_config(ctx: click.Context, **sections: Dict[str, Any]) -> RunConfig:
    return load_run_config(ctx.obj.get("config"), sections)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="TOML file with [data], [model] and [train] tables; flags take precedence")
@click.pass_context
def main(ctx: click.Context, config_path: Optional[Path]) -> None:
    """
    Image quality-aware diagnosis with meta-knowledge co-embedding.
    """
    logging.basicConfig(level=os.environ.get("LOG_LEVEL", "WARNING"))
    ctx.ensure_object(dict)
    ctx.obj["config"] = config_path


@main.command("gen-data", short_help="Generate the synthetic dataset")
@click.option("--n", "n_samples", type=int, help="Number of images")
@click.option("--seed", type=int, help="Generation and split seed")
@click.option("--lq-fraction", type=float, help="Fraction of low-quality images")
@click.option("--priors", help="Diagnosis class priors, comma separated")
@click.option("--quality-levels", type=click.Choice(["2", "3"]), help="Quality classes")
@click.option("--image-size", type=int, help="Image side in pixels")
@click.option("--from-folder", type=_EXISTING_DIR, help="Import labelled PGM/PNG images instead")
@click.option("--labels", "labels_csv", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="CSV filename,y_d,y_q of the imported folder (default: <folder>/labels.csv)")
@click.option("--out", "out_dir", type=_OUT_PATH, required=True, help="Dataset directory")
@click.pass_context
@exit_codes
def gen_data(ctx: click.Context, n_samples: Optional[int], seed: Optional[int], lq_fraction: Optional[float],
             priors: Optional[str], quality_levels: Optional[str], image_size: Optional[int],
             from_folder: Optional[Path], labels_csv: Optional[Path], out_dir: Path) -> None:
    """
    Generate (or import) a dataset, split it in train, val and test, and write
    it with its manifest.
    """
    run = _run_config(ctx, data={"n_samples": n_samples, "seed": seed, "lq_fraction": lq_fraction,
                                 "priors": _floats(priors),
                                 "quality_levels": int(quality_levels) if quality_levels else None,
                                 "image_size": image_size})
    dataset = cmd_gen_data(run, out_dir, from_folder, labels_csv)
    click.echo(dump_scalar({"out": str(out_dir), "samples": len(dataset), "lq": int((dataset.y_q > 0).sum()),
                            "seed": run.data.seed}))


def _train_overrides(model: Optional[str], gab_mode: Optional[str], mab_mode: Optional[str],
                     **train: Any) -> Dict[str, Dict[str, Any]]:
    if train.get("mask_mode") is not None:
        train["mask_mode"] = MASK_MODES[train["mask_mode"]]
    for flag in ("no_meta", "no_mab"):
        if not train.get(flag):
            train[flag] = None  # the file decides
    return {"model": {"kind": model, "gab_mode": gab_mode, "mab_mode": mab_mode}, "train": train}


_TRAIN_OPTIONS = [
    click.option("--model", type=click.Choice(["mkcnet", "vanilla", "vanilla_iqa"]), help="Network"),
    click.option("--no-meta", is_flag=True, help="Without Meta Learner nor auxiliary branch"),
    click.option("--no-mab", is_flag=True, help="Diagnosis head on the diagnosis feature only"),
    click.option("--mask-mode", type=click.Choice(list(MASK_MODES)), help="Labels encoded in the mask"),
    click.option("--gab-mode", type=click.Choice(["gab", "fc"]), help="Attention blocks or dense layers"),
    click.option("--mab-mode", type=click.Choice(["gated", "concat"]), help="Gated or plain concatenation"),
    click.option("--epochs", type=int),
    click.option("--batch-size", type=int),
    click.option("--psi", type=int, help="Auxiliary entries per label code"),
    click.option("--alpha", type=float, help="Pseudo step size"),
    click.option("--beta", type=float, help="Meta Learner step size"),
    click.option("--lr", "task_lr", type=float, help="Task network step size"),
]


def train_options(func: Callable[..., Any]) -> Callable[..., Any]:
    for option in reversed(_TRAIN_OPTIONS):
        func = option(func)
    return func


@main.command(short_help="Train a model")
@click.option("--data", "data_dir", type=_EXISTING_DIR, required=True, help="Dataset directory")
@click.option("--out", "out_dir", type=_OUT_PATH, required=True, help="Run directory")
@train_options
@click.option("--lq-ratio", type=click.Choice([str(r) for r in LQ_RATIOS] + ["0", "1"]),
              help="Fraction of the low-quality training images kept")
@click.option("--seed", type=int)
@click.option("--selection", type=click.Choice(["best", "last"]), help="Checkpoint used for the test report")
@click.option("--keep-epochs", is_flag=True, help="Keep a checkpoint per epoch (for grad-analysis)")
@click.option("--record-timing", is_flag=True, help="Record the wall clock in the report")
@click.pass_context
@exit_codes
def train(ctx: click.Context, data_dir: Path, out_dir: Path, model: Optional[str], gab_mode: Optional[str],
          mab_mode: Optional[str], keep_epochs: bool, record_timing: bool, lq_ratio: Optional[str],
          **train_flags: Any) -> None:
    """
    Train on the train split, keep the best-validation and last checkpoints,
    report on the test split. One JSON line per epoch on stdout.
    """
    run = _run_config(ctx, **_train_overrides(model, gab_mode, mab_mode,
                                              lq_ratio=float(lq_ratio) if lq_ratio is not None else None,
                                              **train_flags))
    report = cmd_train(run, data_dir, out_dir, keep_epochs, record_timing,
                       progress=lambda record: click.echo(dump_scalar(record)))
    click.echo(dump_scalar({"out": str(out_dir), "selected": report["selected"],
                            "test_auc": report["test"]["all"]["auc_macro_ovr"], "seed": report["seed"]}))


@main.command("eval", short_help="Evaluate a checkpoint")
@click.option("--checkpoint", "checkpoint_path", type=_EXISTING_DIR, required=True,
              help="Checkpoint directory, or run directory for its selected checkpoint")
@click.option("--data", "data_dir", type=_EXISTING_DIR, required=True, help="Dataset directory")
@click.option("--split", "split_name", type=click.Choice(["train", "val", "test"]), default="test")
@click.option("--out", "out_file", type=_OUT_PATH, help="JSON report (an aligned-text copy is written next to it)")
@exit_codes
def evaluate_command(checkpoint_path: Path, data_dir: Path, split_name: str, out_file: Optional[Path]) -> None:
    """
    AUC, accuracy and F1 on all, high- and low-quality images of a split.
    """
    result, text = cmd_eval(checkpoint_path, data_dir, split_name, out_file)
    click.echo(text if out_file is None else dump_json(result["metrics"]), nl=False)


@main.command(short_help="Run the ablation matrix")
@click.option("--data", "data_dir", type=_EXISTING_DIR, required=True, help="Dataset directory")
@click.option("--out", "out_dir", type=_OUT_PATH, required=True, help="Directory of the runs and summaries")
@click.option("--variants", default="mkcnet,vanilla,no-meta,no-mab,mask-quality,mask-diagnosis",
              help="Comma separated, among %s" % ", ".join(VARIANTS))
@click.option("--seeds", default="0,1,2,3,4", help="Comma separated training seeds")
@click.option("--lq-ratios", default="1.0", help="Comma separated LQ ratios")
@click.option("--epochs", type=int)
@click.option("--workers", type=int, help="Parallel processes (default: MKC_NUM_THREADS or CPU count)")
@click.pass_context
@exit_codes
def ablate(ctx: click.Context, data_dir: Path, out_dir: Path, variants: str, seeds: str, lq_ratios: str,
           epochs: Optional[int], workers: Optional[int]) -> None:
    """
    Train every variant for every seed and LQ ratio, each run in its own
    process; write a per-run summary and the medians.
    """
    run = _run_config(ctx, train={"epochs": epochs})
    grids = cmd_ablate(run, data_dir, out_dir, [v.strip() for v in variants.split(",") if v.strip()],
                       _ints(seeds), _floats(lq_ratios) or (1.0,), workers)
    click.echo(dump_scalar({"out": str(out_dir), "runs": len(grids["summary"])}))


@main.command("grad-analysis", short_help="Cosine between loss gradients")
@click.option("--run", "run_dir", type=_EXISTING_DIR, required=True, help="Run trained with --keep-epochs")
@click.option("--data", "data_dir", type=_EXISTING_DIR, required=True, help="Dataset directory")
@click.option("--split", "split_name", type=click.Choice(["train", "val", "test"]), default="train")
@click.option("--samples", type=int, default=64, help="Images of the analysed batch")
@click.option("--out", "out_file", type=_OUT_PATH, help="JSON report")
@exit_codes
def grad_analysis(run_dir: Path, data_dir: Path, split_name: str, samples: int, out_file: Optional[Path]) -> None:
    """
    Cosine similarity of the shared-backbone gradients of the diagnosis,
    quality and auxiliary losses, per epoch and in median.
    """
    result = cmd_grad_analysis(run_dir, data_dir, split_name, samples, out_file)
    click.echo(dump_json(result["median"]), nl=False)


@main.command(short_help="Export features and activation maps")
@click.option("--checkpoint", "checkpoint_path", type=_EXISTING_DIR, required=True,
              help="Checkpoint directory, or run directory for its selected checkpoint")
@click.option("--data", "data_dir", type=_EXISTING_DIR, required=True, help="Dataset directory")
@click.option("--out", "out_dir", type=_OUT_PATH, required=True, help="Export directory")
@click.option("--split", "split_name", type=click.Choice(["train", "val", "test"]), default="test")
@click.option("--limit", type=int, default=16, help="Images with activation maps")
@click.option("--features/--no-features", default=True)
@click.option("--cams/--no-cams", default=True)
@exit_codes
def export(checkpoint_path: Path, data_dir: Path, out_dir: Path, split_name: str, limit: int,
           features: bool, cams: bool) -> None:
    """
    Write the Meta Learner outputs and diagnosis features (CSV) and the
    activation maps (PGM) of a checkpoint.
    """
    result = cmd_export(checkpoint_path, data_dir, out_dir, split_name, limit, features, cams)
    click.echo(dump_scalar({"out": str(out_dir), "files": len(result["files"])}))


if __name__ == '__main__':
    sys.exit(main())  # pylint: disable=no-value-for-parameter
