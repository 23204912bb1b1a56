# -*- coding: utf-8 -*-
# Checkpoints
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
A checkpoint is a directory with `params.mkct` (one blob per parameter,
named `theta/<name>` or `phi/<name>`) and `checkpoint.json` (run
configuration, epoch, metrics and blob offsets).
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, NamedTuple, Optional, Union

from .blob import read_at, write_store
from .config import RunConfig, parse_run_config
from .dumper import dump_json
from .exception import BlobFormatError, CheckpointError, ConfigError
from .model import MKCModel
from .params import ParamSet
from .tensor import Tensor

log = logging.getLogger(__name__)

FORMAT = "mkcnet-checkpoint/1"
PARAMS_FILE = "params.mkct"
INDEX_FILE = "checkpoint.json"


class Checkpoint(NamedTuple):
    theta: ParamSet
    phi: ParamSet
    run: RunConfig
    info: Dict[str, Any]

    def model(self) -> MKCModel:
        return MKCModel.from_run(self.run)


def save_checkpoint(directory: Union[str, Path], theta: ParamSet, phi: ParamSet, run: RunConfig,
                    info: Optional[Dict[str, Any]] = None) -> Path:
    """
    Args:
        directory: Created if needed; existing files are replaced
        theta: Task network parameters
        phi: Meta Learner parameters, possibly empty
        run: Configuration that rebuilds the networks
        info: Extra values (epoch, metrics)
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    items = [("theta/" + name, t.data) for name, t in theta.items()] \
        + [("phi/" + name, t.data) for name, t in phi.items()]
    offsets = write_store(directory / PARAMS_FILE, items)
    index = {
        "format": FORMAT,
        "config": run.echo(),
        "seed": run.train.seed,
        "info": dict(info or {}),
        "params": [{"name": name, "shape": list(array.shape), "offset": offset}
                   for (name, array), offset in zip(items, offsets)],
    }
    (directory / INDEX_FILE).write_text(dump_json(index), encoding="utf-8")
    log.info("checkpoint written to %s", directory)
    return directory


def load_checkpoint(directory: Union[str, Path]) -> Checkpoint:
    """
    Read a checkpoint and check it against the networks its configuration
    builds.
    """
    directory = Path(directory)
    try:
        index = json.loads((directory / INDEX_FILE).read_text(encoding="utf-8"))
    except OSError as ex:
        raise CheckpointError("cannot read checkpoint %s: %s" % (directory, ex)) from ex
    except ValueError as ex:
        raise CheckpointError("invalid checkpoint index in %s: %s" % (directory, ex)) from ex
    if index.get("format") != FORMAT:
        raise CheckpointError("unknown checkpoint format %r" % index.get("format"))
    try:
        run = parse_run_config(index["config"])
        arrays = read_at(directory / PARAMS_FILE, [p["offset"] for p in index["params"]])
    except (ConfigError, BlobFormatError, KeyError, OSError) as ex:
        raise CheckpointError("corrupted checkpoint %s: %s" % (directory, ex)) from ex

    theta, phi = ParamSet(), ParamSet()
    for name, array in arrays.items():
        net, _, param = name.partition("/")
        target = theta if net == "theta" else phi
        target[param] = Tensor(array, requires_grad=True, name=param)
    expected_theta, expected_phi = MKCModel.from_run(run).init_params(run.train.seed)
    for expected, actual, label in ((expected_theta, theta, "task network"), (expected_phi, phi, "Meta Learner")):
        if list(expected.keys()) != list(actual.keys()) or \
                any(expected[n].shape != actual[n].shape for n in expected):
            raise CheckpointError("%s parameters of %s do not match the configured architecture" % (label, directory))
    return Checkpoint(theta, phi, run, index.get("info", {}))
