# -*- coding: utf-8 -*-
# Run configuration
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
Validated configuration of a run.

Values come, by decreasing priority, from the command-line flags, from a TOML
file and from the defaults below. A `RunConfig` is embedded in every artifact
written by the command line.
"""
import logging
import os
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .exception import ConfigError

try:
    import tomllib  # type: ignore
except ImportError:  # pragma: no cover
    import tomli as tomllib  # type: ignore

log = logging.getLogger(__name__)

DEGRADATION_KINDS = ("blur", "shadow", "spots", "contrast")
LQ_RATIOS = (0.0, 0.25, 0.5, 0.75, 1.0)


def _check_distribution(values: Tuple[float, ...]) -> Tuple[float, ...]:
    if any(v < 0 for v in values):
        raise ValueError("values must be >= 0")
    if abs(sum(values) - 1.0) > 1e-6:
        raise ValueError("values must sum to 1, got %r" % sum(values))
    return values


class SynthConfig(BaseModel):
    """Synthetic dataset generation."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_samples: int = Field(2000, ge=3)  # one per diagnosis class at least
    priors: Tuple[float, float, float] = (0.4, 0.3, 0.3)
    lq_fraction: float = Field(0.4, ge=0.0, le=1.0)
    degradation_mix: Dict[str, float] = Field(
        default_factory=lambda: {"blur": 0.25, "shadow": 0.3, "spots": 0.3, "contrast": 0.15})
    image_size: int = Field(32, ge=16)
    quality_levels: Literal[2, 3] = 2
    seed: int = 0
    split_ratios: Tuple[float, float, float] = (0.7, 0.1, 0.2)

    @field_validator("priors", "split_ratios")
    @classmethod
    def _distribution(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        return _check_distribution(value)

    @field_validator("degradation_mix")
    @classmethod
    def _mix(cls, value: Dict[str, float]) -> Dict[str, float]:
        unknown = set(value) - set(DEGRADATION_KINDS)
        if unknown:
            raise ValueError("unknown degradation kinds %s" % sorted(unknown))
        if any(v < 0 for v in value.values()) or sum(value.values()) <= 0:
            raise ValueError("weights must be >= 0 with a positive sum")
        return value


class ModelConfig(BaseModel):
    """Architecture."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["mkcnet", "vanilla", "vanilla_iqa"] = "mkcnet"
    in_channels: int = Field(1, gt=0)
    image_size: int = Field(32, gt=0)
    backbone_channels: Tuple[int, ...] = (16, 32, 32)
    convs_per_block: int = Field(2, gt=0)
    meta_channels: Tuple[int, ...] = (8, 16)
    reduction: int = Field(4, gt=0)
    spatial_kernel: int = Field(7, gt=0)
    gab_mode: Literal["gab", "fc"] = "gab"
    mab_mode: Literal["gated", "concat"] = "gated"
    num_diagnosis: int = Field(3, ge=2)
    num_quality: int = Field(2, ge=2)

    @model_validator(mode="after")
    def _geometry(self) -> 'ModelConfig':
        if not self.backbone_channels or not self.meta_channels:
            raise ValueError("backbone_channels and meta_channels must not be empty")
        for name, blocks in (("backbone_channels", self.backbone_channels), ("meta_channels", self.meta_channels)):
            if self.image_size % (2 ** len(blocks)):
                raise ValueError("image_size %d is not divisible by 2**len(%s)" % (self.image_size, name))
        if self.backbone_channels[-1] % self.reduction:
            raise ValueError("reduction %d does not divide the branch width %d"
                             % (self.reduction, self.backbone_channels[-1]))
        if self.spatial_kernel % 2 == 0:
            raise ValueError("spatial_kernel must be odd")
        return self

    @property
    def branch_width(self) -> int:
        return self.backbone_channels[-1]

    @property
    def feature_size(self) -> int:
        return self.image_size // (2 ** len(self.backbone_channels))


class TrainConfig(BaseModel):
    """Optimisation, loss weights and ablation switches."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    alpha: float = Field(0.01, ge=0.0)
    beta: float = Field(0.01, gt=0.0)
    task_lr: float = Field(0.01, gt=0.0)
    weight_decay: float = Field(0.0005, ge=0.0)
    lambda_reg: float = Field(0.2, ge=0.0)
    gamma_focal: float = Field(2.0, ge=0.0)
    psi: int = Field(2, ge=1)
    batch_size: int = Field(32, gt=0)
    epochs: int = Field(30, ge=0)
    seed: int = 0
    no_meta: bool = False
    no_mab: bool = False
    mask_mode: Literal["joint", "quality_only", "diagnosis_only"] = "joint"
    reg_mode: Literal["batch", "per_sample"] = "batch"
    y_omega_mode: Literal["renormalized", "raw"] = "renormalized"
    selection: Literal["best", "last"] = "best"
    lq_ratio: float = 1.0

    @field_validator("lq_ratio")
    @classmethod
    def _lq_ratio(cls, value: float) -> float:
        if value not in LQ_RATIOS:
            raise ValueError("lq_ratio must be one of %s" % (LQ_RATIOS,))
        return value


class RunConfig(BaseModel):
    """Everything a run depends on."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    data: SynthConfig = Field(default_factory=SynthConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)

    def echo(self) -> Dict[str, Any]:
        """JSON-able copy, embedded in the artifacts."""
        return self.model_dump(mode="json")

    def replace(self, **sections: Mapping[str, Any]) -> 'RunConfig':
        """A copy with some fields of some sections changed, validated again."""
        values = self.echo()
        for section, fields in sections.items():
            values[section].update(fields)
        return parse_run_config(values)


def parse_run_config(values: Mapping[str, Any]) -> RunConfig:
    """
    Validate raw values.
    Raises:
        ConfigError naming the first invalid field
    """
    try:
        return RunConfig.model_validate(values)
    except ValidationError as ex:
        error = ex.errors()[0]
        field = ".".join(str(part) for part in error["loc"])
        raise ConfigError(error["msg"], field) from ex


def read_toml(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, "rb") as stream:
            return tomllib.load(stream)
    except OSError as ex:
        raise ConfigError("cannot read %s: %s" % (path, ex)) from ex
    except tomllib.TOMLDecodeError as ex:
        raise ConfigError("invalid TOML in %s: %s" % (path, ex)) from ex


def load_run_config(path: Optional[Union[str, Path]] = None,
                    overrides: Optional[Mapping[str, Mapping[str, Any]]] = None) -> RunConfig:
    """
    Merge defaults, the TOML file and the overrides (flags), then validate.

    Args:
        path: Optional TOML file with `[data]`, `[model]` and `[train]` tables
        overrides: section -> field -> value; `None` values are ignored
    Returns:
        The validated configuration
    """
    values = read_toml(path) if path else {}
    for section, fields in (overrides or {}).items():
        table = values.setdefault(section, {})
        if not isinstance(table, dict):
            raise ConfigError("must be a table", section)
        table.update({k: v for k, v in fields.items() if v is not None})
    config = parse_run_config(values)
    log.debug("run configuration: %s", config.echo())
    return config


def num_threads() -> int:
    """Worker cap, from `MKC_NUM_THREADS`."""
    value = os.environ.get("MKC_NUM_THREADS")
    if not value:
        return os.cpu_count() or 1
    try:
        count = int(value)
    except ValueError:
        raise ConfigError("must be an integer, got %r" % value, "MKC_NUM_THREADS") from None
    if count < 1:
        raise ConfigError("must be >= 1", "MKC_NUM_THREADS")
    return count
