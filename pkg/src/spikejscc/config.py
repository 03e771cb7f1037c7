"""Experiment configuration with strict validation."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

__all__ = ["ExperimentConfig", "ConfigError", "load_config", "ValidationError"]


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DatasetConfig(_Strict):
    source: Literal["synthetic", "file"] = "synthetic"
    path: Optional[str] = None
    num_classes: int = Field(2, ge=2)
    d_u: int = Field(16, ge=1)
    num_steps: int = Field(20, ge=1)
    spike_density: float = Field(0.2, ge=0.0, le=1.0)
    jitter: float = Field(0.05, ge=0.0, le=1.0)
    per_class: int = Field(100, ge=2)
    seed: Optional[int] = Field(None, ge=0)
    classes: Optional[list[int]] = None
    train_fraction: float = Field(0.5, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _path_required(self):
        if self.source == "file":
            if not self.path:
                raise ValueError("path is required when source is 'file'")
            if not Path(self.path).exists():
                raise ValueError(f"dataset file {self.path!r} does not exist")
        return self


class TopologyConfig(_Strict):
    rate: float = Field(1.0, gt=0.0)
    encoder_hidden: int = Field(0, ge=0)
    decoder_hidden: Optional[int] = Field(None, ge=0)
    output_recurrence: bool = False
    init_scale: float = Field(0.1, ge=0.0)
    decoder_init_scale: Optional[float] = Field(None, ge=0.0)


class FilterConfig(_Strict):
    type: Literal["raised_cosine", "exponential"] = "raised_cosine"
    num_filters: int = Field(2, ge=1)
    window: int = Field(10, ge=1)
    offset: float = Field(1.0, gt=0.0)
    betas: Optional[list[float]] = None


class ChannelConfig(_Strict):
    type: Literal["gaussian_quantized"] = "gaussian_quantized"
    snr_db: Optional[float] = None
    threshold: float = Field(0.5, gt=0.0, le=1.0)
    calibration: Literal["dataset", "per_example"] = "dataset"

    @property
    def noiseless(self) -> bool:
        return self.snr_db is None


class HyperparamConfig(_Strict):
    eta: float = Field(0.05, ge=0.0)
    eta_encoder: Optional[float] = Field(None, ge=0.0)
    kappa: float = Field(0.2, ge=0.0, lt=1.0)
    kappa2: float = Field(0.2, ge=0.0, lt=1.0)
    alpha: float = Field(0.9, ge=0.0, lt=1.0)
    eps: float = Field(1e-12, ge=0.0)
    eligibility: Literal["geometric", "accumulate"] = "geometric"
    baseline: bool = True
    baseline_timing: Literal["lagged", "per_step", "online"] = "lagged"
    reset_per_example: bool = True


class EvaluationConfig(_Strict):
    every: int = Field(100, ge=1)
    repetitions: int = Field(1, ge=1)
    target_rate: float = Field(1.0, gt=0.0, le=1.0)
    initial: bool = True


class ExperimentConfig(_Strict):
    scheme: Literal["jscc", "uncoded"] = "jscc"
    dataset: DatasetConfig = DatasetConfig()
    topology: TopologyConfig = TopologyConfig()
    filters: FilterConfig = FilterConfig()
    channel: ChannelConfig = ChannelConfig()
    hyperparams: HyperparamConfig = HyperparamConfig()
    evaluation: EvaluationConfig = EvaluationConfig()
    iterations: int = Field(500, ge=0)
    seed: int = Field(0, ge=0)
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if self.scheme == "uncoded" and self.topology.rate != 1.0:
            raise ValueError("topology.rate: uncoded transmission fixes the rate at 1")
        if self.d_x < 1:
            raise ValueError(f"topology.rate: d_x = round(rate * d_u) = {self.d_x} must be >= 1")
        return self

    @property
    def d_u(self) -> int:
        return self.dataset.d_u

    @property
    def d_x(self) -> int:
        return int(round(self.topology.rate * self.dataset.d_u))

    @property
    def decoder_hidden(self) -> int:
        h = self.topology.decoder_hidden
        return self.d_x if h is None else h

    def filter_dict(self) -> dict:
        d = self.filters.model_dump()
        if d["betas"] is None:
            d.pop("betas")
        return d

    def with_updates(self, **updates) -> "ExperimentConfig":
        """Copy with dotted-path overrides, revalidated: ``with_updates(**{"channel.snr_db": 0})``."""
        data = self.model_dump()
        for path, value in updates.items():
            node = data
            *parents, leaf = path.split(".")
            for p in parents:
                node = node[p]
            node[leaf] = value
        return ExperimentConfig.model_validate(data)


def format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc)) from None


def load_config(path) -> ExperimentConfig:
    """Load a config file, or the ``config`` block of a run manifest."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if isinstance(data, dict) and "manifest_version" in data:
        data = data["config"]
    return parse_config(data)
