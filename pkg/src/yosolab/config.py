"""Run configuration: one JSON document, unknown keys rejected at every level."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .decoder import DecoderConfig
from .flops import REFERENCE_AGGREGATOR, AggregatorCostConfig, AttentionCostConfig
from .tensor import DTYPES


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Tolerances:
    ifa_cfa_f32: float = 1e-5
    ifa_cfa_f64: float = 1e-12
    mhca: float = 1e-6
    softmax: float = 1e-6
    post_attention: float = 1e-5


@dataclass(frozen=True)
class PanopticSettings:
    threshold: float = 0.5
    stuff: tuple[int, ...] = ()


@dataclass(frozen=True)
class RunConfig:
    aggregator: AggregatorCostConfig = REFERENCE_AGGREGATOR
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    panoptic: PanopticSettings = field(default_factory=PanopticSettings)
    seed: int = 0
    dtype: str = "f32"
    tolerances: Tolerances = field(default_factory=Tolerances)

    @property
    def attention_cost(self) -> AttentionCostConfig:
        return AttentionCostConfig(self.decoder.n, self.decoder.d, self.decoder.t)

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    unknown = sorted(set(data) - {f.name for f in fields(RunConfig)})
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}")
    kwargs = {}
    if "aggregator" in data:
        section = data["aggregator"]
        if isinstance(section, dict):
            section = {**asdict(REFERENCE_AGGREGATOR), **section}  # missing fields fall back to the reference sizes
        kwargs["aggregator"] = _build(AggregatorCostConfig, section, "aggregator")
    if "decoder" in data:
        kwargs["decoder"] = _build(DecoderConfig, data["decoder"], "decoder")
    if "panoptic" in data:
        sec = dict(data["panoptic"]) if isinstance(data["panoptic"], dict) else data["panoptic"]
        if isinstance(sec, dict) and "stuff" in sec:
            sec["stuff"] = tuple(int(s) for s in sec["stuff"])
        kwargs["panoptic"] = _build(PanopticSettings, sec, "panoptic")
    if "tolerances" in data:
        kwargs["tolerances"] = _build(Tolerances, data["tolerances"], "tolerances")
    if "seed" in data:
        if not isinstance(data["seed"], int) or isinstance(data["seed"], bool):
            raise ConfigError("seed must be an integer")
        kwargs["seed"] = data["seed"]
    if "dtype" in data:
        if data["dtype"] not in DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(DTYPES)}")
        kwargs["dtype"] = data["dtype"]
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return parse_config(data)


def resolve_seed(seed: int | None, default: int = 0) -> int:
    """Explicit seed, else $YOSO_SEED, else ``default``."""
    if seed is not None:
        return seed
    env = os.environ.get("YOSO_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"YOSO_SEED={env!r} is not an integer") from exc
    return default
