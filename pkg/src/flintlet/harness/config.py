"""Harness configuration: desk-scale defaults plus JSON config file loading.

The config file is a JSON object with sections ``limits``, ``queue``,
``prices``, and ``harness``; keys inside each section are the snake_case
field names of the corresponding dataclass, and omitted keys keep their
defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from ..cost import PriceSheet
from ..faas import RuntimeLimits
from ..queue import QueueConfig


@dataclass
class HarnessSettings:
    store_backend: str = "memory"  # memory | disk
    store_root: str = ".flintlet-store"
    bucket: str = "taxi"
    prefix: str = "nyc"
    scratch_bucket: str = "flint-scratch"
    records: int = 100_000
    seed: int = 42
    parts: int = 8
    partitions: int = 8  # for queries other than Q1/Q2, which pin 30
    split_size: int = 32 * 1024 * 1024
    flush_threshold_bytes: int = 64 * 1024 * 1024

    def data_prefix(self) -> str:
        return f"{self.prefix}/data/"

    def weather_key(self) -> str:
        return f"{self.prefix}/weather.csv"


def _desk_scale_limits() -> RuntimeLimits:
    return RuntimeLimits(max_concurrency=8)


@dataclass
class Config:
    limits: RuntimeLimits = field(default_factory=_desk_scale_limits)
    queue: QueueConfig = field(default_factory=QueueConfig)
    prices: PriceSheet = field(default_factory=PriceSheet)
    harness: HarnessSettings = field(default_factory=HarnessSettings)


def _apply(cls, defaults, overrides: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} config keys: {sorted(unknown)}")
    return dataclasses.replace(defaults, **overrides)


def load_config(path: str | None = None) -> Config:
    cfg = Config()
    if path is None:
        return cfg
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    cfg.limits = _apply(RuntimeLimits, cfg.limits, raw.get("limits", {}))
    cfg.queue = _apply(QueueConfig, cfg.queue, raw.get("queue", {}))
    cfg.prices = _apply(PriceSheet, cfg.prices, raw.get("prices", {}))
    cfg.harness = _apply(HarnessSettings, cfg.harness, raw.get("harness", {}))
    return cfg
