"""Run configuration: flat JSON keys, CLI flags override file values."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ManifestError

COUNTER_MODES = ("reset", "persist")
MEMORY_MODES = ("offline", "causal")
CONFIDENCE_SOURCES = ("proxy", "head", "none")

# JSON keys as written in config files; "C_h" is accepted for gru_hidden.
_ALIASES = {"C": "channels", "C_h": "gru_hidden", "D": "max_disparity", "confidence": "confidence_source"}


@dataclass(frozen=True)
class RunConfig:
    K: int = 5
    T: int | None = None  # only a generation preset, runs take T from data
    N: int = 10
    alpha: float = 1.0
    gamma: float = 0.9
    sigma: float = 5.0
    sigma_p: float = 0.25
    scale: float = 0.25
    channels: int = 32
    gru_hidden: int = 32
    conf_hidden: int = 16
    max_disparity: int | None = None  # defaults to sW // 2 at run time
    radius: int = 4
    pool_factor: int = 4
    policy: str = "ppm"
    play: bool = True
    counter_mode: str = "reset"
    memory_mode: str = "offline"
    confidence_source: str = "proxy"
    memory: bool = True
    seed: int = 0
    head_path: str | None = None

    def __post_init__(self):
        if self.policy not in ("full", "latest", "random", "ppm"):
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.counter_mode not in COUNTER_MODES:
            raise ValueError(f"counter_mode must be one of {COUNTER_MODES}")
        if self.memory_mode not in MEMORY_MODES:
            raise ValueError(f"memory_mode must be one of {MEMORY_MODES}")
        if self.confidence_source not in CONFIDENCE_SOURCES:
            raise ValueError(f"confidence source must be one of {CONFIDENCE_SOURCES}")
        if self.K < 1 or self.N < 1:
            raise ValueError("K and N must be >= 1")
        if self.scale not in (1 / 16, 1 / 8, 1 / 4):
            raise ValueError("scale must be one of 1/16, 1/8, 1/4")

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in doc.items():
            name = _ALIASES.get(key, key)
            if name not in known:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[name] = value
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ManifestError(f"config not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ManifestError(f"config is not valid JSON: {path}: {exc}") from exc
        try:
            return cls.from_dict(doc)
        except (ValueError, TypeError) as exc:
            raise ManifestError(f"bad config {path}: {exc}") from exc

    def with_overrides(self, **overrides) -> "RunConfig":
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **overrides) if overrides else self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}
