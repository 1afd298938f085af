"""Scenario configuration: flat ``key = value`` files with ``#`` comments."""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .abstraction import AbstractionParams
from .errors import ConfigurationError, DomainError
from .world import CowParams

Rect = tuple[int, int, int, int]


@dataclass(frozen=True)
class ScenarioConfig:
    cows: int = 16
    obstacles: int = 20
    agents: int = 2
    side: int = 30
    corral: Rect | None = None  # default: centred square of side // 5
    d: float = 6.0
    a: float = 10.0
    transfer: bool = True
    heuristics: bool = False
    total_iterations: int = 50000
    sample_every: int = 50
    master_seed: int = 0
    proximity: float = 3.0
    reward_mode: str = "level"
    learning_rate: float = 0.1
    discount: float = 0.9
    eps_start: float = 1.0
    eps_min: float = 0.05
    eps_decay_fraction: float = 0.6
    fusion_period: int = 1
    sight: int = 8
    jumpstart_fraction: float = 0.05
    convergence_window: int = 20
    convergence_tolerance: float = 2.0
    flee_radius: float = 6.0
    cohesion_radius: float = 5.0
    separation_radius: float = 2.0
    flee_weight: float = 1.0
    cohesion_weight: float = 0.6
    separation_weight: float = 0.8
    random_weight: float = 0.3
    wall_weight: float = 0.5

    def __post_init__(self) -> None:
        for name in ("cows", "agents", "side", "total_iterations", "sample_every", "fusion_period", "sight"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.obstacles < 0:
            raise ConfigurationError(f"obstacles must be nonnegative, got {self.obstacles}")
        if self.sample_every > self.total_iterations:
            raise ConfigurationError("sample_every exceeds total_iterations")
        if not 0 <= self.eps_decay_fraction <= 1:
            raise ConfigurationError("eps_decay_fraction must be in [0, 1]")
        if self.reward_mode not in ("level", "delta"):
            raise ConfigurationError(f"reward_mode must be 'level' or 'delta', got {self.reward_mode!r}")
        try:
            self.abstraction
        except DomainError as exc:
            raise ConfigurationError(f"d/a: {exc}") from exc
        self.cow_params  # validates the cow fields

    @property
    def corral_rect(self) -> Rect:
        if self.corral is not None:
            return tuple(self.corral)  # type: ignore[return-value]
        size = max(2, self.side // 5)
        lo = (self.side - size) // 2
        return (lo, lo, lo + size - 1, lo + size - 1)

    @property
    def abstraction(self) -> AbstractionParams:
        return AbstractionParams(self.d, self.a, self.side)

    @property
    def cow_params(self) -> CowParams:
        return CowParams(
            self.flee_radius, self.cohesion_radius, self.separation_radius,
            self.flee_weight, self.cohesion_weight, self.separation_weight,
            self.random_weight, self.wall_weight,
        )

    def seeds(self) -> dict[str, int]:
        """Per-purpose seeds derived from ``master_seed``; identical for both arms of a comparison."""
        words = np.random.SeedSequence(self.master_seed).generate_state(4, dtype=np.uint32)
        return dict(zip(("map", "world", "cows", "agents"), (int(w) for w in words)))

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def replace(self, **changes) -> ScenarioConfig:
        return dataclasses.replace(self, **changes)


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return " ".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


_FIELD_TYPES = {f.name: f.default for f in fields(ScenarioConfig)}


def _convert(key: str, raw: str):
    default = _FIELD_TYPES[key]
    text = raw.strip()
    try:
        if key == "corral":
            if text.lower() == "none":
                return None
            parts = tuple(int(v) for v in text.replace(",", " ").split())
            if len(parts) != 4:
                raise ValueError("corral needs four integers x1 y1 x2 y2")
            return parts
        if isinstance(default, bool):
            low = text.lower()
            if low in ("true", "on", "yes", "1"):
                return True
            if low in ("false", "off", "no", "0"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigurationError(f"{key}: {exc}") from exc


def parse_config(lines: Iterable[str] | str) -> dict[str, object]:
    if isinstance(lines, str):
        lines = lines.splitlines()
    values: dict[str, object] = {}
    for n, ln in enumerate(lines, start=1):
        body = ln.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigurationError(f"line {n}: expected 'key = value', got {ln.strip()!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigurationError(f"line {n}: unknown key {key!r}")
        values[key] = _convert(key, raw)
    return values


def parse_overrides(pairs: Iterable[str]) -> dict[str, object]:
    out: dict[str, object] = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigurationError(f"unknown key {key!r}")
        out[key] = _convert(key, raw)
    return out


BUNDLED = ("desk", "scenario1", "scenario2", "scenario3")


def config_text(name_or_path: str | Path) -> str:
    """Text of a config file, or of a bundled config given by name."""
    if str(name_or_path) in BUNDLED:
        return resources.files("herdtransfer").joinpath(f"data/{name_or_path}.cfg").read_text()
    path = Path(name_or_path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    return path.read_text()


def load_config(name_or_path: str | Path | None = None, overrides: Mapping[str, object] | None = None) -> ScenarioConfig:
    values = parse_config(config_text(name_or_path)) if name_or_path is not None else {}
    values.update(overrides or {})
    return ScenarioConfig(**values)  # type: ignore[arg-type]
