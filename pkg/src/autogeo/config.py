"""Generator configuration (TOML) and its defaults."""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .caption import RefinerConfig
from .geometry import EPS_CONSTRUCT, DegeneracyThresholds
from .render import CanvasSpec, MaskParams, Palette
from .selector import Complexity, SelectionRules
from .sketch import MAX_CLAUSE_RETRIES, MAX_GROUP_RETRIES

__all__ = ["Counts", "GenConfig", "ConfigError", "load_config", "config_from_dict", "config_to_dict"]

RATIO = (1, 2, 2)  # easy : medium : hard


class ConfigError(ValueError):
    """Invalid or unknown configuration key/value."""


@dataclass(frozen=True)
class Counts:
    easy: int = 200
    medium: int = 400
    hard: int = 400

    def __post_init__(self):
        if min(self.easy, self.medium, self.hard) < 0:
            raise ConfigError("counts must be non-negative")

    @property
    def total(self) -> int:
        return self.easy + self.medium + self.hard

    def of(self, c: Complexity) -> int:
        return getattr(self, c.value)

    @classmethod
    def from_total(cls, n: int) -> "Counts":
        """Split ``n`` samples by the default 1:2:2 ratio (remainder goes to the later tiers)."""
        unit = n // sum(RATIO)
        e, m, h = (r * unit for r in RATIO)
        rest = n - (e + m + h)
        extra = [0, 0, 0]
        for i in range(rest):
            extra[2 - i % 2] += 1
        return cls(e + extra[0], m + extra[1], h + extra[2])

    @classmethod
    def parse(cls, text: str) -> "Counts":
        """``"E,M,H"`` or a single total."""
        parts = [p.strip() for p in text.split(",")]
        try:
            nums = [int(p) for p in parts]
        except ValueError:
            raise ConfigError(f"bad counts {text!r}") from None
        if len(nums) == 1:
            return cls.from_total(nums[0])
        if len(nums) != 3:
            raise ConfigError(f"counts need 1 or 3 values, got {text!r}")
        return cls(*nums)


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    counts: Counts = field(default_factory=Counts)
    catalog: Optional[str] = None  # None -> bundled reference catalog
    out: str = "out"
    workers: int = 1
    sample_retries: int = 3
    eps: float = EPS_CONSTRUCT
    clause_retries: int = MAX_CLAUSE_RETRIES
    group_retries: int = MAX_GROUP_RETRIES
    rules: SelectionRules = field(default_factory=SelectionRules)
    thresholds: DegeneracyThresholds = field(default_factory=DegeneracyThresholds)
    canvas: CanvasSpec = field(default_factory=CanvasSpec)
    palette: Palette = field(default_factory=Palette)
    mask: MaskParams = field(default_factory=MaskParams)
    refiner: RefinerConfig = field(default_factory=RefinerConfig)

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.sample_retries < 0:
            raise ConfigError("sample_retries must be >= 0")

    def replace(self, **changes) -> "GenConfig":
        return dataclasses.replace(self, **changes)


_SECTIONS = {
    "counts": Counts,
    "rules": SelectionRules,
    "thresholds": DegeneracyThresholds,
    "canvas": CanvasSpec,
    "palette": Palette,
    "mask": MaskParams,
    "refiner": RefinerConfig,
}
_TUPLE_FIELDS = {("palette", "strokes"), ("palette", "backgrounds")}


def config_from_dict(data: Mapping[str, Any]) -> GenConfig:
    known = {f.name for f in dataclasses.fields(GenConfig)}
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            if not isinstance(value, Mapping):
                raise ConfigError(f"[{key}] must be a table")
            allowed = {f.name for f in dataclasses.fields(cls)}
            bad = sorted(set(value) - allowed)
            if bad:
                raise ConfigError(f"unknown key(s) in [{key}]: {', '.join(bad)}")
            sub = {k: tuple(v) if (key, k) in _TUPLE_FIELDS else v for k, v in value.items()}
            try:
                kwargs[key] = cls(**sub)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{key}]: {exc}") from None
        else:
            kwargs[key] = value
    try:
        return GenConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> GenConfig:
    """Read a TOML config; relative ``catalog``/``out`` paths resolve against its directory."""
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    base = path.parent
    for key in ("catalog", "out"):
        if isinstance(data.get(key), str) and not Path(data[key]).is_absolute():
            data[key] = str(base / data[key])
    return config_from_dict(data)


def config_to_dict(cfg: GenConfig) -> dict:
    out = dataclasses.asdict(cfg)
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in out.items()}
