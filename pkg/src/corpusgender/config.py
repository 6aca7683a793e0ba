"""Run configuration: flat key=value files, flag overrides, stable hashing."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .names import DEFAULT_MIN_SAMPLES, DEFAULT_OFFSET, DEFAULT_WINDOW


@dataclass
class RunConfig:
    """Everything a pipeline run needs, echoed into every report."""

    ssa_dir: str = ""
    corpus: str = ""
    labels: str = ""
    fixtures: str = ""
    cache: str = ""
    out: str = "out"
    years: str = "1950-1980"
    offset: int = DEFAULT_OFFSET
    window: int = DEFAULT_WINDOW
    provider: str = "all"
    type_one_threshold: float = 0.9
    min_samples: int = DEFAULT_MIN_SAMPLES
    seed: int = 0
    strict: bool = False
    rate_limit: float = 0.0
    margin: float = 0.05
    confidence_z: float = 1.96
    proportion: float = 0.5
    composite_lo: int = 1950
    composite_hi: int = 1953
    composite_mode: str = "weighted"
    weighted_trend: bool = False
    female_truth: float = 0.9999
    male_truth: float = 0.0001

    def year_list(self) -> list[int]:
        return parse_years(self.years)

    def provider_list(self) -> list[str]:
        from .predictors import REMOTE_PROVIDERS

        if self.provider == "all":
            return list(REMOTE_PROVIDERS)
        return [self.provider]

    def config_hash(self) -> str:
        """12-hex digest of the canonical key=value rendering."""
        canonical = "\n".join(
            f"{f.name}={getattr(self, f.name)}" for f in sorted(fields(self), key=lambda f: f.name)
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def parse_years(spec: str) -> list[int]:
    """Parse "1950-1980", "1950,1960,1970", or a mix of both."""
    years: set[int] = set()
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            lo_i, hi_i = int(lo), int(hi)
            if hi_i < lo_i:
                raise ValueError(f"year range {part!r} is reversed")
            years.update(range(lo_i, hi_i + 1))
        else:
            years.add(int(part))
    if not years:
        raise ValueError(f"no years in {spec!r}")
    return sorted(years)


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(name: str, raw: str, kind: type):
    if kind is bool:
        lowered = raw.strip().lower()
        if lowered in _BOOL_TRUE:
            return True
        if lowered in _BOOL_FALSE:
            return False
        raise ValueError(f"config key {name}: expected a boolean, got {raw!r}")
    return kind(raw)


def load_config(path: Path | str) -> RunConfig:
    """Read a flat ``key = value`` file; ``#`` starts a comment line."""
    config = RunConfig()
    types = {f.name: type(getattr(config, f.name)) for f in fields(RunConfig)}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key = value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"{path}:{line_no}: unknown config key {key!r}")
            setattr(config, key, _coerce(key, value, types[key]))
    return config


def apply_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    """Command-line flags win over file values; None means "not given"."""
    for key, value in overrides.items():
        if value is None:
            continue
        if not hasattr(config, key):
            raise ValueError(f"unknown config override {key!r}")
        setattr(config, key, value)
    return config
