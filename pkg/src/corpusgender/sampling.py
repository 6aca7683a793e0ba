"""Finite-population sample planning and seeded article draws."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Sequence, TypeVar

DEFAULT_Z = 1.96
DEFAULT_MARGIN = 0.05
DEFAULT_PROPORTION = 0.5

T = TypeVar("T")


def sample_size(
    population: int,
    z: float = DEFAULT_Z,
    margin: float = DEFAULT_MARGIN,
    proportion: float = DEFAULT_PROPORTION,
) -> int:
    """Sample size for estimating a proportion in a finite population.

    Infinite-population size n0 = z^2 p (1-p) / e^2, shrunk by the
    finite-population correction n0 / (1 + (n0 - 1)/N), rounded up, and
    capped at N. With the defaults this gives 383 at N=100000 and 238 at
    N=620.
    """
    if population < 1:
        raise ValueError(f"population must be at least 1, got {population}")
    if margin <= 0:
        raise ValueError(f"margin must be positive, got {margin}")
    if not 0.0 < proportion < 1.0:
        raise ValueError(f"proportion must be inside (0,1), got {proportion}")
    if z <= 0:
        raise ValueError(f"z must be positive, got {z}")
    n0 = z * z * proportion * (1.0 - proportion) / (margin * margin)
    n = math.ceil(n0 / (1.0 + (n0 - 1.0) / population))
    return min(n, population)


@dataclass(frozen=True)
class SamplePlan:
    """A reproducible sampling decision for one population."""

    population_size: int
    confidence_z: float
    margin: float
    proportion: float
    sample_size: int
    seed: int
    generator: str = "python-random-mt19937"

    @classmethod
    def plan(
        cls,
        population: int,
        seed: int,
        z: float = DEFAULT_Z,
        margin: float = DEFAULT_MARGIN,
        proportion: float = DEFAULT_PROPORTION,
    ) -> "SamplePlan":
        return cls(
            population_size=population,
            confidence_z=z,
            margin=margin,
            proportion=proportion,
            sample_size=sample_size(population, z, margin, proportion),
            seed=seed,
        )


def draw_sample(items: Sequence[T], n: int, seed: int) -> list[T]:
    """Uniform sample of ``n`` items without replacement, original order kept.

    Deterministic for a fixed seed; the seed and generator name belong in any
    report built from the draw.
    """
    if n < 0:
        raise ValueError("sample size must be nonnegative")
    if n > len(items):
        raise ValueError(f"cannot draw {n} from {len(items)} items")
    rng = random.Random(seed)
    chosen = sorted(rng.sample(range(len(items)), n))
    return [items[i] for i in chosen]
