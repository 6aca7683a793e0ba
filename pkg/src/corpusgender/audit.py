"""Bias metrics over matched persons.

A matched pair is one person carrying both a truth-side p(F) (a positive
personal identification, else the historical name model) and at least one
provider estimate, so every ratio compares the same individuals measured by
different means. Under-counting of identified women is flagged per person
(type one); systematic over-counting shows up as the ratio of provider
aggregate p(F) to truth aggregate p(F) over the identical matched set
(type two).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import mean, median
from typing import Iterable, Mapping, Sequence

from .corpus import Label, PopulationYear
from .names import GenderEstimate, Method, fold_name

DEFAULT_TYPE_ONE_THRESHOLD = 0.9


@dataclass(frozen=True)
class MatchedPair:
    """One person with a truth-side value and provider values."""

    person_key: str
    raw_name: str
    truth_p_female: float
    truth_source: Method
    provider_p_female: Mapping[str, float]


@dataclass(frozen=True)
class TypeOneFlag:
    """A positively identified woman some provider scored below threshold."""

    person_key: str
    raw_name: str
    provider_values: Mapping[str, float]
    severity: float


@dataclass(frozen=True)
class TypeOneReport:
    flags: tuple[TypeOneFlag, ...]
    flagged_median_p_female: float | None
    threshold: float


@dataclass(frozen=True)
class TypeTwoRatio:
    """Provider aggregate over truth aggregate for one (year, provider).

    ``ratio`` is None (Undefined) when the truth aggregate is zero; that is
    a value, not an error, and it is tallied separately downstream.
    """

    year: int | None
    provider: str
    ratio: float | None
    matched_n: int
    truth_aggregate: float
    provider_aggregate: float

    @property
    def defined(self) -> bool:
        return self.ratio is not None


@dataclass(frozen=True)
class RatioSummary:
    median: float
    mean: float
    defined_count: int
    undefined_count: int
    per_provider: Mapping[str, tuple[float, float, int]]


@dataclass(frozen=True)
class TrendFit:
    slope: float
    intercept: float
    r_squared: float
    points: tuple[tuple[float, float], ...]
    degenerate: bool = False

    def predict(self, x: float) -> float:
        return self.slope * x + self.intercept


def build_matched_set(
    pop: PopulationYear,
    responses: Mapping[str, Mapping[str, GenderEstimate]],
) -> list[MatchedPair]:
    """Matched pairs for one year's population.

    ``responses`` maps provider -> folded given name -> estimate. Set aside
    are (a) initials-only persons, which no name-based predictor can score,
    and (b) persons lacking both a personal identification and a name-model
    value. Everyone else with at least one known provider estimate is kept;
    a fractional truth-side p(F) is never grounds for exclusion.
    """
    pairs: list[MatchedPair] = []
    for author in pop.authors:
        if author.is_initials_only:
            continue
        truth = author.effective_estimate()
        if not truth.known:
            continue
        token = fold_name(author.given_token)
        provider_values: dict[str, float] = {}
        for provider in sorted(responses):
            estimate = responses[provider].get(token)
            if estimate is not None and estimate.known:
                provider_values[provider] = estimate.p_female
        if not provider_values:
            continue
        pairs.append(
            MatchedPair(
                person_key=author.person_key,
                raw_name=author.raw_name,
                truth_p_female=truth.p_female,
                truth_source=truth.method,
                provider_p_female=provider_values,
            )
        )
    return pairs


def _is_identified_woman(pair: MatchedPair) -> bool:
    return pair.truth_source is Method.GROUND_TRUTH and pair.truth_p_female > 0.5


def detect_type_one(
    pairs: Iterable[MatchedPair],
    threshold: float = DEFAULT_TYPE_ONE_THRESHOLD,
) -> TypeOneReport:
    """Flag identified women any provider scored below ``threshold``.

    Severity is the gap between the truth value and the worst provider
    value, so the report sorts the most badly misread women first. The
    median is taken over all provider values of the flagged women.
    """
    flags = []
    flagged_values: list[float] = []
    for pair in pairs:
        if not _is_identified_woman(pair):
            continue
        values = pair.provider_p_female
        if not values or min(values.values()) >= threshold:
            continue
        flags.append(
            TypeOneFlag(
                person_key=pair.person_key,
                raw_name=pair.raw_name,
                provider_values=dict(values),
                severity=pair.truth_p_female - min(values.values()),
            )
        )
        flagged_values.extend(values.values())
    flags.sort(key=lambda f: (-f.severity, f.person_key))
    return TypeOneReport(
        flags=tuple(flags),
        flagged_median_p_female=median(flagged_values) if flagged_values else None,
        threshold=threshold,
    )


def compute_type_two(
    pairs: Iterable[MatchedPair],
    provider: str,
    year: int | None = None,
) -> TypeTwoRatio:
    """Aggregate provider p(F) over aggregate truth p(F), same persons both sides."""
    truth_sum = 0.0
    provider_sum = 0.0
    matched = 0
    for pair in pairs:
        value = pair.provider_p_female.get(provider)
        if value is None:
            continue
        matched += 1
        truth_sum += pair.truth_p_female
        provider_sum += value
    ratio = provider_sum / truth_sum if truth_sum > 0.0 else None
    return TypeTwoRatio(
        year=year,
        provider=provider,
        ratio=ratio,
        matched_n=matched,
        truth_aggregate=truth_sum,
        provider_aggregate=provider_sum,
    )


def summarize_ratios(ratios: Sequence[TypeTwoRatio]) -> RatioSummary:
    """Median and mean of the defined ratios across providers and years."""
    defined = [r for r in ratios if r.defined]
    if not defined:
        raise ValueError("no defined ratios to summarize")
    values = [r.ratio for r in defined]
    per_provider: dict[str, tuple[float, float, int]] = {}
    for provider in sorted({r.provider for r in defined}):
        pv = [r.ratio for r in defined if r.provider == provider]
        per_provider[provider] = (median(pv), mean(pv), len(pv))
    return RatioSummary(
        median=median(values),
        mean=mean(values),
        defined_count=len(defined),
        undefined_count=len(ratios) - len(defined),
        per_provider=per_provider,
    )


def fit_trendline(
    points: Sequence[tuple[float, float]],
    weights: Sequence[float] | None = None,
) -> TrendFit:
    """Least-squares line with r_squared = Sxy^2 / (Sxx * Syy).

    Zero y-variance is a degenerate fit reported as r_squared 0 with the
    flag set (the horizontal line is returned). All x identical is an error:
    no line is determined.
    """
    if len(points) < 2:
        raise ValueError("need at least 2 points")
    if weights is None:
        weights = [1.0] * len(points)
    if len(weights) != len(points):
        raise ValueError("weights must parallel points")
    if any(w <= 0 for w in weights):
        raise ValueError("weights must be positive")

    total = float(sum(weights))
    x_bar = sum(w * x for w, (x, _) in zip(weights, points)) / total
    y_bar = sum(w * y for w, (_, y) in zip(weights, points)) / total
    sxx = sum(w * (x - x_bar) ** 2 for w, (x, _) in zip(weights, points))
    syy = sum(w * (y - y_bar) ** 2 for w, (_, y) in zip(weights, points))
    sxy = sum(w * (x - x_bar) * (y - y_bar) for w, ((x, y)) in zip(weights, points))

    if sxx == 0.0:
        raise ValueError("all x values identical; no trendline exists")
    slope = sxy / sxx
    intercept = y_bar - slope * x_bar
    if syy == 0.0:
        return TrendFit(slope, intercept, 0.0, tuple(points), degenerate=True)
    r_squared = (sxy * sxy) / (sxx * syy)
    return TrendFit(slope, intercept, min(r_squared, 1.0), tuple(points))


def composite_point(
    year_stats: Mapping[int, tuple[float, int, int]],
    year_lo: int,
    year_hi: int,
    mode: str = "weighted",
) -> tuple[float, float, int] | None:
    """Collapse ``year_lo..year_hi`` into one (x, women_pct, articles) point.

    ``year_stats`` maps year -> (women_pct, article_count, author_count).
    The y value pools the member years' populations (sum of expected women
    over sum of authors). The x position is the article-weighted mean year,
    or the plain midpoint of the span's present years with
    ``mode="midpoint"``. Returns None when no year in the span is present.
    """
    if mode not in ("weighted", "midpoint"):
        raise ValueError(f"mode must be 'weighted' or 'midpoint', got {mode!r}")
    span = {y: year_stats[y] for y in year_stats if year_lo <= y <= year_hi}
    if not span:
        return None
    articles = sum(count for _, count, _ in span.values())
    authors = sum(count for _, _, count in span.values())
    if articles == 0 or authors == 0:
        return None
    y_value = sum(pct * members for pct, _, members in span.values()) / authors
    if mode == "midpoint":
        x_value = (min(span) + max(span)) / 2.0
    else:
        x_value = sum(year * count for year, (_, count, _) in span.items()) / articles
    if math.isclose(x_value, round(x_value)):
        x_value = float(round(x_value))
    return x_value, y_value, articles


__all__ = [
    "MatchedPair",
    "TypeOneFlag",
    "TypeOneReport",
    "TypeTwoRatio",
    "RatioSummary",
    "TrendFit",
    "build_matched_set",
    "detect_type_one",
    "compute_type_two",
    "summarize_ratios",
    "fit_trendline",
    "composite_point",
    "DEFAULT_TYPE_ONE_THRESHOLD",
]
