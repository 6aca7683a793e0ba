"""Audit orchestration and report emission.

Runs the population/prediction/metric pipeline over the configured years and
writes the report family: per-year population tables, the per-person
under-count flags, the per-provider over-count ratios, a machine-readable
summary, and a bubble-scatter figure (always with its data CSV alongside, so
nothing downstream ever scrapes graphics). All outputs embed the config hash
and seed and are byte-stable for a fixed (config, seed, fixtures) triple.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .audit import (
    MatchedPair,
    RatioSummary,
    TrendFit,
    TypeOneReport,
    TypeTwoRatio,
    build_matched_set,
    composite_point,
    compute_type_two,
    detect_type_one,
    fit_trendline,
    summarize_ratios,
)
from .config import RunConfig
from .corpus import (
    GroundTruthBook,
    PopulationYear,
    attach_provider_estimates,
    build_population,
    ingest_ground_truth,
    parse_bibliography,
    resolve_population_gender,
)
from .names import (
    GenderEstimate,
    NameGenderTable,
    birth_year_for_publication,
    fold_name,
    load_ssa_directory,
)
from .predictors import (
    LOCAL,
    LocalHistoricalPredictor,
    PayloadStore,
    PredictorClient,
)
from . import store

SUMMARY_SCHEMA_FILE = Path(__file__).with_name("summary.schema.json")


@dataclass
class YearAudit:
    population: PopulationYear
    pairs: list[MatchedPair]
    ratios: list[TypeTwoRatio]


@dataclass
class AuditOutcome:
    config: RunConfig
    years: dict[int, YearAudit]
    type_one: TypeOneReport
    ratios: list[TypeTwoRatio]
    ratio_summary: RatioSummary | None
    trend: TrendFit | None
    figure_points: list[tuple[float, float, int, str]]


def _provider_estimates(
    provider: str,
    names: list[str],
    config: RunConfig,
    model: NameGenderTable,
    year: int,
    fixtures: PayloadStore | None,
    cache: PayloadStore | None,
    mode: str,
    base_url: str | None = None,
) -> dict[str, GenderEstimate]:
    if provider == LOCAL:
        birth_year = birth_year_for_publication(year, config.offset)
        local = LocalHistoricalPredictor(model, birth_year, config.window)
        responses = local.predict_batch(names)
    else:
        client = PredictorClient(
            provider,
            mode=mode,
            fixtures=fixtures,
            cache=cache,
            base_url=base_url,
            rate_limit=config.rate_limit or None,
        )
        responses = client.predict_batch(names)
    return {r.queried_name: r.estimate for r in responses}


def run_audit(
    config: RunConfig,
    *,
    mode: str = "replay",
    base_url: str | None = None,
) -> AuditOutcome:
    """Execute the audit for every configured year present in the corpus."""
    out_dir = Path(config.out)
    years = config.year_list()

    table_path = out_dir / store.NAME_TABLE_FILE
    model = store.load_name_table(table_path) if table_path.exists() else load_ssa_directory(config.ssa_dir)

    truth = GroundTruthBook()
    if config.labels:
        with open(config.labels, encoding="utf-8", newline="") as fh:
            truth.load(fh)

    by_year: dict[int, list] = {}
    index_path = out_dir / store.ARTICLE_INDEX_FILE
    if index_path.exists():
        for article in store.load_articles(index_path, years):
            by_year.setdefault(article.year, []).append(article)
    else:
        with open(config.corpus, "rb") as corpus_fh:
            for article in parse_bibliography(corpus_fh, years, strict=config.strict):
                by_year.setdefault(article.year, []).append(article)

    fixtures = PayloadStore(config.fixtures) if config.fixtures else None
    cache = PayloadStore(config.cache) if config.cache else None

    year_audits: dict[int, YearAudit] = {}
    all_ratios: list[TypeTwoRatio] = []
    pooled_pairs: dict[str, MatchedPair] = {}

    for year in sorted(by_year):
        pop = build_population(
            by_year[year], year, truth,
            female_truth=config.female_truth, male_truth=config.male_truth,
        )
        pop = resolve_population_gender(pop, model, config.offset, config.window)

        names = sorted(
            {fold_name(a.given_token) for a in pop.authors if not a.is_initials_only and a.given_token}
        )
        responses: dict[str, dict[str, GenderEstimate]] = {}
        for provider in config.provider_list():
            estimates = _provider_estimates(
                provider, names, config, model, year, fixtures, cache, mode, base_url
            )
            responses[provider] = estimates
            pop = attach_provider_estimates(pop, provider, estimates)

        pairs = build_matched_set(pop, responses)
        ratios = []
        for provider in sorted(responses):
            ratio = compute_type_two(pairs, provider, year=year)
            if ratio.matched_n > 0:
                ratios.append(ratio)
        year_audits[year] = YearAudit(pop, pairs, ratios)
        all_ratios.extend(ratios)
        for pair in pairs:
            pooled_pairs.setdefault(pair.person_key, pair)

    type_one = detect_type_one(
        [pooled_pairs[k] for k in sorted(pooled_pairs)], config.type_one_threshold
    )
    ratio_summary = summarize_ratios(all_ratios) if any(r.defined for r in all_ratios) else None

    figure_points = _figure_points(config, year_audits)
    trend = None
    if len({x for x, *_ in figure_points}) >= 2:
        points = [(x, y) for x, y, _, _ in figure_points]
        weights = [float(a) for _, _, a, _ in figure_points] if config.weighted_trend else None
        trend = fit_trendline(points, weights)

    return AuditOutcome(
        config=config,
        years=year_audits,
        type_one=type_one,
        ratios=all_ratios,
        ratio_summary=ratio_summary,
        trend=trend,
        figure_points=figure_points,
    )


def _figure_points(
    config: RunConfig, year_audits: Mapping[int, YearAudit]
) -> list[tuple[float, float, int, str]]:
    stats = {
        year: (
            audit.population.women_pct * 100.0,
            audit.population.article_count,
            len(audit.population.authors),
        )
        for year, audit in year_audits.items()
    }
    points: list[tuple[float, float, int, str]] = []
    combined = composite_point(stats, config.composite_lo, config.composite_hi, config.composite_mode)
    if combined is not None:
        x, pct, articles = combined
        label = f"{config.composite_lo}-{config.composite_hi}"
        points.append((x, pct, articles, label))
    for year in sorted(stats):
        if combined is not None and config.composite_lo <= year <= config.composite_hi:
            continue
        pct, articles, _ = stats[year]
        points.append((float(year), pct, articles, str(year)))
    points.sort(key=lambda p: p[0])
    return points


# --- emission -------------------------------------------------------------

def _open_report(path: Path, config: RunConfig):
    fh = open(path, "w", encoding="utf-8", newline="")
    fh.write(f"# config_hash={config.config_hash()} seed={config.seed}\r\n")
    return fh


def _fmt(value: float) -> str:
    return format(value, ".6f")


def write_reports(outcome: AuditOutcome, out_dir: Path | str) -> list[Path]:
    """Emit the six audit artifacts; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = outcome.config
    written = []

    early = {y: a for y, a in outcome.years.items() if config.composite_lo <= y <= config.composite_hi}
    late = {y: a for y, a in outcome.years.items() if y not in early}
    for name, subset in (("table1.csv", early), ("table2.csv", late)):
        path = out / name
        with _open_report(path, config) as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["year", "articles", "population", "mentions", "identified_pct",
                 "expected_women", "women_pct"]
            )
            for year in sorted(subset):
                pop = subset[year].population
                writer.writerow(
                    [
                        year,
                        pop.article_count,
                        len(pop.authors),
                        pop.mention_count,
                        _fmt(pop.identified_fraction * 100.0),
                        _fmt(pop.expected_women),
                        _fmt(pop.women_pct * 100.0),
                    ]
                )
        written.append(path)

    providers = sorted({p for r in outcome.ratios for p in [r.provider]})
    if not providers:
        providers = sorted(config.provider_list())
    path = out / "table3.csv"
    with _open_report(path, config) as fh:
        writer = csv.writer(fh)
        writer.writerow(["person_key", "raw_name", "severity"] + [f"p_female_{p}" for p in providers])
        for flag in outcome.type_one.flags:
            row = [flag.person_key, flag.raw_name, _fmt(flag.severity)]
            for provider in providers:
                value = flag.provider_values.get(provider)
                row.append(_fmt(value) if value is not None else "")
            writer.writerow(row)
    written.append(path)

    path = out / "table4.csv"
    with _open_report(path, config) as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["year", "provider", "ratio", "matched_n", "truth_aggregate", "provider_aggregate"]
        )
        for ratio in sorted(outcome.ratios, key=lambda r: (r.year or 0, r.provider)):
            writer.writerow(
                [
                    ratio.year if ratio.year is not None else "",
                    ratio.provider,
                    _fmt(ratio.ratio) if ratio.defined else "undefined",
                    ratio.matched_n,
                    _fmt(ratio.truth_aggregate),
                    _fmt(ratio.provider_aggregate),
                ]
            )
    written.append(path)

    path = out / "summary.json"
    path.write_text(json.dumps(_summary_doc(outcome), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    written.append(path)

    path = out / "figure1.csv"
    with _open_report(path, config) as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "women_pct", "articles", "label"])
        for x, pct, articles, label in outcome.figure_points:
            writer.writerow([_fmt(x), _fmt(pct), articles, label])
    written.append(path)

    path = out / "figure1.svg"
    path.write_text(
        render_figure(outcome.figure_points, outcome.trend, config.config_hash(), config.seed),
        encoding="utf-8",
    )
    written.append(path)
    return written


def _summary_doc(outcome: AuditOutcome) -> dict:
    config = outcome.config
    doc: dict = {
        "schema_version": 1,
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "config": config.as_dict(),
        "years": {
            str(year): {
                "articles": audit.population.article_count,
                "population": len(audit.population.authors),
                "mentions": audit.population.mention_count,
                "identified_pct": audit.population.identified_fraction * 100.0,
                "expected_women": audit.population.expected_women,
                "women_pct": audit.population.women_pct * 100.0,
                "matched_pairs": len(audit.pairs),
            }
            for year, audit in outcome.years.items()
        },
        "type_one": {
            "threshold": outcome.type_one.threshold,
            "flag_count": len(outcome.type_one.flags),
            "median_flagged_p_female": outcome.type_one.flagged_median_p_female,
        },
        "type_two": None,
        "trend": None,
    }
    if outcome.ratio_summary is not None:
        summary = outcome.ratio_summary
        doc["type_two"] = {
            "median": summary.median,
            "mean": summary.mean,
            "defined_count": summary.defined_count,
            "undefined_count": summary.undefined_count,
            "per_provider": {
                p: {"median": m, "mean": a, "count": n}
                for p, (m, a, n) in summary.per_provider.items()
            },
        }
    if outcome.trend is not None:
        doc["trend"] = {
            "slope": outcome.trend.slope,
            "intercept": outcome.trend.intercept,
            "r_squared": outcome.trend.r_squared,
            "degenerate": outcome.trend.degenerate,
            "points": [[x, y] for x, y in outcome.trend.points],
        }
    return doc


# --- figure ---------------------------------------------------------------

_SVG_W, _SVG_H = 640, 400
_ML, _MR, _MT, _MB = 64, 24, 24, 48
_R_MAX = 26.0


def render_figure(
    points: list[tuple[float, float, int, str]],
    trend: TrendFit | None,
    config_hash: str,
    seed: int,
) -> str:
    """Bubble scatter as SVG 1.1: x year, y women %, bubble area ∝ articles."""
    xs = [p[0] for p in points] or [0.0, 1.0]
    ys = [p[1] for p in points] or [0.0, 1.0]
    x_lo, x_hi = min(xs) - 2.0, max(xs) + 2.0
    y_lo, y_hi = 0.0, max(max(ys) * 1.2, 1.0)
    max_articles = max((p[2] for p in points), default=1) or 1

    def sx(x: float) -> float:
        return _ML + (x - x_lo) / (x_hi - x_lo) * (_SVG_W - _ML - _MR)

    def sy(y: float) -> float:
        return _SVG_H - _MB - (y - y_lo) / (y_hi - y_lo) * (_SVG_H - _MT - _MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_SVG_W}" height="{_SVG_H}" viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f"<desc>config_hash={config_hash} seed={seed}</desc>",
        f'<rect x="0" y="0" width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<line x1="{_ML}" y1="{_SVG_H - _MB}" x2="{_SVG_W - _MR}" y2="{_SVG_H - _MB}" '
        f'stroke="black" stroke-width="1"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_SVG_H - _MB}" stroke="black" stroke-width="1"/>',
    ]

    for tick in _ticks(x_lo, x_hi):
        parts.append(
            f'<text x="{sx(tick):.2f}" y="{_SVG_H - _MB + 18}" font-size="11" '
            f'text-anchor="middle">{tick:g}</text>'
        )
    for tick in _ticks(y_lo, y_hi):
        parts.append(
            f'<text x="{_ML - 8}" y="{sy(tick) + 4:.2f}" font-size="11" '
            f'text-anchor="end">{tick:g}</text>'
        )
    parts.append(
        f'<text x="{(_ML + _SVG_W - _MR) / 2:.2f}" y="{_SVG_H - 10}" font-size="12" '
        f'text-anchor="middle">year</text>'
    )
    parts.append(
        f'<text x="16" y="{(_MT + _SVG_H - _MB) / 2:.2f}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 16 {(_MT + _SVG_H - _MB) / 2:.2f})">women (%)</text>'
    )

    if trend is not None:
        x1, x2 = min(xs), max(xs)
        parts.append(
            f'<line class="trend" x1="{sx(x1):.2f}" y1="{sy(trend.predict(x1)):.2f}" '
            f'x2="{sx(x2):.2f}" y2="{sy(trend.predict(x2)):.2f}" '
            f'stroke="#555555" stroke-width="1.5" stroke-dasharray="6 3"/>'
        )
        parts.append(
            f'<text x="{_SVG_W - _MR - 6}" y="{_MT + 14}" font-size="12" text-anchor="end">'
            f"R&#178; = {trend.r_squared:.3f}</text>"
        )

    for x, pct, articles, label in points:
        radius = _R_MAX * math.sqrt(articles / max_articles)
        parts.append(
            f'<circle class="bubble" cx="{sx(x):.3f}" cy="{sy(pct):.3f}" r="{radius:.6f}" '
            f'fill="#4477aa" fill-opacity="0.55" stroke="#223355" stroke-width="1" '
            f'data-articles="{articles}" data-label="{label}"/>'
        )

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    span = hi - lo
    if span <= 0:
        return [lo]
    raw_step = span / target
    magnitude = 10 ** math.floor(math.log10(raw_step))
    for mult in (1, 2, 5, 10):
        step = mult * magnitude
        if span / step <= target:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    tick = first
    while tick <= hi + 1e-9:
        ticks.append(round(tick, 10))
        tick += step
    return ticks


def load_summary_schema() -> dict:
    return json.loads(SUMMARY_SCHEMA_FILE.read_text(encoding="utf-8"))
