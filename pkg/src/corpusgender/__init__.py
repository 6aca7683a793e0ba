"""Historically-indexed name-gender inference and corpus bias audits.

The pipeline: build a year-indexed name-gender table from SSA-layout birth
count files, stream-parse a DBLP-shaped bibliography into per-year author
populations, resolve each member's gender from ground-truth labels or the
historical model, fetch (or replay) provider estimates, and measure type-one
and type-two bias over matched persons.
"""

from .audit import (
    MatchedPair,
    RatioSummary,
    TrendFit,
    TypeOneFlag,
    TypeOneReport,
    TypeTwoRatio,
    build_matched_set,
    compute_type_two,
    detect_type_one,
    fit_trendline,
    summarize_ratios,
)
from .corpus import (
    ArticleRecord,
    AuthorRecord,
    CorpusParseError,
    GroundTruthBook,
    Label,
    ParseTally,
    PopulationYear,
    RecordKind,
    attach_provider_estimates,
    build_population,
    ingest_ground_truth,
    parse_bibliography,
    resolve_population_gender,
)
from .names import (
    GenderEstimate,
    GenderShiftRecord,
    IngestTally,
    Method,
    NameGenderTable,
    NameTableBuilder,
    NameYearCount,
    birth_year_for_publication,
    extract_given_token,
    fold_name,
    load_ssa_directory,
)
from .predictors import (
    BackCalculatedCounts,
    LocalHistoricalPredictor,
    PayloadStore,
    PredictorBatchError,
    PredictorClient,
    PredictorError,
    ProviderNetworkError,
    ProviderPayloadError,
    ProviderQuotaError,
    ProviderResponse,
    RateLimiter,
    ReplayMissError,
    back_calculate_counts,
    record_replay,
)
from .sampling import SamplePlan, draw_sample, sample_size

__version__ = "0.1.0"
