"""Command-line entry point: one verb per pipeline stage.

    corpusgender ingest-ssa    --ssa-dir DIR --out DIR
    corpusgender ingest-corpus --corpus FILE --out DIR [--years SPEC] [--strict]
    corpusgender label         --labels FILE --corpus FILE [--years SPEC]
    corpusgender sample        --corpus FILE --years YEAR --seed N --out DIR
    corpusgender predict       --corpus FILE --provider P (--replay F | --record F) --out DIR
    corpusgender audit         --ssa-dir DIR --corpus FILE --labels FILE --replay F --out DIR
    corpusgender shifts        --ssa-dir DIR --years A,B --out DIR
    corpusgender mock-server   --fixtures FILE [--port N]

Flags override config-file values (``--config PATH``, flat ``key = value``
lines). Exit status is 0 iff no stage reported an error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import store
from .config import RunConfig, apply_overrides, load_config
from .corpus import CorpusParseError, GroundTruthBook, ParseTally, parse_bibliography
from .names import IngestTally, extract_given_token, fold_name, load_ssa_directory
from .predictors import (
    LOCAL,
    REMOTE_PROVIDERS,
    PayloadStore,
    PredictorClient,
    PredictorError,
)
from .report import run_audit, write_reports
from .sampling import SamplePlan, draw_sample


class StageError(Exception):
    """A pipeline stage failed; the message names the stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corpusgender", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
        p.add_argument("--config", help="flat key=value config file; flags win")
        p.add_argument("--ssa-dir", dest="ssa_dir", help="directory of yobYYYY.txt files")
        p.add_argument("--corpus", help="bibliographic XML file")
        p.add_argument("--labels", help="ground-truth CSV (person_key,raw_name,label,evidence)")
        p.add_argument("--offset", type=int, help="publication-to-birth year offset (default 30)")
        p.add_argument("--window", type=int, help="max lookup widening radius (default 5)")
        p.add_argument("--years", help="year set, e.g. 1950-1980 or 1950,1960")
        p.add_argument("--provider", choices=[*REMOTE_PROVIDERS, LOCAL, "all"],
                       help="which predictor(s) to query")
        p.add_argument("--replay", metavar="FIXTURE", help="serve provider payloads from this store")
        p.add_argument("--record", metavar="FIXTURE", help="record provider payloads into this store")
        p.add_argument("--cache", help="persistent response cache path")
        p.add_argument("--base-url", dest="base_url", help="override provider base URL (mock server)")
        p.add_argument("--seed", type=int, help="RNG seed recorded into reports")
        p.add_argument("--strict", action="store_true", default=None,
                       help="fail on malformed input instead of tallying")
        p.add_argument("--min-samples", dest="min_samples", type=int,
                       help="shift detection per-year sample floor (default 50)")
        p.add_argument("--rate-limit", dest="rate_limit", type=float,
                       help="requests-per-second ceiling for live providers")
        p.add_argument("--out", help="output directory (default ./out)")
        return p

    for name, descr in (
        ("ingest-ssa", "build and persist the name model"),
        ("ingest-corpus", "parse and persist the bibliography index"),
        ("label", "check ground-truth labels against the corpus"),
        ("sample", "plan and draw a seeded article sample"),
        ("predict", "fetch or replay provider estimates into the cache"),
        ("audit", "run the full bias audit and emit reports"),
        ("shifts", "detect gender-shifted names between two years"),
        ("mock-server", "serve fixture payloads over HTTP in all shapes"),
    ):
        sp = common(sub.add_parser(name, help=descr))
        if name == "mock-server":
            sp.add_argument("--fixtures", help="payload store the server answers from")
            sp.add_argument("--port", type=int, default=8731)
            sp.add_argument("--quota", type=int, help="start returning 429 after this many requests")
    return parser


def _configure(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {
        key: getattr(args, key, None)
        for key in (
            "ssa_dir", "corpus", "labels", "offset", "window", "years", "provider",
            "cache", "seed", "strict", "min_samples", "rate_limit", "out",
        )
    }
    if getattr(args, "replay", None):
        overrides["fixtures"] = args.replay
    elif getattr(args, "record", None):
        overrides["fixtures"] = args.record
    return apply_overrides(config, overrides)


def _mode(args: argparse.Namespace) -> str:
    if getattr(args, "replay", None):
        return "replay"
    if getattr(args, "record", None):
        return "record"
    return "live"


def cmd_ingest_ssa(args: argparse.Namespace) -> int:
    config = _configure(args)
    if not config.ssa_dir:
        raise StageError("ingest-ssa", ValueError("--ssa-dir is required"))
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    tally = IngestTally()
    try:
        table = load_ssa_directory(config.ssa_dir, strict=config.strict, tally=tally)
    except (OSError, ValueError) as exc:
        raise StageError("ingest-ssa", exc) from exc
    rows = store.save_name_table(table, out / store.NAME_TABLE_FILE)
    lo, hi = table.year_range
    years = len({rec.year for rec in table.records()})
    print(f"{years} years ({lo}-{hi}), {rows} name-year records, {tally.skipped} skipped")
    for line_no, reason in tally.problems[:20]:
        print(f"  skipped line {line_no}: {reason}")
    return 0


def cmd_ingest_corpus(args: argparse.Namespace) -> int:
    config = _configure(args)
    if not config.corpus:
        raise StageError("ingest-corpus", ValueError("--corpus is required"))
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    tally = ParseTally()
    years = set(config.year_list()) if args.years or config.years else None
    try:
        with open(config.corpus, "rb") as fh:
            records = parse_bibliography(fh, years, strict=config.strict, tally=tally)
            count = store.save_articles(records, out / store.ARTICLE_INDEX_FILE)
    except (OSError, CorpusParseError) as exc:
        raise StageError("ingest-corpus", exc) from exc
    skipped = tally.skipped_missing_year + tally.skipped_missing_key
    print(
        f"{count} records indexed, {tally.skipped_year_filter} outside year set, "
        f"{skipped} skipped, {tally.empty_author_records} with no authors"
    )
    for problem in tally.problems[:20]:
        print(f"  {problem}")
    return 0


def cmd_label(args: argparse.Namespace) -> int:
    config = _configure(args)
    if not config.labels:
        raise StageError("label", ValueError("--labels is required"))
    truth = GroundTruthBook()
    try:
        with open(config.labels, encoding="utf-8", newline="") as fh:
            loaded = truth.load(fh)
    except (OSError, ValueError) as exc:
        raise StageError("label", exc) from exc
    print(f"{loaded} labels loaded")

    if config.corpus:
        years = set(config.year_list())
        seen: set[str] = set()
        with open(config.corpus, "rb") as fh:
            for article in parse_bibliography(fh, years, strict=config.strict):
                pids = article.author_pids or (None,) * len(article.authors)
                for raw, pid in zip(article.authors, pids):
                    seen.add(fold_name(pid) if pid else fold_name(raw))
        matched = sum(1 for key in truth.keys() if key in seen)
        unmatched = sorted(set(truth.keys()) - seen)
        print(f"{matched} labels match corpus persons, {len(unmatched)} unmatched")
        for key in unmatched[:20]:
            print(f"  unmatched label: {key}")
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    config = _configure(args)
    if not config.corpus:
        raise StageError("sample", ValueError("--corpus is required"))
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    years = set(config.year_list())
    try:
        with open(config.corpus, "rb") as fh:
            articles = list(parse_bibliography(fh, years, strict=config.strict))
    except (OSError, CorpusParseError) as exc:
        raise StageError("sample", exc) from exc
    if not articles:
        raise StageError("sample", ValueError(f"no articles in years {sorted(years)}"))

    plan = SamplePlan.plan(
        len(articles), config.seed, config.confidence_z, config.margin, config.proportion
    )
    chosen = draw_sample(articles, plan.sample_size, config.seed)
    plan_doc = {
        "population_size": plan.population_size,
        "confidence_z": plan.confidence_z,
        "margin": plan.margin,
        "proportion": plan.proportion,
        "sample_size": plan.sample_size,
        "seed": plan.seed,
        "generator": plan.generator,
        "config_hash": config.config_hash(),
    }
    (out / "sample_plan.json").write_text(json.dumps(plan_doc, indent=2, sort_keys=True) + "\n")
    with open(out / "sampled_articles.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={config.config_hash()} seed={config.seed}\r\n")
        writer = csv.writer(fh)
        writer.writerow(["corpus_key", "year", "authors"])
        for article in chosen:
            writer.writerow([article.corpus_key, article.year, len(article.authors)])
    print(f"population {plan.population_size} articles -> sample {plan.sample_size} (seed {plan.seed})")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    config = _configure(args)
    if not config.corpus:
        raise StageError("predict", ValueError("--corpus is required"))
    if config.provider == "local":
        raise StageError("predict", ValueError("the local model needs no prediction pass; use audit"))
    mode = _mode(args)
    years = set(config.year_list())
    names: set[str] = set()
    try:
        with open(config.corpus, "rb") as fh:
            for article in parse_bibliography(fh, years, strict=config.strict):
                for raw in article.authors:
                    token, initials = extract_given_token(raw)
                    if not initials:
                        names.add(fold_name(token))
    except (OSError, CorpusParseError) as exc:
        raise StageError("predict", exc) from exc

    fixtures = PayloadStore(config.fixtures) if config.fixtures else None
    cache = PayloadStore(config.cache) if config.cache else None
    providers = config.provider_list()
    total = 0
    for provider in providers:
        client = PredictorClient(
            provider,
            mode=mode,
            fixtures=fixtures,
            cache=cache,
            base_url=args.base_url,
            rate_limit=config.rate_limit or None,
        )
        try:
            responses = client.predict_batch(sorted(names))
        except PredictorError as exc:
            raise StageError(f"predict[{provider}]", exc) from exc
        total += len(responses)
        print(f"{provider}: {len(responses)} names")
    print(f"{total} responses ({mode} mode)")
    return 0


def cmd_audit(args: argparse.Namespace) -> int:
    config = _configure(args)
    if not config.corpus and not (Path(config.out) / store.ARTICLE_INDEX_FILE).exists():
        raise StageError("audit", ValueError("--corpus is required (no persisted index found)"))
    if not config.ssa_dir and not (Path(config.out) / store.NAME_TABLE_FILE).exists():
        raise StageError("audit", ValueError("--ssa-dir is required (no persisted model found)"))
    mode = _mode(args)
    try:
        outcome = run_audit(config, mode=mode, base_url=args.base_url)
    except PredictorError as exc:
        raise StageError("audit[predict]", exc) from exc
    except (OSError, ValueError, CorpusParseError) as exc:
        raise StageError("audit", exc) from exc
    written = write_reports(outcome, config.out)
    for path in written:
        print(path)
    if outcome.ratio_summary is not None:
        print(
            f"type-two median {outcome.ratio_summary.median:.3f}, "
            f"mean {outcome.ratio_summary.mean:.3f} over {outcome.ratio_summary.defined_count} ratios"
        )
    print(f"type-one flags: {len(outcome.type_one.flags)}")
    return 0


def cmd_shifts(args: argparse.Namespace) -> int:
    config = _configure(args)
    if not config.ssa_dir:
        raise StageError("shifts", ValueError("--ssa-dir is required"))
    years = config.year_list()
    if len(years) < 2:
        raise StageError("shifts", ValueError("need two years, e.g. --years 1900,2000"))
    year_a, year_b = years[0], years[-1]
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        table = load_ssa_directory(config.ssa_dir, strict=config.strict)
        records = table.detect_gender_shifts(year_a, year_b, config.min_samples)
    except (OSError, ValueError) as exc:
        raise StageError("shifts", exc) from exc

    path = out / "shifts.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={config.config_hash()} seed={config.seed}\r\n")
        writer = csv.writer(fh)
        writer.writerow(["name", "year_a", "p_female_a", "year_b", "p_female_b",
                         "delta", "crossed_majority"])
        for rec in records:
            writer.writerow([
                rec.name, rec.year_a, f"{rec.p_female_a:.6f}", rec.year_b,
                f"{rec.p_female_b:.6f}", f"{rec.p_female_b - rec.p_female_a:.6f}",
                str(rec.crossed_majority).lower(),
            ])
    crossed = sum(1 for r in records if r.crossed_majority)
    print(f"{len(records)} names compared, {crossed} crossed the majority line -> {path}")
    return 0


def cmd_mock_server(args: argparse.Namespace) -> int:
    from .mockserver import MockProviderServer

    fixtures = getattr(args, "fixtures", None) or getattr(args, "replay", None)
    if not fixtures:
        raise StageError("mock-server", ValueError("--fixtures is required"))
    server = MockProviderServer(PayloadStore(fixtures), port=args.port,
                                quota=getattr(args, "quota", None))
    print(f"serving {len(server.store)} fixture payloads on port {server.server_address[1]}")
    for provider in REMOTE_PROVIDERS:
        print(f"  {server.base_url(provider)}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


_COMMANDS = {
    "ingest-ssa": cmd_ingest_ssa,
    "ingest-corpus": cmd_ingest_corpus,
    "label": cmd_label,
    "sample": cmd_sample,
    "predict": cmd_predict,
    "audit": cmd_audit,
    "shifts": cmd_shifts,
    "mock-server": cmd_mock_server,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except StageError as exc:
        print(f"error in {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
