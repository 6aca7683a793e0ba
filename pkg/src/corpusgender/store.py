"""Persisted intermediate forms so pipeline stages can rerun independently.

The name model round-trips through a gzipped ``name,year,male,female`` CSV
and the parsed corpus through newline-delimited JSON records; both are plain
enough to inspect with zcat/jq when an audit needs debugging.
"""

from __future__ import annotations

import gzip
import json
from pathlib import Path
from typing import Iterable, Iterator

from .corpus import ArticleRecord, RecordKind
from .names import NameGenderTable, NameYearCount

NAME_TABLE_FILE = "names.csv.gz"
ARTICLE_INDEX_FILE = "articles.ndjson"


def save_name_table(table: NameGenderTable, path: Path) -> int:
    count = 0
    with gzip.open(path, "wt", encoding="utf-8") as fh:
        for rec in table.records():
            fh.write(f"{rec.name},{rec.year},{rec.male_count},{rec.female_count}\n")
            count += 1
    return count


def load_name_table(path: Path) -> NameGenderTable:
    records: dict[tuple[str, int], NameYearCount] = {}
    with gzip.open(path, "rt", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            name, year, male, female = line.split(",")
            records[(name, int(year))] = NameYearCount(name, int(year), int(male), int(female))
    return NameGenderTable(records)


def save_articles(articles: Iterable[ArticleRecord], path: Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for a in articles:
            fh.write(
                json.dumps(
                    {
                        "key": a.corpus_key,
                        "year": a.year,
                        "venue": a.venue,
                        "kind": a.record_kind.value,
                        "authors": list(a.authors),
                        "pids": list(a.author_pids),
                    },
                    sort_keys=True,
                )
                + "\n"
            )
            count += 1
    return count


def load_articles(path: Path, year_filter: Iterable[int] | None = None) -> Iterator[ArticleRecord]:
    years = frozenset(year_filter) if year_filter is not None else None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if years is not None and doc["year"] not in years:
                continue
            yield ArticleRecord(
                corpus_key=doc["key"],
                year=doc["year"],
                venue=doc["venue"],
                authors=tuple(doc["authors"]),
                record_kind=RecordKind(doc["kind"]),
                author_pids=tuple(doc["pids"]),
            )
