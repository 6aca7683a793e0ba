"""Year-indexed name-gender model.

Builds an immutable table of per-name, per-year male/female birth counts from
SSA-layout files (``yobYYYY.txt``, lines ``Name,S,Count``) and answers
time-aware gender-probability queries, including detection of names whose
majority gender flipped between two years.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator

DEFAULT_WINDOW = 5
DEFAULT_OFFSET = 30
DEFAULT_MIN_SAMPLES = 50


class Method(str, Enum):
    """Provenance of a gender estimate."""

    HISTORICAL = "historical"
    PROVIDER = "provider"
    GROUND_TRUTH = "ground-truth"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class GenderEstimate:
    """A p(F) value with provenance.

    ``p_female`` is None exactly when ``method`` is UNKNOWN; absence is a
    value, never a silent 0.5. ``window_radius`` records how far the lookup
    had to widen around the query year (0 = exact year).
    """

    p_female: float | None
    sample_size: int
    method: Method
    provider: str | None = None
    query_year: int | None = None
    window_radius: int | None = None

    def __post_init__(self) -> None:
        if self.method is Method.UNKNOWN:
            if self.p_female is not None or self.sample_size != 0:
                raise ValueError("unknown estimates carry no probability and no samples")
        else:
            if self.p_female is None or not 0.0 <= self.p_female <= 1.0:
                raise ValueError(f"p_female must be in [0,1], got {self.p_female!r}")
            if self.sample_size < 0:
                raise ValueError("sample_size must be nonnegative")

    @property
    def p_male(self) -> float | None:
        return None if self.p_female is None else 1.0 - self.p_female

    @property
    def known(self) -> bool:
        return self.method is not Method.UNKNOWN

    @classmethod
    def unknown(cls, query_year: int | None = None) -> "GenderEstimate":
        return cls(None, 0, Method.UNKNOWN, query_year=query_year)


@dataclass(frozen=True)
class NameYearCount:
    """Birth counts for one (name, year) cell."""

    name: str
    year: int
    male_count: int
    female_count: int

    def __post_init__(self) -> None:
        if self.male_count < 0 or self.female_count < 0:
            raise ValueError("counts must be nonnegative")
        if self.male_count + self.female_count < 1:
            raise ValueError("stored records need at least one count")

    @property
    def total(self) -> int:
        return self.male_count + self.female_count

    @property
    def p_female(self) -> float:
        return self.female_count / self.total


@dataclass(frozen=True)
class GenderShiftRecord:
    """A name whose p(F) was measured at two years.

    ``crossed_majority`` is true iff the name sat strictly on opposite sides
    of 0.5 at the two years.
    """

    name: str
    year_a: int
    year_b: int
    p_female_a: float
    p_female_b: float
    crossed_majority: bool


@dataclass
class IngestTally:
    """Counts of accepted and skipped lines from lenient ingestion."""

    added: int = 0
    skipped: int = 0
    problems: list[tuple[int, str]] = field(default_factory=list)

    def skip(self, line_no: int, reason: str) -> None:
        self.skipped += 1
        self.problems.append((line_no, reason))


_COMBINING_STRIP = re.compile(r"[̀-ͯ]")
_TRAILING_PUNCT = ".,;:!?'\"()[]"


def fold_name(raw: str) -> str:
    """Case- and diacritic-insensitive lookup key ("Rózsa " -> "rozsa")."""
    decomposed = unicodedata.normalize("NFKD", raw.strip())
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return stripped.lower()


def _is_initial(token: str) -> bool:
    core = token[:-1] if token.endswith(".") else token
    return len(core) == 1 and core.isalpha()


def extract_given_token(full_name: str) -> tuple[str, bool]:
    """First name token of a "Given [Middle ...] Family" string.

    Returns ``(token, is_initials_only)`` where the token has trailing
    punctuation removed ("J. H. Woodger" -> ("J", True)) and the flag is set
    when every token before the family name is a bare initial.
    """
    tokens = full_name.split()
    if not tokens:
        raise ValueError("empty author name")
    token = tokens[0].rstrip(_TRAILING_PUNCT)
    pre_family = tokens[:-1] if len(tokens) > 1 else tokens
    return token, all(_is_initial(t) for t in pre_family)


def birth_year_for_publication(pub_year: int, offset: int = DEFAULT_OFFSET) -> int:
    """Assumed birth year for an author publishing in ``pub_year``."""
    if offset <= 0:
        raise ValueError(f"offset must be positive, got {offset}")
    if pub_year <= offset:
        raise ValueError(f"publication year {pub_year} is not after the offset {offset}")
    return pub_year - offset


class NameGenderTable:
    """Immutable (folded name, year) -> counts table.

    Build one with :class:`NameTableBuilder` or :func:`load_ssa_directory`;
    after that it is safe for unlimited concurrent readers.
    """

    def __init__(self, records: dict[tuple[str, int], NameYearCount]):
        self._records = dict(records)
        years = sorted({year for _, year in self._records})
        self._year_range: tuple[int, int] | None = (years[0], years[-1]) if years else None

    def __len__(self) -> int:
        return len(self._records)

    @property
    def year_range(self) -> tuple[int, int] | None:
        return self._year_range

    def counts(self, name: str, year: int) -> NameYearCount | None:
        return self._records.get((fold_name(name), year))

    def records(self) -> Iterator[NameYearCount]:
        """All cells, ordered by (name, year) for reproducible dumps."""
        for key in sorted(self._records):
            yield self._records[key]

    def lookup_p_female(self, name: str, birth_year: int, window: int = DEFAULT_WINDOW) -> GenderEstimate:
        """p(F) for ``name`` around ``birth_year``.

        Uses the exact year when present; otherwise widens symmetrically by
        ±1, ±2, ... up to ``window``, aggregating every year inside the
        smallest radius that has any counts. Hyphenated names missing from
        the table fall back to their pre-hyphen segment. Absence within the
        window is an UNKNOWN estimate, not an error.
        """
        if window < 0:
            raise ValueError("window must be nonnegative")
        key = fold_name(name)
        estimate = self._lookup_folded(key, birth_year, window)
        if not estimate.known and "-" in key:
            head = key.split("-", 1)[0]
            if head:
                fallback = self._lookup_folded(head, birth_year, window)
                if fallback.known:
                    return fallback
        return estimate

    def _lookup_folded(self, key: str, birth_year: int, window: int) -> GenderEstimate:
        for radius in range(window + 1):
            male = female = 0
            for year in range(birth_year - radius, birth_year + radius + 1):
                rec = self._records.get((key, year))
                if rec is not None:
                    male += rec.male_count
                    female += rec.female_count
            total = male + female
            if total > 0:
                return GenderEstimate(
                    p_female=female / total,
                    sample_size=total,
                    method=Method.HISTORICAL,
                    query_year=birth_year,
                    window_radius=radius,
                )
        return GenderEstimate.unknown(query_year=birth_year)

    def detect_gender_shifts(
        self,
        year_a: int,
        year_b: int,
        min_samples: int = DEFAULT_MIN_SAMPLES,
    ) -> list[GenderShiftRecord]:
        """Names measured at both years, largest |Δp(F)| first.

        Only names with at least ``min_samples`` births in each year are
        compared, which keeps one-off rare spellings out of the shift list.
        """
        if min_samples < 1:
            raise ValueError("min_samples must be at least 1")
        if self._year_range is None:
            raise ValueError("table is empty")
        lo, hi = self._year_range
        for year in (year_a, year_b):
            if not lo <= year <= hi:
                raise ValueError(f"year {year} outside table range {lo}-{hi}")

        shifts = []
        for (name, year), rec_a in self._records.items():
            if year != year_a:
                continue
            rec_b = self._records.get((name, year_b))
            if rec_b is None:
                continue
            if rec_a.total < min_samples or rec_b.total < min_samples:
                continue
            pa, pb = rec_a.p_female, rec_b.p_female
            crossed = (pa - 0.5) * (pb - 0.5) < 0
            shifts.append(GenderShiftRecord(name, year_a, year_b, pa, pb, crossed))
        shifts.sort(key=lambda s: (-abs(s.p_female_b - s.p_female_a), s.name))
        return shifts


class NameTableBuilder:
    """Single-writer accumulator for SSA-layout name counts."""

    def __init__(self) -> None:
        self._counts: dict[tuple[str, int], list[int]] = {}

    def ingest(
        self,
        stream: IO[str] | Iterable[str],
        year: int,
        strict: bool = False,
        tally: IngestTally | None = None,
    ) -> int:
        """Merge one year's ``Name,S,Count`` lines; returns records added.

        A record is "added" when a (name, year) pair is seen for the first
        time; later lines for the same pair are summed into it. Malformed
        lines raise in strict mode and are tallied and skipped otherwise.
        """
        added = 0
        for line_no, line in enumerate(stream, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                added += self._reject(line_no, f"expected 3 fields, got {len(parts)}", strict, tally)
                continue
            raw_name, sex, raw_count = (p.strip() for p in parts)
            if sex not in ("F", "M"):
                added += self._reject(line_no, f"unknown sex code {sex!r}", strict, tally)
                continue
            try:
                count = int(raw_count)
            except ValueError:
                added += self._reject(line_no, f"bad count {raw_count!r}", strict, tally)
                continue
            if count < 1 or not raw_name:
                added += self._reject(line_no, "count below 1 or empty name", strict, tally)
                continue

            key = (fold_name(raw_name), year)
            cell = self._counts.get(key)
            if cell is None:
                self._counts[key] = [count, 0] if sex == "M" else [0, count]
                added += 1
            else:
                cell[0 if sex == "M" else 1] += count
        if tally is not None:
            tally.added += added
        return added

    @staticmethod
    def _reject(line_no: int, reason: str, strict: bool, tally: IngestTally | None) -> int:
        if strict:
            raise ValueError(f"line {line_no}: {reason}")
        if tally is not None:
            tally.skip(line_no, reason)
        return 0

    def build(self) -> NameGenderTable:
        records = {
            (name, year): NameYearCount(name, year, male, female)
            for (name, year), (male, female) in self._counts.items()
        }
        return NameGenderTable(records)


_YOB_PATTERN = re.compile(r"^yob(\d{4})\.txt$")


def iter_ssa_files(directory: Path) -> Iterator[tuple[int, Path]]:
    for path in sorted(Path(directory).iterdir()):
        m = _YOB_PATTERN.match(path.name)
        if m:
            yield int(m.group(1)), path


def load_ssa_directory(
    directory: Path | str,
    strict: bool = False,
    tally: IngestTally | None = None,
) -> NameGenderTable:
    """Build a table from a directory of ``yobYYYY.txt`` files."""
    builder = NameTableBuilder()
    found = False
    for year, path in iter_ssa_files(Path(directory)):
        found = True
        with open(path, encoding="utf-8") as fh:
            builder.ingest(fh, year, strict=strict, tally=tally)
    if not found:
        raise FileNotFoundError(f"no yobYYYY.txt files in {directory}")
    return builder.build()
