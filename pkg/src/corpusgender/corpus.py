"""Bibliographic corpus ingestion and per-year author populations.

Stream-parses DBLP-shaped XML (record elements with a ``key`` attribute and
``author``/``year``/venue children, Latin text escaped as entities) into
:class:`ArticleRecord` values with memory bounded by a single record, merges
human ground-truth labels, and builds deduplicated per-year populations whose
gender tabulations keep every member, fractional p(F) included.
"""

from __future__ import annotations

import csv
import dataclasses
import html.entities
import xml.parsers.expat
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Iterator, Mapping

from .names import (
    DEFAULT_OFFSET,
    DEFAULT_WINDOW,
    GenderEstimate,
    Method,
    NameGenderTable,
    birth_year_for_publication,
    extract_given_token,
    fold_name,
)

FEMALE_TRUTH_P = 0.9999
MALE_TRUTH_P = 0.0001

TRUTH_SOURCE = "ground-truth"
MODEL_SOURCE = "historical"

_RECORD_TAGS = frozenset(
    {
        "article",
        "inproceedings",
        "proceedings",
        "book",
        "incollection",
        "phdthesis",
        "mastersthesis",
        "www",
    }
)
_VENUE_TAGS = ("journal", "booktitle", "publisher")


class RecordKind(str, Enum):
    ARTICLE = "article"
    INPROCEEDINGS = "inproceedings"
    BOOK = "book"
    OTHER = "other"


def _kind_for_tag(tag: str) -> RecordKind:
    if tag == "article":
        return RecordKind.ARTICLE
    if tag == "inproceedings":
        return RecordKind.INPROCEEDINGS
    if tag == "book":
        return RecordKind.BOOK
    return RecordKind.OTHER


@dataclass(frozen=True)
class ArticleRecord:
    """One bibliographic record.

    ``author_pids`` parallels ``authors``: the corpus person id from the
    author element's ``pid`` attribute, or None when the corpus supplies
    none.
    """

    corpus_key: str
    year: int
    venue: str
    authors: tuple[str, ...]
    record_kind: RecordKind
    author_pids: tuple[str | None, ...] = ()

    def __post_init__(self) -> None:
        if not self.corpus_key:
            raise ValueError("corpus_key must be nonempty")
        if self.author_pids and len(self.author_pids) != len(self.authors):
            raise ValueError("author_pids must parallel authors")


class CorpusParseError(ValueError):
    """Malformed XML or a record violating the corpus contract."""

    def __init__(self, message: str, byte_offset: int | None = None,
                 line: int | None = None, column: int | None = None):
        detail = message
        if byte_offset is not None:
            detail += f" (byte offset {byte_offset}"
            if line is not None:
                detail += f", line {line}, column {column}"
            detail += ")"
        super().__init__(detail)
        self.byte_offset = byte_offset
        self.line = line
        self.column = column


@dataclass
class ParseTally:
    """What a lenient parse skipped or flagged rather than repaired."""

    records_seen: int = 0
    yielded: int = 0
    skipped_year_filter: int = 0
    skipped_missing_year: int = 0
    skipped_missing_key: int = 0
    empty_author_records: int = 0
    unknown_entities: int = 0
    problems: list[str] = field(default_factory=list)


class _RecordAssembler:
    """Expat callbacks that hold at most one record's worth of state."""

    def __init__(self, strict: bool, tally: ParseTally):
        self.strict = strict
        self.tally = tally
        self.depth = 0
        self.records: list[tuple[str, str | None, dict[str, list[str]], list[tuple[str, str | None]]]] = []
        self._key: str | None = None
        self._tag: str | None = None
        self._fields: dict[str, list[str]] = {}
        self._authors: list[tuple[str, str | None]] = []
        self._text: list[str] = []
        self._capture = False
        self._author_pid: str | None = None

    def start(self, tag: str, attrs: dict[str, str]) -> None:
        self.depth += 1
        if self.depth == 2 and tag in _RECORD_TAGS:
            self._tag = tag
            self._key = attrs.get("key")
            self._fields = {}
            self._authors = []
        elif self.depth == 3 and self._tag is not None:
            self._capture = True
            self._text = []
            self._author_pid = attrs.get("pid") if tag == "author" else None

    def end(self, tag: str) -> None:
        if self.depth == 3 and self._capture:
            text = "".join(self._text).strip()
            if tag == "author":
                self._authors.append((text, self._author_pid))
            else:
                self._fields.setdefault(tag, []).append(text)
            self._capture = False
        elif self.depth == 2 and self._tag is not None:
            self.records.append((self._tag, self._key, self._fields, self._authors))
            self._tag = None
        self.depth -= 1

    def characters(self, data: str) -> None:
        if self._capture:
            self._text.append(data)

    def default(self, data: str) -> None:
        # Entity references land here when expat cannot expand them itself.
        if data.startswith("&") and data.endswith(";"):
            expansion = html.entities.entitydefs.get(data[1:-1])
            if expansion is None:
                if self.strict:
                    raise CorpusParseError(f"unknown entity {data}")
                self.tally.unknown_entities += 1
                expansion = data
            if self._capture:
                self._text.append(expansion)


def parse_bibliography(
    source: IO[bytes] | IO[str],
    year_filter: Iterable[int] | None = None,
    *,
    strict: bool = False,
    tally: ParseTally | None = None,
    chunk_size: int = 1 << 16,
) -> Iterator[ArticleRecord]:
    """Yield :class:`ArticleRecord` values from a DBLP-shaped XML stream.

    Streaming contract: the stream is consumed in ``chunk_size`` pieces and
    resident state never exceeds one record, so arbitrarily large documents
    parse in bounded memory. Records outside ``year_filter`` are dropped
    before any object is built. Malformed XML raises
    :class:`CorpusParseError` carrying the byte offset; records missing a
    ``year`` or ``key`` are skipped with a tally in lenient mode and raise in
    strict mode. Records with no authors are yielded but counted in the
    tally, never silently dropped.
    """
    years = frozenset(year_filter) if year_filter is not None else None
    if tally is None:
        tally = ParseTally()

    parser = xml.parsers.expat.ParserCreate()
    parser.buffer_text = True
    parser.UseForeignDTD(True)
    assembler = _RecordAssembler(strict, tally)
    parser.StartElementHandler = assembler.start
    parser.EndElementHandler = assembler.end
    parser.CharacterDataHandler = assembler.characters
    parser.DefaultHandlerExpand = assembler.default

    raw = getattr(source, "buffer", source)
    fed = 0
    while True:
        chunk = raw.read(chunk_size)
        if isinstance(chunk, str):
            chunk = chunk.encode("utf-8")
        try:
            parser.Parse(chunk, not chunk)
        except xml.parsers.expat.ExpatError as exc:
            raise CorpusParseError(
                f"malformed XML: {exc}",
                byte_offset=fed + max(parser.ErrorByteIndex, 0),
                line=parser.ErrorLineNumber,
                column=parser.ErrorColumnNumber,
            ) from exc
        fed += len(chunk)

        if assembler.records:
            for item in assembler.records:
                record = _finish_record(item, years, strict, tally)
                if record is not None:
                    yield record
            assembler.records.clear()
        if not chunk:
            break


def _finish_record(
    item: tuple[str, str | None, dict[str, list[str]], list[tuple[str, str | None]]],
    years: frozenset[int] | None,
    strict: bool,
    tally: ParseTally,
) -> ArticleRecord | None:
    tag, key, fields, authors = item
    tally.records_seen += 1

    if not key:
        if strict:
            raise CorpusParseError(f"record #{tally.records_seen} ({tag}) has no key attribute")
        tally.skipped_missing_key += 1
        tally.problems.append(f"record #{tally.records_seen}: missing key")
        return None

    year_texts = fields.get("year")
    year: int | None = None
    if year_texts:
        try:
            year = int(year_texts[0])
        except ValueError:
            year = None
    if year is None:
        if strict:
            raise CorpusParseError(f"record {key!r} has no usable year")
        tally.skipped_missing_year += 1
        tally.problems.append(f"record {key!r}: missing year")
        return None

    if years is not None and year not in years:
        tally.skipped_year_filter += 1
        return None

    venue = ""
    for venue_tag in _VENUE_TAGS:
        if fields.get(venue_tag):
            venue = fields[venue_tag][0]
            break

    if not authors:
        tally.empty_author_records += 1
        tally.problems.append(f"record {key!r}: no authors")

    tally.yielded += 1
    return ArticleRecord(
        corpus_key=key,
        year=year,
        venue=venue,
        authors=tuple(name for name, _ in authors),
        record_kind=_kind_for_tag(tag),
        author_pids=tuple(pid for _, pid in authors),
    )


class Label(str, Enum):
    FEMALE = "F"
    MALE = "M"
    UNKNOWN_AFTER_RESEARCH = "U"


@dataclass(frozen=True)
class TruthRow:
    person_key: str
    raw_name: str
    label: Label
    evidence: str


class GroundTruthBook:
    """Human identification labels keyed by person key."""

    def __init__(self) -> None:
        self._rows: dict[str, TruthRow] = {}

    def __len__(self) -> int:
        return len(self._rows)

    def __contains__(self, person_key: str) -> bool:
        return fold_name(person_key) in self._rows

    def get(self, person_key: str) -> TruthRow | None:
        return self._rows.get(fold_name(person_key))

    def keys(self) -> Iterable[str]:
        return self._rows.keys()

    def load(self, stream: IO[str] | Iterable[str]) -> int:
        """Read ``person_key,raw_name,label,evidence`` CSV rows.

        The header row is required. Duplicate rows with an identical label
        are idempotent; conflicting labels for one person and unknown label
        codes are errors naming the offending row.
        """
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None:
            return 0
        expected = ["person_key", "raw_name", "label", "evidence"]
        if [h.strip() for h in header] != expected:
            raise ValueError(f"ground-truth header must be {expected}, got {header}")

        added = 0
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 4:
                raise ValueError(f"row {row_no}: expected 4 fields, got {len(row)}")
            person_key, raw_name, label_code, evidence = (cell.strip() for cell in row)
            try:
                label = Label(label_code)
            except ValueError:
                raise ValueError(f"row {row_no}: unknown label code {label_code!r}") from None
            key = fold_name(person_key)
            existing = self._rows.get(key)
            if existing is not None:
                if existing.label is not label:
                    raise ValueError(
                        f"row {row_no}: person {person_key!r} already labeled {existing.label.value}"
                    )
                continue
            self._rows[key] = TruthRow(key, raw_name, label, evidence)
            added += 1
        return added


def ingest_ground_truth(stream: IO[str] | Iterable[str]) -> GroundTruthBook:
    book = GroundTruthBook()
    book.load(stream)
    return book


@dataclass
class AuthorRecord:
    """One person in one year's population.

    ``estimates`` maps a source name ("ground-truth", "historical", or a
    provider id) to its estimate. Treat instances as immutable once their
    population is built; updates go through ``dataclasses.replace``.
    """

    person_key: str
    raw_name: str
    given_token: str
    is_initials_only: bool
    ground_truth: Label | None = None
    truth_evidence: str | None = None
    estimates: dict[str, GenderEstimate] = field(default_factory=dict)

    def effective_estimate(self) -> GenderEstimate:
        """Ground truth when present, else the historical model, else Unknown."""
        truth = self.estimates.get(TRUTH_SOURCE)
        if truth is not None and truth.known:
            return truth
        model = self.estimates.get(MODEL_SOURCE)
        if model is not None and model.known:
            return model
        return GenderEstimate.unknown()


@dataclass(frozen=True)
class PopulationYear:
    """Deduplicated author population for one year.

    ``women_pct`` keeps the full population in the denominator; members whose
    effective source is Unknown simply contribute 0 to the numerator.
    """

    year: int
    authors: tuple[AuthorRecord, ...]
    article_count: int
    mention_count: int
    identified_fraction: float
    expected_women: float
    women_pct: float

    @property
    def mentions_per_article(self) -> float:
        return self.mention_count / self.article_count if self.article_count else 0.0

    def member(self, person_key: str) -> AuthorRecord | None:
        key = fold_name(person_key)
        for author in self.authors:
            if author.person_key == key:
                return author
        return None


def _population_stats(authors: tuple[AuthorRecord, ...]) -> tuple[float, float, float]:
    size = len(authors)
    if size == 0:
        return 0.0, 0.0, 0.0
    labeled = sum(1 for a in authors if a.ground_truth is not None)
    expected = 0.0
    for author in authors:
        estimate = author.effective_estimate()
        if estimate.known:
            expected += estimate.p_female
    return labeled / size, expected, expected / size


def _truth_estimate(label: Label, female_truth: float, male_truth: float) -> GenderEstimate | None:
    if label is Label.FEMALE:
        return GenderEstimate(female_truth, 1, Method.GROUND_TRUTH)
    if label is Label.MALE:
        return GenderEstimate(male_truth, 1, Method.GROUND_TRUTH)
    return None


def build_population(
    articles: Iterable[ArticleRecord],
    year: int,
    truth: GroundTruthBook | None = None,
    female_truth: float = FEMALE_TRUTH_P,
    male_truth: float = MALE_TRUTH_P,
) -> PopulationYear:
    """Deduplicate one year's author mentions into a population.

    The person key is the corpus-provided person id when the XML carried
    one, else the folded full name. Ground-truth labels attach here when a
    book is supplied; positively identified women and men get the fixed
    truth probabilities (0.9999 / 0.0001 by default).
    """
    members: dict[str, AuthorRecord] = {}
    article_count = 0
    mention_count = 0
    for article in articles:
        if article.year != year:
            raise ValueError(f"article {article.corpus_key!r} is from {article.year}, expected {year}")
        article_count += 1
        pids = article.author_pids or (None,) * len(article.authors)
        for raw_name, pid in zip(article.authors, pids):
            mention_count += 1
            person_key = fold_name(pid) if pid else fold_name(raw_name)
            if person_key in members:
                continue
            token, initials_only = extract_given_token(raw_name)
            author = AuthorRecord(
                person_key=person_key,
                raw_name=raw_name,
                given_token=token,
                is_initials_only=initials_only,
            )
            if truth is not None:
                row = truth.get(person_key)
                if row is not None:
                    author.ground_truth = row.label
                    author.truth_evidence = row.evidence
                    estimate = _truth_estimate(row.label, female_truth, male_truth)
                    if estimate is not None:
                        author.estimates[TRUTH_SOURCE] = estimate
            members[person_key] = author

    authors = tuple(members[k] for k in sorted(members))
    identified, expected, pct = _population_stats(authors)
    return PopulationYear(
        year=year,
        authors=authors,
        article_count=article_count,
        mention_count=mention_count,
        identified_fraction=identified,
        expected_women=expected,
        women_pct=pct,
    )


def resolve_population_gender(
    pop: PopulationYear,
    model: NameGenderTable,
    offset: int = DEFAULT_OFFSET,
    window: int = DEFAULT_WINDOW,
) -> PopulationYear:
    """Give every member exactly one effective gender source.

    Ground truth wins where a member is labeled F or M. Members labeled U
    (researched, still unknown) stay Unknown and count only toward the
    population total. Everyone else gets a historical-model lookup at the
    offset birth year, except initials-only members, which no name model can
    answer. No member is ever dropped, whatever its p(F).
    """
    birth_year = birth_year_for_publication(pop.year, offset)
    resolved = []
    for author in pop.authors:
        if author.ground_truth is not None or author.is_initials_only:
            resolved.append(author)
            continue
        estimates = dict(author.estimates)
        estimates[MODEL_SOURCE] = model.lookup_p_female(author.given_token, birth_year, window)
        resolved.append(dataclasses.replace(author, estimates=estimates))

    authors = tuple(resolved)
    identified, expected, pct = _population_stats(authors)
    return dataclasses.replace(
        pop,
        authors=authors,
        identified_fraction=identified,
        expected_women=expected,
        women_pct=pct,
    )


def attach_provider_estimates(
    pop: PopulationYear,
    provider: str,
    by_name: Mapping[str, GenderEstimate],
) -> PopulationYear:
    """Attach one provider's per-name estimates to matching members.

    ``by_name`` is keyed by folded given token. Initials-only members are
    never matched (there is no first name to query).
    """
    updated = []
    for author in pop.authors:
        estimate = None if author.is_initials_only else by_name.get(fold_name(author.given_token))
        if estimate is None:
            updated.append(author)
            continue
        estimates = dict(author.estimates)
        estimates[provider] = estimate
        updated.append(dataclasses.replace(author, estimates=estimates))
    return dataclasses.replace(pop, authors=tuple(updated))
