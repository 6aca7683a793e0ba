"""Uniform clients for gender-prediction services.

Three HTTP payload shapes (a gender-api.com-like service, a NamSor-like
service, and a genderize.io-like service) are normalized onto one
:class:`~corpusgender.names.GenderEstimate` mapping, behind a persistent
payload cache, a sliding-window rate limiter, and record/replay fixtures so
batch audits run deterministically with zero credentials. The exact field
names of each shape live only in the adapter classes below.
"""

from __future__ import annotations

import json
import os
import threading
import time
from collections import deque
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Sequence

import requests

from .names import GenderEstimate, Method, NameGenderTable, fold_name

GENDERAPI = "genderapi"
NAMSOR = "namsor"
GENDERIZE = "genderize"
LOCAL = "local"

ENV_KEYS = {
    GENDERAPI: "CG_GENDERAPI_KEY",
    NAMSOR: "CG_NAMSOR_KEY",
    GENDERIZE: "CG_GENDERIZE_KEY",
}


class PredictorError(Exception):
    pass


class ProviderNetworkError(PredictorError):
    """Transport failed after bounded retries; safe to retry later."""


class ProviderQuotaError(PredictorError):
    """The provider reported quota exhaustion; the batch must stop."""


class ProviderPayloadError(PredictorError):
    """The payload could not be mapped to an estimate; it is retained."""

    def __init__(self, message: str, payload: str):
        super().__init__(f"{message}; payload retained: {payload[:200]!r}")
        self.payload = payload


class ReplayMissError(PredictorError):
    def __init__(self, provider: str, name: str):
        super().__init__(f"replay fixture has no payload for ({provider}, {name})")
        self.provider = provider
        self.name = name


class PredictorBatchError(PredictorError):
    """A batch stopped early; ``completed`` holds the finished prefix."""

    def __init__(self, completed: list["ProviderResponse"], cause: PredictorError):
        super().__init__(f"batch halted after {len(completed)} responses: {cause}")
        self.completed = completed
        self.cause = cause


@dataclass(frozen=True)
class ProviderResponse:
    provider: str
    queried_name: str
    raw_payload: str
    estimate: GenderEstimate
    fetched_at: str


@dataclass(frozen=True)
class BackCalculatedCounts:
    """Name-instance counts recovered from a reported accuracy figure."""

    male_count: int
    female_count: int
    consistent: bool
    small_sample_certainty: bool = False


def back_calculate_counts(accuracy: float, samples: int, majority: str) -> BackCalculatedCounts:
    """Recover male/female instance counts from an accuracy-and-samples pair.

    ``consistent`` checks that the recovered counts reproduce the reported
    accuracy at its two-decimal printed precision. A reported accuracy of
    exactly 1.0 on fewer than 10 samples is flagged: a sample that small
    cannot honestly claim certainty.
    """
    if samples <= 0:
        raise ValueError("samples must be positive")
    if not 0.5 <= accuracy <= 1.0:
        raise ValueError(f"accuracy must be in [0.5, 1.0], got {accuracy}")
    if majority not in ("male", "female"):
        raise ValueError(f"majority must be 'male' or 'female', got {majority!r}")
    majority_count = round(accuracy * samples)
    minority_count = samples - majority_count
    male, female = (
        (majority_count, minority_count) if majority == "male" else (minority_count, majority_count)
    )
    consistent = round(max(male, female) / samples, 2) == round(accuracy, 2)
    return BackCalculatedCounts(
        male_count=male,
        female_count=female,
        consistent=consistent,
        small_sample_certainty=(accuracy == 1.0 and samples < 10),
    )


class ProviderAdapter:
    """One payload shape: how to ask for a name and how to read the answer."""

    name: str = ""
    default_base_url: str = ""

    def build_request(self, base_url: str, name: str, api_key: str | None):
        raise NotImplementedError

    def parse(self, payload: str, queried_name: str) -> GenderEstimate:
        raise NotImplementedError

    def _decode(self, payload: str) -> dict:
        try:
            doc = json.loads(payload)
        except ValueError:
            raise ProviderPayloadError(f"{self.name}: payload is not JSON", payload) from None
        if not isinstance(doc, dict):
            raise ProviderPayloadError(f"{self.name}: payload is not an object", payload)
        return doc

    def _normalize(self, gender, p_majority, sample_size, payload: str) -> GenderEstimate:
        if gender not in ("female", "male"):
            return GenderEstimate(None, 0, Method.UNKNOWN, provider=self.name)
        if p_majority is None or not 0.0 <= p_majority <= 1.0:
            raise ProviderPayloadError(f"{self.name}: probability {p_majority!r} outside [0,1]", payload)
        p_female = p_majority if gender == "female" else 1.0 - p_majority
        return GenderEstimate(p_female, sample_size, Method.PROVIDER, provider=self.name)


class GenderApiShape(ProviderAdapter):
    """Accuracy-percent shape: {"gender", "accuracy" (0-100), "samples"}."""

    name = GENDERAPI
    default_base_url = "https://gender-api.com"

    def build_request(self, base_url, name, api_key):
        params = {"name": name}
        if api_key:
            params["key"] = api_key
        return f"{base_url}/get", params, {}

    def parse(self, payload, queried_name):
        doc = self._decode(payload)
        accuracy = doc.get("accuracy")
        p = accuracy / 100.0 if isinstance(accuracy, (int, float)) else None
        samples = doc.get("samples")
        return self._normalize(doc.get("gender"), p, int(samples or 0), payload)


class NamsorShape(ProviderAdapter):
    """Calibrated-probability shape: {"likelyGender", "probabilityCalibrated"}."""

    name = NAMSOR
    default_base_url = "https://v2.namsor.com/NamSorAPIv2"

    def build_request(self, base_url, name, api_key):
        headers = {"X-API-KEY": api_key} if api_key else {}
        return f"{base_url}/api2/json/gender/{name}", {}, headers

    def parse(self, payload, queried_name):
        doc = self._decode(payload)
        return self._normalize(doc.get("likelyGender"), doc.get("probabilityCalibrated"), 0, payload)


class GenderizeShape(ProviderAdapter):
    """Nullable-gender shape: {"gender" (or null), "probability", "count"}."""

    name = GENDERIZE
    default_base_url = "https://api.genderize.io"

    def build_request(self, base_url, name, api_key):
        params = {"name": name}
        if api_key:
            params["apikey"] = api_key
        return base_url, params, {}

    def parse(self, payload, queried_name):
        doc = self._decode(payload)
        count = doc.get("count")
        return self._normalize(doc.get("gender"), doc.get("probability"), int(count or 0), payload)


ADAPTERS: dict[str, ProviderAdapter] = {
    GENDERAPI: GenderApiShape(),
    NAMSOR: NamsorShape(),
    GENDERIZE: GenderizeShape(),
}

REMOTE_PROVIDERS = (GENDERAPI, NAMSOR, GENDERIZE)


class PayloadStore:
    """Append-only newline-delimited JSON store of verbatim payloads.

    One line per record: ``{"provider", "name", "payload", "fetched_at"}``,
    keyed in memory by (provider, folded name). The same format backs both
    the persistent response cache and record/replay fixtures. Reads are
    lock-free after load; appends are serialized.
    """

    def __init__(self, path=None):
        self.path = path
        self._records: dict[tuple[str, str], tuple[str, str]] = {}
        self._lock = threading.Lock()
        if path is not None and os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        doc = json.loads(line)
                        key = (doc["provider"], fold_name(doc["name"]))
                        self._records[key] = (doc["payload"], doc["fetched_at"])
                    except (ValueError, KeyError) as exc:
                        raise ValueError(f"{path}:{line_no}: bad store line: {exc}") from exc

    def __len__(self) -> int:
        return len(self._records)

    def get(self, provider: str, name: str) -> tuple[str, str] | None:
        return self._records.get((provider, fold_name(name)))

    def append(self, provider: str, name: str, payload: str, fetched_at: str) -> None:
        key = (provider, fold_name(name))
        with self._lock:
            if self._records.get(key) == (payload, fetched_at):
                return
            self._records[key] = (payload, fetched_at)
            if self.path is not None:
                record = {"provider": provider, "name": key[1], "payload": payload, "fetched_at": fetched_at}
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")

    def items(self):
        return self._records.items()


class RateLimiter:
    """Blocks callers so a ceiling of calls per sliding second holds.

    The window is padded by 5% so that network jitter downstream of the
    limiter cannot compress two compliant calls into an over-ceiling window.
    """

    WINDOW = 1.05

    def __init__(self, per_second: float):
        if per_second <= 0:
            raise ValueError("rate ceiling must be positive")
        self.per_second = per_second
        self._ceiling = max(1, int(per_second))
        self._times: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                while self._times and self._times[0] <= now - self.WINDOW:
                    self._times.popleft()
                if len(self._times) < self._ceiling:
                    self._times.append(now)
                    return
                wait = self._times[0] + self.WINDOW - now
            time.sleep(max(wait, 0.001))


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


class PredictorClient:
    """predict()/predict_batch() for one provider shape.

    Modes: ``live`` fetches over HTTP, ``record`` fetches and appends every
    verbatim payload to the fixture store, ``replay`` serves payloads from
    the fixture store and never touches the network. The persistent cache is
    consulted before any transport in live and replay modes, so a warm cache
    answers byte-identically with zero network calls.
    """

    def __init__(
        self,
        provider: str,
        *,
        mode: str = "live",
        fixtures: PayloadStore | None = None,
        cache: PayloadStore | None = None,
        base_url: str | None = None,
        api_key: str | None = None,
        rate_limit: float | None = None,
        session: requests.Session | None = None,
        max_retries: int = 3,
        retry_wait: float = 0.2,
        timeout: float = 10.0,
    ):
        if provider not in ADAPTERS:
            raise ValueError(f"unknown provider {provider!r}; expected one of {sorted(ADAPTERS)}")
        if mode not in ("live", "record", "replay"):
            raise ValueError(f"mode must be live, record, or replay, got {mode!r}")
        if mode in ("record", "replay") and fixtures is None:
            raise ValueError(f"{mode} mode needs a fixture store")
        self.adapter = ADAPTERS[provider]
        self.provider = provider
        self.mode = mode
        self.fixtures = fixtures
        self.cache = cache
        self.base_url = base_url or self.adapter.default_base_url
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_KEYS[provider])
        self.limiter = RateLimiter(rate_limit) if rate_limit else None
        self.session = session or requests.Session()
        self.max_retries = max_retries
        self.retry_wait = retry_wait
        self.timeout = timeout

    def predict(self, first_name: str) -> ProviderResponse:
        if not first_name or not first_name.strip():
            raise ValueError("first_name must be nonempty")
        folded = fold_name(first_name)

        if self.mode != "record" and self.cache is not None:
            hit = self.cache.get(self.provider, folded)
            if hit is not None:
                return self._respond(folded, *hit)

        if self.mode == "replay":
            hit = self.fixtures.get(self.provider, folded)
            if hit is None:
                raise ReplayMissError(self.provider, folded)
            payload, fetched_at = hit
        else:
            cached = self.cache.get(self.provider, folded) if self.cache is not None else None
            if cached is not None:
                payload, fetched_at = cached
            else:
                payload, fetched_at = self._fetch(folded)
            if self.mode == "record":
                self.fixtures.append(self.provider, folded, payload, fetched_at)

        response = self._respond(folded, payload, fetched_at)
        if self.cache is not None:
            self.cache.append(self.provider, folded, payload, fetched_at)
        return response

    def predict_batch(self, names: Sequence[str]) -> list[ProviderResponse]:
        """Order-preserving batch; on failure the completed prefix rides the error."""
        completed: list[ProviderResponse] = []
        for name in names:
            try:
                completed.append(self.predict(name))
            except PredictorError as exc:
                raise PredictorBatchError(completed, exc) from exc
        return completed

    def _respond(self, folded: str, payload: str, fetched_at: str) -> ProviderResponse:
        estimate = self.adapter.parse(payload, folded)
        return ProviderResponse(self.provider, folded, payload, estimate, fetched_at)

    def _fetch(self, name: str) -> tuple[str, str]:
        url, params, headers = self.adapter.build_request(self.base_url, name, self.api_key)
        last_exc: Exception | None = None
        for attempt in range(self.max_retries):
            if self.limiter is not None:
                self.limiter.acquire()
            try:
                reply = self.session.get(url, params=params, headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last_exc = exc
                time.sleep(self.retry_wait * (attempt + 1))
                continue
            if reply.status_code == 429:
                raise ProviderQuotaError(f"{self.provider}: quota exhausted (HTTP 429)")
            if reply.status_code >= 500:
                last_exc = ProviderNetworkError(f"{self.provider}: HTTP {reply.status_code}")
                time.sleep(self.retry_wait * (attempt + 1))
                continue
            if reply.status_code != 200:
                raise ProviderPayloadError(f"{self.provider}: HTTP {reply.status_code}", reply.text)
            return reply.text, _utcnow()
        raise ProviderNetworkError(f"{self.provider}: giving up after {self.max_retries} attempts: {last_exc}")


def record_replay(provider: str, mode: str, store: PayloadStore, **kwargs) -> PredictorClient:
    """Provider wrapper bound to a fixture store in record or replay mode."""
    if mode not in ("record", "replay"):
        raise ValueError(f"mode must be 'record' or 'replay', got {mode!r}")
    return PredictorClient(provider, mode=mode, fixtures=store, **kwargs)


class LocalHistoricalPredictor:
    """The year-indexed name model exposed through the provider interface.

    Unlike the remote shapes it is year-aware, so one instance is bound to a
    single lookup year (typically the offset birth year for the publication
    year under audit).
    """

    provider = LOCAL

    def __init__(self, table: NameGenderTable, birth_year: int, window: int = 5):
        self.table = table
        self.birth_year = birth_year
        self.window = window

    def predict(self, first_name: str) -> ProviderResponse:
        if not first_name or not first_name.strip():
            raise ValueError("first_name must be nonempty")
        folded = fold_name(first_name)
        looked_up = self.table.lookup_p_female(folded, self.birth_year, self.window)
        estimate = (
            GenderEstimate(
                looked_up.p_female,
                looked_up.sample_size,
                Method.PROVIDER,
                provider=LOCAL,
                query_year=looked_up.query_year,
                window_radius=looked_up.window_radius,
            )
            if looked_up.known
            else GenderEstimate(None, 0, Method.UNKNOWN, provider=LOCAL, query_year=self.birth_year)
        )
        payload = json.dumps(
            {
                "name": folded,
                "year": self.birth_year,
                "p_female": looked_up.p_female,
                "samples": looked_up.sample_size,
                "window_radius": looked_up.window_radius,
            },
            sort_keys=True,
        )
        return ProviderResponse(LOCAL, folded, payload, estimate, "local")

    def predict_batch(self, names: Iterable[str]) -> list[ProviderResponse]:
        return [self.predict(name) for name in names]
