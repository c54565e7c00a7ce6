"""Geocoding providers, a persistent query cache and a token-bucket limiter."""
from __future__ import annotations

import json
import logging
import os
import threading
import time
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol

logger = logging.getLogger(__name__)


class GeocoderError(RuntimeError):
    """A single query failed; recorded per span."""


class GeocoderAuthError(GeocoderError):
    """Credentials were rejected; aborts the run."""


@dataclass(frozen=True)
class Candidate:
    latitude: float
    longitude: float
    confidence: float = 1.0
    label: str = ""

    def __post_init__(self):
        if not -90 <= self.latitude <= 90:
            raise ValueError(f"latitude {self.latitude} out of range")
        if not -180 <= self.longitude <= 180:
            raise ValueError(f"longitude {self.longitude} out of range")


@dataclass(frozen=True)
class GeocodeResult:
    query: str
    latitude: float
    longitude: float
    provider: str
    match_confidence: float
    cached: bool = False


@dataclass(frozen=True)
class GeocodeFailure:
    query: str
    reason: str


class GeocodeProvider(Protocol):
    name: str

    def query(self, text: str) -> list[Candidate]: ...


class MockGeocoder:
    """Deterministic provider backed by an in-memory table."""

    name = "mock"

    def __init__(self, table: Mapping[str, tuple[float, float] | list]):
        self.table = {normalize_query(k): v for k, v in table.items()}
        self.calls: list[str] = []

    @classmethod
    def from_json(cls, path: str | Path) -> "MockGeocoder":
        with open(path, encoding="utf-8") as f:
            return cls(json.load(f))

    def query(self, text: str) -> list[Candidate]:
        self.calls.append(text)
        hit = self.table.get(normalize_query(text))
        if hit is None:
            return []
        lat, lon, *rest = hit
        return [Candidate(float(lat), float(lon), float(rest[0]) if rest else 1.0, text)]


class HttpGeocoder:
    """GET ``url?q=<place>[&key=...]``; expects a Nominatim-style JSON list of
    ``{"lat", "lon", "importance"?, "display_name"?}`` (or ``{"results": [...]}``)."""

    name = "http"

    def __init__(self, url: str, key: str | None = None, timeout: float = 10.0, user_agent: str = "toporec"):
        self.url = url
        self.key = key
        self.timeout = timeout
        self.user_agent = user_agent

    @classmethod
    def from_env(cls) -> "HttpGeocoder | None":
        url = os.environ.get("GEOCODER_URL")
        return cls(url, os.environ.get("GEOCODER_KEY")) if url else None

    def query(self, text: str) -> list[Candidate]:
        params = {"q": text, "format": "json"}
        if self.key:
            params["key"] = self.key
        req = urllib.request.Request(
            f"{self.url}?{urllib.parse.urlencode(params)}", headers={"User-Agent": self.user_agent}
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.load(resp)
        except urllib.error.HTTPError as exc:
            if exc.code in (401, 403):
                raise GeocoderAuthError(f"geocoder rejected credentials (HTTP {exc.code})") from exc
            raise GeocoderError(f"HTTP {exc.code}") from exc
        except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as exc:
            raise GeocoderError(str(exc)) from exc
        return parse_candidates(payload)


def parse_candidates(payload) -> list[Candidate]:
    if isinstance(payload, dict):
        payload = payload.get("results", [])
    out = []
    for item in payload:
        try:
            out.append(
                Candidate(
                    float(item["lat"]),
                    float(item["lon"]),
                    float(item.get("importance", 1.0)),
                    str(item.get("display_name", "")),
                )
            )
        except (KeyError, TypeError, ValueError):
            continue
    return out


def normalize_query(text: str) -> str:
    return " ".join(text.split()).casefold()


class GeocodeCache:
    """Top-candidate cache keyed by normalized query; ``None`` caches a no-match."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._data: dict[str, list | None] = {}
        if self.path and self.path.exists():
            self._data = json.loads(self.path.read_text(encoding="utf-8"))

    def __contains__(self, text: str) -> bool:
        return normalize_query(text) in self._data

    def get(self, text: str) -> Candidate | None:
        entry = self._data.get(normalize_query(text))
        return None if entry is None else Candidate(*entry)

    def put(self, text: str, candidate: Candidate | None) -> None:
        entry = None
        if candidate is not None:
            entry = [candidate.latitude, candidate.longitude, candidate.confidence, candidate.label]
        with self._lock:
            self._data[normalize_query(text)] = entry

    def save(self) -> None:
        if self.path is None:
            return
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            tmp = self.path.with_suffix(self.path.suffix + ".tmp")
            tmp.write_text(json.dumps(self._data, sort_keys=True, indent=0), encoding="utf-8")
            tmp.replace(self.path)


class TokenBucket:
    """``capacity`` burst tokens refilled at ``rate`` per second; ``acquire`` blocks."""

    def __init__(
        self,
        capacity: float,
        rate: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if capacity < 1 or rate <= 0:
            raise ValueError("capacity must be >= 1 and rate > 0")
        self.capacity = capacity
        self.rate = rate
        self._clock = clock
        self._sleep = sleep
        self._tokens = float(capacity)
        self._last = clock()
        self._lock = threading.Lock()

    def _refill(self) -> None:
        now = self._clock()
        self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
        self._last = now

    def acquire(self) -> float:
        """Take one token, returning the seconds spent waiting."""
        waited = 0.0
        with self._lock:
            self._refill()
            while self._tokens < 1:
                delay = (1 - self._tokens) / self.rate
                self._sleep(delay)
                waited += delay
                self._refill()
            self._tokens -= 1
        return waited


def geocode(
    queries: Iterable[str],
    provider: GeocodeProvider,
    cache: GeocodeCache | None = None,
    limiter: TokenBucket | None = None,
) -> tuple[list[GeocodeResult], list[GeocodeFailure]]:
    """Resolve each place string to the provider's first-ranked candidate.

    Each distinct normalized query reaches the provider at most once; repeats
    are served from ``cache`` and flagged. Per-query failures are collected
    and the batch continues; ``GeocoderAuthError`` propagates.
    """
    cache = cache if cache is not None else GeocodeCache()
    results: list[GeocodeResult] = []
    failures: list[GeocodeFailure] = []
    for text in queries:
        cached = text in cache
        if cached:
            top = cache.get(text)
        else:
            if limiter is not None:
                limiter.acquire()
            try:
                candidates = provider.query(text)
            except GeocoderAuthError:
                raise
            except GeocoderError as exc:
                failures.append(GeocodeFailure(text, str(exc)))
                continue
            top = candidates[0] if candidates else None
            cache.put(text, top)
        if top is None:
            failures.append(GeocodeFailure(text, "no match"))
            continue
        results.append(GeocodeResult(text, top.latitude, top.longitude, provider.name, top.confidence, cached))
    return results, failures
