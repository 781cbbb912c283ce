"""Location-type features from OpenStreetMap points of interest.

Two routes produce the same :class:`GeocodeResult`:

* offline: nearest POI from a pre-extracted CSV snapshot (the default, and
  the one used by the experiment pipeline);
* remote: a Nominatim-compatible ``/reverse`` endpoint, rate limited,
  retried and cached on disk.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
import time
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

from .errors import EmptyInputError, GeocodeError, ParseError, TaxonomyError
from .geo import DEFAULT_EARTH, EarthModel, GeoPoint, GridIndex, grid_build, grid_nearest

logger = logging.getLogger(__name__)

UNKNOWN = "unknown"
N_CATEGORIES = 12
POI_CELL_DEG = 0.01
SOURCES = ("offline", "remote", "cache")


@dataclass(frozen=True)
class Taxonomy:
    """Maps OSM location types to their top-level category."""

    type_to_category: dict

    @property
    def categories(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.type_to_category.values())))

    @property
    def types(self) -> tuple[str, ...]:
        return tuple(sorted(self.type_to_category))

    def category_of(self, osm_type: str) -> str:
        return self.type_to_category.get(osm_type, UNKNOWN)

    def __len__(self) -> int:
        return len(self.type_to_category)


def default_taxonomy_path() -> Path:
    return Path(str(resources.files("spatialcrime") / "data" / "taxonomy.csv"))


def load_taxonomy(path=None) -> Taxonomy:
    """Read an ``osm_type,osm_category`` CSV.

    Raises :class:`ParseError` (with line number) on malformed rows and
    :class:`TaxonomyError` on duplicate types or when the file does not name
    exactly 12 categories.
    """
    path = Path(path) if path is not None else default_taxonomy_path()
    text = path.read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["osm_type", "osm_category"]:
        raise ParseError("expected header 'osm_type,osm_category'", path, 1)
    mapping: dict[str, str] = {}
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2 or not row[0].strip() or not row[1].strip():
            raise ParseError(f"expected 2 non-empty fields, got {row!r}", path, line)
        osm_type, category = row[0].strip(), row[1].strip()
        if category == UNKNOWN:
            raise ParseError(f"category {UNKNOWN!r} is reserved", path, line)
        if osm_type in mapping:
            raise TaxonomyError(f"{path}:{line}: duplicate type {osm_type!r}")
        mapping[osm_type] = category
    n_cat = len(set(mapping.values()))
    if n_cat != N_CATEGORIES:
        raise TaxonomyError(f"{path}: expected {N_CATEGORIES} categories, found {n_cat}")
    return Taxonomy(mapping)


@dataclass(frozen=True)
class Poi:
    id: str
    location: GeoPoint
    osm_type: str
    osm_category: str


@dataclass(frozen=True)
class GeocodeResult:
    osm_type: str
    osm_category: str
    source: str
    distance_km: float | None = None


def load_pois(path, taxonomy: Taxonomy) -> tuple[list[Poi], GridIndex]:
    """Read a ``id,lat,lon,osm_type`` CSV and index it on a 0.01 degree grid.

    Types missing from the taxonomy are kept with category ``"unknown"``.
    Grid ids are row positions, so nearest-POI ties go to the earlier row.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyInputError(f"{path}: empty POI file")
        if [h.strip() for h in header] != ["id", "lat", "lon", "osm_type"]:
            raise ParseError("expected header 'id,lat,lon,osm_type'", path, 1)
        pois = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", path, line)
            pid, lat, lon, osm_type = (c.strip() for c in row)
            if not pid or not osm_type:
                raise ParseError("empty id or osm_type", path, line)
            try:
                loc = GeoPoint(float(lat), float(lon))
            except ValueError as exc:
                raise ParseError(f"bad coordinate: {exc}", path, line) from None
            pois.append(Poi(pid, loc, osm_type, taxonomy.category_of(osm_type)))
    if not pois:
        raise EmptyInputError(f"{path}: no POI rows")
    return pois, index_pois(pois)


def index_pois(pois: Sequence[Poi]) -> GridIndex:
    return grid_build(((i, p.location) for i, p in enumerate(pois)), POI_CELL_DEG)


def pois_from_rows(rows, taxonomy: Taxonomy) -> list[Poi]:
    """``(id, lat, lon, osm_type)`` tuples, as produced by the generator, to :class:`Poi`."""
    return [Poi(str(pid), GeoPoint(float(lat), float(lon)), t, taxonomy.category_of(t))
            for pid, lat, lon, t in rows]


def write_pois_csv(rows, path) -> None:
    """Write ``(id, lat, lon, osm_type)`` tuples or :class:`Poi` objects."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "lat", "lon", "osm_type"])
        for r in rows:
            if isinstance(r, Poi):
                r = (r.id, r.location.lat, r.location.lon, r.osm_type)
            pid, lat, lon, osm_type = r
            w.writerow([pid, repr(float(lat)), repr(float(lon)), osm_type])


def reverse_geocode_offline(p: GeoPoint, pois: Sequence[Poi], index: GridIndex,
                            earth: EarthModel = DEFAULT_EARTH) -> GeocodeResult:
    """Type and category of the POI nearest to ``p``."""
    if not pois or len(index) == 0:
        raise EmptyInputError("offline reverse geocoding needs a non-empty POI set")
    pos, dist = grid_nearest(index, p, earth)
    poi = pois[pos]
    return GeocodeResult(poi.osm_type, poi.osm_category, "offline", dist)


class OfflineGeocoder:
    """Nearest-POI lookup over a fixed snapshot. Safe to share between threads."""

    mode = "offline"

    def __init__(self, pois: Sequence[Poi], index: GridIndex, earth: EarthModel = DEFAULT_EARTH):
        if not pois:
            raise EmptyInputError("OfflineGeocoder needs at least one POI")
        self.pois = list(pois)
        self.index = index
        self.earth = earth

    @classmethod
    def from_csv(cls, path, taxonomy: Taxonomy) -> "OfflineGeocoder":
        return cls(*load_pois(path, taxonomy))

    @classmethod
    def from_rows(cls, rows, taxonomy: Taxonomy) -> "OfflineGeocoder":
        pois = pois_from_rows(rows, taxonomy)
        return cls(pois, index_pois(pois))

    def reverse(self, p: GeoPoint) -> GeocodeResult:
        return reverse_geocode_offline(p, self.pois, self.index, self.earth)


# --- remote path -----------------------------------------------------------

@dataclass(frozen=True)
class RemoteConfig:
    base_url: str = "https://nominatim.openstreetmap.org"
    user_agent: str = "spatialcrime/0.1 (research use)"
    rate_limit_per_s: float = 1.0
    max_attempts: int = 3
    backoff_s: float = 1.0
    timeout_s: float = 10.0

    def __post_init__(self):
        if not self.user_agent:
            raise ValueError("a User-Agent is mandatory for Nominatim")
        if self.rate_limit_per_s <= 0:
            raise ValueError("rate_limit_per_s must be positive")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


class SystemClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class RateLimiter:
    """Spaces calls at least ``1 / rate`` seconds apart on the given clock."""

    def __init__(self, rate_per_s: float, clock=None):
        self.interval = 1.0 / rate_per_s
        self.clock = clock or SystemClock()
        self._last: float | None = None

    def acquire(self) -> None:
        if self._last is not None:
            wait = self._last + self.interval - self.clock.now()
            if wait > 0:
                self.clock.sleep(wait)
        self._last = self.clock.now()


def requests_transport(url: str, params: dict, headers: dict, timeout: float) -> tuple[int, str]:
    import requests

    resp = requests.get(url, params=params, headers=headers, timeout=timeout)
    return resp.status_code, resp.text


Transport = Callable[[str, dict, dict, float], "tuple[int, str]"]


def cache_key(p: GeoPoint) -> str:
    """Coordinates rounded to 5 decimals (about 1.1 m)."""
    lat = round(p.lat, 5) + 0.0
    lon = round(p.lon, 5) + 0.0
    return f"{lat:.5f},{lon:.5f}"


class GeocodeCache:
    """Append-only JSON-lines store keyed by :func:`cache_key`.

    Every ``put`` rewrites the file through a temporary file and a rename, so
    a crash never leaves a half-written line behind.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._entries: dict[str, GeocodeResult] = {}
        self._lines: list[str] = []
        if self.path.exists():
            try:
                text = self.path.read_text(encoding="utf-8")
            except OSError as exc:
                raise OSError(f"cannot read geocode cache {self.path}: {exc}") from exc
            for n, line in enumerate(text.splitlines(), start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    self._entries[rec["key"]] = GeocodeResult(**rec["result"])
                except (ValueError, KeyError, TypeError) as exc:
                    raise ParseError(f"bad cache record: {exc}", self.path, n) from None
                self._lines.append(line)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, p: GeoPoint) -> bool:
        return cache_key(p) in self._entries

    def get(self, p: GeoPoint) -> GeocodeResult | None:
        return self._entries.get(cache_key(p))

    def put(self, p: GeoPoint, result: GeocodeResult) -> None:
        key = cache_key(p)
        line = json.dumps({"key": key, "result": asdict(result)}, sort_keys=True)
        self._entries[key] = result
        self._lines.append(line)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=self.path.name, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write("\n".join(self._lines) + "\n")
            os.replace(tmp, self.path)
        except OSError as exc:
            raise OSError(f"cannot write geocode cache {self.path}: {exc}") from exc


class RemoteGeocoder:
    """Reverse geocoding against a Nominatim ``/reverse`` endpoint.

    Calls go through a rate limiter; network errors, 5xx and 429 responses
    are retried with exponential backoff up to ``max_attempts`` in total.
    Other non-200 statuses fail immediately.
    """

    mode = "remote"

    def __init__(self, config: RemoteConfig, taxonomy: Taxonomy, cache: GeocodeCache | None = None,
                 transport: Transport | None = None, clock=None):
        self.config = config
        self.taxonomy = taxonomy
        self.cache = cache
        self.transport = transport or requests_transport
        self.clock = clock or SystemClock()
        self.limiter = RateLimiter(config.rate_limit_per_s, self.clock)

    def _fetch(self, p: GeoPoint) -> dict:
        url = self.config.base_url.rstrip("/") + "/reverse"
        params = {"format": "jsonv2", "lat": f"{p.lat:.7f}", "lon": f"{p.lon:.7f}"}
        headers = {"User-Agent": self.config.user_agent}
        last_error = None
        for attempt in range(self.config.max_attempts):
            if attempt:
                self.clock.sleep(self.config.backoff_s * 2 ** (attempt - 1))
            self.limiter.acquire()
            try:
                status, body = self.transport(url, params, headers, self.config.timeout_s)
            except OSError as exc:
                last_error = GeocodeError(f"network error for {p}: {exc}")
                logger.warning("geocode attempt %d failed: %s", attempt + 1, exc)
                continue
            if status == 200:
                try:
                    data = json.loads(body)
                except ValueError:
                    raise GeocodeError(f"unparseable response body for {p}") from None
                if not isinstance(data, dict):
                    raise GeocodeError(f"unexpected response for {p}: {body[:80]!r}")
                return data
            if status == 429 or status >= 500:
                kind = "rate limited" if status == 429 else f"HTTP {status}"
                last_error = GeocodeError(f"{kind} for {p}")
                logger.warning("geocode attempt %d: %s", attempt + 1, kind)
                continue
            raise GeocodeError(f"HTTP {status} for {p}")
        raise GeocodeError(f"giving up after {self.config.max_attempts} attempts: {last_error}")

    def reverse(self, p: GeoPoint) -> GeocodeResult:
        if self.cache is not None:
            hit = self.cache.get(p)
            if hit is not None:
                return GeocodeResult(hit.osm_type, hit.osm_category, "cache", hit.distance_km)
        data = self._fetch(p)
        osm_type = data.get("type")
        osm_class = data.get("class", data.get("category"))
        if not isinstance(osm_type, str) or not isinstance(osm_class, str):
            raise GeocodeError(f"response for {p} lacks 'type'/'class' fields")
        category = self.taxonomy.category_of(osm_type)
        if category == UNKNOWN and osm_class in self.taxonomy.categories:
            category = osm_class
        result = GeocodeResult(osm_type, category, "remote", None)
        if self.cache is not None:
            self.cache.put(p, result)
        return result


def reverse_geocode_remote(p: GeoPoint, client_config: RemoteConfig, taxonomy: Taxonomy,
                           cache: GeocodeCache | None = None, transport: Transport | None = None,
                           clock=None) -> GeocodeResult:
    return RemoteGeocoder(client_config, taxonomy, cache, transport, clock).reverse(p)

