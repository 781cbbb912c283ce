"""UCR-style crime records: parsing, the four binary targets, raw temporal
features and a seeded synthetic generator with planted hotspot zones.

CSV layout::

    id,lat,lon,incident_start_time,month,weekday,ucr_description,alcohol_flag,year

``weekday`` is 0 for Monday, ``alcohol_flag`` is 0 or 1.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from datetime import time as dtime
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyInputError, ParseError
from .geo import DEFAULT_EARTH, GeoPoint, destination_point, haversine_km

UCR_COLUMNS = ("id", "lat", "lon", "incident_start_time", "month", "weekday",
               "ucr_description", "alcohol_flag", "year")
N_RAW_FEATURES = 24 + 12 + 7
REJECT_FATAL_FRACTION = 0.5


class CrimeCategory(enum.Enum):
    ALCOHOL_RELATED = "AlcoholRelated"
    ASSAULT = "Assault"
    PROPERTY_DAMAGE = "PropertyDamage"
    MOTOR_VEHICLE = "MotorVehicle"

    @property
    def display_name(self) -> str:
        return _DISPLAY[self]

    @classmethod
    def parse(cls, name) -> "CrimeCategory":
        """Accepts the value, the member name or the display name, loosely."""
        if isinstance(name, cls):
            return name
        key = "".join(ch for ch in str(name).lower() if ch.isalnum())
        for c in cls:
            forms = {c.value.lower(), c.name.lower().replace("_", ""),
                     c.display_name.lower().replace("-", "").replace(" ", "")}
            if key in forms:
                return c
        raise ValueError(f"unknown crime category {name!r}; expected one of "
                         + ", ".join(c.value for c in cls))


_DISPLAY = {
    CrimeCategory.ALCOHOL_RELATED: "Alcohol-related",
    CrimeCategory.ASSAULT: "Assault",
    CrimeCategory.PROPERTY_DAMAGE: "Property damage",
    CrimeCategory.MOTOR_VEHICLE: "Motor vehicle",
}

#: Category order used in reports and generated files.
CATEGORY_ORDER = tuple(CrimeCategory)
DESCRIPTION_CATEGORIES = (CrimeCategory.ASSAULT, CrimeCategory.PROPERTY_DAMAGE, CrimeCategory.MOTOR_VEHICLE)


@dataclass(frozen=True)
class CrimeRecord:
    id: str
    location: GeoPoint
    incident_start_time: dtime
    month: int
    weekday: int
    ucr_description: str
    alcohol_flag: bool
    year: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError("month out of range")
        if not 0 <= self.weekday <= 6:
            raise ValueError("weekday out of range")

    @property
    def hour(self) -> int:
        return self.incident_start_time.hour


@dataclass(frozen=True)
class LabelRules:
    """Lower-cased keywords per description-driven category."""

    keywords: dict

    def __post_init__(self):
        for c in DESCRIPTION_CATEGORIES:
            if not self.keywords.get(c):
                raise ValueError(f"no keywords for {c.value}")


def default_label_rules_path() -> Path:
    return Path(str(resources.files("spatialcrime") / "data" / "label_rules.csv"))


def load_label_rules(path=None) -> LabelRules:
    """Read a ``category,keyword`` CSV."""
    path = Path(path) if path is not None else default_label_rules_path()
    kw: dict[CrimeCategory, list[str]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["category", "keyword"]:
            raise ParseError("expected header 'category,keyword'", path, 1)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 or not row[1].strip():
                raise ParseError(f"expected 'category,keyword', got {row!r}", path, line)
            try:
                cat = CrimeCategory.parse(row[0].strip())
            except ValueError as exc:
                raise ParseError(str(exc), path, line) from None
            if cat is CrimeCategory.ALCOHOL_RELATED:
                raise ParseError("alcohol-related labels come from alcohol_flag, not keywords", path, line)
            kw.setdefault(cat, []).append(row[1].strip().lower())
    try:
        return LabelRules({c: tuple(v) for c, v in kw.items()})
    except ValueError as exc:
        raise ParseError(str(exc), path) from None


def derive_label(r: CrimeRecord, c: CrimeCategory, rules: LabelRules) -> bool:
    if c is CrimeCategory.ALCOHOL_RELATED:
        return bool(r.alcohol_flag)
    desc = r.ucr_description.lower()
    return any(k in desc for k in rules.keywords[c])


def labels_for(records: Sequence[CrimeRecord], c: CrimeCategory, rules: LabelRules) -> np.ndarray:
    return np.array([derive_label(r, c, rules) for r in records], dtype=bool)


def class_balance(records: Sequence[CrimeRecord], category: CrimeCategory,
                  rules: LabelRules) -> tuple[float, float]:
    if not records:
        raise EmptyInputError("class_balance of an empty record set")
    pos = float(labels_for(records, category, rules).mean())
    return pos, 1.0 - pos


def raw_features(r: CrimeRecord) -> np.ndarray:
    """43 one-hot columns: hour (24), month (12), weekday (7)."""
    v = np.zeros(N_RAW_FEATURES)
    v[r.hour] = 1.0
    v[24 + r.month - 1] = 1.0
    v[36 + r.weekday] = 1.0
    return v


RAW_FEATURE_NAMES = tuple([f"hour_{h}" for h in range(24)]
                          + [f"month_{m}" for m in range(1, 13)]
                          + [f"weekday_{d}" for d in range(7)])


# --- CSV I/O ---------------------------------------------------------------

@dataclass(frozen=True)
class Reject:
    line: int
    reason: str
    row: tuple


@dataclass
class UcrTable:
    records: list
    rejects: list
    path: str | None = None

    @property
    def n_rows(self) -> int:
        return len(self.records) + len(self.rejects)

    def reject_report(self) -> str:
        lines = [f"{len(self.records)} accepted, {len(self.rejects)} rejected"]
        lines += [f"  line {r.line}: {r.reason}" for r in self.rejects]
        return "\n".join(lines)


def _parse_time(text: str) -> dtime:
    parts = text.split(":")
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise ValueError(f"bad incident_start_time {text!r}")
    h, m = int(parts[0]), int(parts[1])
    if not (0 <= h <= 23 and 0 <= m <= 59):
        raise ValueError(f"incident_start_time {text!r} out of range")
    return dtime(h, m)


def _parse_row(row: dict) -> CrimeRecord:
    try:
        lat, lon = float(row["lat"]), float(row["lon"])
    except ValueError:
        raise ValueError("bad coordinate") from None
    loc = GeoPoint(lat, lon)
    t = _parse_time(row["incident_start_time"].strip())
    try:
        month = int(row["month"])
    except ValueError:
        raise ValueError("bad month") from None
    if not 1 <= month <= 12:
        raise ValueError("month out of range")
    try:
        weekday = int(row["weekday"])
    except ValueError:
        raise ValueError("bad weekday") from None
    if not 0 <= weekday <= 6:
        raise ValueError("weekday out of range")
    flag = row["alcohol_flag"].strip()
    if flag not in ("0", "1"):
        raise ValueError("alcohol_flag must be 0 or 1")
    try:
        year = int(row["year"])
    except ValueError:
        raise ValueError("bad year") from None
    rid = row["id"].strip()
    if not rid:
        raise ValueError("empty id")
    return CrimeRecord(rid, loc, t, month, weekday, row["ucr_description"].strip(), flag == "1", year)


def parse_ucr_csv(path) -> UcrTable:
    """Parse a UCR CSV, collecting invalid rows instead of dropping them.

    Raises :class:`ParseError` when a required column is missing or when
    more than half of the rows are rejected.
    """
    path = Path(path)
    records, rejects = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in UCR_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ParseError(f"missing column(s): {', '.join(missing)}", path, 1)
        for line, row in enumerate(reader, start=2):
            if None in row or any(row[c] is None for c in UCR_COLUMNS):
                rejects.append(Reject(line, "wrong number of fields", tuple(row.values())))
                continue
            try:
                records.append(_parse_row(row))
            except ValueError as exc:
                rejects.append(Reject(line, str(exc), tuple(row[c] for c in UCR_COLUMNS)))
    total = len(records) + len(rejects)
    if total and len(rejects) > REJECT_FATAL_FRACTION * total:
        raise ParseError(f"{len(rejects)} of {total} rows rejected; first: line {rejects[0].line}: "
                         f"{rejects[0].reason}", path)
    return UcrTable(records, rejects, str(path))


def write_ucr_csv(records: Iterable[CrimeRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(UCR_COLUMNS)
        for r in records:
            w.writerow([r.id, repr(r.location.lat), repr(r.location.lon),
                        r.incident_start_time.strftime("%H:%M"), r.month, r.weekday,
                        r.ucr_description, int(r.alcohol_flag), r.year])


# --- synthetic data ----------------------------------------------------------

OFFENCES = {
    CrimeCategory.ALCOHOL_RELATED: ("LIQUOR ACT VIOLATION", "CAUSE DISTURBANCE - INTOXICATED",
                                    "PUBLIC INTOXICATION"),
    CrimeCategory.ASSAULT: ("ASSAULT", "AGGRAVATED ASSAULT", "SEXUAL ASSAULT",
                            "ASSAULT CAUSING BODILY HARM", "UTTERING THREATS"),
    CrimeCategory.PROPERTY_DAMAGE: ("BREAK AND ENTER", "THEFT UNDER $5000", "ROBBERY",
                                    "MISCHIEF - PROPERTY DAMAGE", "SHOPLIFTING"),
    CrimeCategory.MOTOR_VEHICLE: ("MOTOR VEHICLE COLLISION", "IMPAIRED DRIVING",
                                  "MOTOR VEHICLE ACT VIOLATION", "DANGEROUS OPERATION OF MOTOR VEHICLE"),
}
NEUTRAL_OFFENCES = ("DISTURBANCE", "FALSE ALARM", "SUSPICIOUS PERSON", "BREACH OF PROBATION", "LOST ITEM")

#: POI types planted around each category's zones.
ZONE_POI_TYPES = {
    CrimeCategory.ALCOHOL_RELATED: ("pub", "bar", "nightclub", "alcohol"),
    CrimeCategory.ASSAULT: ("fast_food", "bus_stop", "hostel", "playground"),
    CrimeCategory.PROPERTY_DAMAGE: ("supermarket", "convenience", "mall", "department_store", "clothes"),
    CrimeCategory.MOTOR_VEHICLE: ("traffic_signals", "crossing", "fuel", "parking", "motorway_junction"),
}
UNMAPPED_POI_TYPES = ("vending_machine", "bench", "waste_basket")

#: Default share of records whose latent category is each category; the
#: remaining 12% are neutral incidents.
DEFAULT_BALANCES = {c: 0.22 for c in CrimeCategory}

HALIFAX_BBOX = (44.60, 44.70, -63.66, -63.52)


@dataclass(frozen=True)
class Zone:
    center: GeoPoint
    radius_km: float


@dataclass
class SynthConfig:
    """Knobs of :func:`generate_synthetic`.

    Every record has one latent category, drawn with the probabilities in
    ``balances`` (which may sum to less than 1; the rest are neutral
    incidents). It is positive for that category only. With probability
    ``zone_prob`` it is placed inside one of its category's zones, otherwise
    uniformly in ``bbox``. Neutral records are always uniform.
    """

    seed: int
    n: int = 2000
    years: tuple = (2015, 2016)
    bbox: tuple = HALIFAX_BBOX
    zones_per_category: int = 3
    zone_radius_km: float = 0.3
    min_zone_separation_km: float = 1.5
    zone_prob: float = 0.85
    balances: dict = field(default_factory=lambda: dict(DEFAULT_BALANCES))
    night_bias: float = 0.3
    n_background_pois: int = 1200
    pois_per_zone: int = 12
    unmapped_poi_fraction: float = 0.02
    zones: dict | None = None

    def validate(self) -> None:
        if self.seed is None or int(self.seed) != self.seed:
            raise ValueError("synthetic config needs an integer seed")
        if self.n < 1:
            raise ValueError("n must be positive")
        if len(self.years) != 2 or self.years[0] == self.years[1]:
            raise ValueError("years must be two distinct values")
        lat0, lat1, lon0, lon1 = self.bbox
        if not (-90 <= lat0 < lat1 <= 90 and -180 <= lon0 < lon1 <= 180):
            raise ValueError(f"bad bbox {self.bbox}")
        if not 0.0 <= self.zone_prob <= 1.0:
            raise ValueError("zone_prob must lie in [0, 1]")
        if not 0.0 <= self.night_bias <= 1.0:
            raise ValueError("night_bias must lie in [0, 1]")
        if self.zone_radius_km <= 0 or self.zones_per_category < 1:
            raise ValueError("zones need a positive radius and count")
        for c in CrimeCategory:
            b = self.balances.get(c)
            if b is None or not 0.0 <= b <= 1.0:
                raise ValueError(f"balance for {c.value} must lie in [0, 1]")
        if sum(self.balances[c] for c in CrimeCategory) > 1.0 + 1e-12:
            raise ValueError("category balances must sum to at most 1")


@dataclass
class SyntheticDataset:
    records_a: list
    records_b: list
    pois: list
    ground_truth: dict


def _uniform_point(rng: np.random.Generator, bbox) -> GeoPoint:
    lat0, lat1, lon0, lon1 = bbox
    # uniform in area on the sphere
    s0, s1 = math.sin(math.radians(lat0)), math.sin(math.radians(lat1))
    lat = math.degrees(math.asin(rng.uniform(s0, s1)))
    return GeoPoint(lat, float(rng.uniform(lon0, lon1)))


def _point_in_zone(rng: np.random.Generator, zone: Zone) -> GeoPoint:
    dist = zone.radius_km * math.sqrt(rng.uniform()) * (1.0 - 1e-9)
    return destination_point(zone.center, float(rng.uniform(0.0, 360.0)), dist)


def _place_zones(rng: np.random.Generator, cfg: SynthConfig) -> dict:
    lat0, lat1, lon0, lon1 = cfg.bbox
    margin_lat = cfg.zone_radius_km / 111.0
    margin_lon = margin_lat / max(0.1, math.cos(math.radians((lat0 + lat1) / 2)))
    inner = (lat0 + margin_lat, lat1 - margin_lat, lon0 + margin_lon, lon1 - margin_lon)
    placed: list[GeoPoint] = []
    zones = {}
    for c in CATEGORY_ORDER:
        zones[c] = []
        for _ in range(cfg.zones_per_category):
            for _attempt in range(10_000):
                p = _uniform_point(rng, inner)
                if all(haversine_km(p, q) >= cfg.min_zone_separation_km for q in placed):
                    break
            else:
                raise ValueError("cannot place zones with the requested separation; enlarge bbox")
            placed.append(p)
            zones[c].append(Zone(p, cfg.zone_radius_km))
    return zones


def _draw_time(rng: np.random.Generator, night: bool) -> tuple[dtime, int]:
    if night:
        hour = int((20 + rng.integers(0, 8)) % 24)
        weekday = int(rng.choice([4, 5, 6])) if rng.uniform() < 0.6 else int(rng.integers(0, 7))
    else:
        hour = int(rng.integers(0, 24))
        weekday = int(rng.integers(0, 7))
    return dtime(hour, int(rng.integers(0, 60))), weekday


def _generate_year(rng, cfg: SynthConfig, zones: dict, year: int):
    cats = list(CATEGORY_ORDER)
    probs = np.array([cfg.balances[c] for c in cats] + [0.0])
    probs[-1] = max(0.0, 1.0 - probs[:-1].sum())
    probs /= probs.sum()
    records, latent = [], []
    for i in range(cfg.n):
        k = int(rng.choice(len(probs), p=probs))
        cat = cats[k] if k < len(cats) else None
        desc = str(rng.choice(OFFENCES[cat] if cat is not None else NEUTRAL_OFFENCES))
        alcohol = cat is CrimeCategory.ALCOHOL_RELATED
        assignment = None
        if cat is not None and rng.uniform() < cfg.zone_prob:
            z = int(rng.integers(0, len(zones[cat])))
            loc = _point_in_zone(rng, zones[cat][z])
            assignment = [cat.value, z]
        else:
            loc = _uniform_point(rng, cfg.bbox)
        night = alcohol and rng.uniform() < cfg.night_bias
        t, weekday = _draw_time(rng, night)
        month = int(rng.integers(1, 13))
        records.append(CrimeRecord(f"{year}-{i:05d}", loc, t, month, weekday, desc, alcohol, year))
        latent.append(assignment)
    return records, latent


def _generate_pois(rng, cfg: SynthConfig, zones: dict) -> list[tuple]:
    from .geocoding import load_taxonomy

    types = load_taxonomy().types
    rows = []
    for _ in range(cfg.n_background_pois):
        p = _uniform_point(rng, cfg.bbox)
        if rng.uniform() < cfg.unmapped_poi_fraction:
            t = str(rng.choice(UNMAPPED_POI_TYPES))
        else:
            t = str(rng.choice(types))
        rows.append((p, t))
    for c in CATEGORY_ORDER:
        for z in zones[c]:
            for _ in range(cfg.pois_per_zone):
                rows.append((_point_in_zone(rng, z), str(rng.choice(ZONE_POI_TYPES[c]))))
    return [(f"poi-{i:05d}", p.lat, p.lon, t) for i, (p, t) in enumerate(rows)]


def generate_synthetic(cfg: SynthConfig) -> SyntheticDataset:
    """Two periods of records, a POI snapshot and the ground truth.

    Deterministic in ``cfg.seed``.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    zones = cfg.zones or _place_zones(rng, cfg)
    records_a, latent_a = _generate_year(rng, cfg, zones, cfg.years[0])
    records_b, latent_b = _generate_year(rng, cfg, zones, cfg.years[1])
    pois = _generate_pois(rng, cfg, zones)
    truth = {
        "seed": int(cfg.seed),
        "zone_prob": cfg.zone_prob,
        "zones": {c.value: [{"lat": z.center.lat, "lon": z.center.lon, "radius_km": z.radius_km}
                            for z in zones[c]] for c in CATEGORY_ORDER},
        "assignments": {str(cfg.years[0]): latent_a, str(cfg.years[1]): latent_b},
    }
    return SyntheticDataset(records_a, records_b, pois, truth)


def write_ground_truth(truth: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=1, sort_keys=True)
        fh.write("\n")


def zones_from_truth(truth: dict) -> dict:
    return {CrimeCategory.parse(k): [Zone(GeoPoint(z["lat"], z["lon"]), z["radius_km"]) for z in v]
            for k, v in truth["zones"].items()}


def zone_distance_km(p: GeoPoint, zones: Sequence[Zone]) -> float:
    return min(haversine_km(p, z.center, DEFAULT_EARTH) for z in zones)
