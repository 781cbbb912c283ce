"""Hotspots (HDBSCAN clusters of one crime category), their hotpoints
(spherical centroids) and the distance-to-nearest-hotpoint feature.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import hdbscan
from .dataset import CrimeCategory, CrimeRecord, LabelRules, derive_label, load_label_rules
from .errors import PeriodOverlapError, SchemaError
from .geo import (DEFAULT_EARTH, EarthModel, GeoPoint, as_latlon_array, haversine_km_array,
                  spherical_centroid)

#: Returned by :func:`distance_to_nearest_hotpoint` when there is no hotpoint.
MISSING = None

ARTIFACT_SCHEMA = "spatialcrime.hotpoints/v1"


@dataclass(frozen=True)
class Hotspot:
    crime_category: CrimeCategory
    cluster_id: int
    members: tuple
    stability: float
    member_ids: tuple = ()


@dataclass(frozen=True)
class Hotpoint:
    crime_category: CrimeCategory
    location: GeoPoint
    source_cluster_id: int


@dataclass(frozen=True)
class HotpointSet:
    crime_category: CrimeCategory
    hotpoints: tuple
    training_period: str
    years: frozenset = frozenset()

    @property
    def is_empty(self) -> bool:
        return not self.hotpoints

    def __len__(self) -> int:
        return len(self.hotpoints)

    def latlon(self) -> np.ndarray:
        return as_latlon_array([h.location for h in self.hotpoints])


def period_label(years) -> str:
    ys = sorted(set(int(y) for y in years))
    if not ys:
        return ""
    return str(ys[0]) if len(ys) == 1 else f"{ys[0]}-{ys[-1]}"


@dataclass(frozen=True)
class ClusterRun:
    """Hotspots plus the per-positive labels (-1 = noise) they came from."""

    hotspots: tuple
    labels: np.ndarray
    n_positives: int

    @property
    def noise_fraction(self) -> float:
        return float(np.mean(self.labels == -1)) if self.n_positives else 0.0


def cluster_category(records: Sequence[CrimeRecord], category: CrimeCategory,
                     params: hdbscan.HdbscanParams | None = None,
                     rules: LabelRules | None = None) -> ClusterRun:
    """Cluster the category's positive records; one hotspot per cluster.

    Only positives are clustered. The metric is always haversine.
    """
    params = params or hdbscan.HdbscanParams()
    if params.metric != "haversine_km":
        params = hdbscan.HdbscanParams(params.min_cluster_size, params.min_samples, "haversine_km", params.earth)
    rules = rules or load_label_rules()
    positives = [r for r in records if derive_label(r, category, rules)]
    if not positives:
        return ClusterRun((), np.zeros(0, dtype=int), 0)
    labeling = hdbscan.fit([r.location for r in positives], params)
    hotspots = []
    for cid in range(labeling.n_clusters):
        idx = np.flatnonzero(labeling.labels == cid)
        hotspots.append(Hotspot(
            crime_category=category,
            cluster_id=cid,
            members=tuple(positives[i].location for i in idx),
            stability=float(labeling.stabilities[cid]),
            member_ids=tuple(positives[i].id for i in idx),
        ))
    return ClusterRun(tuple(hotspots), labeling.labels, len(positives))


def build_hotspots(records: Sequence[CrimeRecord], category: CrimeCategory,
                   params: hdbscan.HdbscanParams | None = None,
                   rules: LabelRules | None = None) -> list[Hotspot]:
    """Hotspots of the category's positive records (see :func:`cluster_category`)."""
    return list(cluster_category(records, category, params, rules).hotspots)


def extract_hotpoints(hotspots: Sequence[Hotspot], crime_category: CrimeCategory | None = None,
                      training_period: str = "", years=()) -> HotpointSet:
    """One hotpoint per hotspot at the spherical centroid of its members."""
    if crime_category is None:
        if not hotspots:
            raise ValueError("crime_category is required when there are no hotspots")
        crime_category = hotspots[0].crime_category
    ordered = sorted(hotspots, key=lambda h: h.cluster_id)
    hps = tuple(Hotpoint(crime_category, spherical_centroid(h.members), h.cluster_id) for h in ordered)
    return HotpointSet(crime_category, hps, training_period or period_label(years), frozenset(int(y) for y in years))


def hotpoints_from_records(records: Sequence[CrimeRecord], category: CrimeCategory,
                           params: hdbscan.HdbscanParams | None = None,
                           rules: LabelRules | None = None) -> tuple[list[Hotspot], HotpointSet]:
    """:func:`build_hotspots` then :func:`extract_hotpoints`, with the period taken from the records."""
    years = {r.year for r in records}
    spots = build_hotspots(records, category, params, rules)
    return spots, extract_hotpoints(spots, category, period_label(years), years)


def distance_to_nearest_hotpoint(p: GeoPoint, hotpoints: HotpointSet,
                                 earth: EarthModel = DEFAULT_EARTH) -> float | None:
    """Kilometres to the closest hotpoint, or ``MISSING`` for an empty set."""
    if hotpoints.is_empty:
        return MISSING
    hp = hotpoints.latlon()
    return float(haversine_km_array(p.lat, p.lon, hp[:, 0], hp[:, 1], earth).min())


def nearest_hotpoint_distances(points, hotpoints: HotpointSet, earth: EarthModel = DEFAULT_EARTH) -> np.ndarray:
    """Vectorised :func:`distance_to_nearest_hotpoint`; NaN marks missing."""
    pts = as_latlon_array(points)
    if hotpoints.is_empty:
        return np.full(len(pts), np.nan)
    hp = hotpoints.latlon()
    d = haversine_km_array(pts[:, None, 0], pts[:, None, 1], hp[None, :, 0], hp[None, :, 1], earth)
    return d.min(axis=1)


def check_period_disjoint(hotpoints: HotpointSet, records: Sequence[CrimeRecord],
                          allow_overlap: bool = False) -> None:
    """Refuse to featurize records from the hotspot training period."""
    if allow_overlap or not hotpoints.years:
        return
    overlap = sorted(hotpoints.years & {r.year for r in records})
    if overlap:
        raise PeriodOverlapError(
            f"hotpoints for {hotpoints.crime_category.value} were built from {hotpoints.training_period}, "
            f"which overlaps the records being featurized (year(s) {', '.join(map(str, overlap))}); "
            "pass allow_overlap / --allow-period-overlap to override")


# --- export ----------------------------------------------------------------

def _convex_hull(points: np.ndarray) -> list[tuple[float, float]]:
    """Andrew's monotone chain over (x, y) pairs, counter-clockwise."""
    pts = sorted(set(map(tuple, points.tolist())))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def hotspots_geojson(hotspots: Sequence[Hotspot]) -> dict:
    """Convex hull polygon per hotspot (MultiPoint when the hull is degenerate)."""
    features = []
    for h in sorted(hotspots, key=lambda h: h.cluster_id):
        lonlat = np.array([(p.lon, p.lat) for p in h.members])
        hull = _convex_hull(lonlat)
        if len(hull) >= 3:
            ring = [list(p) for p in hull] + [list(hull[0])]
            geom = {"type": "Polygon", "coordinates": [ring]}
        else:
            geom = {"type": "MultiPoint", "coordinates": [list(p) for p in hull]}
        features.append({
            "type": "Feature",
            "geometry": geom,
            "properties": {"crime_category": h.crime_category.value, "cluster_id": h.cluster_id,
                           "size": len(h.members), "stability": h.stability},
        })
    return {"type": "FeatureCollection", "features": features}


def hotpoints_geojson(hotpoints: HotpointSet) -> dict:
    features = [{
        "type": "Feature",
        "geometry": {"type": "Point", "coordinates": [h.location.lon, h.location.lat]},
        "properties": {"crime_category": h.crime_category.value, "source_cluster_id": h.source_cluster_id,
                       "training_period": hotpoints.training_period},
    } for h in hotpoints.hotpoints]
    return {"type": "FeatureCollection", "features": features}


def save_hotpoints(hotpoints: HotpointSet, path) -> None:
    """Binary ``.npz`` artifact: coordinates plus a JSON metadata string."""
    meta = {"schema": ARTIFACT_SCHEMA, "crime_category": hotpoints.crime_category.value,
            "training_period": hotpoints.training_period, "years": sorted(hotpoints.years)}
    latlon = hotpoints.latlon() if not hotpoints.is_empty else np.zeros((0, 2))
    ids = np.array([h.source_cluster_id for h in hotpoints.hotpoints], dtype=np.int64)
    arrays = {"latlon": latlon, "cluster_ids": ids, "meta": np.array(json.dumps(meta, sort_keys=True))}
    # np.savez stamps the current time into the zip; fixed timestamps keep reruns byte-identical
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
            zf.writestr(info, buf.getvalue())


def load_hotpoints(path) -> HotpointSet:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        latlon = data["latlon"]
        ids = data["cluster_ids"]
    if meta.get("schema") != ARTIFACT_SCHEMA:
        raise SchemaError(f"{path}: unsupported hotpoint artifact schema {meta.get('schema')!r}")
    cat = CrimeCategory.parse(meta["crime_category"])
    hps = tuple(Hotpoint(cat, GeoPoint(float(a), float(b)), int(i)) for (a, b), i in zip(latlon, ids))
    return HotpointSet(cat, hps, meta["training_period"], frozenset(meta["years"]))
