"""Raw and engineered feature matrices for one crime category.

Engineered columns, in order::

    43 raw one-hot columns (hour, month, weekday)
    osm_category=<c>   for the 12 taxonomy categories, then osm_category=unknown
    osm_type=<t>       for the types seen in training, then osm_type=unknown
    dist_hotpoint_<Category>, no_hotpoint_<Category>   per hotpoint set

The distance column is standardised with the training mean and population
standard deviation; a missing distance (no hotpoints) is filled with 110% of
the training 99th percentile before scaling and flagged in the indicator.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import (RAW_FEATURE_NAMES, CrimeCategory, CrimeRecord, LabelRules, labels_for,
                      load_label_rules, raw_features)
from .errors import EmptyInputError
from .geocoding import UNKNOWN, Taxonomy
from .hotspots import HotpointSet, check_period_disjoint, nearest_hotpoint_distances

FEATURE_SETS = ("raw", "engineered")
MISSING_PERCENTILE = 99.0
MISSING_INFLATION = 1.10


@dataclass(frozen=True)
class FeatureMatrix:
    column_names: tuple
    rows: np.ndarray
    labels: np.ndarray
    feature_set: str

    def __post_init__(self):
        if self.feature_set not in FEATURE_SETS:
            raise ValueError(f"feature_set must be one of {FEATURE_SETS}")
        if self.rows.shape != (len(self.labels), len(self.column_names)):
            raise ValueError(f"rows shape {self.rows.shape} does not match "
                             f"{len(self.labels)} labels x {len(self.column_names)} columns")
        if not np.all(np.isfinite(self.rows)):
            raise ValueError("feature matrix contains non-finite values")

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(self.column_names) + ["label"])
            for row, y in zip(self.rows, self.labels):
                w.writerow([repr(float(v)) for v in row] + [int(y)])


def raw_matrix(records: Sequence[CrimeRecord]) -> np.ndarray:
    if not records:
        return np.zeros((0, len(RAW_FEATURE_NAMES)))
    return np.vstack([raw_features(r) for r in records])


def build_raw(records: Sequence[CrimeRecord], category: CrimeCategory,
              rules: LabelRules | None = None) -> FeatureMatrix:
    if not records:
        raise EmptyInputError("build_raw needs at least one record")
    rules = rules or load_label_rules()
    return FeatureMatrix(RAW_FEATURE_NAMES, raw_matrix(records), labels_for(records, category, rules), "raw")


@dataclass(frozen=True)
class SpatialAttributes:
    """Per-record geocode output and nearest-hotpoint distances (NaN = none)."""

    osm_types: tuple
    osm_categories: tuple
    sources: tuple
    distances: np.ndarray

    def __len__(self) -> int:
        return len(self.osm_types)

    def subset(self, idx) -> "SpatialAttributes":
        idx = np.asarray(idx, dtype=np.intp)
        return SpatialAttributes(tuple(self.osm_types[i] for i in idx),
                                 tuple(self.osm_categories[i] for i in idx),
                                 tuple(self.sources[i] for i in idx),
                                 self.distances[idx])


def _as_sets(hotpoints) -> tuple:
    if isinstance(hotpoints, HotpointSet):
        return (hotpoints,)
    return tuple(hotpoints)


def spatial_attributes(records: Sequence[CrimeRecord], geocoder, hotpoints) -> SpatialAttributes:
    sets = _as_sets(hotpoints)
    results = [geocoder.reverse(r.location) for r in records]
    points = [r.location for r in records]
    if records:
        dist = np.column_stack([nearest_hotpoint_distances(points, s) for s in sets]) if sets \
            else np.zeros((len(records), 0))
    else:
        dist = np.zeros((0, len(sets)))
    return SpatialAttributes(tuple(g.osm_type for g in results), tuple(g.osm_category for g in results),
                             tuple(g.source for g in results), dist)


@dataclass(frozen=True)
class FeaturePlan:
    """Everything learned from training rows; applied unchanged to any row."""

    category: CrimeCategory
    taxonomy_categories: tuple
    category_vocabulary: tuple
    type_vocabulary: tuple
    distance_categories: tuple
    fill_values: tuple
    means: tuple
    scales: tuple
    hotpoints: tuple = field(compare=False, repr=False)
    geocoder: object = field(default=None, compare=False, repr=False)
    allow_overlap: bool = False

    def parameters(self) -> dict:
        return {
            "category": self.category.value,
            "taxonomy_categories": list(self.taxonomy_categories),
            "category_vocabulary": list(self.category_vocabulary),
            "type_vocabulary": list(self.type_vocabulary),
            "distance_categories": list(self.distance_categories),
            "fill_values": [repr(v) for v in self.fill_values],
            "means": [repr(v) for v in self.means],
            "scales": [repr(v) for v in self.scales],
            "hotpoints": [[s.training_period, [[repr(h.location.lat), repr(h.location.lon)] for h in s.hotpoints]]
                          for s in self.hotpoints],
        }

    def checksum(self) -> str:
        blob = json.dumps(self.parameters(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @property
    def column_names(self) -> tuple:
        names = list(RAW_FEATURE_NAMES)
        names += [f"osm_category={c}" for c in self.taxonomy_categories] + [f"osm_category={UNKNOWN}"]
        names += [f"osm_type={t}" for t in self.type_vocabulary] + [f"osm_type={UNKNOWN}"]
        for c in self.distance_categories:
            names += [f"dist_hotpoint_{c}", f"no_hotpoint_{c}"]
        return tuple(names)

    def inverse_distance(self, standardized: np.ndarray, which: int = 0) -> np.ndarray:
        return np.asarray(standardized) * self.scales[which] + self.means[which]


def fit_plan_from_attributes(attrs: SpatialAttributes, category: CrimeCategory, hotpoints,
                             taxonomy: Taxonomy, geocoder=None, allow_overlap: bool = False) -> FeaturePlan:
    if len(attrs) == 0:
        raise EmptyInputError("cannot fit a feature plan on zero training rows")
    sets = _as_sets(hotpoints)
    fills, means, scales = [], [], []
    for j in range(len(sets)):
        d = attrs.distances[:, j]
        seen = d[np.isfinite(d)]
        fill = float(np.percentile(seen, MISSING_PERCENTILE) * MISSING_INFLATION) if seen.size else 0.0
        filled = np.where(np.isfinite(d), d, fill)
        mu = float(filled.mean())
        sd = float(filled.std())
        fills.append(fill)
        means.append(mu)
        scales.append(sd if sd > 0 else 1.0)
    observed_cats = sorted(set(attrs.osm_categories) | {UNKNOWN})
    types = sorted(t for t in set(attrs.osm_types) if t != UNKNOWN)
    return FeaturePlan(
        category=category,
        taxonomy_categories=taxonomy.categories,
        category_vocabulary=tuple(observed_cats),
        type_vocabulary=tuple(types),
        distance_categories=tuple(s.crime_category.value for s in sets),
        fill_values=tuple(fills),
        means=tuple(means),
        scales=tuple(scales),
        hotpoints=sets,
        geocoder=geocoder,
        allow_overlap=allow_overlap,
    )


def fit_plan(records: Sequence[CrimeRecord], category: CrimeCategory, hotpoints, geocoder,
             taxonomy: Taxonomy, allow_overlap: bool = False) -> FeaturePlan:
    """Learn the engineered-feature transform from training rows only.

    ``hotpoints`` is one :class:`HotpointSet` (the usual case) or several,
    one distance column each. Raises
    :class:`~spatialcrime.errors.PeriodOverlapError` when a hotpoint set was
    built from the same years as ``records``.
    """
    sets = _as_sets(hotpoints)
    for s in sets:
        check_period_disjoint(s, records, allow_overlap)
    attrs = spatial_attributes(records, geocoder, sets)
    return fit_plan_from_attributes(attrs, category, sets, taxonomy, geocoder, allow_overlap)


def transform_attributes(raw: np.ndarray, attrs: SpatialAttributes, plan: FeaturePlan) -> np.ndarray:
    n = len(attrs)
    cat_index = {c: i for i, c in enumerate(plan.taxonomy_categories)}
    type_index = {t: i for i, t in enumerate(plan.type_vocabulary)}
    n_cat = len(plan.taxonomy_categories) + 1
    n_type = len(plan.type_vocabulary) + 1
    cat_block = np.zeros((n, n_cat))
    type_block = np.zeros((n, n_type))
    for i, (c, t) in enumerate(zip(attrs.osm_categories, attrs.osm_types)):
        cat_block[i, cat_index.get(c, n_cat - 1)] = 1.0
        type_block[i, type_index.get(t, n_type - 1)] = 1.0
    blocks = [raw, cat_block, type_block]
    for j in range(len(plan.distance_categories)):
        d = attrs.distances[:, j]
        missing = ~np.isfinite(d)
        filled = np.where(missing, plan.fill_values[j], d)
        blocks.append(((filled - plan.means[j]) / plan.scales[j])[:, None])
        blocks.append(missing.astype(float)[:, None])
    return np.hstack(blocks) if n else np.zeros((0, len(plan.column_names)))


def build_engineered(records: Sequence[CrimeRecord], plan: FeaturePlan, rules: LabelRules | None = None,
                     attributes: SpatialAttributes | None = None) -> FeatureMatrix:
    """Raw columns plus geocode one-hots and the hotpoint distance, via ``plan``.

    Pass precomputed ``attributes`` to skip geocoding.
    """
    if not records:
        raise EmptyInputError("build_engineered needs at least one record")
    for s in plan.hotpoints:
        check_period_disjoint(s, records, plan.allow_overlap)
    rules = rules or load_label_rules()
    if attributes is None:
        if plan.geocoder is None:
            raise ValueError("plan has no geocoder; pass precomputed attributes")
        attributes = spatial_attributes(records, plan.geocoder, plan.hotpoints)
    rows = transform_attributes(raw_matrix(records), attributes, plan)
    return FeatureMatrix(plan.column_names, rows, labels_for(records, plan.category, rules), "engineered")
