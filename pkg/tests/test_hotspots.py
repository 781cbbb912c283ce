import json
import math
from datetime import time as dtime

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spatialcrime.dataset import CrimeCategory, CrimeRecord, derive_label
from spatialcrime.errors import PeriodOverlapError, SchemaError
from spatialcrime.geo import GeoPoint, destination_point, haversine_km
from spatialcrime.hdbscan import HdbscanParams
from spatialcrime.hotspots import (
    MISSING,
    Hotpoint,
    HotpointSet,
    Hotspot,
    build_hotspots,
    check_period_disjoint,
    cluster_category,
    distance_to_nearest_hotpoint,
    extract_hotpoints,
    hotpoints_from_records,
    hotpoints_geojson,
    hotspots_geojson,
    load_hotpoints,
    nearest_hotpoint_distances,
    save_hotpoints,
)

A = CrimeCategory.ASSAULT
points = st.builds(GeoPoint, st.floats(44.5, 44.8), st.floats(-63.8, -63.4))


def assault(p, i, year=2015, desc="ASSAULT"):
    return CrimeRecord(f"{year}-{i}", p, dtime(12, 0), 1, 0, desc, False, year)


def planted_city(seed=0, per_zone=80, scattered=100):
    rng = np.random.default_rng(seed)
    centres = [GeoPoint(44.62, -63.62), GeoPoint(44.68, -63.60), GeoPoint(44.64, -63.54)]
    recs = []
    for c in centres:
        for _ in range(per_zone):
            recs.append(assault(destination_point(c, rng.uniform(0, 360), 0.3 * math.sqrt(rng.uniform())), len(recs)))
    for _ in range(scattered):
        recs.append(assault(GeoPoint(rng.uniform(44.60, 44.70), rng.uniform(-63.66, -63.52)), len(recs)))
    # negatives placed on top of a zone must not create or move hotspots
    for _ in range(50):
        recs.append(assault(destination_point(centres[0], rng.uniform(0, 360), 0.1), len(recs), desc="LOST ITEM"))
    return recs, centres


def hp_set(pts, years=()):
    return HotpointSet(A, tuple(Hotpoint(A, p, i) for i, p in enumerate(pts)), "2015", frozenset(years))


class TestBuild:
    def test_no_positives(self, rules):
        recs = [assault(GeoPoint(44.6, -63.6), i, desc="LOST ITEM") for i in range(20)]
        assert build_hotspots(recs, A, rules=rules) == []
        assert cluster_category(recs, A, rules=rules).noise_fraction == 0.0

    def test_three_planted_zones(self, rules):
        recs, centres = planted_city()
        spots = build_hotspots(recs, A, HdbscanParams(min_cluster_size=10), rules)
        assert len(spots) == 3
        hps = extract_hotpoints(spots)
        for c in centres:
            nearest = min(hps.hotpoints, key=lambda h: haversine_km(h.location, c))
            assert abs(nearest.location.lat - c.lat) < 0.05 and abs(nearest.location.lon - c.lon) < 0.05

    def test_small_disc_is_one_hotspot(self, rules):
        rng = np.random.default_rng(1)
        c = GeoPoint(44.65, -63.58)
        recs = [assault(destination_point(c, rng.uniform(0, 360), 0.05 * math.sqrt(rng.uniform())), i)
                for i in range(60)]
        assert len(build_hotspots(recs, A, rules=rules)) == 1

    def test_members_are_positive_training_records(self, rules, synth):
        run = cluster_category(synth.records_a, A, rules=rules)
        by_id = {r.id: r for r in synth.records_a}
        for h in run.hotspots:
            assert len(h.members) >= 10
            for rid, m in zip(h.member_ids, h.members):
                r = by_id[rid]
                assert r.year == 2015 and derive_label(r, A, rules)
                assert r.location == m

    def test_metric_forced_to_haversine(self, rules):
        recs, _ = planted_city()
        a = build_hotspots(recs, A, HdbscanParams(metric="euclidean"), rules)
        b = build_hotspots(recs, A, HdbscanParams(), rules)
        assert a == b

    def test_deterministic_bitwise(self, rules, synth):
        _, h1 = hotpoints_from_records(synth.records_a, A, rules=rules)
        _, h2 = hotpoints_from_records(synth.records_a, A, rules=rules)
        assert [(h.location.lat, h.location.lon) for h in h1.hotpoints] == \
               [(h.location.lat, h.location.lon) for h in h2.hotpoints]
        assert h1.training_period == "2015" and h1.years == {2015}


class TestHotpoints:
    def test_empty(self):
        s = extract_hotpoints([], A)
        assert s.is_empty and len(s) == 0

    def test_empty_needs_category(self):
        with pytest.raises(ValueError):
            extract_hotpoints([])

    def test_ring_centre(self):
        c = GeoPoint(44.65, -63.58)
        ring = tuple(destination_point(c, b, 0.2) for b in range(0, 360, 30))
        s = extract_hotpoints([Hotspot(A, 0, ring, 1.0)])
        assert haversine_km(s.hotpoints[0].location, c) < 1e-6

    def test_order_follows_cluster_id(self):
        spots = [Hotspot(A, 2, (GeoPoint(1, 1),), 0.0), Hotspot(A, 0, (GeoPoint(2, 2),), 0.0)]
        assert [h.source_cluster_id for h in extract_hotpoints(spots).hotpoints] == [0, 2]


class TestDistance:
    def test_at_hotpoint(self):
        p = GeoPoint(44.65, -63.58)
        assert distance_to_nearest_hotpoint(p, hp_set([GeoPoint(44.6, -63.6), p])) == 0.0

    def test_empty_is_missing(self):
        assert distance_to_nearest_hotpoint(GeoPoint(0, 0), hp_set([])) is MISSING
        assert np.isnan(nearest_hotpoint_distances([GeoPoint(0, 0)], hp_set([]))).all()

    def test_brute_force(self):
        rng = np.random.default_rng(2)
        hps = [GeoPoint(a, b) for a, b in zip(rng.uniform(44.5, 44.8, 10), rng.uniform(-63.8, -63.4, 10))]
        qs = [GeoPoint(a, b) for a, b in zip(rng.uniform(44.5, 44.8, 20), rng.uniform(-63.8, -63.4, 20))]
        s = hp_set(hps)
        vec = nearest_hotpoint_distances(qs, s)
        for q, v in zip(qs, vec):
            want = min(haversine_km(q, h) for h in hps)
            assert distance_to_nearest_hotpoint(q, s) == pytest.approx(want, rel=1e-12)
            assert v == pytest.approx(want, rel=1e-12)

    @given(st.lists(points, min_size=1, max_size=8), points)
    def test_lower_bound(self, hps, q):
        d = distance_to_nearest_hotpoint(q, hp_set(hps))
        assert all(d <= haversine_km(q, h) + 1e-9 for h in hps)

    @given(st.lists(points, min_size=1, max_size=8), points, points)
    def test_adding_never_increases(self, hps, extra, q):
        assert distance_to_nearest_hotpoint(q, hp_set(hps + [extra])) <= distance_to_nearest_hotpoint(q, hp_set(hps))


class TestPeriodGuard:
    def test_overlap_raises(self):
        recs = [assault(GeoPoint(44.6, -63.6), 0, year=2015)]
        with pytest.raises(PeriodOverlapError):
            check_period_disjoint(hp_set([], years=[2015]), recs)

    def test_override_and_disjoint(self):
        recs = [assault(GeoPoint(44.6, -63.6), 0, year=2015)]
        check_period_disjoint(hp_set([], years=[2015]), recs, allow_overlap=True)
        check_period_disjoint(hp_set([], years=[2014]), recs)


class TestExport:
    def test_geojson(self, rules):
        recs, _ = planted_city()
        spots = build_hotspots(recs, A, rules=rules)
        gj = hotspots_geojson(spots)
        assert gj["type"] == "FeatureCollection" and len(gj["features"]) == 3
        ring = gj["features"][0]["geometry"]["coordinates"][0]
        assert gj["features"][0]["geometry"]["type"] == "Polygon" and ring[0] == ring[-1]
        pts = hotpoints_geojson(extract_hotpoints(spots))
        assert all(f["geometry"]["type"] == "Point" for f in pts["features"])
        json.dumps(gj)

    def test_degenerate_hull(self):
        gj = hotspots_geojson([Hotspot(A, 0, (GeoPoint(1, 1), GeoPoint(1, 1), GeoPoint(2, 2)), 0.0)])
        assert gj["features"][0]["geometry"]["type"] == "MultiPoint"

    def test_artifact_round_trip(self, tmp_path):
        s = hp_set([GeoPoint(44.6, -63.6), GeoPoint(44.65, -63.55)], years=[2015])
        save_hotpoints(s, tmp_path / "h.npz")
        save_hotpoints(s, tmp_path / "h2.npz")
        assert (tmp_path / "h.npz").read_bytes() == (tmp_path / "h2.npz").read_bytes()
        back = load_hotpoints(tmp_path / "h.npz")
        assert back == s

    def test_empty_artifact(self, tmp_path):
        save_hotpoints(hp_set([]), tmp_path / "h.npz")
        assert load_hotpoints(tmp_path / "h.npz").is_empty

    def test_schema_check(self, tmp_path):
        np.savez(tmp_path / "bad.npz", latlon=np.zeros((0, 2)), cluster_ids=np.zeros(0),
                 meta=np.array(json.dumps({"schema": "other"})))
        with pytest.raises(SchemaError):
            load_hotpoints(tmp_path / "bad.npz")
