"""Geodesic primitives: coordinates, haversine distance, spherical centroid and
a coarse lat/lon grid index for nearest-neighbour lookups.

All distances are kilometres on a sphere.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import EmptyInputError, GeoDomainError

#: IUGG mean Earth radius.
MEAN_EARTH_RADIUS_KM = 6371.0088

_DEGENERATE_NORM = 1e-9


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 latitude/longitude in degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        lat, lon = float(self.lat), float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise GeoDomainError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= lat <= 90.0:
            raise GeoDomainError(f"latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise GeoDomainError(f"longitude {lon} outside [-180, 180]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)

    def __iter__(self):
        yield self.lat
        yield self.lon


@dataclass(frozen=True)
class EarthModel:
    radius_km: float = MEAN_EARTH_RADIUS_KM

    def __post_init__(self):
        if not (math.isfinite(self.radius_km) and self.radius_km > 0):
            raise ValueError(f"radius_km must be positive, got {self.radius_km}")


DEFAULT_EARTH = EarthModel()


def haversine_km(a: GeoPoint, b: GeoPoint, earth: EarthModel = DEFAULT_EARTH) -> float:
    """Great-circle distance between two points.

    Symmetric bit-for-bit: swapping ``a`` and ``b`` only flips the sign of the
    angle differences, which are squared.
    """
    for p in (a, b):
        if not (math.isfinite(p.lat) and math.isfinite(p.lon)):
            raise GeoDomainError(f"non-finite coordinate {p!r}")
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    h = min(1.0, max(0.0, h))
    return 2.0 * earth.radius_km * math.asin(math.sqrt(h))


def haversine_km_array(lat1, lon1, lat2, lon2, earth: EarthModel = DEFAULT_EARTH) -> np.ndarray:
    """Broadcasting haversine over degree arrays."""
    lat1 = np.asarray(lat1, dtype=float)
    lon1 = np.asarray(lon1, dtype=float)
    lat2 = np.asarray(lat2, dtype=float)
    lon2 = np.asarray(lon2, dtype=float)
    if not (np.all(np.isfinite(lat1)) and np.all(np.isfinite(lon1))
            and np.all(np.isfinite(lat2)) and np.all(np.isfinite(lon2))):
        raise GeoDomainError("non-finite coordinate in input")
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = np.radians(lat2 - lat1)
    dlam = np.radians(lon2 - lon1)
    h = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2.0) ** 2
    np.clip(h, 0.0, 1.0, out=h)
    return 2.0 * earth.radius_km * np.arcsin(np.sqrt(h))


def destination_point(start: GeoPoint, bearing_deg: float, distance_km: float,
                      earth: EarthModel = DEFAULT_EARTH) -> GeoPoint:
    """Point reached by travelling ``distance_km`` along a great circle."""
    delta = distance_km / earth.radius_km
    theta = math.radians(bearing_deg)
    phi1 = math.radians(start.lat)
    lam1 = math.radians(start.lon)
    sin_phi2 = math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta)
    phi2 = math.asin(min(1.0, max(-1.0, sin_phi2)))
    lam2 = lam1 + math.atan2(math.sin(theta) * math.sin(delta) * math.cos(phi1),
                             math.cos(delta) - math.sin(phi1) * sin_phi2)
    lon = (math.degrees(lam2) + 540.0) % 360.0 - 180.0
    return GeoPoint(math.degrees(phi2), lon)


def pairwise_haversine_km(latlon: np.ndarray, earth: EarthModel = DEFAULT_EARTH) -> np.ndarray:
    """Dense ``(n, n)`` distance matrix for an ``(n, 2)`` array of lat/lon.

    The upper triangle is computed and mirrored, so the result is exactly
    symmetric with a zero diagonal.
    """
    latlon = np.asarray(latlon, dtype=float)
    n = len(latlon)
    d = haversine_km_array(latlon[:, None, 0], latlon[:, None, 1],
                           latlon[None, :, 0], latlon[None, :, 1], earth)
    iu = np.triu_indices(n, 1)
    d[(iu[1], iu[0])] = d[iu]
    np.fill_diagonal(d, 0.0)
    return d


def as_latlon_array(points: Iterable[GeoPoint] | np.ndarray) -> np.ndarray:
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=float).reshape(-1, 2)
    else:
        arr = np.array([(p.lat, p.lon) for p in points], dtype=float).reshape(-1, 2)
    return arr


def spherical_centroid(points: Sequence[GeoPoint] | np.ndarray, return_degenerate: bool = False):
    """Centroid of points on the unit sphere.

    Points are mapped to 3-D unit vectors, averaged and projected back onto
    the sphere. When the mean vector nearly vanishes (e.g. an antipodal pair)
    the first point is returned instead and the result is flagged as
    degenerate.

    Returns
    -------
    GeoPoint, or ``(GeoPoint, bool)`` when ``return_degenerate`` is true.
    """
    arr = as_latlon_array(points)
    if len(arr) == 0:
        raise EmptyInputError("spherical_centroid needs at least one point")
    phi = np.radians(arr[:, 0])
    lam = np.radians(arr[:, 1])
    cos_phi = np.cos(phi)
    xyz = np.column_stack([cos_phi * np.cos(lam), cos_phi * np.sin(lam), np.sin(phi)])
    mean = xyz.sum(axis=0) / len(xyz)
    norm = math.sqrt(float(mean @ mean))
    if norm < _DEGENERATE_NORM:
        result = GeoPoint(float(arr[0, 0]), float(arr[0, 1]))
        return (result, True) if return_degenerate else result
    x, y, z = mean / norm
    lat = math.degrees(math.atan2(z, math.hypot(x, y)))
    lon = math.degrees(math.atan2(y, x))
    result = GeoPoint(min(90.0, max(-90.0, lat)), min(180.0, max(-180.0, lon)))
    return (result, False) if return_degenerate else result


@dataclass(frozen=True)
class GridIndex:
    """Points bucketed on a regular lat/lon grid.

    Bucket keys are ``(floor(lat / cell), floor(lon / cell) mod n_lon_cells)``
    so longitude wraps around the antimeridian. Immutable after
    :func:`grid_build`.
    """

    cell_size_deg: float
    buckets: dict
    ids: tuple
    lats: np.ndarray = field(repr=False)
    lons: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def n_lon_cells(self) -> int:
        return math.ceil(360.0 / self.cell_size_deg - 1e-9)

    def cell_of(self, p: GeoPoint) -> tuple[int, int]:
        return _cell_key(p.lat, p.lon, self.cell_size_deg, self.n_lon_cells)

    def ids_in_cell(self, p: GeoPoint) -> tuple:
        """Ids sharing ``p``'s bucket; empty tuple when none."""
        return tuple(self.ids[i] for i in self.buckets.get(self.cell_of(p), ()))

    def nearest(self, query: GeoPoint, earth: EarthModel = DEFAULT_EARTH):
        return grid_nearest(self, query, earth)


def _cell_key(lat: float, lon: float, cell: float, n_lon: int) -> tuple[int, int]:
    return int(math.floor(lat / cell)), int(math.floor(lon / cell)) % n_lon


def grid_build(points: Iterable[tuple[Hashable, GeoPoint]], cell_size_deg: float = 0.01) -> GridIndex:
    """Bucket ``(id, point)`` pairs into a :class:`GridIndex`."""
    if not (math.isfinite(cell_size_deg) and cell_size_deg > 0):
        raise ValueError(f"cell_size_deg must be positive, got {cell_size_deg}")
    pts = list(points)
    ids = tuple(pid for pid, _ in pts)
    lats = np.array([p.lat for _, p in pts], dtype=float)
    lons = np.array([p.lon for _, p in pts], dtype=float)
    n_lon = math.ceil(360.0 / cell_size_deg - 1e-9)
    buckets: dict[tuple[int, int], list[int]] = defaultdict(list)
    for pos, (_, p) in enumerate(pts):
        buckets[_cell_key(p.lat, p.lon, cell_size_deg, n_lon)].append(pos)
    frozen = {k: tuple(v) for k, v in buckets.items()}
    lats.setflags(write=False)
    lons.setflags(write=False)
    return GridIndex(cell_size_deg, frozen, ids, lats, lons)


def _ring_cells(ci: int, cj: int, r: int, n_lon: int):
    if r == 0:
        yield ci, cj % n_lon
        return
    seen = set()
    for di in range(-r, r + 1):
        if abs(di) == r:
            djs = range(-r, r + 1)
        else:
            djs = (-r, r)
        for dj in djs:
            key = (ci + di, (cj + dj) % n_lon)
            if key not in seen:
                seen.add(key)
                yield key


def _best_of(index: GridIndex, positions, query: GeoPoint, earth: EarthModel, best):
    positions = np.asarray(positions, dtype=np.intp)
    if positions.size == 0:
        return best
    d = haversine_km_array(query.lat, query.lon, index.lats[positions], index.lons[positions], earth)
    dmin = d.min()
    for pos in positions[d == dmin]:
        cand = (float(dmin), index.ids[pos])
        if best is None or cand < best:
            best = cand
    return best


def grid_nearest(index: GridIndex, query: GeoPoint, earth: EarthModel = DEFAULT_EARTH):
    """Nearest indexed point to ``query`` as ``(id, km)``.

    Rings of cells around the query's cell are searched outward. After ring
    ``r`` every unvisited point differs from the query by more than ``r``
    cells in latitude or in (wrapped) longitude, which gives a geodesic lower
    bound; the search stops once the best distance found beats it. Ties go to
    the smallest id.
    """
    if len(index) == 0:
        raise EmptyInputError("grid_nearest on an empty index")
    cell = index.cell_size_deg
    n_lon = index.n_lon_cells
    slack = abs(n_lon * cell - 360.0)
    ci, cj = index.cell_of(query)
    lat_lo = math.floor(-90.0 / cell)
    lat_hi = math.floor(90.0 / cell)
    cos_q = math.cos(math.radians(query.lat))
    far_pole = math.radians(90.0 - abs(query.lat))
    n_buckets = len(index.buckets)
    best = None
    r = 0
    while True:
        if (2 * r + 1) ** 2 > 4 * n_buckets + 64:
            # Cheaper to scan everything than to keep walking empty rings.
            return _flip(_best_of(index, np.arange(len(index)), query, earth, None))
        for key in _ring_cells(ci, cj, r, n_lon):
            if key in index.buckets:
                best = _best_of(index, index.buckets[key], query, earth, best)
        lat_done = ci - r <= lat_lo and ci + r >= lat_hi
        lon_done = 2 * r + 1 >= n_lon
        if lat_done and lon_done:
            return _flip(best)
        if best is not None:
            bound = math.inf
            if not lat_done:
                bound = math.radians(r * cell)
            if not lon_done:
                delta = max(0.0, r * cell - slack)
                if delta <= 90.0:
                    lon_bound = math.asin(min(1.0, cos_q * math.sin(math.radians(delta))))
                else:
                    lon_bound = far_pole
                bound = min(bound, lon_bound)
            if best[0] < bound * earth.radius_km * (1.0 - 1e-12):
                return _flip(best)
        r += 1


def _flip(best):
    return best[1], best[0]
