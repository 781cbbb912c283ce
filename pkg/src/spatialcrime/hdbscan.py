"""HDBSCAN written out stage by stage.

The pipeline is the usual one::

    core distances -> mutual reachability -> MST (dense Prim)
        -> single-linkage dendrogram -> condensed tree -> excess-of-mass selection

Each stage is a public function so it can be checked on its own. Points are
either an ``(n, 2)`` array / sequence of :class:`~spatialcrime.geo.GeoPoint`
in degrees (``metric="haversine_km"``) or an ``(n, d)`` array
(``metric="euclidean"``).

Conventions that differ from some other implementations:

* ``min_samples`` counts neighbours *excluding* the point itself, so the core
  distance with ``min_samples=1`` is the distance to the nearest other point.
* Zero-distance merges get ``lambda = 1e12`` instead of infinity.
* The root may only be selected when no split below it survives
  condensation; the whole data set then forms one cluster.
* Equal mutual-reachability weights are ordered by raw distance first and
  by lowest point index only after that. A point whose core distance
  dominates both its edges then attaches to its nearer neighbour, which keeps
  :func:`fit` deterministic and independent of input order for points in
  general position.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DisconnectedInputError, TooFewPointsError
from .geo import DEFAULT_EARTH, EarthModel, as_latlon_array, pairwise_haversine_km

LAMBDA_CAP = 1e12
METRICS = ("haversine_km", "euclidean")


@dataclass(frozen=True)
class HdbscanParams:
    min_cluster_size: int = 10
    min_samples: int | None = None
    metric: str = "haversine_km"
    earth: EarthModel = DEFAULT_EARTH

    def __post_init__(self):
        if int(self.min_cluster_size) != self.min_cluster_size or self.min_cluster_size < 2:
            raise ValueError(f"min_cluster_size must be an integer >= 2, got {self.min_cluster_size}")
        if self.min_samples is not None and (int(self.min_samples) != self.min_samples or self.min_samples < 1):
            raise ValueError(f"min_samples must be an integer >= 1, got {self.min_samples}")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")

    @property
    def k(self) -> int:
        return self.min_samples if self.min_samples is not None else self.min_cluster_size


@dataclass(frozen=True)
class MstEdge:
    """Tree edge; ``distance`` is the raw metric distance, used to break ties."""

    u: int
    v: int
    weight: float
    distance: float | None = field(default=None, compare=False)

    def key(self):
        return (self.weight, self.weight if self.distance is None else self.distance,
                min(self.u, self.v), max(self.u, self.v))


@dataclass
class CondensedNode:
    """One cluster of the condensed tree.

    ``points`` holds ``(point_index, lambda)`` for points that leave this
    cluster directly; points that leave through a child cluster are reached
    via ``children``.
    """

    id: int
    parent: int | None
    lambda_birth: float
    lambda_death: float
    size: int
    children: list[int] = field(default_factory=list)
    points: list[tuple[int, float]] = field(default_factory=list)


@dataclass
class ClusterLabeling:
    labels: np.ndarray
    stabilities: np.ndarray

    @property
    def n_clusters(self) -> int:
        return len(self.stabilities)

    @property
    def noise_count(self) -> int:
        return int(np.sum(self.labels == -1))


def _as_array(points, metric: str) -> np.ndarray:
    if metric == "haversine_km":
        return as_latlon_array(points)
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def distance_matrix(points, metric: str = "haversine_km", earth: EarthModel = DEFAULT_EARTH) -> np.ndarray:
    """Dense, exactly symmetric pairwise distances."""
    arr = _as_array(points, metric)
    if metric == "haversine_km":
        return pairwise_haversine_km(arr, earth)
    if metric != "euclidean":
        raise ValueError(f"unknown metric {metric!r}")
    diff = arr[:, None, :] - arr[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    iu = np.triu_indices(len(arr), 1)
    d[(iu[1], iu[0])] = d[iu]
    np.fill_diagonal(d, 0.0)
    return d


def _core_from_matrix(d: np.ndarray, k: int) -> np.ndarray:
    n = len(d)
    if n <= k:
        raise TooFewPointsError(f"core distance with k={k} needs more than {k} points, got {n}")
    masked = d.copy()
    np.fill_diagonal(masked, np.inf)
    return np.partition(masked, k - 1, axis=1)[:, k - 1]


def core_distances(points, k: int, metric: str = "haversine_km", earth: EarthModel = DEFAULT_EARTH) -> np.ndarray:
    """Distance from each point to its ``k``-th nearest *other* point."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return _core_from_matrix(distance_matrix(points, metric, earth), k)


def _mreach_from_matrix(d: np.ndarray, core: np.ndarray) -> np.ndarray:
    return np.maximum(d, np.maximum(core[:, None], core[None, :]))


def mutual_reachability(points, core: np.ndarray, metric: str = "haversine_km",
                        earth: EarthModel = DEFAULT_EARTH) -> np.ndarray:
    """Matrix ``m`` with ``m[i, j] = max(core[i], core[j], d(i, j))``.

    The diagonal is ``core`` itself.
    """
    core = np.asarray(core, dtype=float)
    return _mreach_from_matrix(distance_matrix(points, metric, earth), core)


def prim_mst(weights: np.ndarray, tiebreak: np.ndarray | None = None) -> list[MstEdge]:
    """Dense Prim from vertex 0.

    Equal weights are ordered by ``tiebreak`` (same shape as ``weights``)
    when given, then by lowest vertex index.
    """
    n = len(weights)
    if n < 2:
        raise TooFewPointsError(f"a spanning tree needs at least 2 points, got {n}")
    if tiebreak is None:
        tiebreak = weights
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    best_tb = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.intp)
    current = 0
    in_tree[0] = True
    edges = []
    for _ in range(n - 1):
        row, tb = weights[current], tiebreak[current]
        improve = (~in_tree) & ((row < best) | ((row == best) & (tb < best_tb)))
        best[improve] = row[improve]
        best_tb[improve] = tb[improve]
        parent[improve] = current
        cand = np.where(in_tree, np.inf, best)
        nxt = int(np.argmin(cand))
        if not np.isfinite(cand[nxt]):
            raise DisconnectedInputError("graph is disconnected")
        ties = np.flatnonzero(cand == cand[nxt])
        if len(ties) > 1:
            nxt = int(ties[np.argmin(best_tb[ties])])
        u, v = int(parent[nxt]), nxt
        edges.append(MstEdge(min(u, v), max(u, v), float(best[nxt]), float(best_tb[nxt])))
        in_tree[nxt] = True
        current = nxt
    return edges


def build_mst(points, params: HdbscanParams) -> list[MstEdge]:
    """Minimum spanning tree of the mutual-reachability graph."""
    d = distance_matrix(points, params.metric, params.earth)
    if len(d) < 2:
        raise TooFewPointsError(f"a spanning tree needs at least 2 points, got {len(d)}")
    core = _core_from_matrix(d, params.k)
    return prim_mst(_mreach_from_matrix(d, core), d)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root


def single_linkage(edges: Sequence[MstEdge], n: int | None = None) -> np.ndarray:
    """Merge sequence of a spanning tree, scipy-linkage style.

    Returns an ``(n - 1, 4)`` array of ``[left, right, distance, size]`` where
    new clusters are numbered ``n, n + 1, ...`` in merge order. Edges are
    merged in ascending ``(weight, raw distance, min endpoint, max endpoint)``
    order.
    """
    if n is None:
        n = 1 + max((max(e.u, e.v) for e in edges), default=0)
    if len(edges) != n - 1:
        raise DisconnectedInputError(f"{len(edges)} edges cannot span {n} points")
    order = sorted(edges, key=MstEdge.key)
    uf = _UnionFind(2 * n - 1)
    size = [1] * n + [0] * (n - 1)
    out = np.zeros((n - 1, 4))
    for i, e in enumerate(order):
        a, b = uf.find(e.u), uf.find(e.v)
        if a == b:
            raise DisconnectedInputError(f"edge ({e.u}, {e.v}) closes a cycle; input is not a spanning tree")
        new = n + i
        uf.parent[a] = new
        uf.parent[b] = new
        size[new] = size[a] + size[b]
        out[i] = (a, b, e.weight, size[new])
    return out


def _to_lambda(dist: float) -> float:
    return 1.0 / dist if dist > 0 else LAMBDA_CAP


def condense_tree(dendrogram: np.ndarray, min_cluster_size: int) -> list[CondensedNode]:
    """Collapse the dendrogram into clusters of at least ``min_cluster_size``.

    Walking down from the root, a split where both sides are large enough
    births two child clusters; otherwise the small side's points fall out of
    the current cluster at that split's lambda and the large side (if any)
    carries on as the same cluster. The root has id ``n`` and
    ``lambda_birth = 0``.
    """
    dendrogram = np.asarray(dendrogram, dtype=float).reshape(-1, 4)
    n = len(dendrogram) + 1
    root_node = CondensedNode(id=n, parent=None, lambda_birth=0.0, lambda_death=0.0, size=n)
    nodes = {n: root_node}
    if n == 1:
        root_node.points.append((0, 0.0))
        return [root_node]

    left = dendrogram[:, 0].astype(np.intp)
    right = dendrogram[:, 1].astype(np.intp)
    dist = dendrogram[:, 2]
    sizes = np.ones(2 * n - 1, dtype=np.intp)
    sizes[n:] = dendrogram[:, 3].astype(np.intp)

    def leaves(node: int) -> list[int]:
        out, stack = [], [node]
        while stack:
            x = stack.pop()
            if x < n:
                out.append(x)
            else:
                stack.append(int(right[x - n]))
                stack.append(int(left[x - n]))
        return sorted(out)

    def fall_out(cluster: CondensedNode, node: int, lam: float):
        for p in leaves(node):
            cluster.points.append((p, lam))

    next_id = n + 1
    # (dendrogram node, condensed cluster it belongs to), breadth first
    queue = [(2 * n - 2, n)]
    head = 0
    while head < len(queue):
        node, cid = queue[head]
        head += 1
        row = node - n
        a, b = int(left[row]), int(right[row])
        lam = _to_lambda(float(dist[row]))
        cluster = nodes[cid]
        cluster.lambda_death = max(cluster.lambda_death, lam)
        big_a = sizes[a] >= min_cluster_size
        big_b = sizes[b] >= min_cluster_size
        if big_a and big_b:
            for child in (a, b):
                nodes[next_id] = CondensedNode(id=next_id, parent=cid, lambda_birth=lam,
                                               lambda_death=lam, size=int(sizes[child]))
                cluster.children.append(next_id)
                queue.append((child, next_id))
                next_id += 1
        elif not big_a and not big_b:
            fall_out(cluster, a, lam)
            fall_out(cluster, b, lam)
        elif big_a:
            fall_out(cluster, b, lam)
            queue.append((a, cid))
        else:
            fall_out(cluster, a, lam)
            queue.append((b, cid))
    return [nodes[k] for k in sorted(nodes)]


def _stability(node: CondensedNode, by_id: dict) -> float:
    s = sum(lam - node.lambda_birth for _, lam in node.points)
    s += sum(by_id[c].size * (by_id[c].lambda_birth - node.lambda_birth) for c in node.children)
    return s


def extract_clusters(condensed: Sequence[CondensedNode]) -> ClusterLabeling:
    """Excess-of-mass cluster selection over a condensed tree.

    Bottom up, a cluster is kept when its own stability is at least the sum
    of its children's selected stabilities; otherwise the children win. The
    root only competes when it has no children.
    """
    by_id = {c.id: c for c in condensed}
    root = min(by_id)
    n = by_id[root].size
    stability = {cid: _stability(c, by_id) for cid, c in by_id.items()}
    selected = {}
    subtree = {}
    for cid in sorted(by_id, reverse=True):
        node = by_id[cid]
        if cid == root and node.children:
            continue
        child_sum = sum(subtree[c] for c in node.children)
        if node.children and child_sum > stability[cid]:
            subtree[cid] = child_sum
            selected[cid] = False
        else:
            subtree[cid] = stability[cid]
            selected[cid] = True
            stack = list(node.children)
            while stack:
                x = stack.pop()
                selected[x] = False
                stack.extend(by_id[x].children)

    chosen = sorted(cid for cid, keep in selected.items() if keep)
    labels = np.full(n, -1, dtype=np.intp)
    for label, cid in enumerate(chosen):
        stack = [cid]
        while stack:
            x = stack.pop()
            for p, _ in by_id[x].points:
                labels[p] = label
            stack.extend(by_id[x].children)
    stabilities = np.array([max(0.0, stability[cid]) for cid in chosen], dtype=float)
    return ClusterLabeling(labels=labels, stabilities=stabilities)


def fit(points, params: HdbscanParams | None = None) -> ClusterLabeling:
    """Cluster ``points``; noise is labelled ``-1``.

    Fewer than ``min_cluster_size`` points are all noise. When there are too
    few points for the requested ``min_samples`` it is lowered to ``n - 1``.
    """
    params = params or HdbscanParams()
    arr = _as_array(points, params.metric)
    n = len(arr)
    if n < params.min_cluster_size or n < 2:
        return ClusterLabeling(labels=np.full(n, -1, dtype=np.intp), stabilities=np.zeros(0))
    d = distance_matrix(arr, params.metric, params.earth)
    core = _core_from_matrix(d, min(params.k, n - 1))
    edges = prim_mst(_mreach_from_matrix(d, core), d)
    dendrogram = single_linkage(edges, n)
    condensed = condense_tree(dendrogram, params.min_cluster_size)
    return extract_clusters(condensed)
