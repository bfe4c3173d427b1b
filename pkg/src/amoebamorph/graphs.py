"""Distance-based graph indices on small local graphs."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

from .engine import LocalGraph

INDICES = ("wiener", "harary", "meaninfo", "totalinfo", "dehmer_fv", "dehmer_fp")


class DisconnectedGraphError(ValueError):
    pass


@dataclass(frozen=True)
class DistanceMultiset:
    """Distances of all unordered vertex pairs (row-major upper triangle)."""

    values: np.ndarray
    weighted: bool

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class DehmerParams:
    M: float = 1.0
    q: float = 0.5
    functional: str = "fv"

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("M must be positive")
        if not 0.0 < self.q < 1.0:
            raise ValueError("q must lie in (0, 1)")
        if self.functional not in ("fv", "fp"):
            raise ValueError("functional must be 'fv' or 'fp'")


def distance_matrix(g: LocalGraph) -> np.ndarray:
    """Dense all-pairs shortest-path matrix; hop counts for unweighted graphs."""
    n = g.n
    if n == 0:
        raise ValueError("empty graph")
    e = np.asarray(g.edges, dtype=np.int64).reshape(-1, 2)
    w = np.ones(len(e)) if g.weights is None else np.asarray(g.weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("edge weights must be positive")
    adj = coo_matrix((w, (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
    d = shortest_path(adj, method="D", directed=False)
    if not np.all(np.isfinite(d)):
        raise DisconnectedGraphError("graph is not connected")
    return d


def _as_matrix(g) -> tuple[np.ndarray, bool]:
    if isinstance(g, LocalGraph):
        return distance_matrix(g), g.weighted
    d = np.asarray(g, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("expected a LocalGraph or a square distance matrix")
    return d, True


def all_pairs_distances(g: LocalGraph) -> DistanceMultiset:
    d = distance_matrix(g)
    iu = np.triu_indices(g.n, 1)
    return DistanceMultiset(d[iu], g.weighted)


def wiener(g) -> float:
    d, _ = _as_matrix(g)
    return float(_index(d, 0, 1.0, 0.5))


def harary(g) -> float:
    d, _ = _as_matrix(g)
    return float(_index(d, 1, 1.0, 0.5))


def mean_info_distances(g) -> float:
    """Entropy (bits) of the distribution of hop distances over vertex pairs."""
    if isinstance(g, LocalGraph) and g.weighted:
        raise ValueError("mean information on distances needs an unweighted graph")
    d, _ = _as_matrix(g)
    if np.any(d != np.round(d)):
        raise ValueError("mean information on distances needs integer (hop) distances")
    return float(_index(d, 2, 1.0, 0.5))


def total_info_distances(g) -> float:
    d, _ = _as_matrix(g)
    return float(_index(d, 3, 1.0, 0.5))


def dehmer_entropy(g, params: DehmerParams = DehmerParams()) -> float:
    d, _ = _as_matrix(g)
    code = 4 if params.functional == "fv" else 5
    return float(_index(d, code, params.M, params.q))


def index_value(name: str, g, params: DehmerParams | None = None) -> float:
    if name == "wiener":
        return wiener(g)
    if name == "harary":
        return harary(g)
    if name == "meaninfo":
        return mean_info_distances(g)
    if name == "totalinfo":
        return total_info_distances(g)
    if name in ("dehmer_fv", "dehmer_fp"):
        p = params or DehmerParams()
        return dehmer_entropy(g, DehmerParams(p.M, p.q, name[-2:]))
    raise ValueError(f"unknown index {name!r}")


# --- numba kernels shared with the descriptor maps ------------------------------

@njit(nogil=True, cache=True)
def _index(d, code, M, q):
    n = d.shape[0]
    if code <= 3:
        W = 0.0
        acc = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                x = d[i, j]
                W += x
                if code == 1:
                    acc += 1.0 / x
                elif code == 3 and x > 0.0:
                    acc += x * math.log2(x)
        if code == 0:
            return W
        if code == 1:
            return acc
        if code == 3:
            return (W * math.log2(W) if W > 0.0 else 0.0) - acc
        # mean information: histogram of integer distances
        if n < 2:
            return 0.0
        maxd = 0
        for i in range(n):
            for j in range(i + 1, n):
                maxd = max(maxd, int(d[i, j]))
        cnt = np.zeros(maxd + 1)
        for i in range(n):
            for j in range(i + 1, n):
                cnt[int(d[i, j])] += 1.0
        C = n * (n - 1) / 2.0
        h = 0.0
        for c in cnt:
            if c > 0.0:
                p = c / C
                h -= p * math.log2(p)
        return h
    ex = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(n):
            t = q ** d[i, j]
            s += t if code == 4 else t * d[i, j]
        ex[i] = M * s
    mx = np.max(ex)
    z = 0.0
    for i in range(n):
        ex[i] = math.exp(ex[i] - mx)
        z += ex[i]
    h = 0.0
    for i in range(n):
        p = ex[i] / z
        if p > 0.0:
            h -= p * math.log2(p)
    return h


@njit(nogil=True, cache=True)
def _apsp(n, eu, ev, ew):
    """All-pairs shortest paths by repeated heap Dijkstra on an edge list."""
    deg = np.zeros(n + 1, np.int64)
    for k in range(eu.shape[0]):
        deg[eu[k] + 1] += 1
        deg[ev[k] + 1] += 1
    for i in range(n):
        deg[i + 1] += deg[i]
    nbr = np.empty(deg[n], np.int64)
    wt = np.empty(deg[n])
    fill = deg[:n].copy()
    for k in range(eu.shape[0]):
        a = eu[k]
        b = ev[k]
        nbr[fill[a]] = b
        wt[fill[a]] = ew[k]
        fill[a] += 1
        nbr[fill[b]] = a
        wt[fill[b]] = ew[k]
        fill[b] += 1
    d = np.full((n, n), np.inf)
    for s in range(n):
        row = d[s]
        row[s] = 0.0
        hp = [(0.0, s)]
        while len(hp) > 0:
            du, u = heapq.heappop(hp)
            if du > row[u]:
                continue
            for t in range(deg[u], deg[u + 1]):
                v = nbr[t]
                nd = du + wt[t]
                if nd < row[v]:
                    row[v] = nd
                    heapq.heappush(hp, (nd, v))
    return d


@njit(nogil=True, cache=True)
def _tree_apsp(n, eu, ev, ew):
    """All-pairs distances on a tree by one traversal per source."""
    deg = np.zeros(n + 1, np.int64)
    for k in range(eu.shape[0]):
        deg[eu[k] + 1] += 1
        deg[ev[k] + 1] += 1
    for i in range(n):
        deg[i + 1] += deg[i]
    nbr = np.empty(deg[n], np.int64)
    wt = np.empty(deg[n])
    fill = deg[:n].copy()
    for k in range(eu.shape[0]):
        a = eu[k]
        b = ev[k]
        nbr[fill[a]] = b
        wt[fill[a]] = ew[k]
        fill[a] += 1
        nbr[fill[b]] = a
        wt[fill[b]] = ew[k]
        fill[b] += 1
    d = np.full((n, n), np.inf)
    stack = np.empty(n, np.int64)
    for s in range(n):
        row = d[s]
        row[s] = 0.0
        top = 1
        stack[0] = s
        while top > 0:
            top -= 1
            u = stack[top]
            for t in range(deg[u], deg[u + 1]):
                v = nbr[t]
                if row[v] == np.inf:
                    row[v] = row[u] + wt[t]
                    stack[top] = v
                    top += 1
    return d
