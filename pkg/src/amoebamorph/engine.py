"""Amoeba structuring elements by bounded Dijkstra search on the pixel graph.

Edge weights are quantised to integer multiples of ``1 / WEIGHT_SCALE`` before
any path sums are formed. Integer path lengths are associative, so
``d(i, j) == d(j, i)`` holds exactly and the mutuality of amoebas cannot be
broken by floating-point rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit
from scipy import sparse

from . import _parallel
from .grid import Image

WEIGHT_SCALE = float(2 ** 32)
_INF = np.iinfo(np.int64).max
_SQRT2 = math.sqrt(2.0)

FAMILIES = ("l1", "l2", "lp", "linf")
_FAMILY_CODE = {"l1": 1, "l2": 2, "lp": 3, "linf": 4}

# neighbour offsets (dy, dx); the first four are the 4-neighbourhood
_DY = np.array([0, 1, 0, -1, 1, 1, -1, -1], dtype=np.int64)
_DX = np.array([1, 0, -1, 0, 1, -1, 1, -1], dtype=np.int64)

SETUPS = ("GwA", "TwA", "TuA", "GwE", "TwE", "TuE")


class PixelIndex(NamedTuple):
    x: int
    y: int


@dataclass(frozen=True)
class AmoebaMetricSpec:
    """Amoeba metric: norm family, contrast scale ``beta`` and connectivity."""

    family: str = "l2"
    beta: float = 1.0
    p: float = 2.0
    connectivity: int = 8

    def __post_init__(self):
        fam = self.family.lower()
        if fam not in FAMILIES:
            raise ValueError(f"unknown metric family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if fam == "lp" and not self.p >= 1:
            raise ValueError("p must be >= 1 for the Lp family")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")

    @classmethod
    def parse(cls, text: str, beta: float = 1.0, connectivity: int = 8) -> "AmoebaMetricSpec":
        """Accept ``l1``, ``l2``, ``linf``/``max`` or ``lp:<p>``."""
        t = text.strip().lower()
        if t in ("max", "l_inf", "inf"):
            t = "linf"
        if t.startswith("lp"):
            p = float(t[2:].lstrip(":=") or 2.0)
            return cls("lp", beta, p, connectivity)
        return cls(t, beta, 2.0, connectivity)

    @property
    def code(self) -> int:
        return _FAMILY_CODE[self.family]

    def label(self) -> str:
        return f"lp:{self.p:g}" if self.family == "lp" else self.family

    # nu and friends act on nonnegative arguments
    def nu(self, z):
        z = np.abs(np.asarray(z, dtype=float))
        if self.family == "l1":
            return 1.0 + z
        if self.family == "l2":
            return np.sqrt(1.0 + z * z)
        if self.family == "lp":
            return (1.0 + z ** self.p) ** (1.0 / self.p)
        return np.maximum(1.0, z)

    def nu_prime(self, z):
        z = np.abs(np.asarray(z, dtype=float))
        if self.family == "l1":
            return np.ones_like(z)
        if self.family == "l2":
            return z / np.sqrt(1.0 + z * z)
        if self.family == "lp":
            p = self.p
            return z ** (p - 1.0) * (1.0 + z ** p) ** (1.0 / p - 1.0)
        return np.where(z > 1.0, 1.0, 0.0)

    def nu_inverse(self, y):
        """Inverse of ``nu`` on ``[1, inf)`` (largest preimage for the max family)."""
        y = np.asarray(y, dtype=float)
        if self.family == "l1":
            return y - 1.0
        if self.family == "l2":
            return np.sqrt(np.maximum(y * y - 1.0, 0.0))
        if self.family == "lp":
            return np.maximum(y ** self.p - 1.0, 0.0) ** (1.0 / self.p)
        return y

    def phi(self, s, t):
        """The norm combining spatial step ``s`` and scaled contrast ``t``."""
        s = np.abs(np.asarray(s, dtype=float))
        t = np.abs(np.asarray(t, dtype=float))
        if self.family == "l1":
            return s + t
        if self.family == "l2":
            return np.hypot(s, t)
        if self.family == "lp":
            m = np.maximum(s, t)
            safe = np.where(m > 0, m, 1.0)
            return np.where(m > 0, safe * ((s / safe) ** self.p + (t / safe) ** self.p) ** (1.0 / self.p), 0.0)
        return np.maximum(s, t)


def edge_weight(spec: AmoebaMetricSpec, spatial: float, df: float) -> float:
    """Weight of a graph edge with spatial length ``spatial`` and intensity step ``df``."""
    if not spatial > 0:
        raise ValueError("spatial distance must be positive")
    return float(spec.phi(spatial, spec.beta * abs(df)))


def quantize(w) -> np.ndarray:
    return np.rint(np.asarray(w, dtype=float) * WEIGHT_SCALE).astype(np.int64)


def weight_arrays(img: Image, spec: AmoebaMetricSpec) -> tuple[np.ndarray, ...]:
    """Quantised weights towards E, S, SE and SW neighbours (unused slots are 0)."""
    f = img.data
    h, w = f.shape
    m = img.mesh
    b = spec.beta
    wE = np.zeros((h, w), np.int64)
    wS = np.zeros((h, w), np.int64)
    wSE = np.zeros((h, w), np.int64)
    wSW = np.zeros((h, w), np.int64)
    wE[:, :-1] = quantize(spec.phi(m, b * np.abs(f[:, 1:] - f[:, :-1])))
    wS[:-1, :] = quantize(spec.phi(m, b * np.abs(f[1:, :] - f[:-1, :])))
    if spec.connectivity == 8:
        d = m * _SQRT2
        wSE[:-1, :-1] = quantize(spec.phi(d, b * np.abs(f[1:, 1:] - f[:-1, :-1])))
        wSW[:-1, 1:] = quantize(spec.phi(d, b * np.abs(f[1:, :-1] - f[:-1, 1:])))
    return wE, wS, wSE, wSW


def patch_radius2(rho: float, mesh: float) -> float:
    """Squared Euclidean pruning radius in pixel units (closed ball, tiny slack)."""
    r = rho / mesh
    return r * r * (1.0 + 1e-12)


def rho_quantized(rho: float) -> int:
    return int(quantize(rho))


# --- numba kernels -----------------------------------------------------------

@njit(nogil=True, cache=True, inline="always")
def _less(d1, i1, d2, i2):
    return d1 < d2 or (d1 == d2 and i1 < i2)


@njit(nogil=True, cache=True)
def _heap_push(hd, hi, n, d, i):
    k = n
    hd[k] = d
    hi[k] = i
    while k > 0:
        par = (k - 1) >> 1
        if _less(hd[k], hi[k], hd[par], hi[par]):
            hd[k], hd[par] = hd[par], hd[k]
            hi[k], hi[par] = hi[par], hi[k]
            k = par
        else:
            break
    return n + 1


@njit(nogil=True, cache=True)
def _heap_pop(hd, hi, n):
    d = hd[0]
    i = hi[0]
    n -= 1
    hd[0] = hd[n]
    hi[0] = hi[n]
    k = 0
    while True:
        l = 2 * k + 1
        if l >= n:
            break
        c = l
        r = l + 1
        if r < n and _less(hd[r], hi[r], hd[l], hi[l]):
            c = r
        if _less(hd[c], hi[c], hd[k], hi[k]):
            hd[k], hd[c] = hd[c], hd[k]
            hi[k], hi[c] = hi[c], hi[k]
            k = c
        else:
            break
    return d, i, n


@njit(nogil=True, cache=True, inline="always")
def _nb_weight(wE, wS, wSE, wSW, y, x, dy, dx):
    if dy == 0:
        return wE[y, x] if dx == 1 else wE[y, x - 1]
    if dx == 0:
        return wS[y, x] if dy == 1 else wS[y - 1, x]
    if dy == dx:
        return wSE[y, x] if dy == 1 else wSE[y - 1, x - 1]
    return wSW[y, x] if dy == 1 else wSW[y - 1, x + 1]


@njit(nogil=True, cache=True)
def _dijkstra(wE, wS, wSE, wSW, conn, cy, cx, r2, rho_q, cutoff,
              dist, done, pred, hd, hi, out_idx, out_dist, out_pred):
    """Settle pixels around (cy, cx) in (distance, row-major index) order.

    Writes settled pixels in settling order to ``out_*`` and returns their count.
    """
    h, w = wE.shape
    r = int(np.floor(np.sqrt(r2)))
    y0 = max(cy - r, 0)
    y1 = min(cy + r, h - 1)
    x0 = max(cx - r, 0)
    x1 = min(cx + r, w - 1)
    pw = x1 - x0 + 1
    npatch = (y1 - y0 + 1) * pw
    for l in range(npatch):
        dist[l] = _INF
        done[l] = False
        pred[l] = -1
    src = (cy - y0) * pw + (cx - x0)
    dist[src] = 0
    n = _heap_push(hd, hi, 0, np.int64(0), np.int64(cy * w + cx))
    count = 0
    while n > 0:
        d, g, n = _heap_pop(hd, hi, n)
        y = g // w
        x = g - y * w
        l = (y - y0) * pw + (x - x0)
        if done[l] or d > dist[l]:
            continue
        if cutoff and d > rho_q:
            break
        done[l] = True
        out_idx[count] = g
        out_dist[count] = d
        out_pred[count] = pred[l]
        count += 1
        for k in range(conn):
            dy = _DY[k]
            dx = _DX[k]
            ny = y + dy
            nx = x + dx
            if ny < y0 or ny > y1 or nx < x0 or nx > x1:
                continue
            ey = ny - cy
            ex = nx - cx
            if ey * ey + ex * ex > r2:
                continue
            nl = (ny - y0) * pw + (nx - x0)
            if done[nl]:
                continue
            nd = d + _nb_weight(wE, wS, wSE, wSW, y, x, dy, dx)
            if nd < dist[nl]:
                dist[nl] = nd
                pred[nl] = g
                n = _heap_push(hd, hi, n, nd, np.int64(ny * w + nx))
    return count


@njit(nogil=True, cache=True)
def _dijkstra_many(wE, wS, wSE, wSW, conn, pixels, r2, rho_q, cutoff, maxpatch,
                   counts, out_idx, out_dist, out_pred):
    w = wE.shape[1]
    dist = np.empty(maxpatch, np.int64)
    done = np.empty(maxpatch, np.bool_)
    pred = np.empty(maxpatch, np.int64)
    hd = np.empty(maxpatch * conn + 1, np.int64)
    hi = np.empty(maxpatch * conn + 1, np.int64)
    for t in range(pixels.shape[0]):
        g = pixels[t]
        cy = g // w
        cx = g - cy * w
        counts[t] = _dijkstra(wE, wS, wSE, wSW, conn, cy, cx, r2, rho_q, cutoff,
                              dist, done, pred, hd, hi,
                              out_idx[t], out_dist[t], out_pred[t])


def amoeba_search(img: Image, spec: AmoebaMetricSpec, rho: float, pixels=None,
                  cutoff: bool = True, weights=None, threads: int | None = None):
    """Run the bounded search from every pixel in ``pixels`` (flat indices).

    Returns CSR arrays ``(indptr, members, dist_q, pred)``; within each row the
    members are in settling order, so the reference pixel comes first.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    h, w = img.shape
    if pixels is None:
        pixels = np.arange(h * w, dtype=np.int64)
    pixels = np.ascontiguousarray(pixels, dtype=np.int64)
    if weights is None:
        weights = weight_arrays(img, spec)
    r2 = patch_radius2(rho, img.mesh)
    r = int(math.floor(math.sqrt(r2)))
    maxpatch = (min(2 * r + 1, h)) * (min(2 * r + 1, w))
    rq = rho_quantized(rho)
    conn = spec.connectivity
    chunk = max(1, min(4096, (1 << 21) // maxpatch))

    def work(a, b):
        n = b - a
        counts = np.zeros(n, np.int64)
        oi = np.empty((n, maxpatch), np.int64)
        od = np.empty((n, maxpatch), np.int64)
        op = np.empty((n, maxpatch), np.int64)
        _dijkstra_many(*weights, conn, pixels[a:b], r2, rq, cutoff, maxpatch, counts, oi, od, op)
        mask = np.arange(maxpatch)[None, :] < counts[:, None]
        return counts, oi[mask], od[mask], op[mask]

    parts = _parallel.run_chunks(work, _parallel.chunk_bounds(len(pixels), chunk), threads)
    counts = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, np.int64)
    indptr = np.zeros(len(pixels) + 1, np.int64)
    np.cumsum(counts, out=indptr[1:])
    cat = lambda k: np.concatenate([p[k] for p in parts]) if parts else np.zeros(0, np.int64)
    return indptr, cat(1), cat(2), cat(3)


# --- public types -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Amoeba:
    """One structuring element with its Dijkstra tree.

    ``members`` and ``distances`` are aligned and in settling order; ``parents``
    holds the flat index of each member's tree predecessor (-1 for the root).
    """

    reference: PixelIndex
    members: np.ndarray
    distances: np.ndarray
    parents: np.ndarray
    radius: float
    width: int

    def _pix(self, g) -> PixelIndex:
        return PixelIndex(int(g % self.width), int(g // self.width))

    def __len__(self):
        return len(self.members)

    def __contains__(self, p) -> bool:
        g = p.y * self.width + p.x if isinstance(p, tuple) else int(p)
        return bool(np.any(self.members == g))

    def member_list(self) -> list[tuple[PixelIndex, float]]:
        return [(self._pix(g), float(d)) for g, d in zip(self.members, self.distances)]

    @property
    def predecessors(self) -> dict[PixelIndex, PixelIndex]:
        return {self._pix(g): self._pix(p) for g, p in zip(self.members, self.parents) if p >= 0}

    def to_csv_rows(self) -> list[tuple]:
        rows = []
        for g, d, p in zip(self.members, self.distances, self.parents):
            px = self._pix(g)
            pp = self._pix(p) if p >= 0 else PixelIndex(-1, -1)
            rows.append((px.x, px.y, float(d), pp.x, pp.y))
        return rows


def _flat(img: Image, i) -> int:
    if isinstance(i, tuple):
        x, y = i
        if not (0 <= x < img.width and 0 <= y < img.height):
            raise IndexError(f"pixel {tuple(i)} outside {img.width}x{img.height} image")
        return y * img.width + x
    return int(i)


def compute_amoeba(img: Image, spec: AmoebaMetricSpec, rho: float, i) -> Amoeba:
    """All pixels within amoeba distance ``rho`` of pixel ``i`` (``PixelIndex`` or flat)."""
    g = _flat(img, i)
    indptr, mem, dq, pr = amoeba_search(img, spec, rho, np.array([g]), threads=1)
    return Amoeba(PixelIndex(g % img.width, g // img.width), mem, dq / WEIGHT_SCALE, pr, float(rho), img.width)


@dataclass(frozen=True, eq=False)
class AmoebaField:
    """Amoebas of every pixel of ``image`` stored as CSR rows."""

    image: Image
    spec: AmoebaMetricSpec
    rho: float
    indptr: np.ndarray
    members: np.ndarray
    dist_q: np.ndarray | None = field(default=None, repr=False)
    parents: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.indptr) - 1

    def sizes(self) -> np.ndarray:
        return np.diff(self.indptr)

    def row(self, g: int) -> np.ndarray:
        return self.members[self.indptr[g]:self.indptr[g + 1]]

    def __getitem__(self, i) -> Amoeba:
        if self.dist_q is None:
            raise ValueError("field was computed without Dijkstra trees")
        g = _flat(self.image, i)
        a, b = self.indptr[g], self.indptr[g + 1]
        w = self.image.width
        return Amoeba(PixelIndex(g % w, g // w), self.members[a:b], self.dist_q[a:b] / WEIGHT_SCALE,
                      self.parents[a:b], self.rho, w)

    def membership_matrix(self) -> sparse.csr_matrix:
        """Boolean matrix ``M[i, j] = j in A(i)``."""
        n = len(self)
        data = np.ones(len(self.members), dtype=bool)
        return sparse.csr_matrix((data, self.members, self.indptr), shape=(n, n))

    def mutuality_violations(self) -> int:
        """Number of ordered pairs with ``j in A(i)`` but ``i not in A(j)``."""
        m = self.membership_matrix().astype(np.int8)
        return int((m != m.T).nnz)

    def csr(self, shape=None):
        return self.indptr, self.members


def compute_field(img: Image, spec: AmoebaMetricSpec, rho: float, keep_tree: bool = True,
                  threads: int | None = None) -> AmoebaField:
    """Amoeba of every pixel. ``keep_tree=False`` drops distances and predecessors."""
    indptr, mem, dq, pr = amoeba_search(img, spec, rho, threads=threads)
    if not keep_tree:
        return AmoebaField(img, spec, float(rho), indptr, mem.astype(np.int32))
    return AmoebaField(img, spec, float(rho), indptr, mem, dq, pr)


# --- local graphs --------------------------------------------------------------

@dataclass(frozen=True)
class LocalGraph:
    """Per-pixel graph used for texture descriptors.

    ``vertices`` are flat pixel indices; ``edges`` is an ``(m, 2)`` array of
    positions into ``vertices``; ``weights`` is ``None`` for unweighted setups.
    """

    setup: str
    vertices: np.ndarray
    edges: np.ndarray
    weights: np.ndarray | None
    width: int = 0

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def weighted(self) -> bool:
        return self.weights is not None

    def vertex_pixels(self) -> list[PixelIndex]:
        return [PixelIndex(int(g % self.width), int(g // self.width)) for g in self.vertices]

    def edge_list(self) -> list[tuple]:
        if self.weights is None:
            return [(int(a), int(b), None) for a, b in self.edges]
        return [(int(a), int(b), float(c)) for (a, b), c in zip(self.edges, self.weights)]


def _induced_edges(img_shape, verts: np.ndarray, weights, conn: int):
    """All connectivity edges among ``verts`` with their quantised weights."""
    h, w = img_shape
    pos = {int(g): k for k, g in enumerate(verts)}
    wE, wS, wSE, wSW = weights
    us, vs, ws = [], [], []
    # forward half of the neighbourhood is enough for undirected edges
    fwd = [(0, 1), (1, 0)] + ([(1, 1), (1, -1)] if conn == 8 else [])
    for k, g in enumerate(verts):
        y, x = divmod(int(g), w)
        for dy, dx in fwd:
            ny, nx = y + dy, x + dx
            if not (0 <= ny < h and 0 <= nx < w):
                continue
            j = pos.get(ny * w + nx)
            if j is None:
                continue
            if dy == 0:
                q = wE[y, x]
            elif dx == 0:
                q = wS[y, x]
            elif dx == 1:
                q = wSE[y, x]
            else:
                q = wSW[y, x]
            us.append(k)
            vs.append(j)
            ws.append(q)
    edges = np.array([us, vs], dtype=np.int64).T.reshape(-1, 2)
    return edges, np.array(ws, dtype=np.int64)


def tree_edges(members: np.ndarray, dist_q: np.ndarray, parents: np.ndarray):
    """Tree edges (child position, parent position) and quantised weights."""
    pos = {int(g): k for k, g in enumerate(members)}
    kids = [k for k in range(len(members)) if parents[k] >= 0]
    par = [pos[int(parents[k])] for k in kids]
    edges = np.array([par, kids], dtype=np.int64).T.reshape(-1, 2)
    wq = np.array([dist_q[k] - dist_q[p] for k, p in zip(kids, par)], dtype=np.int64)
    return edges, wq


def extract_local_graph(img: Image, spec: AmoebaMetricSpec, rho: float, i, setup: str,
                        weights=None) -> LocalGraph:
    """Build one of the six local graph setups around pixel ``i``.

    A-setups use the amoeba as vertex set; E-setups use the Euclidean
    ``rho``-disk (border-clipped) and run Dijkstra over the whole disk.
    """
    if setup not in SETUPS:
        raise ValueError(f"unknown setup {setup!r}; expected one of {SETUPS}")
    g = _flat(img, i)
    if weights is None:
        weights = weight_arrays(img, spec)
    cutoff = setup.endswith("A")
    _, mem, dq, pr = amoeba_search(img, spec, rho, np.array([g]), cutoff=cutoff, weights=weights, threads=1)
    if setup.startswith("G"):
        edges, wq = _induced_edges(img.shape, mem, weights, spec.connectivity)
    else:
        edges, wq = tree_edges(mem, dq, pr)
    wts = None if setup.startswith("Tu") else wq / WEIGHT_SCALE
    return LocalGraph(setup, mem, edges, wts, img.width)


def euclidean_disk_offsets(radius: float, mesh: float = 1.0) -> np.ndarray:
    """Integer offsets ``(dy, dx)`` of the closed discrete disk."""
    r2 = patch_radius2(radius, mesh)
    r = int(math.floor(math.sqrt(r2)))
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    keep = dy * dy + dx * dx <= r2
    return np.stack([dy[keep], dx[keep]], axis=1)
