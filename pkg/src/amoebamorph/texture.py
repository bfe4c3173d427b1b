"""Graph-index texture descriptors, region discrimination and texture segmentation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from . import _parallel
from .contours import Contour, extract_zero_level
from .engine import (SETUPS, WEIGHT_SCALE, AmoebaMetricSpec, _dijkstra, patch_radius2, rho_quantized,
                     weight_arrays)
from .graphs import INDICES, DehmerParams, _apsp, _index, _tree_apsp
from .grid import Image, gaussian_smooth, normalize_range
from .pde import EdgeStoppingFn, SchemeParams, channel_edge_map, gac_step

_SCALE = WEIGHT_SCALE
CERTAIN = "CertainlyDifferent"
PROBABLE = "ProbablyDifferent"
INDISTINCT = "Indistinct"


@dataclass(frozen=True)
class DescriptorSpec:
    setup: str = "TwA"
    index: str = "harary"
    metric: AmoebaMetricSpec = field(default_factory=lambda: AmoebaMetricSpec("l2", 0.1))
    rho: float = 5.0
    dehmer: DehmerParams = field(default_factory=DehmerParams)

    def __post_init__(self):
        if self.setup not in SETUPS:
            raise ValueError(f"unknown setup {self.setup!r}")
        if self.index not in INDICES:
            raise ValueError(f"unknown index {self.index!r}")
        if self.index == "meaninfo" and not self.setup.startswith("Tu"):
            raise ValueError("mean information on distances requires an unweighted tree setup (TuA/TuE)")
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    @property
    def label(self) -> str:
        return f"{self.index}@{self.setup}"

    @property
    def index_code(self) -> int:
        return INDICES.index(self.index)


@njit(nogil=True, cache=True)
def _descriptor_kernel(wE, wS, wSE, wSW, conn, pixels, r2, rho_q, cutoff, gkind, code, M, q,
                       maxpatch, out):
    h, w = wE.shape
    r = int(np.floor(np.sqrt(r2)))
    side = 2 * r + 1
    dist = np.empty(maxpatch, np.int64)
    done = np.empty(maxpatch, np.bool_)
    pred = np.empty(maxpatch, np.int64)
    hd = np.empty(maxpatch * conn + 1, np.int64)
    hi = np.empty(maxpatch * conn + 1, np.int64)
    oi = np.empty(maxpatch, np.int64)
    od = np.empty(maxpatch, np.int64)
    op = np.empty(maxpatch, np.int64)
    pos = np.full(side * side, -1, np.int64)
    eu = np.empty(maxpatch * 4, np.int64)
    ev = np.empty(maxpatch * 4, np.int64)
    ew = np.empty(maxpatch * 4)
    for t in range(pixels.shape[0]):
        g = pixels[t]
        cy = g // w
        cx = g - cy * w
        n = _dijkstra(wE, wS, wSE, wSW, conn, cy, cx, r2, rho_q, cutoff,
                      dist, done, pred, hd, hi, oi, od, op)
        for k in range(n):
            y = oi[k] // w
            x = oi[k] - y * w
            pos[(y - cy + r) * side + (x - cx + r)] = k
        m = 0
        if gkind == 0:
            for k in range(n):
                y = oi[k] // w
                x = oi[k] - y * w
                for d in range(4 if conn == 8 else 2):
                    if d == 0:
                        ny, nx, wq = y, x + 1, wE[y, x]
                    elif d == 1:
                        ny, nx, wq = y + 1, x, wS[y, x]
                    elif d == 2:
                        ny, nx, wq = y + 1, x + 1, wSE[y, x]
                    else:
                        ny, nx, wq = y + 1, x - 1, wSW[y, x]
                    if ny >= h or nx < 0 or nx >= w:
                        continue
                    ly = ny - cy + r
                    lx = nx - cx + r
                    if ly < 0 or ly >= side or lx < 0 or lx >= side:
                        continue
                    j = pos[ly * side + lx]
                    if j < 0:
                        continue
                    eu[m] = k
                    ev[m] = j
                    ew[m] = wq / _SCALE
                    m += 1
        else:
            for k in range(1, n):
                p = op[k]
                py = p // w
                px = p - py * w
                j = pos[(py - cy + r) * side + (px - cx + r)]
                eu[m] = j
                ev[m] = k
                ew[m] = (od[k] - od[j]) / _SCALE if gkind == 1 else 1.0
                m += 1
        for k in range(n):
            y = oi[k] // w
            x = oi[k] - y * w
            pos[(y - cy + r) * side + (x - cx + r)] = -1
        if gkind == 0:
            D = _apsp(n, eu[:m], ev[:m], ew[:m])
        else:
            D = _tree_apsp(n, eu[:m], ev[:m], ew[:m])
        out[t] = _index(D, code, M, q)


def descriptor_values(img: Image, spec: DescriptorSpec, pixels: np.ndarray | None = None,
                      threads: int | None = None) -> np.ndarray:
    """Raw index values at the flat ``pixels`` (all pixels by default)."""
    h, w = img.shape
    weights = weight_arrays(img, spec.metric)
    r2 = patch_radius2(spec.rho, img.mesh)
    r = int(math.floor(math.sqrt(r2)))
    maxpatch = min(2 * r + 1, h) * min(2 * r + 1, w)
    todo = np.arange(h * w, dtype=np.int64) if pixels is None else np.asarray(pixels, np.int64)
    gkind = 0 if spec.setup.startswith("G") else (1 if spec.setup.startswith("Tw") else 2)
    vals = np.empty(len(todo))
    cutoff = spec.setup.endswith("A")
    rq = rho_quantized(spec.rho)

    def work(a, b):
        _descriptor_kernel(*weights, spec.metric.connectivity, todo[a:b], r2, rq, cutoff, gkind,
                           spec.index_code, spec.dehmer.M, spec.dehmer.q, maxpatch, vals[a:b])

    _parallel.run_chunks(work, _parallel.chunk_bounds(len(todo), 1024), threads)
    return vals


def descriptor_map(img: Image, spec: DescriptorSpec, threads: int | None = None) -> Image:
    """Raw (unequalised) per-pixel index values."""
    return img.with_data(descriptor_values(img, spec, threads=threads).reshape(img.shape))


# --- discrimination ---------------------------------------------------------------

def region_discrepancy(values: Image | np.ndarray, region_a, region_b) -> float:
    """``|mean_A - mean_B| / std(A u B)`` with the pooled population deviation."""
    d = values.data if isinstance(values, Image) else np.asarray(values)
    a = d[np.asarray(region_a, bool)] if np.shape(region_a) == d.shape else np.asarray(region_a, float)
    b = d[np.asarray(region_b, bool)] if np.shape(region_b) == d.shape else np.asarray(region_b, float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both regions must be nonempty")
    return _discrepancy(a.ravel(), b.ravel())


def _discrepancy(a: np.ndarray, b: np.ndarray) -> float:
    diff = abs(float(a.mean()) - float(b.mean()))
    sd = float(np.concatenate([a, b]).std())
    if sd == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / sd


def calibrate_thresholds(intra: Sequence[float]) -> tuple[float, float]:
    """``T1 = 2 max(intra)`` and ``T2`` = third-largest intra value."""
    v = np.asarray(intra, dtype=float)
    if v.size < 3:
        raise ValueError("need at least three intra-texture values")
    if np.any(v < 0):
        raise ValueError("intra-texture discrepancies are nonnegative")
    s = np.sort(v)[::-1]
    t1 = 2.0 * float(s[0])
    return t1, min(float(s[2]), t1)


def verdict(u: float, t1: float, t2: float) -> str:
    if u >= t1:
        return CERTAIN
    if u >= t2:
        return PROBABLE
    return INDISTINCT


def _interior(arr: np.ndarray, margin: int) -> np.ndarray:
    h, w = arr.shape
    if 2 * margin >= min(h, w):
        return arr
    return arr[margin:h - margin, margin:w - margin]


@dataclass(frozen=True)
class DiscrepancyRow:
    descriptor: str
    pair: str
    u: float
    verdict: str


@dataclass(frozen=True)
class DiscrepancyReport:
    rows: list
    thresholds: dict
    intra: dict

    def csv_rows(self):
        return [(r.descriptor, r.pair, r.u, r.verdict) for r in self.rows]


def discrimination_report(patches: Sequence[tuple[str, Image]], specs: Sequence[DescriptorSpec],
                          threads: int | None = None) -> DiscrepancyReport:
    """Inter-texture discrepancies and verdicts for every descriptor and texture pair.

    Thresholds are calibrated per descriptor from left/right half comparisons
    within each texture. Only pixels at least ``rho`` from the patch border
    are used.
    """
    if len(patches) < 2:
        raise ValueError("need at least two textures")
    rows, thresholds, intra_all = [], {}, {}
    for spec in specs:
        margin = int(math.ceil(spec.rho))
        samples, intra = [], []
        for _, patch in patches:
            m = _interior(descriptor_map(patch, spec, threads=threads).data, margin)
            samples.append(m.ravel())
            half = m.shape[1] // 2
            intra.append(_discrepancy(m[:, :half].ravel(), m[:, half:].ravel()))
        if len(intra) >= 3:
            t1, t2 = calibrate_thresholds(intra)
        else:
            t1, t2 = 2.0 * max(intra), min(intra)
        thresholds[spec.label] = (t1, t2)
        intra_all[spec.label] = intra
        for i in range(len(patches)):
            for j in range(i + 1, len(patches)):
                u = _discrepancy(samples[i], samples[j])
                rows.append(DiscrepancyRow(spec.label, f"{patches[i][0]}|{patches[j][0]}", u, verdict(u, t1, t2)))
    return DiscrepancyReport(rows, thresholds, intra_all)


# --- synthetic corpus -----------------------------------------------------------------

def synthetic_texture(name: str, size: int = 64, seed: int = 0) -> Image:
    """Deterministic texture patch with values in [0, 255]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    kind, _, arg = name.partition(":")
    period = float(arg) if arg else 8.0
    if kind == "vstripes":
        d = 127.5 + 100.0 * np.sign(np.sin(2 * np.pi * xx / period) + 1e-9)
    elif kind == "hstripes":
        d = 127.5 + 100.0 * np.sign(np.sin(2 * np.pi * yy / period) + 1e-9)
    elif kind == "dstripes":
        d = 127.5 + 100.0 * np.sign(np.sin(2 * np.pi * (xx + yy) / (period * math.sqrt(2))) + 1e-9)
    elif kind == "checker":
        d = np.where((np.floor(xx / period) + np.floor(yy / period)) % 2 == 0, 40.0, 215.0)
    elif kind == "noise":
        d = rng.uniform(0.0, 255.0, (size, size))
    elif kind == "blobs":
        raw = rng.normal(size=(size, size))
        sm = gaussian_smooth(Image(raw), period / 4.0).data
        d = normalize_range(Image(sm)).data
    elif kind == "rings":
        r = np.hypot(xx - size / 2, yy - size / 2)
        d = 127.5 + 100.0 * np.sin(2 * np.pi * r / period)
    else:
        raise ValueError(f"unknown synthetic texture {name!r}")
    return Image(d)


SYNTHETIC_CORPUS = ("vstripes:4", "vstripes:16", "hstripes:4", "hstripes:16", "dstripes:8",
                    "checker:4", "noise", "blobs:8", "rings:10")


def synthetic_corpus(size: int = 64, seed: int = 0) -> list[tuple[str, Image]]:
    return [(n, synthetic_texture(n, size, seed + i)) for i, n in enumerate(SYNTHETIC_CORPUS)]


def striped_ring_image(size: int = 128, r_in: float = 20.0, r_out: float = 52.0, period: float = 4.0,
                       seed: int = 0) -> tuple[Image, np.ndarray]:
    """Vertically striped annulus on uniform noise, with its ground-truth mask."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    c = (size - 1) / 2.0
    r = np.hypot(xx - c, yy - c)
    ring = (r >= r_in) & (r <= r_out)
    stripes = 127.5 + 100.0 * np.sign(np.sin(2 * np.pi * xx / period) + 1e-9)
    d = np.where(ring, stripes, rng.uniform(0.0, 255.0, (size, size)))
    return Image(d), ring


# --- segmentation ---------------------------------------------------------------------

@dataclass(frozen=True)
class SegmentationResult:
    u: Image
    contour: Contour
    iterations: int
    converged: bool
    channels: list


def descriptor_channels(img: Image, channels: Sequence[tuple[DescriptorSpec, float]],
                        threads: int | None = None) -> list[Image]:
    """Descriptor maps min-max normalised to [0, 255]."""
    return [normalize_range(descriptor_map(img, s, threads=threads)) for s, _ in channels]


def texture_segment(img: Image, channels: Sequence[tuple[DescriptorSpec, float]], params: SchemeParams,
                    u0: Image, fn: EdgeStoppingFn | None = None, max_iter: int = 3000,
                    steady: int = 50, maps: Sequence[Image] | None = None,
                    threads: int | None = None) -> SegmentationResult:
    """Multi-channel geodesic active contour on descriptor maps.

    Each map is normalised to [0, 255] and smoothed with ``params.sigma``
    inside the edge-stopping evaluation. Iteration stops when the sign pattern
    of ``u`` has been unchanged for ``steady`` consecutive steps.
    """
    weights = [w for _, w in channels]
    if any(w < 0 for w in weights) or sum(weights) <= 0:
        raise ValueError("channel weights must be nonnegative with positive sum")
    if u0.shape != img.shape:
        raise ValueError("initial level set and image differ in size")
    if fn is None:
        fn = EdgeStoppingFn("g2", 1.0)
    if maps is None:
        maps = descriptor_channels(img, channels, threads)
    g = channel_edge_map(list(maps), weights, fn, params.sigma)
    u = u0
    sign = u.data < 0
    still = 0
    it = 0
    for it in range(1, max_iter + 1):
        u = gac_step(u, maps, weights, fn, params, g=g)
        s = u.data < 0
        still = still + 1 if np.array_equal(s, sign) else 0
        sign = s
        if still >= steady:
            break
    return SegmentationResult(u, extract_zero_level(u), it, still >= steady, list(maps))
