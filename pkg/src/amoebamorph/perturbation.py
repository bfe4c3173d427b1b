"""Amplification factors of single-frequency perturbations of a unit slope.

Two test functions are supported:

* gradient aligned: ``u = x + eps cos(k x)``
* level-line aligned: ``u = x + eps cos(k y)``

One amoeba median step is run on a fine grid and the response is measured as
``<v - u0, u - u0> / <u - u0, u - u0>``.

Both test functions are invariant (up to an additive constant) under shifts
along the unperturbed direction, so the median is only evaluated on one line
of sample pixels across the perturbation.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.optimize import brentq

from . import _parallel
from .engine import AmoebaMetricSpec
from .grid import Image

GRADIENT = "gradient"
LEVELLINE = "levelline"


@dataclass(frozen=True)
class PerturbationCase:
    kind: str
    k: float
    eps: float
    mesh: float = 0.01
    periods: int = 3

    def __post_init__(self):
        if self.kind not in (GRADIENT, LEVELLINE):
            raise ValueError(f"kind must be {GRADIENT!r} or {LEVELLINE!r}")
        if not (self.k > 0 and self.eps >= 0 and self.mesh > 0):
            raise ValueError("k and mesh must be positive, eps nonnegative")
        if self.periods < 3:
            raise ValueError("the domain must span at least 3 wavelengths")
        if self.eps * self.k > 0.25:
            warnings.warn(f"eps*k = {self.eps * self.k:.3g} > 0.25; linearisation is poor", stacklevel=2)

    @property
    def wavelength(self) -> float:
        return 2.0 * math.pi / self.k


@dataclass(frozen=True)
class AmplificationReport:
    kind: str
    k: float
    numeric: float
    analytic: float
    continuum: float
    mesh: float
    rho: float
    sigma: float = 0.0

    def row(self):
        return (self.kind, self.k, self.numeric, self.analytic, self.continuum, self.mesh, self.rho)


def _margin(rho: float, mesh: float) -> int:
    return int(math.ceil(rho / mesh)) + 3


def make_test_case(case: PerturbationCase, rho: float = 1.0) -> tuple[Image, Image]:
    """Cell-centred samples of ``u0 = x`` and the perturbed ``u`` on a strip.

    The strip spans ``case.periods`` wavelengths across the perturbation plus
    a margin of ``rho`` (and 3 cells) on every side.
    """
    h = case.mesh
    n = int(round(case.periods * case.wavelength / h))
    m = _margin(rho, h)
    if case.kind == GRADIENT:
        shape = (2 * m + 1, n + 2 * m)
    else:
        shape = (n + 2 * m, 2 * m + 1)
    y = (np.arange(shape[0]) + 0.5) * h
    x = (np.arange(shape[1]) + 0.5) * h
    X, Y = np.meshgrid(x, y)
    u = X + case.eps * np.cos(case.k * (X if case.kind == GRADIENT else Y))
    return Image(X, h), Image(u, h)


def analysis_window(case: PerturbationCase, shape, rho: float) -> tuple[slice, slice]:
    """Centre line of the strip with the margins removed."""
    m = _margin(rho, case.mesh)
    h, w = shape
    if case.kind == GRADIENT:
        return slice(h // 2, h // 2 + 1), slice(m, w - m)
    return slice(m, h - m), slice(w // 2, w // 2 + 1)


def amplification_numeric(u0: Image, u: Image, v: Image, window=None) -> float:
    """``<v-u0, u-u0> / <u-u0, u-u0>`` over ``window`` (a pair of slices)."""
    win = window if window is not None else (slice(None), slice(None))
    a = (u.data - u0.data)[win].ravel()
    b = (v.data - u0.data)[win].ravel()
    den = float(a @ a)
    if den == 0.0:
        raise ZeroDivisionError("perturbation vanishes on the window")
    return float(b @ a) / den


def amplification_analytic(kind: str, k: float, rho: float = 1.0, sigma: float = 0.0,
                           tau: float | None = None, method: str = "amoeba") -> float:
    """Closed-form predictions.

    ``method='amoeba'`` (level-line case only) gives ``sinc(k rho)``;
    ``method='selfsnakes'`` gives the self-snakes response with time step
    ``tau`` (default ``rho^2/6``).
    """
    if not k > 0:
        raise ValueError("k must be positive")
    if tau is None:
        tau = rho * rho / 6.0
    if method == "selfsnakes":
        if kind == GRADIENT:
            return 1.0 + tau * (k * k / 2.0) * math.exp(-k * k * sigma * sigma / 2.0)
        return 1.0 - tau * k * k / 2.0
    if method != "amoeba":
        raise ValueError(f"unknown method {method!r}")
    if kind == LEVELLINE:
        return math.sin(k * rho) / (k * rho)
    raise ValueError("no closed form for the gradient-aligned amoeba response; see continuum_amplification")


# --- continuum reference ---------------------------------------------------------

def continuum_amplification(kind: str, k: float, eps: float, rho: float = 1.0,
                            samples: int = 64) -> float:
    """Amplification of the exact Euclidean amoeba median, beta = 1.

    The amoebas are computed on the graph surface ``(x, y, u)``. For the
    gradient-aligned case the surface is a developable cylinder that unrolls
    isometrically onto the plane, so each amoeba is an exact disk in the
    unrolled coordinates. For the level-line case the surface metric is
    linearised in ``eps``. In both cases the median is found by 1-D
    root finding on the area fraction.
    """
    if kind == GRADIENT:
        return _continuum_gradient(k, eps, rho, samples)
    if kind == LEVELLINE:
        return _continuum_levelline(k, eps, rho, samples)
    raise ValueError(f"unknown kind {kind!r}")


def _continuum_gradient(k, eps, rho, samples, n=4000):
    span = rho * 2.0 + 4.0 * math.pi / k + 2.0
    xs = np.linspace(-span, span, 400001)
    slope = 1.0 - eps * k * np.sin(k * xs)
    ds = np.sqrt(1.0 + slope * slope)
    arc = cumulative_trapezoid(ds, xs, initial=0.0)
    wt = 1.0 / ds
    num = den = 0.0
    for x0 in np.linspace(0.0, 2.0 * math.pi / k, samples, endpoint=False):
        a0 = np.interp(x0, xs, arc)
        aa = np.linspace(a0 - rho, a0 + rho, n + 1)
        chord = 2.0 * np.sqrt(np.clip(rho * rho - (aa - a0) ** 2, 0.0, None))
        mass = cumulative_trapezoid(np.interp(aa, arc, wt) * chord, aa, initial=0.0)
        xm = np.interp(np.interp(mass[-1] / 2.0, mass, aa), arc, xs)
        p = eps * math.cos(k * x0)
        num += (xm + eps * math.cos(k * xm) - x0) * p
        den += p * p
    return float(num / den)


def _continuum_levelline(k, eps, rho, samples):
    span = rho + 4.0 * math.pi / k + 2.0
    ys = np.linspace(-span, span, 400001)
    dh = -eps * k * np.sin(k * ys)
    arc = cumulative_trapezoid(np.sqrt(1.0 + dh * dh / 2.0), ys, initial=0.0)
    bs = np.linspace(-rho, rho, 200001)
    half = np.sqrt(np.clip(rho * rho - bs * bs, 0.0, None))
    r2 = math.sqrt(2.0)
    num = den = 0.0
    for y0 in np.linspace(0.0, 2.0 * math.pi / k, samples, endpoint=False):
        h0 = eps * math.cos(k * y0)
        b0 = np.interp(y0, ys, arc)
        hh = eps * np.cos(k * np.interp(b0 + bs, arc, ys))

        def excess(m):
            reach = r2 * m - hh / r2 - h0 / r2
            return trapezoid(np.clip(np.minimum(reach, half) + half, 0.0, None), bs) - math.pi * rho * rho / 2.0

        m = brentq(excess, -1.0, 1.0, xtol=1e-14)
        num += m * h0
        den += h0 * h0
    return float(num / den)


# --- fine-grid amoeba median ----------------------------------------------------------

def stencil_offsets(n: int) -> np.ndarray:
    """Neighbour offsets ``(dy, dx)`` for 8, 16 or 32 neighbours."""
    half = [(0, 1), (1, 0), (1, 1), (1, -1)]
    if n >= 16:
        half += [(1, 2), (2, 1), (1, -2), (2, -1)]
    if n >= 32:
        half += [(1, 3), (3, 1), (1, -3), (3, -1), (2, 3), (3, 2), (2, -3), (3, -2)]
    if n not in (8, 16, 32):
        raise ValueError("stencil must have 8, 16 or 32 neighbours")
    return np.array(half + [(-a, -b) for a, b in half], dtype=np.int64)


@njit(nogil=True, cache=True)
def _phi(code, p, s, t):
    if code == 1:
        return s + t
    if code == 2:
        return math.hypot(s, t)
    if code == 3:
        m = max(s, t)
        if m == 0.0:
            return 0.0
        return m * ((s / m) ** p + (t / m) ** p) ** (1.0 / p)
    return max(s, t)


@njit(nogil=True, cache=True)
def _stencil_amoeba(u, h, code, p, beta, off, cy, cx, R, rho, dist, done, out):
    H, W = u.shape
    r = int(R)
    y0 = max(cy - r, 0)
    y1 = min(cy + r, H - 1)
    x0 = max(cx - r, 0)
    x1 = min(cx + r, W - 1)
    pw = x1 - x0 + 1
    for l in range((y1 - y0 + 1) * pw):
        dist[l] = np.inf
        done[l] = False
    dist[(cy - y0) * pw + cx - x0] = 0.0
    hp = [(0.0, cy * W + cx)]
    cnt = 0
    while len(hp) > 0:
        d, g = heapq.heappop(hp)
        y = g // W
        x = g - y * W
        l = (y - y0) * pw + x - x0
        if done[l] or d > dist[l]:
            continue
        if d > rho:
            break
        done[l] = True
        out[cnt] = g
        cnt += 1
        for k in range(off.shape[0]):
            ny = y + off[k, 0]
            nx = x + off[k, 1]
            if ny < y0 or ny > y1 or nx < x0 or nx > x1:
                continue
            if (ny - cy) ** 2 + (nx - cx) ** 2 > R * R:
                continue
            nl = (ny - y0) * pw + nx - x0
            if done[nl]:
                continue
            s = h * math.sqrt(off[k, 0] ** 2 + off[k, 1] ** 2)
            nd = d + _phi(code, p, s, beta * abs(u[ny, nx] - u[y, x]))
            if nd < dist[nl]:
                dist[nl] = nd
                heapq.heappush(hp, (nd, ny * W + nx))
    return cnt


@njit(nogil=True, cache=True)
def interpolated_median(values, halfwidths):
    """Median of a mixture of uniform distributions ``[v - w, v + w]``.

    Each pixel stands for the spread of values over its cell; this removes the
    snapping of an ordinary sample median to the discrete value set.
    """
    n = values.shape[0]
    lo = np.min(values - halfwidths)
    hi = np.max(values + halfwidths)
    for _ in range(80):
        m = 0.5 * (lo + hi)
        s = 0.0
        for i in range(n):
            w = halfwidths[i]
            if w <= 0.0:
                s += 1.0 if values[i] <= m else 0.0
                continue
            t = (m - values[i] + w) / (2.0 * w)
            s += 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
        if s < 0.5 * n:
            lo = m
        else:
            hi = m
    return 0.5 * (lo + hi)


@njit(nogil=True, cache=True)
def _median_line(u, halfw, h, code, p, beta, off, ys, xs, R, rho, out_v):
    mp = (2 * int(R) + 1) ** 2
    dist = np.empty(mp)
    done = np.empty(mp, np.bool_)
    mem = np.empty(mp, np.int64)
    W = u.shape[1]
    for t in range(ys.shape[0]):
        c = _stencil_amoeba(u, h, code, p, beta, off, ys[t], xs[t], R, rho, dist, done, mem)
        vals = np.empty(c)
        hw = np.empty(c)
        for i in range(c):
            g = mem[i]
            vals[i] = u[g // W, g % W]
            hw[i] = halfw[g // W, g % W]
        out_v[t] = interpolated_median(vals, hw)


def fine_grid_median(u: Image, rho: float, pixels: np.ndarray, metric: AmoebaMetricSpec,
                     stencil: int = 32, threads: int | None = None) -> np.ndarray:
    """Amoeba median of ``u`` at the ``(row, col)`` pixels, self-guided."""
    h = u.mesh
    gy, gx = np.gradient(u.data, h)
    halfw = 0.5 * h * np.hypot(gx, gy)
    off = stencil_offsets(stencil)
    R = rho / h * (1.0 + 1e-12)
    ys = np.ascontiguousarray(pixels[:, 0], dtype=np.int64)
    xs = np.ascontiguousarray(pixels[:, 1], dtype=np.int64)
    out = np.empty(len(ys))

    def work(a, b):
        _median_line(u.data, halfw, h, metric.code, metric.p, metric.beta, off, ys[a:b], xs[a:b],
                     R, rho, out[a:b])

    _parallel.run_chunks(work, _parallel.chunk_bounds(len(ys), 16), threads)
    return out


def run_case(case: PerturbationCase, rho: float = 1.0, metric: AmoebaMetricSpec | None = None,
             stencil: int = 32, max_samples: int = 512, threads: int | None = None) -> AmplificationReport:
    """One amoeba median step on the test function and its measured amplification."""
    if metric is None:
        metric = AmoebaMetricSpec("l2", 1.0)
    if case.mesh > rho / 20:
        warnings.warn("mesh coarser than rho/20; results are not quantitative", stacklevel=2)
    u0, u = make_test_case(case, rho)
    win = analysis_window(case, u.shape, rho)
    rows = np.arange(u.shape[0])[win[0]]
    cols = np.arange(u.shape[1])[win[1]]
    line = np.array([(r, c) for r in rows for c in cols], dtype=np.int64)
    stride = max(1, -(-len(line) // max_samples))
    line = line[::stride]
    v_line = fine_grid_median(u, rho, line, metric, stencil, threads)
    idx = (line[:, 0], line[:, 1])
    a = u.data[idx] - u0.data[idx]
    b = v_line - u0.data[idx]
    den = float(a @ a)
    if den == 0.0:
        raise ZeroDivisionError("perturbation vanishes on the window")
    lam = float(b @ a) / den
    if case.kind == LEVELLINE:
        analytic = amplification_analytic(LEVELLINE, case.k, rho)
    else:
        analytic = float("nan")
    cont = continuum_amplification(case.kind, case.k, max(case.eps, 1e-12), rho) if metric.family == "l2" \
        and metric.beta == 1.0 else float("nan")
    return AmplificationReport(case.kind, case.k, lam, analytic, cont, case.mesh, rho)
