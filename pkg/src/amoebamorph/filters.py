"""Rank-order filters over amoeba and fixed-disk structuring elements."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _parallel
from .engine import AmoebaField, AmoebaMetricSpec, compute_field, euclidean_disk_offsets
from .grid import Image

_KINDS = ("median", "quantile", "offset", "qbias", "rbias")


@dataclass(frozen=True)
class RankRule:
    """Which order statistic to pick.

    ``kind`` is one of ``median``, ``quantile`` (``param`` = alpha),
    ``offset`` (``param`` = integer b), ``qbias`` (``param`` = q) or
    ``rbias`` (``param`` = r, quadratic in the sample count).
    """

    kind: str = "median"
    param: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown rank rule {self.kind!r}")
        if self.kind == "quantile" and not 0.0 <= self.param <= 1.0:
            raise ValueError("quantile alpha must lie in [0, 1]")
        if self.kind == "offset" and self.param != int(self.param):
            raise ValueError("offset must be an integer")

    @classmethod
    def median(cls):
        return cls("median")

    @classmethod
    def quantile(cls, alpha: float):
        return cls("quantile", float(alpha))

    @classmethod
    def fixed_offset(cls, b: int):
        return cls("offset", float(b))

    @classmethod
    def quantile_bias(cls, q: float):
        return cls("qbias", float(q))

    @classmethod
    def quadratic_bias(cls, r: float):
        return cls("rbias", float(r))

    @classmethod
    def parse(cls, text: str) -> "RankRule":
        """``median``, ``dilate``, ``erode``, ``quantile:0.3``, ``offset:5``, ``qbias:0.1``, ``rbias:0.001``."""
        name, _, arg = text.strip().lower().partition(":")
        if name == "median":
            return cls.median()
        if name in ("dilate", "max"):
            return cls.quantile(1.0)
        if name in ("erode", "min"):
            return cls.quantile(0.0)
        if name not in _KINDS or not arg:
            raise ValueError(f"cannot parse rank rule {text!r}")
        val = float(arg)
        if name == "offset":
            if val != int(val):
                raise ValueError("offset must be an integer")
        return cls(name, val)

    @property
    def code(self) -> int:
        return _KINDS.index(self.kind)


@njit(nogil=True, cache=True)
def _round_away(x):
    return math.copysign(math.floor(abs(x) + 0.5), x)


@njit(nogil=True, cache=True)
def _rank_index(p, code, param):
    """1-based rank for a sample of size p."""
    mid = (p + 1) // 2
    if code == 0:
        k = mid
    elif code == 1:
        k = int(_round_away(param * p))
    elif code == 2:
        k = mid + int(param)
    elif code == 3:
        k = mid + int(_round_away(param * p))
    else:
        k = mid + int(_round_away(param * p * p))
    return min(max(k, 1), p)


def rank_index(p: int, rule: RankRule) -> int:
    if p < 1:
        raise ValueError("need at least one sample")
    return int(_rank_index(p, rule.code, rule.param))


def rank_select(values, rule: RankRule) -> float:
    """Order statistic of ``values`` chosen by ``rule``."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("rank_select needs a nonempty sample")
    return float(v[rank_index(v.size, rule) - 1])


@njit(nogil=True, cache=True)
def _rank_rows(vals, indptr, members, code, param, out):
    buf = np.empty(max(1, np.max(np.diff(indptr))) if indptr.shape[0] > 1 else 1)
    for i in range(indptr.shape[0] - 1):
        a = indptr[i]
        p = indptr[i + 1] - a
        for t in range(p):
            buf[t] = vals[members[a + t]]
        s = np.sort(buf[:p])
        out[i] = s[_rank_index(p, code, param) - 1]


def rank_rows(values: np.ndarray, indptr: np.ndarray, members: np.ndarray, rule: RankRule,
              threads: int | None = None) -> np.ndarray:
    """Apply ``rule`` to each CSR row of ``members`` indexing into ``values``."""
    n = len(indptr) - 1
    out = np.empty(n)
    vals = np.ascontiguousarray(values, dtype=np.float64)

    def work(a, b):
        ip = indptr[a:b + 1]
        _rank_rows(vals, ip - ip[0], members[ip[0]:ip[-1]], rule.code, rule.param, out[a:b])

    _parallel.run_chunks(work, _parallel.chunk_bounds(n, 8192), threads)
    return out


# --- structuring fields ---------------------------------------------------------

@dataclass(frozen=True)
class FixedDisk:
    """Non-adaptive discrete Euclidean disk, clipped at the border."""

    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disk radius must be positive")


@dataclass(frozen=True)
class SelfGenerated:
    """Amoebas recomputed from the current iterate before every step."""

    spec: AmoebaMetricSpec
    rho: float


def disk_csr(shape: tuple[int, int], radius: float, mesh: float = 1.0):
    """CSR rows of the clipped discrete disk around every pixel."""
    h, w = shape
    off = euclidean_disk_offsets(radius, mesh)
    yy, xx = np.divmod(np.arange(h * w), w)
    ny = yy[:, None] + off[None, :, 0]
    nx = xx[:, None] + off[None, :, 1]
    ok = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
    members = (ny * w + nx)[ok]
    indptr = np.zeros(h * w + 1, np.int64)
    np.cumsum(ok.sum(axis=1), out=indptr[1:])
    return indptr, members


def _rows_for(img: Image, field):
    if isinstance(field, AmoebaField):
        if field.image.shape != img.shape:
            raise ValueError("structuring field and image differ in size")
        return field.indptr, field.members
    if isinstance(field, FixedDisk):
        return disk_csr(img.shape, field.radius, img.mesh)
    if isinstance(field, tuple) and len(field) == 2:
        return field
    raise TypeError(f"unsupported structuring field {type(field).__name__}")


def amoeba_rank_filter(img: Image, field, rule: RankRule, iterations: int = 1,
                       threads: int | None = None) -> Image:
    """Iterated rank filter.

    ``field`` may be an :class:`AmoebaField` or :class:`FixedDisk` (kept fixed
    for all iterations, guided mode) or :class:`SelfGenerated` (amoebas
    recomputed from each iterate, self-filtering mode).
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    cur = img
    rows = None if isinstance(field, SelfGenerated) else _rows_for(img, field)
    for _ in range(iterations):
        if isinstance(field, SelfGenerated):
            f = compute_field(cur, field.spec, field.rho, keep_tree=False, threads=threads)
            rows = (f.indptr, f.members)
        out = rank_rows(cur.flat, rows[0], rows[1], rule, threads)
        cur = cur.with_data(out.reshape(img.shape))
    return cur


def amoeba_dilate(img: Image, field, threads=None) -> Image:
    return amoeba_rank_filter(img, field, RankRule.quantile(1.0), threads=threads)


def amoeba_erode(img: Image, field, threads=None) -> Image:
    return amoeba_rank_filter(img, field, RankRule.quantile(0.0), threads=threads)


def open_with(img: Image, field, threads=None) -> Image:
    """Erosion then dilation with the same frozen field."""
    return amoeba_dilate(amoeba_erode(img, field, threads), field, threads)


def close_with(img: Image, field, threads=None) -> Image:
    """Dilation then erosion with the same frozen field."""
    return amoeba_erode(amoeba_dilate(img, field, threads), field, threads)


def amoeba_open(img: Image, spec: AmoebaMetricSpec, rho: float, threads=None) -> Image:
    """Opening with amoebas taken from ``img`` for both half-steps."""
    return open_with(img, compute_field(img, spec, rho, keep_tree=False, threads=threads), threads)


def amoeba_close(img: Image, spec: AmoebaMetricSpec, rho: float, threads=None) -> Image:
    return close_with(img, compute_field(img, spec, rho, keep_tree=False, threads=threads), threads)


def fixed_window_filter(img: Image, radius: float, rule: RankRule, iterations: int = 1,
                        threads=None) -> Image:
    return amoeba_rank_filter(img, FixedDisk(radius), rule, iterations, threads)
