"""Level-set initialisation, amoeba active contours and zero-level extraction.

Level-set functions are negative inside the segment and positive outside.
Contour vertices are ``(x, y)`` in pixel coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from matplotlib.path import Path
from scipy import ndimage
from scipy.spatial import cKDTree

from .engine import AmoebaMetricSpec, compute_field
from .filters import RankRule, rank_rows
from .grid import Image, gaussian_smooth


@dataclass(frozen=True)
class Contour:
    """Closed polylines; the first vertex is not repeated at the end."""

    polylines: list

    def __len__(self):
        return len(self.polylines)

    def points(self) -> np.ndarray:
        if not self.polylines:
            return np.zeros((0, 2))
        return np.concatenate(self.polylines)

    def length(self) -> float:
        tot = 0.0
        for p in self.polylines:
            q = np.vstack([p, p[:1]])
            tot += float(np.hypot(*np.diff(q, axis=0).T).sum())
        return tot

    def sample(self, spacing: float = 0.25) -> np.ndarray:
        """Points along all polylines at most ``spacing`` apart."""
        out = []
        for p in self.polylines:
            q = np.vstack([p, p[:1]])
            for a, b in zip(q[:-1], q[1:]):
                n = max(1, int(math.ceil(np.hypot(*(b - a)) / spacing)))
                t = np.arange(n)[:, None] / n
                out.append(a + t * (b - a))
        return np.concatenate(out) if out else np.zeros((0, 2))

    def csv_rows(self):
        return [(i, float(x), float(y)) for i, p in enumerate(self.polylines) for x, y in p]


# --- initialisation --------------------------------------------------------------

def init_circle(shape: tuple[int, int], center: tuple[float, float], radius: float) -> Image:
    """Exact signed distance to a circle (``center`` as ``(x, y)``)."""
    if not radius > 0:
        raise ValueError("circle radius must be positive")
    h, w = shape
    cx, cy = center
    if not (0 <= cx <= w - 1 and 0 <= cy <= h - 1):
        raise ValueError("circle centre outside the image")
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    return Image(np.hypot(xx - cx, yy - cy) - radius)


def init_mask(mask: np.ndarray) -> Image:
    """Signed distance from a boolean inside-mask (exact Euclidean transform, half-pixel offset)."""
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise ValueError("mask has zero area")
    if m.all():
        return Image(-ndimage.distance_transform_edt(np.pad(m, 1, constant_values=False))[1:-1, 1:-1] + 0.5)
    d_out = ndimage.distance_transform_edt(~m)
    d_in = ndimage.distance_transform_edt(m)
    return Image(np.where(m, 0.5 - d_in, d_out - 0.5))


def init_polygon(shape: tuple[int, int], vertices) -> Image:
    """Signed distance to the polygon with ``(x, y)`` vertices."""
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        raise ValueError("polygon needs at least three vertices")
    x, y = v[:, 0], v[:, 1]
    if abs(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)) == 0:
        raise ValueError("degenerate polygon (zero area)")
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    inside = Path(v).contains_points(np.column_stack([xx.ravel(), yy.ravel()])).reshape(h, w)
    return init_mask(inside)


def init_signed_distance(shape: tuple[int, int], circle=None, polygon=None, mask=None) -> Image:
    given = [a is not None for a in (circle, polygon, mask)]
    if sum(given) != 1:
        raise ValueError("give exactly one of circle, polygon or mask")
    if circle is not None:
        (cx, cy), r = circle
        return init_circle(shape, (cx, cy), r)
    if polygon is not None:
        return init_polygon(shape, polygon)
    return init_mask(mask)


# --- marching squares ------------------------------------------------------------

def extract_zero_level(u: Image) -> Contour:
    """Zero level of ``u`` (inside where ``u < 0``) as closed polylines.

    The grid is padded with outside values so contours touching the border
    close along it; ambiguous saddle cells are resolved by the sign of the
    cell average.
    """
    d = u.data
    if not np.any(d < 0):
        return Contour([])
    pad_val = max(1.0, float(np.abs(d).max()))
    p = np.pad(d, 1, constant_values=pad_val)
    H, W = p.shape
    ins = p < 0

    def cross(ya, xa, yb, xb):
        t = p[ya, xa] / (p[ya, xa] - p[yb, xb])
        return (xa + t * (xb - xa) - 1.0, ya + t * (yb - ya) - 1.0)

    # edge keys: ('h', y, x) joins (y,x)-(y,x+1); ('v', y, x) joins (y,x)-(y+1,x)
    adj: dict = {}
    pts: dict = {}

    def link(e1, e2):
        adj.setdefault(e1, []).append(e2)
        adj.setdefault(e2, []).append(e1)

    cy, cx = np.nonzero((ins[:-1, :-1] != ins[:-1, 1:]) | (ins[:-1, :-1] != ins[1:, :-1])
                        | (ins[:-1, :-1] != ins[1:, 1:]))
    for y, x in zip(cy.tolist(), cx.tolist()):
        c0, c1, c2, c3 = ins[y, x], ins[y, x + 1], ins[y + 1, x + 1], ins[y + 1, x]
        top, right, bottom, left = ("h", y, x), ("v", y, x + 1), ("h", y + 1, x), ("v", y, x)
        edges = ((top, c0, c1, (y, x, y, x + 1)), (right, c1, c2, (y, x + 1, y + 1, x + 1)),
                 (bottom, c3, c2, (y + 1, x, y + 1, x + 1)), (left, c0, c3, (y, x, y + 1, x)))
        for e, a, b, ends in edges:
            if a != b and e not in pts:
                pts[e] = cross(*ends)
        if c0 == c2 and c1 == c3 and c0 != c1:
            centre_in = (p[y, x] + p[y, x + 1] + p[y + 1, x + 1] + p[y + 1, x]) < 0
            if bool(c0) == bool(centre_in):
                link(top, right)
                link(bottom, left)
            else:
                link(top, left)
                link(right, bottom)
            continue
        crossing = [e for e, a, b, _ in edges if a != b]
        link(crossing[0], crossing[1])
    polys = []
    seen = set()
    for start in sorted(adj):
        if start in seen:
            continue
        path = [start]
        seen.add(start)
        cur = start
        while True:
            step = next((e for e in adj[cur] if e not in seen), None)
            if step is None:
                break
            seen.add(step)
            path.append(step)
            cur = step
        poly = np.array([pts[e] for e in path])
        poly[:, 0] = np.clip(poly[:, 0], 0.0, d.shape[1] - 1.0)
        poly[:, 1] = np.clip(poly[:, 1], 0.0, d.shape[0] - 1.0)
        polys.append(poly)
    return Contour(polys)


# --- distances ---------------------------------------------------------------------

def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance of two point sets."""
    if len(a) == 0 or len(b) == 0:
        return math.inf
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(max(da.max(), db.max()))


def circle_points(center, radius: float, n: int = 2048) -> np.ndarray:
    t = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


def contour_hausdorff(contour: Contour, truth: np.ndarray, spacing: float = 0.25) -> float:
    return hausdorff(contour.sample(spacing), truth)


def enclosed_area(u: Image) -> int:
    return int(np.count_nonzero(u.data < 0))


def overlay(img: Image, contour: Contour, value: float = 255.0) -> Image:
    """Raster copy of ``img`` with contour samples burned in."""
    d = np.array(img.data, copy=True)
    pts = contour.sample(0.25)
    if len(pts):
        xs = np.clip(np.rint(pts[:, 0]).astype(int), 0, img.width - 1)
        ys = np.clip(np.rint(pts[:, 1]).astype(int), 0, img.height - 1)
        d[ys, xs] = value
    return img.with_data(d)


# --- amoeba active contours -----------------------------------------------------------

@dataclass(frozen=True)
class AACResult:
    u: Image
    contour: Contour
    iterations: int
    areas: list


def aac_run(f: Image, u0: Image, spec: AmoebaMetricSpec, rho: float, rule: RankRule, iterations: int,
            presmooth: float = 0.0, early_stop: bool = True, threads: int | None = None) -> AACResult:
    """Evolve ``u0`` by rank filtering over amoebas taken once from ``f``.

    The rank is taken on ``-u`` so a positive bias (offset, quantile or
    quadratic) lowers ``u`` and grows the inside segment.
    Stops early once the segment has not changed for 3 consecutive steps.
    """
    if f.shape != u0.shape:
        raise ValueError("image and level set differ in size")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    guide = gaussian_smooth(f, presmooth) if presmooth > 0 else f
    field = compute_field(guide, spec, rho, keep_tree=False, threads=threads)
    u = u0
    areas = [enclosed_area(u)]
    still = 0
    it = 0
    for it in range(1, iterations + 1):
        new = -rank_rows(-u.flat, field.indptr, field.members, rule, threads)
        nu = u.with_data(new.reshape(u.shape))
        same = np.array_equal(nu.data < 0, u.data < 0)
        u = nu
        areas.append(enclosed_area(u))
        still = still + 1 if same else 0
        if early_stop and still >= 3:
            break
    return AACResult(u, extract_zero_level(u), it, areas)
