"""Explicit finite-difference schemes and edge-stopping functions.

All steps use mirrored boundaries (ghost cell equals the edge cell) and never
modify their input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from .engine import AmoebaMetricSpec
from .grid import Image, gaussian_smooth

EPS_REG = 1e-8


class QuadratureError(ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance."""


# --- edge-stopping functions ----------------------------------------------------

@dataclass(frozen=True)
class EdgeStoppingFn:
    """``kind`` is ``g1``, ``g2``, ``ginf`` or ``nu`` (derived from ``metric``)."""

    kind: str = "g2"
    beta: float = 1.0
    metric: AmoebaMetricSpec | None = None
    rtol: float = 1e-10

    def __post_init__(self):
        if self.kind not in ("g1", "g2", "ginf", "nu"):
            raise ValueError(f"unknown edge-stopping function {self.kind!r}")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.kind == "nu" and self.metric is None:
            raise ValueError("kind 'nu' needs a metric")

    @classmethod
    def parse(cls, text: str, beta: float = 1.0) -> "EdgeStoppingFn":
        t = text.strip().lower()
        if t in ("g1", "g2", "ginf"):
            return cls(t, beta)
        return cls("nu", beta, AmoebaMetricSpec.parse(t, beta))

    def nu_metric(self) -> AmoebaMetricSpec | None:
        if self.kind == "g1":
            return AmoebaMetricSpec("l1", self.beta)
        if self.kind == "nu":
            return self.metric
        return None

    def __call__(self, z):
        return edge_stop_eval(self, z)


def _g_from_nu(spec: AmoebaMetricSpec, bz: float, rtol: float) -> float:
    """Edge-stopping value for the metric ``spec`` at scaled gradient ``bz``."""
    if bz == 0.0:
        return 1.0
    a = 1.0 / bz
    na = float(spec.nu(a))

    def integrand(xi):
        if xi <= 0.0:
            return 0.0
        r = float(spec.nu_inverse(na / xi))
        return xi * xi * math.sqrt(max(r * r - a * a, 0.0))

    val, err = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=rtol, limit=200)
    if not math.isfinite(val) or err > 1e-8 * abs(val):
        raise QuadratureError(f"quadrature reached only {err:.3g} absolute error at z*beta={bz}")
    return 3.0 * a * a / na ** 3 * val


def edge_stop_eval(fn: EdgeStoppingFn, z):
    """Evaluate ``fn`` at ``z >= 0`` (scalar or array)."""
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 0):
        raise ValueError("edge-stopping functions take nonnegative arguments")
    bz = fn.beta * z_arr
    if fn.kind == "g2":
        out = 1.0 / (1.0 + bz * bz)
    elif fn.kind == "ginf":
        safe = np.where(bz > 1.0, bz, 2.0)
        out = np.where(bz <= 1.0, 1.0, 1.0 - (1.0 - 1.0 / (safe * safe)) ** 1.5)
    else:
        spec = fn.nu_metric()
        flat = [_g_from_nu(spec, float(b), fn.rtol) for b in bz.ravel()]
        out = np.array(flat).reshape(bz.shape)
    return float(out) if np.ndim(z) == 0 else out


def tabulate_edge_stop(fn: EdgeStoppingFn, zmax: float, n: int = 2049):
    """Sample ``fn`` on ``[0, zmax]`` for fast interpolated evaluation on images."""
    zs = np.linspace(0.0, zmax, n)
    return zs, np.asarray(edge_stop_eval(fn, zs))


def _apply_g(fn: EdgeStoppingFn, s: np.ndarray) -> np.ndarray:
    if fn.kind in ("g2", "ginf"):
        return np.asarray(edge_stop_eval(fn, s))
    zmax = float(s.max()) * 1.0001 + 1e-12
    zs, gs = tabulate_edge_stop(fn, zmax)
    return np.interp(s, zs, gs)


# --- scheme parameters and differences --------------------------------------------

@dataclass(frozen=True)
class SchemeParams:
    tau: float = 0.1
    sigma: float = 0.0
    eps_reg: float = EPS_REG
    gamma: float = 0.0
    gamma_c: float = 0.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.eps_reg > 0:
            raise ValueError("eps_reg must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


def _pad(a: np.ndarray) -> np.ndarray:
    return np.pad(a, 1, mode="symmetric")


def _central(a: np.ndarray, h: float):
    """Central first and second derivatives (x = columns, y = rows)."""
    p = _pad(a)
    c = p[1:-1, 1:-1]
    ux = (p[1:-1, 2:] - p[1:-1, :-2]) / (2 * h)
    uy = (p[2:, 1:-1] - p[:-2, 1:-1]) / (2 * h)
    uxx = (p[1:-1, 2:] - 2 * c + p[1:-1, :-2]) / (h * h)
    uyy = (p[2:, 1:-1] - 2 * c + p[:-2, 1:-1]) / (h * h)
    uxy = (p[2:, 2:] - p[2:, :-2] - p[:-2, 2:] + p[:-2, :-2]) / (4 * h * h)
    return ux, uy, uxx, uyy, uxy


def _one_sided(a: np.ndarray, h: float):
    """Forward and backward differences ``(dxp, dxm, dyp, dym)``."""
    p = _pad(a)
    c = p[1:-1, 1:-1]
    return ((p[1:-1, 2:] - c) / h, (c - p[1:-1, :-2]) / h,
            (p[2:, 1:-1] - c) / h, (c - p[:-2, 1:-1]) / h)


def gradient_norm(a: np.ndarray, h: float) -> np.ndarray:
    ux, uy, *_ = _central(a, h)
    return np.hypot(ux, uy)


def upwind_norm(a: np.ndarray, h: float, direction: float) -> np.ndarray:
    """Rouy-Tourin approximation of ``|grad a|`` for ``a_t = direction * |grad a|``.

    ``direction > 0`` is the dilation (growing) case.
    """
    dxp, dxm, dyp, dym = _one_sided(a, h)
    if direction >= 0:
        gx = np.maximum(np.maximum(dxp, -dxm), 0.0)
        gy = np.maximum(np.maximum(dyp, -dym), 0.0)
    else:
        gx = np.maximum(np.maximum(dxm, -dxp), 0.0)
        gy = np.maximum(np.maximum(dym, -dyp), 0.0)
    return np.sqrt(gx * gx + gy * gy)


def signed_upwind_norm(a: np.ndarray, h: float, speed: np.ndarray) -> np.ndarray:
    """``speed * |grad a|`` with the upwind side chosen pixelwise by ``sign(speed)``."""
    pos = upwind_norm(a, h, 1.0)
    neg = upwind_norm(a, h, -1.0)
    return np.where(speed >= 0, speed * pos, speed * neg)


def _advect(a: np.ndarray, h: float, bx: np.ndarray, by: np.ndarray) -> np.ndarray:
    """Upwind ``bx * a_x + by * a_y`` for ``a_t = b . grad a``."""
    dxp, dxm, dyp, dym = _one_sided(a, h)
    return (np.where(bx > 0, bx * dxp, bx * dxm)
            + np.where(by > 0, by * dyp, by * dym))


def _curvature_term(a: np.ndarray, h: float, eps: float) -> np.ndarray:
    """``kappa * |grad a|`` by central differences, regularised by ``eps``."""
    ux, uy, uxx, uyy, uxy = _central(a, h)
    return (uxx * uy * uy - 2.0 * ux * uy * uxy + uyy * ux * ux) / (ux * ux + uy * uy + eps)


# --- steps -------------------------------------------------------------------------

def curvature_motion_step(u: Image, params: SchemeParams) -> Image:
    return u.with_data(u.data + params.tau * _curvature_term(u.data, u.mesh, params.eps_reg))


def _gdiv_term(u: np.ndarray, h: float, g: np.ndarray, eps: float) -> np.ndarray:
    """``|grad u| div(g grad u / |grad u|) = g kappa|grad u| + <grad g, grad u>``."""
    gx, gy, *_ = _central(g, h)
    return g * _curvature_term(u, h, eps) + _advect(u, h, gx, gy)


def self_snakes_step(u: Image, fn: EdgeStoppingFn, params: SchemeParams) -> Image:
    us = gaussian_smooth(u, params.sigma).data
    g = _apply_g(fn, gradient_norm(us, u.mesh))
    return u.with_data(u.data + params.tau * _gdiv_term(u.data, u.mesh, g, params.eps_reg))


def channel_edge_map(channels: Sequence[Image], weights: Sequence[float], fn: EdgeStoppingFn,
                     sigma: float) -> np.ndarray:
    """``g(sqrt(sum_c w_c |grad(G_sigma * f_c)|^2))``."""
    if len(channels) != len(weights) or not channels:
        raise ValueError("need one weight per channel")
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("channel weights must be nonnegative with positive sum")
    s = np.zeros(channels[0].shape)
    for f, wc in zip(channels, w):
        gn = gradient_norm(gaussian_smooth(f, sigma).data, f.mesh)
        s = s + wc * gn * gn
    return _apply_g(fn, np.sqrt(s))


def gac_step(u: Image, channels: Sequence[Image], weights: Sequence[float], fn: EdgeStoppingFn,
             params: SchemeParams, g: np.ndarray | None = None) -> Image:
    """Geodesic active contour step with balloon force ``gamma`` and constant force ``gamma_c``.

    With ``u`` negative inside the contour, ``gamma < 0`` pushes the contour
    outwards and ``gamma_c > 0`` shrinks it. ``g`` may be passed precomputed.
    """
    h = u.mesh
    if g is None:
        g = channel_edge_map(channels, weights, fn, params.sigma)
    upd = _gdiv_term(u.data, h, g, params.eps_reg)
    speed = params.gamma * g + params.gamma_c
    if np.any(speed != 0):
        upd = upd + signed_upwind_norm(u.data, h, speed)
    return u.with_data(u.data + params.tau * upd)


def hj_amoeba_step(u: Image, sign: int, beta: float, params: SchemeParams) -> Image:
    """``u_t = sign * |grad u| / sqrt(1 + beta^2 |grad u|^2)``; ``sign=+1`` dilates."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    gn = upwind_norm(u.data, u.mesh, sign)
    return u.with_data(u.data + params.tau * sign * gn / np.sqrt(1.0 + beta * beta * gn * gn))


# --- AAC coefficients -----------------------------------------------------------------

def aac_pde_coefficients(grad_f: float, alpha: float, spec: AmoebaMetricSpec,
                         rtol: float = 1e-10) -> tuple[float, float, float, float]:
    """Coefficients ``(G, H1, H2, H3)`` of the small-radius limit of amoeba active contours."""
    if grad_f < 0:
        raise ValueError("grad_f must be nonnegative")
    nu = lambda z: float(spec.nu(z))
    nup = lambda z: float(spec.nu_prime(z))
    nsa = nu(grad_f * math.sin(alpha))
    G = 1.0 / (nsa * nsa)

    def weight(t):
        s = grad_f * abs(math.sin(t))
        return nup(s) / nu(s) ** 4

    parts = []
    for trig in (lambda t: math.cos(t) ** 2, lambda t: math.sin(t) * math.cos(t),
                 lambda t: math.sin(t) ** 2):
        val, err = integrate.quad(lambda t: weight(t) * trig(t), alpha - math.pi / 2,
                                  alpha + math.pi / 2, epsabs=1e-13, epsrel=rtol, limit=200,
                                  points=[0.0] if abs(alpha) < math.pi / 2 else None)
        if err > max(1e-7 * abs(val), 1e-12):
            raise QuadratureError(f"H-matrix quadrature error {err:.3g}")
        parts.append(1.5 * nsa * val)
    return (G, parts[0], parts[1], parts[2])
