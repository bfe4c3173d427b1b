"""Command-line entry point: ``amoebamorph <subcommand> [options]``.

Every subcommand accepts ``--config FILE`` (``key = value`` lines, keys are
long flag names) with command-line flags taking precedence, and
``--threads N``. Exit status is 0 on success, 2 on usage errors (nothing is
written) and 1 on numeric failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import warnings

import numpy as np

from . import __version__, _parallel
from .contours import (aac_run, circle_points, contour_hausdorff, extract_zero_level,
                       init_circle, init_mask, init_polygon, overlay)
from .engine import AmoebaMetricSpec, SETUPS, compute_field
from .filters import (FixedDisk, RankRule, SelfGenerated, amoeba_rank_filter, close_with, open_with)
from .graphs import INDICES, DehmerParams, DisconnectedGraphError
from .grid import (Image, PGMError, histogram_equalize, normalize_range, pgm_read, pgm_write, csv_text)
from .pde import (EdgeStoppingFn, QuadratureError, SchemeParams, curvature_motion_step, gac_step,
                  hj_amoeba_step, self_snakes_step)
from .perturbation import GRADIENT, LEVELLINE, PerturbationCase, run_case, amplification_analytic

# options that name outputs or execution width; they do not enter the digest
_NON_CONFIG = {"config", "threads", "output", "out", "out_eq", "csv", "png", "contour_csv", "overlay",
               "snapshot_prefix", "maps_prefix", "thresholds_csv", "command"}


class UsageError(Exception):
    pass


# --- small parsers -----------------------------------------------------------------

def _float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive(text: str) -> float:
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _nonneg(text: str) -> float:
    v = float(text)
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text}")
    return v


def _count(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _checked(flag: str, fn, *args, **kw):
    """Build a value and turn construction errors into usage errors naming ``flag``."""
    try:
        return fn(*args, **kw)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"{flag}: {exc}") from None


def _metric(ns) -> AmoebaMetricSpec:
    return _checked("--metric", AmoebaMetricSpec.parse, ns.metric, ns.beta, ns.connectivity)


def _parse_init(text: str, shape, flag: str = "--init") -> Image:
    kind, _, arg = text.partition(":")
    try:
        if kind == "circle":
            cx, cy, r = _float_list(arg)
            return init_circle(shape, (cx, cy), r)
        if kind == "annulus":
            cx, cy, r1, r2 = _float_list(arg)
            yy, xx = np.mgrid[0:shape[0], 0:shape[1]]
            rr = np.hypot(xx - cx, yy - cy)
            return init_mask((rr >= r1) & (rr <= r2))
        if kind == "polygon":
            pts = [_float_list(p) for p in arg.split(";")]
            return init_polygon(shape, pts)
        if kind == "mask":
            m = _read_pgm(arg, flag)
            if m.shape != tuple(shape):
                raise ValueError("mask and image differ in size")
            return init_mask(m.data > 0)
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise UsageError(f"{flag}: {exc}") from None
    raise UsageError(f"{flag}: expected circle:, annulus:, polygon: or mask:, got {text!r}")


def _read_pgm(path: str, flag: str) -> Image:
    try:
        with open(path, "rb") as fh:
            return pgm_read(fh.read())
    except OSError as exc:
        raise UsageError(f"{flag}: cannot read {path!r} ({exc.strerror})") from None
    except PGMError as exc:
        raise UsageError(f"{flag}: {exc}") from None


def _parse_channel(text: str, ns, with_weight: bool):
    label, _, w = text.partition(":")
    index, _, setup = label.partition("@")
    if index not in INDICES or setup not in SETUPS:
        raise UsageError(f"--desc: expected index@setup with index in {INDICES} and setup in {SETUPS}, "
                         f"got {text!r}")
    from .texture import DescriptorSpec
    spec = _checked("--desc", DescriptorSpec, setup, index, _metric(ns), ns.rho,
                    _checked("--M/--q", DehmerParams, ns.M, ns.q, "fv"))
    if not with_weight:
        return spec
    try:
        weight = float(w) if w else 1.0
    except ValueError:
        raise UsageError(f"--desc: bad weight in {text!r}") from None
    if weight < 0:
        raise UsageError(f"--desc: weight must be nonnegative in {text!r}")
    return spec, weight


# --- output bookkeeping ----------------------------------------------------------------

class Outputs:
    """Collects output files and writes them only after the whole run succeeded."""

    def __init__(self, ns):
        params = {k: v for k, v in sorted(vars(ns).items()) if k not in _NON_CONFIG and k != "func"}
        canon = json.dumps(params, sort_keys=True, default=str)
        self.digest = hashlib.sha256(canon.encode()).hexdigest()[:16]
        self.header = [f"amoebamorph {__version__} {ns.command}", f"config {self.digest}",
                       "params " + " ".join(f"{k}={v}" for k, v in params.items())]
        self.files: list[tuple[str, object]] = []

    def pgm(self, path, img: Image, extra=()):
        if path:
            self.files.append((path, pgm_write(img, 255, list(self.header) + list(extra))))

    def csv(self, path, header, rows, extra=()):
        if path:
            self.files.append((path, csv_text(header, rows, list(self.header) + list(extra)).encode()))

    def png(self, path, draw):
        if path:
            self.files.append((path, draw))

    def flush(self):
        for path, payload in self.files:
            if callable(payload):
                payload(path)
            else:
                with open(path, "wb") as fh:
                    fh.write(payload)


def _range_comment(img: Image) -> str:
    return f"range {float(img.data.min())!r} {float(img.data.max())!r}"


# --- subcommands -------------------------------------------------------------------

def cmd_filter(ns, out: Outputs):
    img = _read_pgm(ns.input, "input")
    rule = _checked("--rule", RankRule.parse, ns.rule) if ns.op == "rank" else \
        RankRule.parse({"median": "median", "dilate": "dilate", "erode": "erode"}.get(ns.op, "median"))
    spec = _metric(ns)
    if ns.window is not None:
        field = FixedDisk(ns.window)
    elif ns.op in ("open", "close") or ns.mode == "guided":
        field = compute_field(img, spec, ns.rho, keep_tree=False)
    else:
        field = SelfGenerated(spec, ns.rho)
    cur = img
    if ns.op in ("open", "close"):
        step = open_with if ns.op == "open" else close_with
        for _ in range(ns.iter):
            cur = step(cur, field)
    else:
        cur = amoeba_rank_filter(img, field, rule, ns.iter)
    out.pgm(ns.output, cur)


def cmd_pde(ns, out: Outputs):
    img = _read_pgm(ns.input, "input")
    params = _checked("--tau", SchemeParams, ns.tau, ns.sigma, ns.eps_reg, ns.gamma, ns.gamma_c)
    fn = _checked("--g", EdgeStoppingFn.parse, ns.g, ns.g_beta)
    if ns.eq == "gac":
        if not ns.init:
            raise UsageError("--init: required for --eq gac")
        u = _parse_init(ns.init, img.shape)
    else:
        u = img
    rows = []

    def diag(step, a: Image):
        d = a.data
        tv = float(np.abs(np.diff(d, axis=0)).sum() + np.abs(np.diff(d, axis=1)).sum())
        rows.append((step, float(d.min()), float(d.max()), tv))

    diag(0, u)
    for it in range(1, ns.iter + 1):
        # overflow means the explicit scheme blew up
        with np.errstate(over="raise", invalid="raise"):
            try:
                if ns.eq == "curvature":
                    u = curvature_motion_step(u, params)
                elif ns.eq == "selfsnakes":
                    u = self_snakes_step(u, fn, params)
                elif ns.eq == "gac":
                    u = gac_step(u, [img], [1.0], fn, params)
                else:
                    u = hj_amoeba_step(u, 1 if ns.eq == "dilate" else -1, ns.beta, params)
            except FloatingPointError:
                raise FloatingPointError(f"non-finite values in step {it}; reduce --tau") from None
        diag(it, u)
        if ns.snapshot_prefix and ns.snapshot_every and it % ns.snapshot_every == 0:
            out.pgm(f"{ns.snapshot_prefix}{it:05d}.pgm", u, [_range_comment(u), f"step {it}"])
    if ns.eq == "gac":
        contour = extract_zero_level(u)
        out.pgm(ns.output, overlay(img, contour))
        out.csv(ns.contour_csv, ("polyline", "x", "y"), contour.csv_rows())
    else:
        out.pgm(ns.output, u, [_range_comment(u)])
    out.csv(ns.csv, ("step", "min", "max", "total_variation"), rows)
    if ns.png:
        from .plotting import plot_series
        tv = [r[3] for r in rows]
        out.png(ns.png, lambda p: plot_series(tv, p, "total variation", title=ns.eq))


def cmd_aac(ns, out: Outputs):
    img = _read_pgm(ns.input, "input")
    u0 = _parse_init(ns.init, img.shape)
    rule = _checked("--rule", RankRule.parse, ns.rule)
    res = aac_run(img, u0, _metric(ns), ns.rho, rule, ns.iter, presmooth=ns.presmooth,
                  early_stop=not ns.no_early_stop)
    out.pgm(ns.output, overlay(img, res.contour), [f"iterations {res.iterations}"])
    out.csv(ns.contour_csv, ("polyline", "x", "y"), res.contour.csv_rows())
    out.csv(ns.csv, ("iteration", "area"), list(enumerate(res.areas)))
    if ns.png:
        from .plotting import plot_contour
        out.png(ns.png, lambda p: plot_contour(img, res.contour, p, title="amoeba active contour"))


def cmd_perturb(ns, out: Outputs):
    spec = _metric(ns)
    kind = GRADIENT if ns.case == "gradient" else LEVELLINE
    rows = []
    for k in ns.k:
        if not k > 0:
            raise UsageError("--k: frequencies must be positive")
        eps = ns.eps if ns.eps is not None else min(0.04, 0.2 / k)
        case = _checked("--mesh", PerturbationCase, kind, k, eps, ns.mesh)
        rep = run_case(case, ns.rho, spec, ns.stencil, ns.max_samples)
        analytic = rep.analytic
        if ns.analytic == "selfsnakes":
            analytic = amplification_analytic(kind, k, ns.rho, ns.sigma, method="selfsnakes")
        rows.append((k, rep.numeric, analytic, ns.mesh, ns.rho, rep.continuum))
    out.csv(ns.csv, ("k", "numeric_lambda", "analytic_lambda", "mesh", "rho", "continuum_lambda"), rows)
    if ns.png:
        from .plotting import plot_amplification
        ks, num, ana, con = ([r[i] for r in rows] for i in (0, 1, 2, 5))
        out.png(ns.png, lambda p: plot_amplification(ks, num, p, ana, con, title=f"{ns.case} case"))


def cmd_descriptor(ns, out: Outputs):
    from .texture import DescriptorSpec, descriptor_map
    if not (ns.out or ns.out_eq or ns.csv or ns.png):
        raise UsageError("--out: give at least one of --out, --out-eq, --csv, --png")
    img = _read_pgm(ns.input, "input")
    spec = _checked("--index", DescriptorSpec, ns.setup, ns.index, _metric(ns), ns.rho,
                    _checked("--M/--q", DehmerParams, ns.M, ns.q, "fv"))
    m = descriptor_map(img, spec)
    out.pgm(ns.out, normalize_range(m), [_range_comment(m), spec.label])
    out.pgm(ns.out_eq, histogram_equalize(m), [spec.label])
    if ns.csv:
        h, w = m.shape
        yy, xx = np.divmod(np.arange(h * w), w)
        out.csv(ns.csv, ("x", "y", spec.label), zip(xx.tolist(), yy.tolist(), m.flat.tolist()))
    if ns.png:
        from .plotting import plot_map
        out.png(ns.png, lambda p: plot_map(m, p, title=spec.label))


def cmd_discriminate(ns, out: Outputs):
    from .texture import discrimination_report, synthetic_corpus
    if ns.synthetic:
        patches = synthetic_corpus(ns.size, ns.seed)
    else:
        if len(ns.inputs) < 2:
            raise UsageError("inputs: need at least two texture patches (or --synthetic)")
        patches = [(os.path.splitext(os.path.basename(p))[0], _read_pgm(p, "inputs")) for p in ns.inputs]
    specs = [_parse_channel(d, ns, with_weight=False) for d in ns.desc]
    rep = discrimination_report(patches, specs)
    out.csv(ns.csv, ("descriptor", "pair", "u", "verdict"), rep.csv_rows())
    out.csv(ns.thresholds_csv, ("descriptor", "T1", "T2"),
            [(k, t1, t2) for k, (t1, t2) in rep.thresholds.items()])


def cmd_texseg(ns, out: Outputs):
    from .texture import striped_ring_image, texture_segment
    truth = None
    if ns.input:
        img = _read_pgm(ns.input, "input")
        if not ns.init:
            raise UsageError("--init: required when segmenting an input image")
    else:
        img, _ = striped_ring_image(ns.size, ns.r_in, ns.r_out, seed=ns.seed)
        c = (ns.size - 1) / 2.0
        truth = np.vstack([circle_points((c, c), ns.r_in), circle_points((c, c), ns.r_out)])
    if ns.init:
        u0 = _parse_init(ns.init, img.shape)
    else:
        mid = 0.5 * (ns.r_in + ns.r_out)
        u0 = _parse_init(f"annulus:{c},{c},{mid - 2},{mid + 2}", img.shape)
    channels = [_parse_channel(d, ns, with_weight=True) for d in ns.desc]
    if sum(w for _, w in channels) <= 0:
        raise UsageError("--desc: channel weights must have a positive sum")
    params = _checked("--tau", SchemeParams, ns.tau, ns.sigma, 1e-8, ns.gamma, ns.gamma_c)
    fn = _checked("--g", EdgeStoppingFn.parse, ns.g, ns.g_beta)
    res = texture_segment(img, channels, params, u0, fn, ns.max_iter, ns.steady)
    summary = [("iterations", res.iterations), ("converged", int(res.converged))]
    if truth is not None:
        summary.append(("hausdorff", contour_hausdorff(res.contour, truth)))
    out.pgm(ns.overlay, overlay(img, res.contour))
    out.csv(ns.contour_csv, ("polyline", "x", "y"), res.contour.csv_rows())
    out.csv(ns.csv, ("quantity", "value"), summary)
    if ns.maps_prefix:
        for (spec, _), m in zip(channels, res.channels):
            out.pgm(f"{ns.maps_prefix}{spec.index}_{spec.setup}.pgm", m, [spec.label])
    if ns.png:
        from .plotting import plot_contour
        out.png(ns.png, lambda p: plot_contour(img, res.contour, p, truth, title="texture segmentation"))


# --- parser ----------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value file; command-line flags override it")
    p.add_argument("--threads", type=_count, default=None, help="worker threads (results do not depend on it)")


def _metric_flags(p, beta: float, rho: float):
    p.add_argument("--metric", default="l2", help="l1, l2, linf or lp:<p> (default l2)")
    p.add_argument("--beta", type=_positive, default=beta, help=f"contrast scale (default {beta})")
    p.add_argument("--rho", type=_positive, default=rho, help=f"amoeba radius (default {rho})")
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=8)


def _dehmer_flags(p):
    p.add_argument("--M", type=_positive, default=1.0, help="Dehmer weight scale (default 1)")
    p.add_argument("--q", type=float, default=0.5, help="Dehmer base in (0, 1) (default 0.5)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="amoebamorph", description="Morphological amoeba toolkit.")
    ap.add_argument("--version", action="version", version=f"amoebamorph {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("filter", help="amoeba or fixed-window rank filtering")
    _common(p)
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--op", choices=("median", "dilate", "erode", "open", "close", "rank"), default="median")
    p.add_argument("--rule", default="median", help="rank rule for --op rank, e.g. quantile:0.3, offset:2")
    _metric_flags(p, 0.2, 7.0)
    p.add_argument("--iter", type=_count, default=1)
    p.add_argument("--mode", choices=("self", "guided"), default="self",
                   help="self: amoebas recomputed every iteration; guided: taken once from the input")
    p.add_argument("--window", type=_positive, default=None, help="use a fixed disk of this radius instead")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("pde", help="finite-difference reference solvers")
    _common(p)
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--eq", choices=("curvature", "selfsnakes", "gac", "dilate", "erode"), default="curvature")
    p.add_argument("--tau", type=_positive, default=0.1)
    p.add_argument("--sigma", type=_nonneg, default=0.0)
    p.add_argument("--eps-reg", type=_positive, default=1e-8)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--gamma-c", type=float, default=0.0)
    p.add_argument("--g", default="g2", help="g1, g2, ginf or a metric family for the general form")
    p.add_argument("--g-beta", type=_positive, default=1.0)
    p.add_argument("--beta", type=_nonneg, default=1.0, help="contrast scale of --eq dilate/erode")
    p.add_argument("--iter", type=_count, default=10)
    p.add_argument("--init", default=None, help="initial contour for --eq gac")
    p.add_argument("--snapshot-every", type=int, default=0)
    p.add_argument("--snapshot-prefix", default=None)
    p.add_argument("--contour-csv", default=None)
    p.add_argument("--csv", default=None, help="per-step min, max and total variation")
    p.add_argument("--png", default=None)
    p.set_defaults(func=cmd_pde)

    p = sub.add_parser("aac", help="amoeba active contours")
    _common(p)
    p.add_argument("input")
    p.add_argument("output", help="overlay PGM")
    p.add_argument("--init", required=True, help="circle:cx,cy,r | polygon:x,y;x,y;... | mask:file.pgm")
    p.add_argument("--rule", default="median")
    _metric_flags(p, 0.1, 12.0)
    p.add_argument("--iter", type=_count, default=10)
    p.add_argument("--presmooth", type=_nonneg, default=0.0)
    p.add_argument("--no-early-stop", type=_bool, nargs="?", const=True, default=False)
    p.add_argument("--contour-csv", default=None)
    p.add_argument("--csv", default=None, help="enclosed area per iteration")
    p.add_argument("--png", default=None)
    p.set_defaults(func=cmd_aac)

    p = sub.add_parser("perturb", help="amplification factors of perturbed slopes")
    _common(p)
    p.add_argument("--case", choices=("gradient", "levelline"), required=True)
    p.add_argument("--k", type=_float_list, required=True, help="frequencies, comma separated")
    p.add_argument("--eps", type=_positive, default=None, help="amplitude (default min(0.04, 0.2/k))")
    p.add_argument("--mesh", type=_positive, default=0.01)
    p.add_argument("--stencil", type=int, choices=(8, 16, 32), default=32)
    p.add_argument("--max-samples", type=_count, default=512)
    p.add_argument("--analytic", choices=("amoeba", "selfsnakes"), default="amoeba")
    p.add_argument("--sigma", type=_nonneg, default=0.0, help="pre-smoothing for --analytic selfsnakes")
    _metric_flags(p, 1.0, 1.0)
    p.add_argument("--csv", required=True)
    p.add_argument("--png", default=None)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("descriptor", help="per-pixel graph-index maps")
    _common(p)
    p.add_argument("input")
    p.add_argument("--setup", choices=SETUPS, default="TwA")
    p.add_argument("--index", choices=INDICES, default="harary")
    _metric_flags(p, 0.1, 5.0)
    _dehmer_flags(p)
    p.add_argument("--out", default=None, help="raw map rescaled to 0..255 (range in a comment)")
    p.add_argument("--out-eq", default=None, help="histogram-equalised map")
    p.add_argument("--csv", default=None)
    p.add_argument("--png", default=None)
    p.set_defaults(func=cmd_descriptor)

    p = sub.add_parser("discriminate", help="texture discrimination table")
    _common(p)
    p.add_argument("inputs", nargs="*")
    p.add_argument("--synthetic", type=_bool, nargs="?", const=True, default=False)
    p.add_argument("--size", type=_count, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--desc", nargs="+", default=["harary@TwA", "wiener@GwA", "dehmer_fv@TwE", "meaninfo@TuA"])
    _metric_flags(p, 0.1, 5.0)
    _dehmer_flags(p)
    p.add_argument("--csv", required=True)
    p.add_argument("--thresholds-csv", default=None)
    p.set_defaults(func=cmd_discriminate)

    p = sub.add_parser("texseg", help="multi-channel texture segmentation")
    _common(p)
    p.add_argument("input", nargs="?", default=None, help="PGM (default: synthetic striped ring)")
    p.add_argument("--size", type=_count, default=128)
    p.add_argument("--r-in", type=_positive, default=20.0)
    p.add_argument("--r-out", type=_positive, default=52.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", default=None)
    p.add_argument("--desc", nargs="+", default=["dehmer_fp@TwE:0.5", "meaninfo@TuA:0.5"],
                   help="index@setup:weight channels")
    _metric_flags(p, 0.3, 5.0)
    _dehmer_flags(p)
    p.add_argument("--sigma", type=_nonneg, default=3.0)
    p.add_argument("--gamma", type=float, default=-2.0)
    p.add_argument("--gamma-c", type=float, default=0.0)
    p.add_argument("--tau", type=_positive, default=0.1)
    p.add_argument("--g", default="g2")
    p.add_argument("--g-beta", type=_positive, default=1.0)
    p.add_argument("--max-iter", type=_count, default=20000)
    p.add_argument("--steady", type=_count, default=50)
    p.add_argument("--overlay", default=None)
    p.add_argument("--contour-csv", default=None)
    p.add_argument("--csv", default=None)
    p.add_argument("--maps-prefix", default=None)
    p.add_argument("--png", default=None)
    p.set_defaults(func=cmd_texseg)
    return ap


def _read_config(path: str) -> dict:
    cfg = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"--config: line {n} is not key = value")
            k, v = (t.strip() for t in line.split("=", 1))
            cfg[k.lstrip("-").replace("-", "_")] = v
    return cfg


def _apply_config(sub: argparse.ArgumentParser, cfg: dict) -> None:
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, text in cfg.items():
        act = actions.get(key)
        if act is None or key in ("config", "help"):
            raise UsageError(f"--config: unknown key {key!r}")
        conv = act.type or (lambda s: s)
        try:
            if act.nargs in ("+", "*"):
                val = [conv(t) for t in text.split()]
            else:
                val = conv(text)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"--config: {key}: {exc}") from None
        if act.choices is not None and val not in act.choices:
            raise UsageError(f"--config: {key}: {val!r} not in {list(act.choices)}")
        defaults[key] = val
        act.required = False
    sub.set_defaults(**defaults)


def run(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    sub = ap._subparsers._group_actions[0].choices[ns.command]
    saved_threads = _parallel.get_threads()
    try:
        if ns.config:
            try:
                cfg = _read_config(ns.config)
            except OSError as exc:
                raise UsageError(f"--config: cannot read {ns.config!r} ({exc.strerror})") from None
            _apply_config(sub, cfg)
            try:
                ns = ap.parse_args(argv)
            except SystemExit as exc:
                return int(exc.code or 0)
        if ns.threads is not None:
            _parallel.set_threads(ns.threads)
        out = Outputs(ns)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            ns.func(ns, out)
        out.flush()
    except UsageError as exc:
        sub.print_usage(sys.stderr)
        print(f"amoebamorph {ns.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, QuadratureError, DisconnectedGraphError, np.linalg.LinAlgError) as exc:
        print(f"amoebamorph {ns.command}: numeric error: {exc}", file=sys.stderr)
        return 1
    finally:
        _parallel.set_threads(saved_threads)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
