"""Image container, PGM I/O, Gaussian pre-smoothing and small grid helpers."""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage


class PGMError(ValueError):
    """Malformed PGM input."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True, eq=False)
class Image:
    """Immutable grid of real intensities.

    ``data`` has shape ``(height, width)`` and is stored row-major as float64.
    ``mesh`` is the spatial step between neighbouring pixels.
    """

    data: np.ndarray
    mesh: float = 1.0

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image data must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image values must be finite")
        if not (self.mesh > 0 and math.isfinite(self.mesh)):
            raise ValueError(f"mesh must be positive, got {self.mesh}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "mesh", float(self.mesh))

    @classmethod
    def from_flat(cls, width: int, height: int, values: Sequence[float], mesh: float = 1.0) -> "Image":
        if len(values) != width * height:
            raise ValueError(f"expected {width * height} values, got {len(values)}")
        return cls(np.asarray(values, dtype=np.float64).reshape(height, width), mesh)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def flat(self) -> np.ndarray:
        return self.data.ravel()

    def with_data(self, data: np.ndarray) -> "Image":
        """Same mesh, new values."""
        return Image(data, self.mesh)

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.mesh == other.mesh and np.array_equal(self.data, other.data)

    __hash__ = None

    def __repr__(self):
        return f"Image({self.width}x{self.height}, mesh={self.mesh:g})"


def as_image(x, mesh: float | None = None) -> Image:
    if isinstance(x, Image):
        return x if mesh is None or mesh == x.mesh else Image(x.data, mesh)
    return Image(x, 1.0 if mesh is None else mesh)


# --- PGM ------------------------------------------------------------------

_WS = b" \t\n\r\v\f"


def _header_tokens(buf: bytes, count: int, pos: int) -> tuple[list[tuple[int, int]], int]:
    """Read ``count`` whitespace-separated header integers, skipping comments.

    Returns ``[(value, offset), ...]`` and the position right after the last token.
    """
    out = []
    n = len(buf)
    while len(out) < count:
        while pos < n and buf[pos] in _WS:
            pos += 1
        if pos < n and buf[pos] == ord("#"):
            while pos < n and buf[pos] not in b"\r\n":
                pos += 1
            continue
        if pos >= n:
            raise PGMError("truncated header", pos)
        start = pos
        while pos < n and buf[pos] not in _WS and buf[pos] != ord("#"):
            pos += 1
        tok = buf[start:pos]
        if not tok.isdigit():
            raise PGMError(f"expected integer in header, got {tok[:16]!r}", start)
        out.append((int(tok), start))
    return out, pos


def pgm_read(data: bytes) -> Image:
    """Parse a P2 (ASCII) or P5 (binary) PGM. Values are not rescaled."""
    if len(data) < 2 or data[:1] != b"P" or data[1:2] not in (b"2", b"5"):
        raise PGMError("not a P2/P5 PGM (bad magic number)", 0)
    binary = data[1:2] == b"5"
    toks, pos = _header_tokens(data, 3, 2)
    (w, w_off), (h, h_off), (maxval, m_off) = toks
    if w <= 0:
        raise PGMError("width must be positive", w_off)
    if h <= 0:
        raise PGMError("height must be positive", h_off)
    if maxval <= 0 or maxval > 65535:
        raise PGMError(f"maxval must be in 1..65535, got {maxval}", m_off)
    npix = w * h
    if binary:
        if pos >= len(data) or data[pos] not in _WS:
            raise PGMError("missing whitespace after maxval", pos)
        pos += 1
        bpp = 1 if maxval < 256 else 2
        need = npix * bpp
        payload = data[pos:pos + need]
        if len(payload) < need:
            raise PGMError(f"truncated payload: need {need} bytes, found {len(payload)}", pos + len(payload))
        dtype = np.uint8 if bpp == 1 else np.dtype(">u2")
        vals = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    else:
        toks = []
        for m in re.finditer(rb"#[^\r\n]*|\S+", data[pos:]):
            t = m.group()
            if t.startswith(b"#"):
                continue
            if not t.isdigit():
                raise PGMError(f"bad sample {t[:16]!r}", pos + m.start())
            toks.append(int(t))
            if len(toks) == npix:
                break
        if len(toks) < npix:
            raise PGMError(f"truncated payload: need {npix} samples, found {len(toks)}", len(data))
        vals = np.asarray(toks, dtype=np.float64)
    if vals.max(initial=0) > maxval:
        raise PGMError("sample exceeds maxval", pos)
    return Image(vals.reshape(h, w))


def pgm_write(img: Image, maxval: int = 255, comments: Iterable[str] = ()) -> bytes:
    """Encode as binary P5. Values are clamped to ``[0, maxval]`` and rounded half up."""
    if not (1 <= maxval <= 65535):
        raise ValueError(f"maxval must be in 1..65535, got {maxval}")
    q = np.floor(np.clip(img.data, 0, maxval) + 0.5)
    head = [b"P5\n"]
    for c in comments:
        head.append(b"# " + c.replace("\n", " ").encode("utf-8") + b"\n")
    head.append(f"{img.width} {img.height}\n{maxval}\n".encode("ascii"))
    payload = q.astype(np.uint8 if maxval < 256 else ">u2").tobytes()
    return b"".join(head) + payload


def read_pgm_file(path) -> Image:
    with open(path, "rb") as fh:
        return pgm_read(fh.read())


def write_pgm_file(path, img: Image, maxval: int = 255, comments: Iterable[str] = ()) -> None:
    with open(path, "wb") as fh:
        fh.write(pgm_write(img, maxval, comments))


# --- smoothing / equalisation ---------------------------------------------

def gaussian_kernel(sigma: float, mesh: float = 1.0) -> np.ndarray:
    radius = math.ceil(3.0 * sigma / mesh)
    x = np.arange(-radius, radius + 1) * mesh
    k = np.exp(-x * x / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_smooth(img: Image, sigma: float) -> Image:
    """Separable Gaussian convolution with mirror boundaries.

    ``sigma`` is in the same spatial units as ``img.mesh``; the kernel is cut
    at ``ceil(3 sigma / mesh)`` pixels and renormalised.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return img
    k = gaussian_kernel(sigma, img.mesh)
    out = ndimage.correlate1d(img.data, k, axis=0, mode="reflect")
    out = ndimage.correlate1d(out, k, axis=1, mode="reflect")
    return img.with_data(out)


def histogram_equalize(img: Image) -> Image:
    """Map each value to ``255 * #{values <= v} / N``; constant images map to 0."""
    flat = img.flat
    if flat.min() == flat.max():
        return img.with_data(np.zeros(img.shape))
    srt = np.sort(flat)
    cdf = np.searchsorted(srt, flat, side="right")
    return img.with_data((255.0 * cdf / flat.size).reshape(img.shape))


def normalize_range(img: Image, lo: float = 0.0, hi: float = 255.0) -> Image:
    """Affine min-max rescaling to ``[lo, hi]`` (constant images map to ``lo``)."""
    a, b = float(img.data.min()), float(img.data.max())
    if b == a:
        return img.with_data(np.full(img.shape, lo))
    # clip one-ulp overshoot from the division
    return img.with_data(np.clip(lo + (img.data - a) * ((hi - lo) / (b - a)), lo, hi))


# --- CSV -------------------------------------------------------------------

def csv_text(header: Sequence[str], rows: Iterable[Sequence], comments: Iterable[str] = ()) -> str:
    """Render rows as CSV with minimal quoting; ``comments`` become leading ``#`` lines."""
    buf = io.StringIO()
    for c in comments:
        buf.write("# " + c.replace("\n", " ") + "\n")
    wr = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    wr.writerow(header)
    for r in rows:
        wr.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(path, header, rows, comments=()) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(header, rows, comments))


def read_csv_rows(path) -> tuple[list[str], list[list[str]]]:
    """Inverse of :func:`write_csv`, dropping comment lines."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]
