import numpy as np
import pytest

from amoebamorph.contours import circle_points, extract_zero_level, init_circle
from amoebamorph.grid import Image
from amoebamorph.plotting import plot_amplification, plot_contour, plot_map, plot_series

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _draw(kind, path):
    img = Image(np.add.outer(np.arange(20.0), np.arange(30.0)))
    if kind == "amp":
        plot_amplification([5, 1, 3], [1.8, 0.9, 0.5], path, analytic=[np.nan] * 3, continuum=[1.84, 0.92, 0.52],
                           title="t")
    elif kind == "contour":
        u = init_circle((20, 30), (15, 10), 6.0)
        plot_contour(img, extract_zero_level(u), path, truth=circle_points((15, 10), 6.0), title="c")
    elif kind == "series":
        plot_series([3, 2, 1, 1], path, "area")
    else:
        plot_map(img, path, title="m")


@pytest.mark.parametrize("kind", ["amp", "contour", "series", "map"])
def test_png_written_and_reproducible(tmp_path, kind):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    _draw(kind, a)
    _draw(kind, b)
    data = a.read_bytes()
    assert data.startswith(PNG_MAGIC)
    assert data == b.read_bytes()
    assert b"Software" not in data


def test_empty_contour_is_drawable(tmp_path):
    from amoebamorph.contours import Contour
    plot_contour(Image(np.zeros((5, 5))), Contour([]), tmp_path / "e.png")
    assert (tmp_path / "e.png").read_bytes().startswith(PNG_MAGIC)
