import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from amoebamorph.grid import (Image, PGMError, csv_text, gaussian_smooth, histogram_equalize,
                              normalize_range, pgm_read, pgm_write, read_csv_rows, write_csv)

small_ints = arrays(np.int64, st.tuples(st.integers(1, 9), st.integers(1, 9)), elements=st.integers(0, 255))
small_reals = arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(2, 12)),
                     elements=st.floats(-100, 100, allow_nan=False))


def test_image_rejects_nonfinite_and_bad_mesh():
    with pytest.raises(ValueError):
        Image(np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError):
        Image(np.ones((2, 2)), mesh=0.0)
    with pytest.raises(ValueError):
        Image.from_flat(2, 2, [1, 2, 3])


def test_image_is_read_only():
    img = Image(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        img.data[0, 0] = 1.0


def test_p2_header_transcription():
    img = pgm_read(b"P2 2 2 255\n0 10 20 30\n")
    assert img.shape == (2, 2)
    assert img.flat.tolist() == [0, 10, 20, 30]
    assert img.mesh == 1.0


def test_p2_with_comments():
    img = pgm_read(b"P2\n# a comment\n3 1\n# another\n7\n1 2 7\n")
    assert img.flat.tolist() == [1, 2, 7]


def test_p5_truncated_payload():
    with pytest.raises(PGMError, match="offset"):
        pgm_read(b"P5 2 2 255\n" + bytes([1, 2, 3]))


def test_p5_sixteen_bit():
    img = Image(np.array([[0.0, 1000.0], [65535.0, 3.0]]))
    assert pgm_read(pgm_write(img, 65535)) == img


@pytest.mark.parametrize("bad", [b"P3 1 1 255\n0", b"P5 2 2 0\n\x00\x00\x00\x00", b"P5 x 2 255\n",
                                 b"P2 2 1 255\n1", b"P2 1 1 70000\n1"])
def test_malformed_headers(bad):
    with pytest.raises(PGMError):
        pgm_read(bad)


def test_write_constant_payload():
    raw = pgm_write(Image(np.full((3, 4), 5.0)), 255)
    assert raw.endswith(bytes([5]) * 12)


def test_write_clamps():
    raw = pgm_write(Image(np.array([[-3.0, 300.0]])), 255)
    assert raw[-2:] == bytes([0, 255])


def test_write_deterministic_with_comments():
    img = Image(np.arange(6.0).reshape(2, 3))
    assert pgm_write(img, 255, ["x"]) == pgm_write(img, 255, ["x"])
    assert pgm_read(pgm_write(img, 255, ["a comment"])) == img


@given(small_ints)
def test_pgm_roundtrip(arr):
    img = Image(arr.astype(float))
    assert pgm_read(pgm_write(img, 255)) == img


def test_smooth_identity_and_constant():
    img = Image(np.random.default_rng(0).random((8, 9)))
    assert gaussian_smooth(img, 0.0) == img
    const = Image(np.full((7, 5), 3.25))
    np.testing.assert_allclose(gaussian_smooth(const, 2.0).data, 3.25, rtol=0, atol=1e-12)


def test_smooth_preserves_mass_on_mirror_symmetric_image():
    # a mirror-extended image keeps its sum under a mirror-boundary convolution
    rng = np.random.default_rng(1)
    half = rng.random((8, 8))
    full = np.block([[half, half[:, ::-1]], [half[::-1], half[::-1, ::-1]]])
    out = gaussian_smooth(Image(full), 1.3).data
    assert abs(out.sum() - full.sum()) <= 1e-9 * full.sum()


@given(small_reals, small_reals, st.floats(-3, 3), st.floats(-3, 3), st.floats(0.3, 2.5))
def test_smooth_linear(a, b, ca, cb, sigma):
    if a.shape != b.shape:
        b = np.resize(b, a.shape)
    lhs = gaussian_smooth(Image(ca * a + cb * b), sigma).data
    rhs = ca * gaussian_smooth(Image(a), sigma).data + cb * gaussian_smooth(Image(b), sigma).data
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12 * max(1.0, np.abs(lhs).max()))


def test_smooth_commutes_with_translation_of_periodic_pattern():
    x = np.arange(64)
    pattern = np.cos(2 * np.pi * x / 16)[None, :] * np.ones((20, 1))
    shifted = np.roll(pattern, 4, axis=1)
    a = gaussian_smooth(Image(pattern), 1.5).data
    b = gaussian_smooth(Image(shifted), 1.5).data
    np.testing.assert_allclose(np.roll(a, 4, axis=1)[:, 12:-12], b[:, 12:-12], atol=1e-9)


def test_equalize_examples():
    assert np.all(histogram_equalize(Image(np.full((3, 3), 7.0))).data == 0)
    two = histogram_equalize(Image(np.array([[1.0, 1.0, 5.0, 5.0]]))).flat
    assert two.tolist() == [127.5, 127.5, 255.0, 255.0]
    ramp = histogram_equalize(Image(np.arange(10.0)[None, :])).flat
    assert np.all(np.diff(ramp) > 0)


@given(small_reals)
def test_equalize_preserves_order(arr):
    out = histogram_equalize(Image(arr)).flat
    v = arr.ravel()
    assert out.min() >= 0 and out.max() <= 255
    i, j = np.triu_indices(len(v), 1)
    assert np.all(np.sign(out[i] - out[j])[v[i] != v[j]] == np.sign(v[i] - v[j])[v[i] != v[j]])
    assert np.all(out[i][v[i] == v[j]] == out[j][v[i] == v[j]])


def test_normalize_range():
    out = normalize_range(Image(np.array([[2.0, 4.0, 3.0]])))
    assert out.flat.tolist() == [0.0, 255.0, 127.5]


def test_csv_quoting_and_roundtrip(tmp_path):
    text = csv_text(["a", "b"], [(1, 'x,"y"'), (2.5, "z")], comments=["note"])
    assert text.splitlines()[0] == "# note"
    assert '"x,""y"""' in text
    p = tmp_path / "t.csv"
    write_csv(p, ["a", "b"], [(1, 'x,"y"')])
    head, rows = read_csv_rows(p)
    assert head == ["a", "b"] and rows == [["1", 'x,"y"']]
