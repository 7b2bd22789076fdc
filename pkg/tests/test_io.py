import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dinf import io as dio
from dinf.errors import DataError, ParseError
from dinf.reference import sample_sphere


def test_p2_scaling(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P2\n# comment\n2 2\n255\n0 85\n170 255\n")
    np.testing.assert_allclose(dio.read_pgm(p), [[0, 1 / 3], [2 / 3, 1]])


@settings(max_examples=30, deadline=None)
@given(
    arrays(np.uint16, st.tuples(st.integers(1, 6), st.integers(1, 6), st.sampled_from([1, 3]))),
    st.sampled_from([255, 65535]),
    st.booleans(),
)
def test_roundtrip(tmp_path_factory, raw, maxval, binary):
    img = (raw.astype(np.int64) % (maxval + 1)) / maxval
    if img.shape[2] == 1:
        img = img[..., 0]
    path = tmp_path_factory.mktemp("pgm") / "x.pgm"
    dio.write_pgm(path, img, maxval, binary)
    np.testing.assert_array_equal(dio.read_pgm(path), img)


def test_truncated_payload(tmp_path):
    p = tmp_path / "t.pgm"
    p.write_bytes(b"P5\n4 4\n255\n" + bytes(10))
    with pytest.raises(ParseError, match="needs 16 bytes.*found 10"):
        dio.read_pgm(p)


@pytest.mark.parametrize(
    "blob,msg",
    [(b"P9\n1 1\n255\n", "magic"), (b"P2\n0 1\n255\n0", "width"), (b"P2\n1 1\n70000\n0", "maxval"),
     (b"P2\n2 1\n255\n3", "expected 2"), (b"P2\n1", "height")],
)
def test_bad_headers(tmp_path, blob, msg):
    p = tmp_path / "b.pgm"
    p.write_bytes(blob)
    with pytest.raises(ParseError, match=msg):
        dio.read_pgm(p)


def test_write_rejects_bad_shape(tmp_path):
    with pytest.raises(DataError):
        dio.write_pgm(tmp_path / "x.pgm", np.zeros((2, 2, 2)))
    with pytest.raises(DataError):
        dio.write_pgm(tmp_path / "x.pgm", np.zeros((2, 2)), maxval=100)


def test_filters_constant_and_ramp():
    c = np.full((16, 16), 0.3)
    gx, gy = dio.sobel_gradients(c, 1.0)
    assert max(np.abs(gx).max(), np.abs(gy).max()) < 1e-15
    assert np.abs(dio.laplace_filter(c, 1.0)).max() < 1e-15
    W = 16
    ramp = np.tile(np.arange(W) / (W - 1), (12, 1))
    gx, gy = dio.sobel_gradients(ramp, 1.0)
    np.testing.assert_allclose(gx[:, 1:-1], 1 / (W - 1))  # one pixel step
    np.testing.assert_allclose(gy[1:-1, 1:-1], 0.0, atol=1e-15)


def test_laplace_of_quadratic():
    # I = x^2 in pixel units, second derivative 2 per pixel^2
    x = np.arange(20.0)
    img = np.tile(x**2, (8, 1)) * 1e-3
    lap = dio.laplace_filter(img, 10.0)
    np.testing.assert_allclose(lap[2:-2, 2:-2], 2e-3 * 10.0)


def test_pixel_coords_centres():
    c = dio.pixel_coords(2, 4)
    np.testing.assert_allclose(c[:4, 0], [-0.75, -0.25, 0.25, 0.75])
    np.testing.assert_allclose(c[::4, 1], [-0.5, 0.5])


def test_psnr_examples():
    a = np.random.default_rng(0).random((8, 8))
    assert dio.psnr(a, a) == dio.PSNR_INF
    assert dio.psnr(a + 0.1, a) == pytest.approx(20.0)
    assert dio.psnr(a + 0.1, a, dc_align=True) == dio.PSNR_INF
    board = np.indices((4, 4)).sum(0) % 2
    assert dio.psnr(board, 1 - board) == pytest.approx(0.0)
    with pytest.raises(DataError):
        dio.psnr(a, a[:4])
    assert dio.mae(a, a + 0.5) == pytest.approx(0.5)
    assert dio.l2_error(a, a + 0.5) == pytest.approx(0.5)


def test_pointcloud_read(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# pts\n0 0 1 0\n0.5 0.5 0 1\n-0.2 0.1 0.6 0.8\n")
    pc = dio.read_pointcloud(p)
    assert len(pc) == 3
    p.write_text("0 0 1 0\n0 0 1 0 0\n")
    with pytest.raises(ParseError, match=":2:"):
        dio.read_pointcloud(p)
    p.write_text("0 0 1.1 0\n")
    with pytest.raises(ParseError, match="normal length"):
        dio.read_pointcloud(p)
    p.write_text("2 0 1 0\n")
    with pytest.raises(ParseError, match="outside"):
        dio.read_pointcloud(p)


def test_pointcloud_circle_roundtrip(tmp_path):
    pts, nrm = sample_sphere(512, 2)
    dio.write_pointcloud(tmp_path / "c.txt", pts, nrm)
    pc = dio.read_pointcloud(tmp_path / "c.txt")
    assert len(pc) == 512
    np.testing.assert_array_equal(pc.points, pts)


def test_csv_roundtrip(tmp_path):
    v = np.random.default_rng(1).normal(size=(5, 3))
    dio.write_csv_field(tmp_path / "f.csv", v)
    np.testing.assert_array_equal(dio.read_csv_field(tmp_path / "f.csv"), v)


def test_unit_range():
    np.testing.assert_allclose(dio.to_unit_range([2.0, 4.0, 3.0]), [0, 1, 0.5])
    assert not dio.to_unit_range([1.0, 1.0]).any()
