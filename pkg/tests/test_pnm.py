"""PPM/PGM files: round trips, header parsing, malformed input."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layoutforge.errors import DatasetError
from layoutforge.pnm import read_pgm, read_ppm, write_pgm, write_ppm


def test_ppm_round_trip_exact_after_first_quantization(tmp_path):
    r = np.random.default_rng(0)
    img = r.uniform(size=(3, 5, 7))
    p1, p2 = tmp_path / "a.ppm", tmp_path / "b.ppm"
    write_ppm(p1, img)
    once = read_ppm(p1)
    write_ppm(p2, once)
    assert p1.read_bytes() == p2.read_bytes()
    np.testing.assert_array_equal(read_ppm(p2), once)


def test_ppm_known_bytes(tmp_path):
    img = np.zeros((3, 1, 2))
    img[:, 0, 0] = [1.0, 0.0, 0.0]          # red pixel
    img[:, 0, 1] = [0.0, 0.5, 1.0]          # 0.5 rounds to 128
    p = tmp_path / "px.ppm"
    write_ppm(p, img)
    assert p.read_bytes() == b"P6\n2 1\n255\n" + bytes([255, 0, 0, 0, 128, 255])


def test_pgm_round_trip(tmp_path):
    labels = np.arange(12).reshape(3, 4) % 5
    p = tmp_path / "l.pgm"
    write_pgm(p, labels)
    np.testing.assert_array_equal(read_pgm(p), labels)


def test_header_comments_are_skipped(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5 # magic\n# a comment line\n 2 # width\n2\n255\n" +
                  bytes([0, 1, 2, 3]))
    np.testing.assert_array_equal(read_pgm(p), [[0, 1], [2, 3]])


def test_rejects_wrong_magic(tmp_path):
    p = tmp_path / "x"
    p.write_bytes(b"P3\n1 1\n255\n0 0 0")
    with pytest.raises(DatasetError, match="expected P6"):
        read_ppm(p)


def test_rejects_bad_maxval(tmp_path):
    p = tmp_path / "x"
    p.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
    with pytest.raises(DatasetError, match="maxval"):
        read_pgm(p)


def test_rejects_short_pixel_data(tmp_path):
    p = tmp_path / "x"
    p.write_bytes(b"P6\n2 2\n255\n" + b"\x00" * 5)
    with pytest.raises(DatasetError, match="pixel bytes"):
        read_ppm(p)


def test_rejects_truncated_header(tmp_path):
    p = tmp_path / "x"
    p.write_bytes(b"P6\n2 ")
    with pytest.raises(DatasetError, match="truncated"):
        read_ppm(p)


def test_rejects_bad_shapes(tmp_path):
    with pytest.raises(DatasetError):
        write_ppm(tmp_path / "x", np.zeros((1, 4, 4)))
    with pytest.raises(DatasetError):
        write_pgm(tmp_path / "x", np.zeros((2, 2, 2)))
    with pytest.raises(DatasetError):
        write_pgm(tmp_path / "x", np.full((2, 2), 300))


def test_values_clip_into_byte_range(tmp_path):
    img = np.array([[[-0.5]], [[0.25]], [[1.5]]])
    p = tmp_path / "clip.ppm"
    write_ppm(p, img)
    out = read_ppm(p)
    assert out[0, 0, 0] == 0.0
    assert out[2, 0, 0] == 1.0
    assert out[1, 0, 0] == pytest.approx(64 / 255)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_pgm_random_round_trips(tmp_path_factory, h, w, seed):
    labels = np.random.default_rng(seed).integers(0, 256, size=(h, w))
    p = tmp_path_factory.mktemp("pnm") / "r.pgm"
    write_pgm(p, labels)
    np.testing.assert_array_equal(read_pgm(p), labels)
