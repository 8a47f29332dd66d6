"""FRAS round-trip and PNG quantization contracts."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from evimat.raster import (
    FrasFormatError,
    RangeError,
    Raster,
    load_fras,
    minmax_normalize,
    save_fras,
    save_png8,
)


@st.composite
def rasters(draw):
    c = draw(st.integers(1, 4))
    h = draw(st.integers(1, 12))
    w = draw(st.integers(1, 12))
    vals = draw(
        st.lists(
            st.floats(allow_nan=False, allow_infinity=False, width=32),
            min_size=c * h * w,
            max_size=c * h * w,
        )
    )
    return Raster(np.array(vals, dtype=np.float32).reshape(c, h, w))


class TestFras:
    @settings(max_examples=60, deadline=None)
    @given(rasters())
    def test_round_trip_identity(self, r):
        import os
        import tempfile

        with tempfile.TemporaryDirectory() as d:
            path = os.path.join(d, "r.fras")
            save_fras(r, path)
            back = load_fras(path)
        assert back.data.shape == r.data.shape
        assert np.array_equal(back.data, r.data)

    def test_file_layout_1x1x1(self, tmp_path):
        path = tmp_path / "one.fras"
        save_fras(Raster(np.array([[0.5]], dtype=np.float32)), path)
        blob = path.read_bytes()
        assert len(blob) == 16 + 4
        assert blob[:4] == b"FRAS"
        assert struct.unpack("<III", blob[4:16]) == (1, 1, 1)
        assert struct.unpack("<f", blob[16:])[0] == 0.5

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.fras"
        path.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(FrasFormatError):
            load_fras(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "short.fras"
        save_fras(Raster(np.zeros((1, 2, 2), dtype=np.float32)), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-3])
        with pytest.raises(FrasFormatError):
            load_fras(path)

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "long.fras"
        save_fras(Raster(np.zeros((1, 2, 2), dtype=np.float32)), path)
        path.write_bytes(path.read_bytes() + b"zz")
        with pytest.raises(FrasFormatError):
            load_fras(path)

    def test_nonfinite_payload_rejected(self, tmp_path):
        path = tmp_path / "nan.fras"
        header = b"FRAS" + struct.pack("<III", 1, 1, 1)
        path.write_bytes(header + struct.pack("<f", float("nan")))
        with pytest.raises(FrasFormatError):
            load_fras(path)

    def test_nonfinite_save_rejected(self, tmp_path):
        r = Raster(np.zeros((1, 1, 1), dtype=np.float32))
        r.data[0, 0, 0] = np.nan
        with pytest.raises(FrasFormatError):
            save_fras(r, tmp_path / "nan2.fras")


class TestPng:
    @pytest.mark.parametrize(
        "value,expected", [(1.0, 255), (0.0, 0), (0.5, 128)]
    )
    def test_quantization_round_half_up(self, tmp_path, value, expected):
        path = tmp_path / "q.png"
        save_png8(Raster(np.full((3, 3), value, dtype=np.float32)), path)
        px = np.array(Image.open(path))
        assert px.dtype == np.uint8
        assert np.all(px == expected)

    def test_range_check(self, tmp_path):
        with pytest.raises(RangeError):
            save_png8(Raster(np.array([[1.5]], dtype=np.float32)), tmp_path / "x.png")
        with pytest.raises(RangeError):
            save_png8(Raster(np.array([[-0.1]], dtype=np.float32)), tmp_path / "y.png")

    def test_channel_check(self, tmp_path):
        with pytest.raises(ValueError):
            save_png8(Raster(np.zeros((2, 2, 2), dtype=np.float32)), tmp_path / "c.png")


def test_minmax_normalize():
    x = np.array([[1.0, 3.0], [2.0, 1.0]])
    out = minmax_normalize(x)
    assert out.min() == 0.0 and out.max() == 1.0
    assert np.all(minmax_normalize(np.full((2, 2), 7.0)) == 0.0)
