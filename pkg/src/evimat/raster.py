"""Float raster type and its two on-disk forms.

FRAS is the bit-exact interchange format used by every numeric
consumer: magic ``FRAS``, then width/height/channels as u32 little
endian, then the float32 payload little endian, planar (all of channel
0 row-major, then channel 1, ...). PNG output is 8-bit grayscale and
only for human-viewable renders.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

MAGIC = b"FRAS"
_HEADER = struct.Struct("<4sIII")


class FrasFormatError(ValueError):
    """Raised for malformed FRAS files (magic, size, non-finite data)."""


class RangeError(ValueError):
    """Raised when raster values are outside the documented range."""


@dataclass
class Raster:
    """Planar float32 raster, shape (channels, height, width)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[None, :, :]
        if arr.ndim != 3:
            raise ValueError(f"raster needs 2 or 3 dims, got shape {arr.shape}")
        self.data = np.ascontiguousarray(arr, dtype=np.float32)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def plane(self, i: int = 0) -> np.ndarray:
        return self.data[i]


def save_fras(r: Raster, path: str | Path) -> None:
    data = r.data
    if not np.all(np.isfinite(data)):
        raise FrasFormatError("refusing to save non-finite raster")
    header = _HEADER.pack(MAGIC, r.width, r.height, r.channels)
    payload = data.astype("<f4", copy=False).tobytes()
    Path(path).write_bytes(header + payload)


def load_fras(path: str | Path) -> Raster:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise FrasFormatError(f"{path}: truncated header")
    magic, width, height, channels = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FrasFormatError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * width * height * channels
    if len(blob) != expected:
        raise FrasFormatError(
            f"{path}: payload is {len(blob) - _HEADER.size} bytes, "
            f"expected {expected - _HEADER.size}"
        )
    flat = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    if not np.all(np.isfinite(flat)):
        raise FrasFormatError(f"{path}: non-finite values in payload")
    return Raster(flat.reshape(channels, height, width).copy())


def save_png8(r: Raster, path: str | Path) -> None:
    """Write a 1-channel raster with values in [0, 1] as 8-bit grayscale.

    Quantization is round-half-up: byte = floor(v * 255 + 0.5).
    """
    if r.channels != 1:
        raise ValueError(f"save_png8 wants 1 channel, got {r.channels}")
    plane = r.plane(0)
    if plane.size and (plane.min() < 0.0 or plane.max() > 1.0):
        raise RangeError("png values must lie in [0, 1]")
    quant = np.floor(plane.astype(np.float64) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(quant, mode="L").save(path, format="PNG")


def png8_bytes(plane: np.ndarray) -> bytes:
    """In-memory PNG encode of a [0,1] float plane (same quantization)."""
    import io

    quant = np.floor(np.asarray(plane, dtype=np.float64) * 255.0 + 0.5).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(quant, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def minmax_normalize(plane: np.ndarray) -> np.ndarray:
    """Affine map of a finite plane onto [0, 1]; constant maps go to 0."""
    plane = np.asarray(plane, dtype=np.float64)
    lo = float(plane.min())
    hi = float(plane.max())
    if hi <= lo:
        return np.zeros_like(plane)
    return (plane - lo) / (hi - lo)
