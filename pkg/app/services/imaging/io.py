"""
Raster file I/O: 8-bit RGB PNG images, depth rasters and grayscale masks.
"""

import io
import os
import logging
import struct
from typing import Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from PIL import Image

from app.core.errors import DimensionError, ParseError

logger = logging.getLogger(__name__)

RAW_DEPTH_EXTENSIONS = (".depth", ".raw", ".bin")
_RAW_HEADER = struct.Struct("<II")

Source = Union[str, os.PathLike, bytes]


def _open(source: Source) -> Image.Image:
    if isinstance(source, bytes):
        return Image.open(io.BytesIO(source))
    return Image.open(source)


def read_rgb(source: Source) -> NDArray[np.uint8]:
    """Read any Pillow-readable image as an 8-bit RGB array; alpha is dropped."""
    try:
        with _open(source) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8).copy()
    except (OSError, ValueError) as e:
        raise ParseError(f"cannot decode image: {e}") from e


def write_png(path: Union[str, os.PathLike], image8: NDArray[np.uint8]) -> None:
    """Write an 8-bit RGB or grayscale array as PNG."""
    Image.fromarray(np.ascontiguousarray(image8)).save(path, format="PNG")


def encode_png(image8: NDArray[np.uint8]) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(image8)).save(buf, format="PNG")
    return buf.getvalue()


def decode_raw_depth(data: bytes) -> NDArray[np.float64]:
    """
    Decode a raw depth raster: 8-byte header (width, height as little-endian
    uint32) followed by width*height little-endian float32 samples.
    """
    if len(data) < _RAW_HEADER.size:
        raise ParseError("raw depth file shorter than its header", offset=len(data))
    width, height = _RAW_HEADER.unpack_from(data)
    expected = _RAW_HEADER.size + 4 * width * height
    if len(data) != expected:
        raise ParseError(f"raw depth of {width}x{height} needs {expected} bytes, got {len(data)}", offset=min(len(data), expected))
    values = np.frombuffer(data, dtype="<f4", offset=_RAW_HEADER.size)
    return values.reshape(height, width).astype(np.float64)


def encode_raw_depth(depth: np.ndarray) -> bytes:
    height, width = depth.shape
    return _RAW_HEADER.pack(width, height) + np.asarray(depth, dtype="<f4").tobytes()


def read_depth_raster(source: Source, name: Optional[str] = None) -> NDArray[np.float64]:
    """
    Read a single-channel depth raster.

    Args:
        source: Path or file content
        name: File name used to pick the decoder when source is bytes

    Returns:
        (H, W) float array of raw depth values
    """
    name = name or (os.fspath(source) if not isinstance(source, bytes) else "")
    if name.lower().endswith(RAW_DEPTH_EXTENSIONS):
        if isinstance(source, bytes):
            return decode_raw_depth(source)
        with open(source, "rb") as f:
            return decode_raw_depth(f.read())
    try:
        with _open(source) as img:
            if img.mode in ("RGB", "RGBA", "P", "LA"):
                img = img.convert("L")
            return np.asarray(img, dtype=np.float64).copy()
    except (OSError, ValueError) as e:
        raise ParseError(f"cannot decode depth raster: {e}") from e


def resize_field(field: NDArray[np.float64], size: Tuple[int, int]) -> NDArray[np.float64]:
    """Bilinear resize of a scalar field to (height, width)."""
    height, width = size
    if field.shape == (height, width):
        return field
    if height <= 0 or width <= 0:
        raise DimensionError(f"invalid target size {width}x{height}")
    img = Image.fromarray(field.astype(np.float32))
    return np.asarray(img.resize((width, height), Image.Resampling.BILINEAR), dtype=np.float64)


def read_gray_mask(source: Source, size: Tuple[int, int]) -> NDArray[np.float64]:
    """Read an 8-bit grayscale mask, resized to (height, width), scaled to [0, 1]."""
    try:
        with _open(source) as img:
            gray = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    except (OSError, ValueError) as e:
        raise ParseError(f"cannot decode mask: {e}") from e
    return np.clip(resize_field(gray, size), 0.0, 1.0)
