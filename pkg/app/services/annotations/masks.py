"""
Mask geometry for COCO segmentations: run-length decoding through
pycocotools, polygon rasterization, moment-based orientation and box overlap.
"""

import math
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from pycocotools import mask as mask_utils

from app.core.errors import GeometryError, LengthError, ParseError

BitMask = NDArray[np.bool_]
BBox = Tuple[float, float, float, float]
RunLengths = Union[Sequence[int], str]


def _string_run_lengths(s: str) -> List[int]:
    """
    Run lengths held in a compressed counts string. Only used to vet a string
    before pycocotools decodes it, since its decoder trusts the run total.
    """
    counts: List[int] = []
    p = 0
    while p < len(s):
        x = 0
        k = 0
        more = True
        while more:
            if p >= len(s):
                raise ParseError("truncated compressed run-length string", offset=p)
            c = ord(s[p]) - 48
            if not 0 <= c < 64:
                raise ParseError(f"invalid character {s[p]!r} in compressed run lengths", offset=p)
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            p += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    return counts


def check_run_lengths(rle: RunLengths, size: Tuple[int, int]) -> None:
    """
    Raise unless the runs are non-negative and cover the raster exactly.

    Args:
        rle: Uncompressed counts or a compressed counts string
        size: (height, width) of the raster
    """
    height, width = size
    counts = _string_run_lengths(rle) if isinstance(rle, str) else list(rle)
    if any(isinstance(v, bool) or not isinstance(v, (int, np.integer)) for v in counts):
        raise LengthError("run lengths must be integers")
    if any(v < 0 for v in counts):
        raise LengthError("run lengths must be non-negative")
    total = sum(int(v) for v in counts)
    if total != height * width:
        raise LengthError(f"run lengths sum to {total}, raster has {height * width} pixels")


def to_coco_rle(rle: RunLengths, size: Tuple[int, int]) -> Dict[str, Any]:
    """Checked pycocotools RLE object for uncompressed counts or a compressed string."""
    check_run_lengths(rle, size)
    height, width = size
    if isinstance(rle, str):
        return {"size": [height, width], "counts": rle.encode("ascii")}
    return mask_utils.frPyObjects({"size": [height, width], "counts": [int(v) for v in rle]}, height, width)


def decode_rle(rle: RunLengths, size: Tuple[int, int]) -> BitMask:
    """
    Decode a COCO run-length segmentation.

    Args:
        rle: Column-major counts, background run first, or the compressed counts string
        size: (height, width) of the raster

    Returns:
        Boolean mask of the given size
    """
    return mask_utils.decode(to_coco_rle(rle, size)).astype(bool)


def encode_rle(mask: BitMask) -> Dict[str, Any]:
    """COCO compressed RLE of a mask, counts as a str so it serializes to JSON."""
    encoded = mask_utils.encode(np.asfortranarray(np.asarray(mask, dtype=np.uint8)))
    return {"size": [int(v) for v in encoded["size"]], "counts": encoded["counts"].decode("ascii")}


def rasterize_polygon(points: Sequence[float], width: int, height: int) -> BitMask:
    """
    Even-odd fill of a polygon given as a flat [x0, y0, x1, y1, ...] list.
    A pixel is set when its center (x + 0.5, y + 0.5) lies inside.
    """
    coords = np.asarray(points, dtype=np.float64)
    if coords.ndim != 1 or coords.size % 2 or coords.size < 6:
        raise GeometryError("polygon needs at least 3 vertices")
    if not np.all(np.isfinite(coords)):
        raise GeometryError("polygon coordinates must be finite")
    xs = coords[0::2]
    ys = coords[1::2]
    mask = np.zeros((height, width), dtype=bool)
    centers_x = np.arange(width) + 0.5
    centers_y = np.arange(height) + 0.5

    for x0, y0, x1, y1 in zip(xs, ys, np.roll(xs, -1), np.roll(ys, -1)):
        if y0 == y1:
            continue
        lo, hi = min(y0, y1), max(y0, y1)
        # rows whose center lies in the half-open span [lo, hi)
        r0 = max(0, math.ceil(lo - 0.5))
        r1 = min(height, math.ceil(hi - 0.5))
        if r0 >= r1:
            continue
        rows = centers_y[r0:r1]
        x_cross = x0 + (rows - y0) * (x1 - x0) / (y1 - y0)
        mask[r0:r1] ^= centers_x[None, :] < x_cross[:, None]
    return mask


def bbox_mask(bbox: BBox, width: int, height: int) -> BitMask:
    """Mask of the pixels whose centers fall inside the box."""
    x, y, w, h = bbox
    mask = np.zeros((height, width), dtype=bool)
    c0 = max(0, math.ceil(x - 0.5))
    c1 = min(width, math.ceil(x + w - 0.5))
    r0 = max(0, math.ceil(y - 0.5))
    r1 = min(height, math.ceil(y + h - 0.5))
    if c0 < c1 and r0 < r1:
        mask[r0:r1, c0:c1] = True
    return mask


def mask_orientation(mask: BitMask) -> float:
    """
    Angle in [0, 180) between the x-axis and the major axis of the mask's
    moment ellipse. Isotropic masks return 0.
    """
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        raise GeometryError("orientation of an empty mask")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    mu20 = float(np.mean(dx * dx))
    mu02 = float(np.mean(dy * dy))
    mu11 = float(np.mean(dx * dy))
    scale = max(mu20 + mu02, 1e-12)
    if abs(mu11) <= 1e-12 * scale and abs(mu20 - mu02) <= 1e-12 * scale:
        return 0.0
    theta = 0.5 * math.degrees(math.atan2(2.0 * mu11, mu20 - mu02))
    return theta % 180.0


def bbox_iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    if union <= 0:
        return 0.0
    return min(1.0, inter / union)


def mask_mean_over(mask: BitMask, field: np.ndarray) -> float:
    """Mean of field over the set pixels of mask."""
    if mask.shape != field.shape[:2]:
        raise GeometryError(f"mask shape {mask.shape} does not match field shape {field.shape[:2]}")
    if not mask.any():
        raise GeometryError("mean over an empty mask")
    return float(field[mask].mean())
