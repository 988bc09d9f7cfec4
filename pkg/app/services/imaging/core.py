"""
Pixel primitives shared by every distortion.

Images are float64 arrays of shape (H, W, 3) with samples in [0, 1]; scalar
masks are (H, W) float arrays in [0, 1]; bit masks are (H, W) bool arrays.
Angles are in degrees, measured in image coordinates (x right, y down).
"""

import math
import logging
from typing import Tuple

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from app.core.errors import DimensionError, ParameterError

logger = logging.getLogger(__name__)

NormalizedImage = NDArray[np.float64]
Kernel2D = NDArray[np.float64]
ScalarMask = NDArray[np.float64]
BitMask = NDArray[np.bool_]

MIN_SIDE = 8
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
FEATHER_WIDTH = 2


def check_image(img: np.ndarray, name: str = "image") -> None:
    """Raise DimensionError unless img is an (H, W, 3) raster of at least 8x8."""
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionError(f"{name} must have shape (H, W, 3), got {img.shape}")
    if img.shape[0] < MIN_SIDE or img.shape[1] < MIN_SIDE:
        raise DimensionError(f"{name} must be at least {MIN_SIDE}x{MIN_SIDE}, got {img.shape[1]}x{img.shape[0]}")


def check_same_size(img: np.ndarray, field: np.ndarray, name: str) -> None:
    if field.shape[:2] != img.shape[:2]:
        raise DimensionError(f"{name} is {field.shape[1]}x{field.shape[0]}, image is {img.shape[1]}x{img.shape[0]}")


def normalize(image8: np.ndarray) -> NormalizedImage:
    """Convert an 8-bit RGB raster to a normalized image."""
    check_image(image8)
    return image8.astype(np.float64) / 255.0


def denormalize(img: NormalizedImage) -> NDArray[np.uint8]:
    """Round a normalized image back to 8 bits (round half up)."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def convolve(img: NormalizedImage, kernel: Kernel2D) -> NormalizedImage:
    """Convolve every channel with kernel, replicating edge pixels."""
    if kernel.shape[0] > img.shape[0] or kernel.shape[1] > img.shape[1]:
        raise DimensionError(
            f"kernel {kernel.shape[1]}x{kernel.shape[0]} is larger than image {img.shape[1]}x{img.shape[0]}"
        )
    out = ndimage.convolve(img, kernel[:, :, None], mode="nearest")
    return np.clip(out, 0.0, 1.0)


def line_kernel(length: int, angle: float) -> Kernel2D:
    """
    Uniform motion PSF: `length` pixels stepped one at a time along the major
    axis of the segment through the kernel center at `angle`.

    Args:
        length: Number of taps (>= 1); even lengths sit one tap off center
        angle: Orientation in degrees; angle and angle + 180 give the same kernel

    Returns:
        Normalized kernel with odd height and width and exactly `length` taps
    """
    if length < 1:
        raise ParameterError(f"line length must be >= 1, got {length}")
    theta = math.radians(angle % 180.0)
    c, s = math.cos(theta), math.sin(theta)
    k = np.arange(-((length - 1) // 2), length // 2 + 1)
    if abs(c) >= abs(s):
        dx = k
        dy = np.floor(k * (s / c) + 0.5).astype(int)
    else:
        dy = k
        dx = np.floor(k * (c / s) + 0.5).astype(int)
    rx = int(np.abs(dx).max())
    ry = int(np.abs(dy).max())
    kernel = np.zeros((2 * ry + 1, 2 * rx + 1))
    kernel[dy + ry, dx + rx] = 1.0
    return kernel / kernel.sum()


def gaussian_kernel_1d(std: float) -> NDArray[np.float64]:
    if not std > 0:
        raise ParameterError(f"gaussian std must be positive, got {std}")
    radius = math.ceil(3.0 * std)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-(x * x) / (2.0 * std * std))
    return weights / weights.sum()


def gaussian_kernel(std: float) -> Kernel2D:
    """Isotropic Gaussian truncated at radius ceil(3*std), normalized."""
    g = gaussian_kernel_1d(std)
    return np.outer(g, g)


def gaussian_blur(img: NormalizedImage, std: float) -> NormalizedImage:
    """Separable Gaussian blur with edge replication; equals convolve(img, gaussian_kernel(std))."""
    g = gaussian_kernel_1d(std)
    out = ndimage.correlate1d(img, g, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, g, axis=1, mode="nearest")
    return np.clip(out, 0.0, 1.0)


def screen_blend(base: NormalizedImage, overlay: ScalarMask, alpha: float) -> NormalizedImage:
    """
    Screen compositing 1 - (1 - base) * (1 - alpha * overlay) on all channels.

    Evaluated as base + (1 - base) * alpha * overlay, which is the same value
    and never drops below base.
    """
    check_same_size(base, overlay, "overlay")
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"blend alpha must lie in [0, 1], got {alpha}")
    m = (alpha * overlay)[:, :, None]
    return np.minimum(base + (1.0 - base) * m, 1.0)


def rgb_to_luma(img: NormalizedImage) -> ScalarMask:
    """BT.601 luma."""
    return img @ LUMA_WEIGHTS


def luma_replace(img: NormalizedImage, new_luma: ScalarMask) -> NormalizedImage:
    """
    Rescale channels so the luma of the result equals new_luma.

    Channels are scaled by new/old luma to keep chroma ratios. A pixel whose
    scaled channels leave [0, 1] is clipped and then mixed toward white by the
    amount that restores the target luma. Black pixels become gray.
    """
    check_same_size(img, new_luma, "luma")
    target = np.clip(new_luma, 0.0, 1.0)
    old = rgb_to_luma(img)
    dark = old <= 0.0
    ratio = np.divide(target, old, out=np.zeros_like(old), where=~dark)
    out = img * ratio[:, :, None]
    out[dark] = target[dark][:, None]

    over = out.max(axis=2) > 1.0
    if np.any(over):
        clipped = np.clip(out[over], 0.0, 1.0)
        lc = clipped @ LUMA_WEIGHTS
        lt = target[over]
        beta = np.divide(lt - lc, 1.0 - lc, out=np.ones_like(lc), where=lc < 1.0)
        out[over] = clipped + beta[:, None] * (1.0 - clipped)
    return out


def feather_alpha(mask: BitMask, width: int = FEATHER_WIDTH) -> ScalarMask:
    """
    Compositing weight for a masked layer: 1 deep inside the mask, a linear ramp
    over the `width` pixels along its inner edge, 0 outside.
    """
    if not mask.any():
        return np.zeros(mask.shape)
    if mask.all():
        return np.ones(mask.shape)
    inside = ndimage.distance_transform_edt(mask)
    return np.clip(inside / float(width), 0.0, 1.0)


def composite(base: NormalizedImage, layer: NormalizedImage, alpha: ScalarMask) -> NormalizedImage:
    """Cross-fade layer over base; alpha 0 keeps base bit-exact, alpha 1 takes layer bit-exact."""
    a = alpha[:, :, None]
    return base * (1.0 - a) + layer * a


def dilate(mask: BitMask, radius: int) -> BitMask:
    """Grow a mask by `radius` pixels (chessboard distance)."""
    if radius <= 0:
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=np.ones((3, 3), bool), iterations=radius)


def blur_scale(shape: Tuple[int, ...]) -> float:
    """Resolution factor s = max(1, min(W, H) / 512) applied to blur widths."""
    return max(1.0, min(shape[0], shape[1]) / 512.0)
