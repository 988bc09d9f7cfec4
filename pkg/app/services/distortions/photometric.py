"""
Global photometric distortions and local backlight.

Global kinds take an intensity level 1-5; each level indexes a fixed
parameter table below.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.fft import dctn, idctn

from app.core.errors import GeometryError, InapplicableDistortionError, ParameterError
from app.models.distortion import ContrastDirection
from app.services.annotations.coco import AnnotationSet, ObjectAnnotation
from app.services.imaging.core import (
    BitMask,
    NormalizedImage,
    blur_scale,
    check_same_size,
    composite,
    convolve,
    feather_alpha,
    gaussian_blur,
    line_kernel,
    luma_replace,
    rgb_to_luma,
)

logger = logging.getLogger(__name__)

IntensityLevel = int
LEVELS = range(1, 6)

NOISE_STD = (0.02, 0.04, 0.06, 0.09, 0.13)
CONTRAST_FACTOR = (1.25, 1.5, 1.8, 2.2, 2.7)
JPEG_QUALITY = (50, 35, 25, 15, 8)
MOTION_LENGTH = (5, 9, 13, 19, 27)
DEFOCUS_STD = (1.0, 2.0, 3.5, 5.0, 7.0)

BACKLIGHT_CUTS = ((0.25, 0.6), (0.33, 0.66), (0.3, 0.75))
GAIN_RANGE = (0.5, 2.5)
MIN_PEAK_GAIN = 1.6

BLOCK = 8

# Standard JPEG luminance quantization table (quality 50)
LUMINANCE_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)

# JFIF full-range RGB -> YCbCr
_RGB_TO_YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_YCC_TO_RGB = np.linalg.inv(_RGB_TO_YCC)
_CHROMA_OFFSET = np.array([0.0, 128.0, 128.0])


def check_level(level: IntensityLevel) -> int:
    if isinstance(level, bool) or int(level) != level or level not in LEVELS:
        raise ParameterError(f"intensity level must be an integer in 1..5, got {level}")
    return int(level)


def gaussian_noise(img: NormalizedImage, level: IntensityLevel, rng: np.random.Generator) -> NormalizedImage:
    """Add zero-mean i.i.d. Gaussian noise to every sample and clamp."""
    std = NOISE_STD[check_level(level) - 1]
    return np.clip(img + rng.normal(0.0, std, img.shape), 0.0, 1.0)


def adjust_contrast(img: NormalizedImage, level: IntensityLevel, direction: ContrastDirection) -> NormalizedImage:
    """
    Linear stretch about mid-gray: v -> 0.5 + c (v - 0.5).

    Args:
        img: Input image
        level: Intensity level 1-5
        direction: increase uses c, decrease uses 1 / c

    Returns:
        Clamped image
    """
    c = CONTRAST_FACTOR[check_level(level) - 1]
    if ContrastDirection(direction) is ContrastDirection.DECREASE:
        c = 1.0 / c
    return np.clip(0.5 + c * (img - 0.5), 0.0, 1.0)


def quantization_table(quality: int) -> NDArray[np.float64]:
    """
    Luminance table scaled by the IJG quality rule, entries clamped to
    [1, 255]. The DC step is 1 so flat regions keep their level.
    """
    if not 1 <= quality <= 100:
        raise ParameterError(f"quality must lie in [1, 100], got {quality}")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    table = np.clip(np.floor((LUMINANCE_TABLE * scale + 50.0) / 100.0), 1.0, 255.0)
    table[0, 0] = 1.0
    return table


def quantize_block(block: NDArray[np.float64], table: NDArray[np.float64]) -> NDArray[np.float64]:
    """DCT-II one level-shifted 8x8 block, quantize, dequantize and invert."""
    coef = dctn(block, type=2, norm="ortho")
    return idctn(np.round(coef / table) * table, type=2, norm="ortho")


def compression_artifact(img: NormalizedImage, level: IntensityLevel) -> NormalizedImage:
    """
    Emulate block-DCT compression: YCbCr without chroma subsampling, 8x8
    blocks padded by edge replication, every channel quantized with the
    scaled luminance table.
    """
    quality = JPEG_QUALITY[check_level(level) - 1]
    table = quantization_table(quality)
    height, width = img.shape[:2]
    ycc = (img * 255.0) @ _RGB_TO_YCC.T + _CHROMA_OFFSET - 128.0

    ph = (-height) % BLOCK
    pw = (-width) % BLOCK
    ycc = np.pad(ycc, ((0, ph), (0, pw), (0, 0)), mode="edge")
    bh, bw = ycc.shape[0] // BLOCK, ycc.shape[1] // BLOCK
    # (bh, 8, bw, 8, 3): block axes 1 and 3
    blocks = ycc.reshape(bh, BLOCK, bw, BLOCK, 3)
    coef = dctn(blocks, type=2, norm="ortho", axes=(1, 3))
    q = table[None, :, None, :, None]
    blocks = idctn(np.round(coef / q) * q, type=2, norm="ortho", axes=(1, 3))
    ycc = blocks.reshape(bh * BLOCK, bw * BLOCK, 3)[:height, :width]

    rgb = (ycc + 128.0 - _CHROMA_OFFSET) @ _YCC_TO_RGB.T
    return np.clip(rgb / 255.0, 0.0, 1.0)


def global_motion_blur(img: NormalizedImage, level: IntensityLevel, angle: float) -> NormalizedImage:
    """Convolve with a line PSF; the angle is drawn once per image by the planner."""
    length = MOTION_LENGTH[check_level(level) - 1]
    # largest odd length the image can hold, so the kernel stays centered
    fit = min(img.shape[0], img.shape[1])
    length = min(length, fit if fit % 2 else fit - 1)
    return convolve(img, line_kernel(length, angle))


def global_defocus_blur(img: NormalizedImage, level: IntensityLevel) -> NormalizedImage:
    std = DEFOCUS_STD[check_level(level) - 1] * blur_scale(img.shape)
    return gaussian_blur(img, std)


@dataclass(frozen=True)
class BacklightSpec:
    b1: float
    b2: float
    gains: Tuple[float, float, float]
    mask: BitMask

    def __post_init__(self):
        if not 0.0 < self.b1 < self.b2 < 1.0:
            raise ParameterError(f"backlight cutpoints must satisfy 0 < b1 < b2 < 1, got ({self.b1}, {self.b2})")
        lo, hi = GAIN_RANGE
        if len(self.gains) != 3 or not all(lo <= g <= hi for g in self.gains):
            raise ParameterError(f"backlight gains must be three values in [{lo}, {hi}], got {self.gains}")


def tone_curve(luma: np.ndarray, b1: float, b2: float, gains: Tuple[float, float, float]) -> np.ndarray:
    """
    Continuous piecewise-linear map with slopes g1, g2, g3 on [0, b1), [b1, b2),
    [b2, 1], divided by its value at 1 so that 0 -> 0 and 1 -> 1.
    """
    g1, g2, g3 = gains
    luma = np.asarray(luma, dtype=np.float64)
    if g1 == g2 == g3:
        return luma.copy()
    y1 = g1 * b1
    y2 = y1 + g2 * (b2 - b1)
    top = y2 + g3 * (1.0 - b2)
    out = np.where(luma < b1, g1 * luma, np.where(luma < b2, y1 + g2 * (luma - b1), y2 + g3 * (luma - b2)))
    return out / top


def apply_backlight(img: NormalizedImage, spec: BacklightSpec) -> NormalizedImage:
    """Tone-map the luma inside the feathered target mask; chroma ratios are kept."""
    check_same_size(img, spec.mask, "backlight mask")
    if not spec.mask.any():
        raise GeometryError("backlight target mask is empty")
    luma = rgb_to_luma(img)
    lit = luma_replace(img, tone_curve(luma, spec.b1, spec.b2, spec.gains))
    return composite(img, lit, feather_alpha(spec.mask))


def sample_backlight_curve(rng: np.random.Generator) -> Tuple[int, Tuple[float, float, float]]:
    """
    Pick one of the preset cutpoint pairs and three interval gains, redrawing
    the gains until at least one reaches 1.6.

    Returns:
        (index into BACKLIGHT_CUTS, gains)
    """
    cut = int(rng.integers(0, len(BACKLIGHT_CUTS)))
    while True:
        gains = tuple(float(g) for g in rng.uniform(*GAIN_RANGE, size=3))
        if max(gains) >= MIN_PEAK_GAIN:
            return cut, gains


def largest_object(ann: AnnotationSet) -> ObjectAnnotation:
    """Non-crowd object with the largest mask area; ties go to the lower id."""
    candidates = ann.non_crowd()
    if not candidates:
        raise InapplicableDistortionError(f"image {ann.image_id} has no non-crowd object to backlight")
    areas = [(int(o.mask.sum()), -o.object_id, o) for o in candidates]
    area, _, best = max(areas, key=lambda a: (a[0], a[1]))
    if area == 0:
        raise InapplicableDistortionError(f"image {ann.image_id}: every candidate mask is empty")
    return best


def backlight_spec(ann: AnnotationSet, cut: int, gains: Tuple[float, float, float]) -> BacklightSpec:
    if not 0 <= cut < len(BACKLIGHT_CUTS):
        raise ParameterError(f"backlight cut index must be in 0..{len(BACKLIGHT_CUTS) - 1}, got {cut}")
    b1, b2 = BACKLIGHT_CUTS[cut]
    target = largest_object(ann)
    logger.debug(f"Backlight on object {target.object_id} of image {ann.image_id}")
    return BacklightSpec(b1=b1, b2=b2, gains=tuple(gains), mask=target.mask)


def sample_backlight_spec(ann: AnnotationSet, rng: np.random.Generator) -> BacklightSpec:
    """Backlight the largest non-crowd object with a randomly drawn curve."""
    largest_object(ann)
    cut, gains = sample_backlight_curve(rng)
    return backlight_spec(ann, cut, gains)
