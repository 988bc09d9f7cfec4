"""
Depth-aware rain and fog.

Rain: a streak mask is split into three densities by grey-level morphology
and screen-blended stratum by stratum, nearest first. Fog: a smooth fractal
mask is screen-blended with a weight proportional to farness.
"""

import math
import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from app.core.errors import DimensionError, ParameterError
from app.services.depth.strata import FarnessMap, StrataMap, Stratum
from app.services.imaging.core import NormalizedImage, ScalarMask, check_same_size, screen_blend

logger = logging.getLogger(__name__)

RAIN_ALPHA_RANGE = (0.6, 1.0)
FOG_ALPHA = 0.95
STREAK_LENGTH = (20.0, 60.0)
STREAK_INTENSITY = (0.4, 1.0)
STREAK_ANGLE_JITTER = 4.0
FOG_OCTAVES = 4
FOG_PERSISTENCE = 0.5
FOG_BASE_CELL = 64.0
FOG_FLOOR = 0.3


@dataclass(frozen=True)
class RainSubmasks:
    r_fine: ScalarMask
    r_mid: ScalarMask
    r_coarse: ScalarMask

    def __post_init__(self):
        if not (self.r_fine.shape == self.r_mid.shape == self.r_coarse.shape):
            raise DimensionError("rain sub-masks must share one size")


def _draw_streak(mask: ScalarMask, x0: float, y0: float, length: float, angle: float, thick: bool, intensity: float) -> None:
    """Rasterize one streak with max-accumulation; at most two pixels per step along the major axis."""
    height, width = mask.shape
    theta = math.radians(angle)
    ux, uy = math.cos(theta), math.sin(theta)
    steep = abs(uy) > abs(ux)
    steps = max(1, int(round(length * max(abs(ux), abs(uy)))))
    t = np.arange(steps) / max(abs(uy) if steep else abs(ux), 1e-12)
    major = (y0 if steep else x0) + t * (uy if steep else ux)
    minor = (x0 if steep else y0) + t * (ux if steep else uy)
    m0 = np.floor(minor)
    frac = minor - m0
    if thick:
        w0 = np.full(steps, intensity)
        w1 = np.full(steps, intensity)
    else:
        w0 = (1.0 - frac) * intensity
        w1 = frac * intensity
    major_idx = np.floor(major).astype(np.int64)
    for offset, weight in ((0, w0), (1, w1)):
        minor_idx = m0.astype(np.int64) + offset
        rr, cc = (major_idx, minor_idx) if steep else (minor_idx, major_idx)
        keep = (rr >= 0) & (rr < height) & (cc >= 0) & (cc < width) & (weight > 0)
        np.maximum.at(mask, (rr[keep], cc[keep]), weight[keep])


def synthesize_rain_base(rng: np.random.Generator, width: int, height: int, streak_count: int, angle: float) -> ScalarMask:
    """
    Procedural rain: streaks of 20-60 px, 1-2 px wide, intensity 0.4-1,
    within +-4 degrees of `angle`.
    """
    if streak_count < 1:
        raise ParameterError(f"streak_count must be >= 1, got {streak_count}")
    mask = np.zeros((height, width))
    for _ in range(streak_count):
        length = rng.uniform(*STREAK_LENGTH)
        thick = bool(rng.integers(0, 2))
        intensity = rng.uniform(*STREAK_INTENSITY)
        streak_angle = angle + rng.uniform(-STREAK_ANGLE_JITTER, STREAK_ANGLE_JITTER)
        x0 = rng.uniform(0.0, width)
        y0 = rng.uniform(0.0, height)
        _draw_streak(mask, x0, y0, length, streak_angle, thick, intensity)
    return mask


def derive_rain_submasks(base: ScalarMask) -> RainSubmasks:
    """Coarse = 3x3 dilation, mid = base, fine = 3x3 erosion at half intensity."""
    coarse = ndimage.grey_dilation(base, size=(3, 3), mode="nearest")
    fine = 0.5 * ndimage.grey_erosion(base, size=(3, 3), mode="nearest")
    return RainSubmasks(r_fine=fine, r_mid=base.copy(), r_coarse=coarse)


def apply_rain(img: NormalizedImage, strata: StrataMap, subs: RainSubmasks, alpha: float) -> NormalizedImage:
    """
    Screen-blend the sub-masks cumulatively from foreground to background,
    each zeroed outside its stratum: coarse rain on the foreground, mid on the
    middleground, fine rain on the background.
    """
    lo, hi = RAIN_ALPHA_RANGE
    if not lo <= alpha <= hi:
        raise ParameterError(f"rain alpha must lie in [{lo}, {hi}], got {alpha}")
    check_same_size(img, strata.labels, "strata")
    check_same_size(img, subs.r_mid, "rain mask")

    out = img
    for stratum, sub in ((Stratum.FORE, subs.r_coarse), (Stratum.MIDDLE, subs.r_mid), (Stratum.BACK, subs.r_fine)):
        gated = np.where(strata.mask(stratum), sub, 0.0)
        out = screen_blend(out, gated, alpha)
    return out


def _fade(t):
    return t * t * t * (t * (t * 6 - 15) + 10)


def value_noise(rng: np.random.Generator, width: int, height: int, cell: float) -> ScalarMask:
    """Lattice value noise with quintic interpolation, values in [0, 1]."""
    cell = max(cell, 1.0)
    gh = int(math.ceil(height / cell)) + 2
    gw = int(math.ceil(width / cell)) + 2
    grid = rng.random((gh, gw))
    y = np.arange(height) / cell
    x = np.arange(width) / cell
    yi = np.floor(y).astype(int)
    xi = np.floor(x).astype(int)
    fy = _fade(y - yi)[:, None]
    fx = _fade(x - xi)[None, :]
    v00 = grid[yi][:, xi]
    v01 = grid[yi][:, xi + 1]
    v10 = grid[yi + 1][:, xi]
    v11 = grid[yi + 1][:, xi + 1]
    top = v00 + fx * (v01 - v00)
    bottom = v10 + fx * (v11 - v10)
    return top + fy * (bottom - top)


def synthesize_fog_mask(rng: np.random.Generator, width: int, height: int) -> ScalarMask:
    """Four-octave fractal value noise (persistence 0.5, 64 px base cell) rescaled to [0.3, 1]."""
    total = np.zeros((height, width))
    amplitude = 1.0
    cell = FOG_BASE_CELL
    for _ in range(FOG_OCTAVES):
        total += amplitude * value_noise(rng, width, height, cell)
        amplitude *= FOG_PERSISTENCE
        cell /= 2.0
    lo, hi = total.min(), total.max()
    if hi - lo < 1e-12:
        return np.ones((height, width))
    return FOG_FLOOR + (1.0 - FOG_FLOOR) * (total - lo) / (hi - lo)


def apply_fog(img: NormalizedImage, depth: FarnessMap, fog: ScalarMask) -> NormalizedImage:
    """Screen-blend the fog mask with per-pixel weight 0.95 * farness."""
    check_same_size(img, depth, "depth")
    check_same_size(img, fog, "fog mask")
    weight = (FOG_ALPHA * depth * fog)[:, :, None]
    return np.minimum(img + (1.0 - img) * weight, 1.0)
