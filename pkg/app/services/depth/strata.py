"""
Depth conventions and smooth-threshold stratification into foreground,
middleground and background.

All depth math runs on farness maps: values in (0, 1], larger = farther,
maximum 1.
"""

import logging
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Dict, Optional

import numpy as np
from numpy.typing import NDArray
from scipy.special import expit

from app.core.errors import DegenerateDepthError, InapplicableDistortionError, ParameterError
from app.services.annotations.coco import AnnotationSet
from app.services.annotations.masks import mask_mean_over

logger = logging.getLogger(__name__)

FarnessMap = NDArray[np.float64]

EPSILON = 1.0 / 1024.0
TH_F = 0.8176
TH_B = 0.182
# x-space cutoffs where the sigmoid crosses TH_F and TH_B
FORE_CUTOFF = 0.4
BACK_CUTOFF = 0.6
# quantile of the farness map used as focus plane when the image has no objects
FALLBACK_FOCUS_QUANTILE = 0.1


class DepthConvention(str, Enum):
    NEARNESS = "nearness"
    FARNESS = "farness"


class Stratum(IntEnum):
    FORE = 0
    MIDDLE = 1
    BACK = 2


@dataclass(frozen=True)
class StrataMap:
    labels: NDArray[np.int8]
    delta_f: float
    delta_m: float
    delta_b: float
    threshold: float

    def mask(self, stratum: Stratum) -> NDArray[np.bool_]:
        return self.labels == stratum

    def counts(self) -> Dict[Stratum, int]:
        return {s: int(np.count_nonzero(self.labels == s)) for s in Stratum}


def to_farness(raw: np.ndarray, convention: DepthConvention = DepthConvention.FARNESS) -> FarnessMap:
    """
    Min-max normalize a raw depth raster to [EPSILON, 1]; nearness input is
    flipped so larger always means farther.
    """
    convention = DepthConvention(convention)
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.size == 0:
        raise ParameterError(f"depth raster must be a non-empty 2-D array, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise ParameterError("depth raster contains non-finite values")
    if raw.min() < 0:
        raise ParameterError("depth raster contains negative values")
    lo, hi = float(raw.min()), float(raw.max())
    if hi == 0.0:
        raise DegenerateDepthError("depth raster is identically zero")
    if hi == lo:
        return np.ones_like(raw)
    normalized = EPSILON + (1.0 - EPSILON) * (raw - lo) / (hi - lo)
    if convention is DepthConvention.NEARNESS:
        return 1.0 + EPSILON - normalized
    return normalized


def omega(x):
    """Smooth threshold 1 - 1 / (1 + exp(-15 (x - 0.5))); strictly decreasing."""
    return expit(-15.0 * (np.asarray(x, dtype=np.float64) - 0.5))


def focus_threshold(ann: AnnotationSet, depth: FarnessMap) -> float:
    """Mean farness of the nearest annotated object."""
    if not ann.objects:
        raise InapplicableDistortionError(f"image {ann.image_id} has no annotated object to focus on")
    means = [mask_mean_over(obj.mask, depth) for obj in ann.objects]
    return float(min(means))


def fallback_threshold(depth: FarnessMap) -> float:
    """Focus plane for images without objects: a low quantile of the farness map."""
    return float(max(np.quantile(depth, FALLBACK_FOCUS_QUANTILE), EPSILON))


def classify_strata(depth: FarnessMap, threshold: float) -> StrataMap:
    """
    Label each pixel by its farness excess x = (p - t) / t beyond the focus
    plane t: foreground for x <= 0.4 (including everything nearer than t),
    middleground for 0.4 < x <= 0.6, background beyond.
    """
    if not threshold > 0:
        raise ParameterError(f"focus threshold must be positive, got {threshold}")
    x = (depth - threshold) / threshold
    labels = np.full(depth.shape, Stratum.BACK, dtype=np.int8)
    labels[x <= BACK_CUTOFF] = Stratum.MIDDLE
    labels[(depth < threshold) | (x <= FORE_CUTOFF)] = Stratum.FORE

    def stratum_mean(s: Stratum) -> float:
        sel = labels == s
        return float(depth[sel].mean()) if sel.any() else float(threshold)

    strata = StrataMap(
        labels=labels,
        delta_f=stratum_mean(Stratum.FORE),
        delta_m=stratum_mean(Stratum.MIDDLE),
        delta_b=stratum_mean(Stratum.BACK),
        threshold=float(threshold),
    )
    logger.debug(f"Strata counts {strata.counts()} for threshold {threshold:.4f}")
    return strata


def stratify(depth: FarnessMap, ann: Optional[AnnotationSet] = None) -> StrataMap:
    """Strata around the nearest object, or around the fallback plane when there is none."""
    if ann is not None and ann.objects:
        return classify_strata(depth, focus_threshold(ann, depth))
    return classify_strata(depth, fallback_threshold(depth))
