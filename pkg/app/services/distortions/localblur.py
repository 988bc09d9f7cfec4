"""
Scene-context local blurs.

Local defocus blurs each depth stratum with its own Gaussian width and
cross-fades the layers. Local motion blur smears each annotated object along
its own motion PSF, after overlapping objects at similar depth have adopted
the motion of the highest-ranked object among them.
"""

import math
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from app.core.errors import DimensionError
from app.models.distortion import Activity, SceneContext
from app.services.annotations.coco import AnnotationSet, ObjectAnnotation
from app.services.annotations.masks import bbox_iou, mask_mean_over, mask_orientation
from app.services.depth.strata import FarnessMap, StrataMap, Stratum
from app.services.distortions.profiles import AnglePolicy, ProfileTable, superclass_profiles
from app.services.imaging.core import (
    NormalizedImage,
    blur_scale,
    check_same_size,
    composite,
    convolve,
    dilate,
    feather_alpha,
    gaussian_blur,
    line_kernel,
)

logger = logging.getLogger(__name__)

MAX_MAGNITUDE = 41
MIN_MAGNITUDE = 2
MIN_STD = 0.05
IOU_GATE = 0.05
FARNESS_GATE = 0.1
ACTIVE_SCENE_FACTOR = 1.5
ACTIVE_SCENES = frozenset({Activity.SPORT, Activity.SKI, Activity.SKATE, Activity.SURF})
ACTIVE_SUPERCLASSES = frozenset({"person", "sports"})


@dataclass(frozen=True)
class DefocusMagnitudes:
    lambda_f: float
    lambda_m: float
    lambda_b: float


@dataclass(frozen=True)
class MotionParams:
    object_id: int
    magnitude: int
    angle: float
    inherited_from: Optional[int] = None

    @property
    def source(self) -> str:
        return "own" if self.inherited_from is None else f"inherited({self.inherited_from})"


def defocus_magnitudes(strata: StrataMap) -> DefocusMagnitudes:
    """
    Cumulative blur magnitudes from foreground to background:
    l = 0.5 + 1.5 (d_f - t) / t, l_m = l + 1.2 (d_m - t) / t, l_b = l_m + 1.2 (d_b - t) / t,
    each clamped at 0 and at the previous magnitude.
    """
    t = strata.threshold
    lam = max(0.0, 0.5 + 1.5 * (strata.delta_f - t) / t)
    lam_m = max(lam, lam + 1.2 * (strata.delta_m - t) / t)
    lam_b = max(lam_m, lam_m + 1.2 * (strata.delta_b - t) / t)
    return DefocusMagnitudes(lam, lam_m, lam_b)


def apply_local_defocus(img: NormalizedImage, strata: StrataMap, mags: DefocusMagnitudes) -> NormalizedImage:
    """
    Blur each stratum with Gaussian std = magnitude * s and layer the farther
    strata over the nearer ones with a feathered edge.
    """
    check_same_size(img, strata.labels, "strata")
    s = blur_scale(img.shape)

    def blurred(magnitude: float) -> NormalizedImage:
        std = magnitude * s
        return img if std < MIN_STD else gaussian_blur(img, std)

    out = blurred(mags.lambda_f)
    for stratum, magnitude in ((Stratum.MIDDLE, mags.lambda_m), (Stratum.BACK, mags.lambda_b)):
        mask = strata.mask(stratum)
        if not mask.any():
            continue
        out = composite(out, blurred(magnitude), feather_alpha(mask))
    return out


def _rng_draw(rng: np.random.Generator, profile) -> float:
    return float(rng.uniform(profile.lo, profile.hi)) if profile.hi > profile.lo else float(profile.lo)


def object_motion_params(
    obj: ObjectAnnotation,
    scene: SceneContext,
    depth: FarnessMap,
    rng: np.random.Generator,
    profiles: Optional[ProfileTable] = None,
) -> MotionParams:
    """
    Motion of one object: a base magnitude drawn from its superclass interval,
    x1.5 for people and sports gear in active scenes, scaled by the nearness
    factor (2 - mean farness) and rounded; the angle follows the superclass
    policy.
    """
    profiles = profiles or superclass_profiles()
    profile = profiles[obj.supercategory]
    mask = obj.mask
    farness = mask_mean_over(mask, depth)

    base = _rng_draw(rng, profile)
    free_angle = float(rng.uniform(0.0, 180.0))
    if profile.is_static:
        return MotionParams(obj.object_id, 0, 0.0)

    if obj.supercategory in ACTIVE_SUPERCLASSES and scene.activities & ACTIVE_SCENES:
        base *= ACTIVE_SCENE_FACTOR
    magnitude = min(MAX_MAGNITUDE, int(math.floor(base * (2.0 - farness) + 0.5)))

    if profile.angle_policy is AnglePolicy.SNAP_TO_ELLIPSE:
        angle = mask_orientation(mask)
    elif profile.angle_policy is AnglePolicy.SNAP_HORIZONTAL:
        angle = 0.0
    else:
        angle = free_angle
    return MotionParams(obj.object_id, magnitude, angle)


def resolve_interactions(
    params: Sequence[MotionParams],
    objects: AnnotationSet,
    depth: FarnessMap,
    profiles: Optional[ProfileTable] = None,
) -> List[MotionParams]:
    """
    Objects interact when their boxes overlap (IoU > 0.05) and their mean
    farness differs by less than 0.1. Every member of an interaction component
    takes the magnitude and angle of the member with the highest superclass
    rank (ties: larger mask area, then lower object id).
    """
    profiles = profiles or superclass_profiles()
    if not params:
        return []
    objs = [objects.get(p.object_id) for p in params]
    masks = [o.mask for o in objs]
    farness = [mask_mean_over(m, depth) for m in masks]
    areas = [int(m.sum()) for m in masks]

    n = len(params)
    rows, cols = [], []
    for i in range(n):
        for j in range(i + 1, n):
            if bbox_iou(objs[i].bbox, objs[j].bbox) > IOU_GATE and abs(farness[i] - farness[j]) < FARNESS_GATE:
                rows.append(i)
                cols.append(j)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, component = connected_components(graph, directed=False)

    leaders: Dict[int, int] = {}
    for i in range(n):
        key = (profiles[objs[i].supercategory].rank, areas[i], -objs[i].object_id)
        c = int(component[i])
        best = leaders.get(c)
        if best is None or key > (profiles[objs[best].supercategory].rank, areas[best], -objs[best].object_id):
            leaders[c] = i

    resolved = []
    for i, p in enumerate(params):
        leader = params[leaders[int(component[i])]]
        if leaders[int(component[i])] == i:
            resolved.append(replace(p, inherited_from=None))
        else:
            resolved.append(replace(p, magnitude=leader.magnitude, angle=leader.angle, inherited_from=leader.object_id))
    return resolved


def apply_local_motion_blur(
    img: NormalizedImage,
    objects: AnnotationSet,
    params: Sequence[MotionParams],
    depth: Optional[FarnessMap] = None,
) -> NormalizedImage:
    """
    Smear each object along its motion PSF, farthest object first. The smear
    covers the mask dilated by ceil(magnitude / 2) and is composited with a
    feathered edge; objects below 2 px of motion are left untouched.
    """
    if (objects.height, objects.width) != img.shape[:2]:
        raise DimensionError(f"annotations are {objects.width}x{objects.height}, image is {img.shape[1]}x{img.shape[0]}")
    if depth is not None:
        check_same_size(img, depth, "depth")

    height, width = img.shape[:2]
    max_length = min(MAX_MAGNITUDE, height - 1, width - 1)
    jobs = []
    for p in params:
        if p.magnitude < MIN_MAGNITUDE:
            continue
        mask = objects.get(p.object_id).mask
        if not mask.any():
            continue
        farness = mask_mean_over(mask, depth) if depth is not None else 1.0
        jobs.append((-farness, p.object_id, p, mask))
    jobs.sort(key=lambda j: (j[0], j[1]))

    out = img
    for _, object_id, p, mask in jobs:
        length = min(p.magnitude, max_length)
        kernel = line_kernel(length, p.angle)
        region = dilate(mask, math.ceil(length / 2))
        ry, rx = kernel.shape[0] // 2, kernel.shape[1] // 2
        rows = np.flatnonzero(region.any(axis=1))
        cols = np.flatnonzero(region.any(axis=0))
        r0, r1 = max(0, rows[0] - ry), min(height, rows[-1] + ry + 1)
        c0, c1 = max(0, cols[0] - rx), min(width, cols[-1] + rx + 1)
        crop = out[r0:r1, c0:c1]
        if kernel.shape[0] > crop.shape[0] or kernel.shape[1] > crop.shape[1]:
            r0, r1, c0, c1 = 0, height, 0, width
            crop = out
        smeared = convolve(crop, kernel)
        alpha = feather_alpha(region)[r0:r1, c0:c1]
        out = out.copy()
        out[r0:r1, c0:c1] = composite(crop, smeared, alpha)
        logger.debug(f"Motion blur on object {object_id}: length {length}, angle {p.angle:.1f}")
    return out
