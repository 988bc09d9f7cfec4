"""
Applies one planned distortion to one image.

Every kind draws its apply-time randomness from the entry seed alone, so an
entry renders identically in any process and in any order.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from app.core.errors import DimensionError, MissingInputError, ParameterError
from app.models.distortion import DistortionKind, LOCAL_KINDS, SceneContext
from app.services.annotations.coco import AnnotationSet
from app.services.depth.strata import DepthConvention, FarnessMap, classify_strata, focus_threshold, stratify, to_farness
from app.services.distortions import atmos, localblur, photometric
from app.services.distortions.mask_sources import MaskSource, ProceduralMasks
from app.services.distortions.profiles import ProfileTable, superclass_profiles
from app.services.imaging.core import NormalizedImage, check_image, denormalize
from app.services.imaging.io import resize_field
from app.services.planning.seeding import APPLY_STREAM, rng_for

logger = logging.getLogger(__name__)

REQUIRES_DEPTH = frozenset({DistortionKind.FOG, DistortionKind.RAIN, DistortionKind.LOCAL_DEFOCUS})
REQUIRES_ANNOTATIONS = frozenset(LOCAL_KINDS)

# What each kind reads, for the HTTP listing
KIND_INPUTS: Dict[DistortionKind, Dict[str, Any]] = {
    DistortionKind.COMPRESSION_ARTIFACT: {"level": "quality 50/35/25/15/8"},
    DistortionKind.CONTRAST_CHANGE: {"level": "factor 1.25/1.5/1.8/2.2/2.7", "direction": "increase|decrease"},
    DistortionKind.GAUSSIAN_NOISE: {"level": "std 0.02/0.04/0.06/0.09/0.13"},
    DistortionKind.GLOBAL_MOTION_BLUR: {"level": "length 5/9/13/19/27 px", "angle": "degrees [0, 180)"},
    DistortionKind.GLOBAL_DEFOCUS_BLUR: {"level": "std 1/2/3.5/5/7 px at 512 px"},
    DistortionKind.FOG: {},
    DistortionKind.RAIN: {"alpha": "[0.6, 1]", "angle": "degrees", "density": "streaks per megapixel"},
    DistortionKind.LOCAL_BACKLIGHT: {"cut": "0|1|2", "gains": "three values in [0.5, 2.5]"},
    DistortionKind.LOCAL_DEFOCUS: {},
    DistortionKind.LOCAL_MOTION_BLUR: {},
}


@dataclass
class DistortionInputs:
    image: NormalizedImage
    depth: Optional[FarnessMap] = None
    annotations: Optional[AnnotationSet] = None
    scene: SceneContext = SceneContext()


def missing_inputs(kind: DistortionKind, has_depth: bool, has_annotations: bool) -> List[str]:
    missing = []
    if kind in REQUIRES_DEPTH and not has_depth:
        missing.append("depth")
    if kind in REQUIRES_ANNOTATIONS and not has_annotations:
        missing.append("annotations")
    return missing


def prepare_depth(raw: np.ndarray, size: Tuple[int, int], convention: DepthConvention) -> FarnessMap:
    """Resize a raw depth raster to (height, width) if needed and convert it to farness."""
    if raw.shape != size:
        logger.warning(f"Depth map is {raw.shape[1]}x{raw.shape[0]}, resizing to {size[1]}x{size[0]}")
        raw = np.maximum(resize_field(raw, size), 0.0)
    return to_farness(raw, convention)


def _param(params: Dict[str, Any], key: str, kind: DistortionKind) -> Any:
    try:
        return params[key]
    except KeyError:
        raise ParameterError(f"{kind.value} entry lacks parameter {key!r}") from None


def _level(level: Optional[int], kind: DistortionKind) -> int:
    if level is None:
        raise ParameterError(f"{kind.value} entry lacks an intensity level")
    return photometric.check_level(level)


def apply_distortion(
    kind: DistortionKind,
    level: Optional[int],
    params: Dict[str, Any],
    seed: int,
    inputs: DistortionInputs,
    masks: Optional[MaskSource] = None,
    profiles: Optional[ProfileTable] = None,
) -> NormalizedImage:
    """
    Render one distortion.

    Args:
        kind: Distortion to apply
        level: Intensity level for global kinds
        params: Plan-time parameters of the entry
        seed: Entry seed; apply-time draws use its own stream
        inputs: Image plus the depth and annotations the kind needs
        masks: Rain/fog mask source, procedural by default

    Returns:
        Distorted normalized image
    """
    kind = DistortionKind(kind)
    img = inputs.image
    check_image(img)
    missing = missing_inputs(kind, inputs.depth is not None, inputs.annotations is not None)
    if missing:
        raise MissingInputError(f"{kind.value} needs {' and '.join(missing)}")
    ann = inputs.annotations
    if ann is not None and (ann.height, ann.width) != img.shape[:2]:
        raise DimensionError(f"annotations are {ann.width}x{ann.height}, image is {img.shape[1]}x{img.shape[0]}")

    masks = masks or ProceduralMasks()
    rng = rng_for(seed, APPLY_STREAM)
    height, width = img.shape[:2]

    if kind is DistortionKind.COMPRESSION_ARTIFACT:
        return photometric.compression_artifact(img, _level(level, kind))
    if kind is DistortionKind.CONTRAST_CHANGE:
        return photometric.adjust_contrast(img, _level(level, kind), _param(params, "direction", kind))
    if kind is DistortionKind.GAUSSIAN_NOISE:
        return photometric.gaussian_noise(img, _level(level, kind), rng)
    if kind is DistortionKind.GLOBAL_MOTION_BLUR:
        return photometric.global_motion_blur(img, _level(level, kind), float(_param(params, "angle", kind)))
    if kind is DistortionKind.GLOBAL_DEFOCUS_BLUR:
        return photometric.global_defocus_blur(img, _level(level, kind))

    if kind is DistortionKind.FOG:
        fog = masks.fog(rng, width, height)
        return atmos.apply_fog(img, inputs.depth, fog)
    if kind is DistortionKind.RAIN:
        strata = stratify(inputs.depth, ann)
        density = float(_param(params, "density", kind))
        count = max(1, int(round(density * width * height / 1e6)))
        base = masks.rain_base(rng, width, height, count, float(_param(params, "angle", kind)))
        subs = atmos.derive_rain_submasks(base)
        return atmos.apply_rain(img, strata, subs, float(_param(params, "alpha", kind)))

    if kind is DistortionKind.LOCAL_BACKLIGHT:
        spec = photometric.backlight_spec(ann, int(_param(params, "cut", kind)), tuple(_param(params, "gains", kind)))
        return photometric.apply_backlight(img, spec)
    if kind is DistortionKind.LOCAL_DEFOCUS:
        strata = classify_strata(inputs.depth, focus_threshold(ann, inputs.depth))
        return localblur.apply_local_defocus(img, strata, localblur.defocus_magnitudes(strata))
    if kind is DistortionKind.LOCAL_MOTION_BLUR:
        profiles = profiles or superclass_profiles()
        depth = inputs.depth if inputs.depth is not None else np.ones((height, width))
        objects = sorted(ann.non_crowd(), key=lambda o: o.object_id)
        own = [localblur.object_motion_params(o, inputs.scene, depth, rng, profiles) for o in objects]
        resolved = localblur.resolve_interactions(own, ann, depth, profiles)
        return localblur.apply_local_motion_blur(img, ann, resolved, inputs.depth)

    raise ParameterError(f"unsupported distortion kind {kind}")


def affected_mask(kind: DistortionKind, inputs: DistortionInputs) -> np.ndarray:
    """Gray panel showing where a local distortion acts: object masks, or the strata for defocus."""
    height, width = inputs.image.shape[:2]
    ann = inputs.annotations
    if kind is DistortionKind.LOCAL_DEFOCUS:
        strata = classify_strata(inputs.depth, focus_threshold(ann, inputs.depth))
        return strata.labels / 2.0
    if kind is DistortionKind.LOCAL_BACKLIGHT:
        return photometric.largest_object(ann).mask.astype(np.float64)
    panel = np.zeros((height, width))
    for obj in ann.non_crowd():
        panel[obj.mask] = 1.0
    return panel


def compose_preview(kind: DistortionKind, inputs: DistortionInputs, distorted: NormalizedImage) -> np.ndarray:
    """
    Side-by-side 8-bit preview: original | distorted, and for local kinds also
    the affected mask and the farness map, so local previews are 4 widths wide.
    """
    panels = [inputs.image, distorted]
    if kind in LOCAL_KINDS:
        height, width = inputs.image.shape[:2]
        mask = affected_mask(kind, inputs)
        depth = inputs.depth if inputs.depth is not None else np.zeros((height, width))
        panels.append(np.repeat(mask[:, :, None], 3, axis=2))
        panels.append(np.repeat(depth[:, :, None], 3, axis=2))
    return denormalize(np.concatenate(panels, axis=1))
