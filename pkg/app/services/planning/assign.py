"""
Corpus-level distortion planning.

A first scan derives each image's scene context (locale from the scene
index, activities from its annotations) and the set of distortions that make
sense for it. The planner then assigns exactly one distortion per image by
greedy quota deficit, so the achieved distribution follows the target ratios
deterministically; randomness only enters the per-image parameter draws.
"""

import csv
import io
import json
import logging
from collections import Counter
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from app.core.config import settings
from app.core.errors import ManifestError, SceneIndexError, reading
from app.models.distortion import (
    ATMOSPHERIC_KINDS,
    GLOBAL_KINDS,
    KIND_ORDER,
    Activity,
    ContrastDirection,
    CorpusImage,
    DistortionKind,
    KindSummary,
    Locale,
    Manifest,
    ManifestEntry,
    PlanSummary,
    SceneContext,
    ValidationReport,
    Violation,
)
from app.services.annotations.coco import AnnotationSet, CocoDataset
from app.services.distortions.photometric import sample_backlight_curve
from app.services.distortions.profiles import ProfileTable, superclass_profiles
from app.services.planning.seeding import PLAN_STREAM, rng_for, stable_hash
from app.utils.file_handling import output_collisions

logger = logging.getLogger(__name__)

RATIO_TOLERANCE = 1e-6
OUTDOOR_LEVELS = (1, 5)
INDOOR_LEVELS = (1, 3)
RAIN_ALPHA = (0.6, 1.0)
RAIN_ANGLE = (70.0, 110.0)
RAIN_DENSITY = (500, 2000)  # streaks per megapixel

# Image counts per distortion in the reference corpus; default ratios are these normalized
REFERENCE_COUNTS = {
    DistortionKind.COMPRESSION_ARTIFACT: 17989,
    DistortionKind.CONTRAST_CHANGE: 18038,
    DistortionKind.GAUSSIAN_NOISE: 18055,
    DistortionKind.GLOBAL_MOTION_BLUR: 18018,
    DistortionKind.GLOBAL_DEFOCUS_BLUR: 17792,
    DistortionKind.FOG: 787,
    DistortionKind.RAIN: 845,
    DistortionKind.LOCAL_BACKLIGHT: 296,
    DistortionKind.LOCAL_DEFOCUS: 7061,
    DistortionKind.LOCAL_MOTION_BLUR: 18625,
}
_REFERENCE_TOTAL = sum(REFERENCE_COUNTS.values())
DEFAULT_RATIOS: Dict[DistortionKind, float] = {k: REFERENCE_COUNTS[k] / _REFERENCE_TOTAL for k in KIND_ORDER}

RIDER_CATEGORY = "person"
DEFAULT_ACTIVITY_MAP: Dict[Activity, FrozenSet[str]] = {
    Activity.SKI: frozenset({"skis", "snowboard"}),
    Activity.SURF: frozenset({"surfboard"}),
    Activity.SKATE: frozenset({"skateboard"}),
    Activity.SPORT: frozenset({"sports ball", "tennis racket", "baseball bat", "baseball glove", "frisbee", "kite"}),
    Activity.RIDING: frozenset({"horse", "bicycle", "motorcycle"}),
}

# Parameter keys every entry of a kind must carry
REQUIRED_PARAMS: Dict[DistortionKind, Tuple[str, ...]] = {
    DistortionKind.CONTRAST_CHANGE: ("direction",),
    DistortionKind.GLOBAL_MOTION_BLUR: ("angle",),
    DistortionKind.RAIN: ("alpha", "angle", "density"),
    DistortionKind.LOCAL_BACKLIGHT: ("cut", "gains"),
}


def load_scene_index(data: bytes) -> Dict[int, Locale]:
    """
    Parse the scene classification index: one `image_id,locale` record per
    line, locale in {indoor, outdoor}. A leading `image_id,locale` header and
    blank lines are skipped.

    Raises:
        SceneIndexError: Malformed line, unknown locale or duplicate id
    """
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as e:
        raise SceneIndexError(f"scene index is not UTF-8 (at byte {e.start})") from e

    index: Dict[int, Locale] = {}
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 2:
            raise SceneIndexError(f"line {lineno}: expected 'image_id,locale', got {','.join(row)!r}")
        raw_id, raw_locale = row[0].strip(), row[1].strip().lower()
        if lineno == 1 and raw_id.lower() == "image_id":
            continue
        try:
            image_id = int(raw_id)
        except ValueError:
            raise SceneIndexError(f"line {lineno}: image id {raw_id!r} is not an integer") from None
        try:
            locale = Locale(raw_locale)
        except ValueError:
            raise SceneIndexError(f"line {lineno}: unknown locale {raw_locale!r}") from None
        if image_id in index:
            raise SceneIndexError(f"line {lineno}: duplicate image id {image_id}")
        index[image_id] = locale
    return index


def read_scene_index(path: str) -> Dict[int, Locale]:
    with reading(path), open(path, "rb") as f:
        return load_scene_index(f.read())


def activity_map(path: Optional[str] = None) -> Dict[Activity, FrozenSet[str]]:
    """
    Activity -> trigger categories, with an optional JSON override
    {activity: [category, ...]} replacing the built-in list per key.
    """
    mapping = dict(DEFAULT_ACTIVITY_MAP)
    path = path or settings.ACTIVITY_MAP_PATH
    if not path:
        return mapping
    try:
        with open(path, "r", encoding="utf-8") as f:
            overrides = json.load(f)
        for name, categories in overrides.items():
            if not isinstance(categories, list) or not all(isinstance(c, str) for c in categories):
                raise ManifestError(f"activity {name}: expected a list of category names")
            mapping[Activity(name)] = frozenset(categories)
    except (OSError, json.JSONDecodeError, AttributeError, ValueError) as e:
        raise ManifestError(f"cannot load activity map {path}: {e}") from e
    logger.info(f"Loaded activity map overrides from {path}")
    return mapping


def classify_activity(
    ann: Optional[AnnotationSet], mapping: Optional[Mapping[Activity, FrozenSet[str]]] = None
) -> FrozenSet[Activity]:
    """Activity tags triggered by the categories present; riding needs a person plus a mount."""
    if ann is None:
        return frozenset()
    mapping = mapping if mapping is not None else DEFAULT_ACTIVITY_MAP
    present = ann.categories()
    tags = set()
    for activity, triggers in mapping.items():
        if not present & triggers:
            continue
        if activity is Activity.RIDING and RIDER_CATEGORY not in present:
            continue
        tags.add(activity)
    return frozenset(tags)


def applicable_kinds(
    scene: SceneContext,
    ann: Optional[AnnotationSet],
    has_depth: bool,
    profiles: Optional[ProfileTable] = None,
) -> FrozenSet[DistortionKind]:
    """
    Global kinds always apply. Rain and fog need an outdoor scene with depth,
    local defocus needs depth and an object, local motion needs a moving
    object and backlight a non-crowd object.
    """
    profiles = profiles or superclass_profiles()
    kinds = set(GLOBAL_KINDS)
    objects = ann.objects if ann is not None else ()
    if scene.locale is Locale.OUTDOOR and has_depth:
        kinds.update(ATMOSPHERIC_KINDS)
    if has_depth and objects:
        kinds.add(DistortionKind.LOCAL_DEFOCUS)
    if ann is not None and any(not profiles[o.supercategory].is_static for o in ann.non_crowd()):
        kinds.add(DistortionKind.LOCAL_MOTION_BLUR)
    if ann is not None and ann.non_crowd():
        kinds.add(DistortionKind.LOCAL_BACKLIGHT)
    return frozenset(kinds)


def describe_corpus(
    images: Iterable[Tuple[int, str]],
    dataset: Optional[CocoDataset],
    locales: Optional[Mapping[int, Locale]],
    with_depth: Iterable[int],
    profiles: Optional[ProfileTable] = None,
    activities: Optional[Mapping[Activity, FrozenSet[str]]] = None,
) -> List[CorpusImage]:
    """
    First scan over the corpus.

    Args:
        images: (image_id, file_name) pairs present on disk
        dataset: Parsed annotations, or None when the corpus has none
        locales: Scene index; None or missing ids default to outdoor
        with_depth: Ids of images that have a depth map
    """
    profiles = profiles or superclass_profiles()
    activities = activities if activities is not None else activity_map()
    depth_ids = set(with_depth)
    if locales is None:
        logger.warning("No scene index given; every image is treated as outdoor")
        locales = {}
    elif not locales:
        logger.warning("Scene index is empty; every image is treated as outdoor")

    corpus = []
    defaulted = 0
    for image_id, file_name in images:
        ann = dataset.images.get(image_id) if dataset is not None else None
        if image_id not in locales:
            defaulted += 1
        scene = SceneContext(
            locale=locales.get(image_id, Locale.OUTDOOR),
            activities=classify_activity(ann, activities),
        )
        has_depth = image_id in depth_ids
        corpus.append(
            CorpusImage(
                image_id=image_id,
                file_name=file_name,
                scene=scene,
                has_depth=has_depth,
                applicable=applicable_kinds(scene, ann, has_depth, profiles),
            )
        )
    if locales and defaulted:
        logger.warning(f"{defaulted} images are missing from the scene index and default to outdoor")
    return corpus


def check_ratios(ratios: Mapping[DistortionKind, float]) -> Dict[DistortionKind, float]:
    """Return the ratios in kind order; missing kinds get 0."""
    out = {}
    for kind in KIND_ORDER:
        value = float(ratios.get(kind, 0.0))
        if not value >= 0.0:
            raise ManifestError(f"ratio for {kind.value} must be non-negative, got {value}")
        out[kind] = value
    total = sum(out.values())
    if abs(total - 1.0) > RATIO_TOLERANCE:
        raise ManifestError(f"ratios must sum to 1, got {total:.8f}")
    return out


def load_ratios(path: str) -> Dict[DistortionKind, float]:
    """Read a JSON ratio override {kind: fraction}."""
    with reading(path):
        return _parse_ratios(path)


def _parse_ratios(path: str) -> Dict[DistortionKind, float]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestError(f"cannot read ratios: {e}") from e
    if not isinstance(raw, dict):
        raise ManifestError("ratios must be a JSON object")
    ratios = {}
    for name, value in raw.items():
        try:
            kind = DistortionKind(name)
        except ValueError:
            raise ManifestError(f"unknown distortion kind {name!r}") from None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ManifestError(f"ratio for {name} must be a number")
        ratios[kind] = float(value)
    return check_ratios(ratios)


def draw_parameters(kind: DistortionKind, locale: Locale, seed: int) -> Tuple[Optional[int], Dict]:
    """
    Mask-independent parameters drawn at plan time from the image seed.
    Parameters that depend on masks or objects are drawn when applying.

    Returns:
        (level or None, params)
    """
    rng = rng_for(seed, PLAN_STREAM)
    level = None
    if kind in GLOBAL_KINDS:
        lo, hi = INDOOR_LEVELS if locale is Locale.INDOOR else OUTDOOR_LEVELS
        level = int(rng.integers(lo, hi + 1))

    params: Dict = {}
    if kind is DistortionKind.GLOBAL_MOTION_BLUR:
        params["angle"] = float(rng.uniform(0.0, 180.0))
    elif kind is DistortionKind.CONTRAST_CHANGE:
        params["direction"] = (ContrastDirection.INCREASE if rng.integers(0, 2) else ContrastDirection.DECREASE).value
    elif kind is DistortionKind.RAIN:
        params["alpha"] = float(rng.uniform(*RAIN_ALPHA))
        params["angle"] = float(rng.uniform(*RAIN_ANGLE))
        params["density"] = int(rng.integers(RAIN_DENSITY[0], RAIN_DENSITY[1] + 1))
    elif kind is DistortionKind.LOCAL_BACKLIGHT:
        cut, gains = sample_backlight_curve(rng)
        params["cut"] = cut
        params["gains"] = list(gains)
    return level, params


def _scene_counts(corpus: Sequence[CorpusImage]) -> Dict[str, int]:
    counts = {locale.value: 0 for locale in Locale}
    counts.update({activity.value: 0 for activity in Activity})
    for image in corpus:
        counts[image.scene.locale.value] += 1
        for activity in image.scene.activities:
            counts[activity.value] += 1
    return counts


def summarize(
    entries: Sequence[ManifestEntry], ratios: Mapping[DistortionKind, float], corpus: Sequence[CorpusImage]
) -> PlanSummary:
    total = len(entries)
    counts = Counter(e.kind for e in entries)
    kinds = []
    for kind in KIND_ORDER:
        target = ratios[kind] * total
        count = counts.get(kind, 0)
        kinds.append(
            KindSummary(
                kind=kind,
                target_ratio=ratios[kind],
                target_count=target,
                count=count,
                achieved_ratio=count / total if total else 0.0,
                shortfall=max(0.0, target - count),
            )
        )
    return PlanSummary(total=total, kinds=kinds, scenes=_scene_counts(corpus))


def build_plan(
    corpus: Sequence[CorpusImage],
    ratios: Optional[Mapping[DistortionKind, float]] = None,
    global_seed: int = 0,
) -> Manifest:
    """
    Assign one distortion per image.

    Images are visited in order of their seed; each takes the applicable kind
    with the largest remaining quota deficit (quota = ratio * N), ties going
    to the earlier kind in KIND_ORDER. Quotas a corpus cannot absorb show up as
    shortfall in the summary and their images go to the other kinds.

    Args:
        corpus: Output of describe_corpus
        ratios: Target fraction per kind; DEFAULT_RATIOS when None
        global_seed: 64-bit seed of the whole plan

    Returns:
        Manifest with entries in image id order
    """
    if not corpus:
        raise ManifestError("cannot plan an empty corpus")
    ratios = check_ratios(ratios if ratios is not None else DEFAULT_RATIOS)
    ids = [image.image_id for image in corpus]
    if len(set(ids)) != len(ids):
        raise ManifestError("corpus lists an image id more than once")

    n = len(corpus)
    deficit = {kind: ratios[kind] * n for kind in KIND_ORDER}
    seeds = {image.image_id: stable_hash(global_seed, image.image_id) for image in corpus}
    entries = []
    for image in sorted(corpus, key=lambda im: (seeds[im.image_id], im.image_id)):
        candidates = [k for k in KIND_ORDER if k in image.applicable]
        if not candidates:
            raise ManifestError(f"image {image.image_id} has no applicable distortion")
        kind = max(candidates, key=lambda k: (deficit[k], -KIND_ORDER.index(k)))
        deficit[kind] -= 1.0
        seed = seeds[image.image_id]
        level, params = draw_parameters(kind, image.scene.locale, seed)
        entries.append(
            ManifestEntry(
                image_id=image.image_id,
                file_name=image.file_name,
                kind=kind,
                level=level,
                params=params,
                seed=seed,
            )
        )
    entries.sort(key=lambda e: e.image_id)
    summary = summarize(entries, ratios, corpus)
    logger.info(f"Planned {n} images with global seed {global_seed}")
    return Manifest(global_seed=global_seed, ratios=ratios, entries=entries, summary=summary)


def validate_manifest(m: Manifest, corpus: Sequence[CorpusImage]) -> ValidationReport:
    """
    Check coverage, applicability, seed derivation, levels, parameter keys and
    summary counts. Findings are reported, never raised.
    """
    violations: List[Violation] = []
    if not m.entries:
        violations.append(Violation(code="empty", message="manifest has no entries"))

    by_id = {image.image_id: image for image in corpus}
    seen = Counter(e.image_id for e in m.entries)
    for image_id, count in sorted(seen.items()):
        if count > 1:
            violations.append(Violation(code="duplicate", message=f"image listed {count} times", image_id=image_id))
    for image_id in sorted(set(by_id) - set(seen)):
        violations.append(Violation(code="missing", message="image has no entry", image_id=image_id))
    files = {e.image_id: e.file_name for e in m.entries}
    for image_id, first in sorted(output_collisions(files.items()).items()):
        violations.append(
            Violation(code="collision", message=f"output name is already taken by image {first}", image_id=image_id)
        )

    for e in m.entries:
        image = by_id.get(e.image_id)
        if image is None:
            violations.append(Violation(code="unknown_image", message="entry for an image outside the corpus", image_id=e.image_id))
            continue
        if e.kind not in image.applicable:
            violations.append(
                Violation(code="inapplicable", message=f"{e.kind.value} does not apply to this image", image_id=e.image_id)
            )
        if e.seed != stable_hash(m.global_seed, e.image_id):
            violations.append(Violation(code="seed", message="seed does not derive from the global seed", image_id=e.image_id))
        if e.kind in GLOBAL_KINDS:
            cap = INDOOR_LEVELS[1] if image.scene.locale is Locale.INDOOR else OUTDOOR_LEVELS[1]
            if e.level is None or e.level > cap:
                violations.append(
                    Violation(code="level", message=f"level {e.level} outside 1..{cap} for {image.scene.locale.value}", image_id=e.image_id)
                )
        elif e.level is not None:
            violations.append(Violation(code="level", message=f"{e.kind.value} takes no level", image_id=e.image_id))
        missing = [key for key in REQUIRED_PARAMS.get(e.kind, ()) if key not in e.params]
        if missing:
            violations.append(
                Violation(code="params", message=f"missing parameters: {', '.join(missing)}", image_id=e.image_id)
            )

    counts = Counter(e.kind for e in m.entries)
    if m.summary.total != len(m.entries) or any(ks.count != counts.get(ks.kind, 0) for ks in m.summary.kinds):
        violations.append(Violation(code="summary", message="summary counts disagree with the entries"))

    total = len(m.entries)
    deviations = {
        kind: (counts.get(kind, 0) / total if total else 0.0) - m.ratios.get(kind, 0.0) for kind in KIND_ORDER
    }
    return ValidationReport(ok=not violations, checked=total, violations=violations, deviations=deviations)
