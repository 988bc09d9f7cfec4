"""
Batch apply runs and previews.

Entries are independent: each reads its own inputs, draws from its own seed
and writes its own PNG, so the worker count never changes an output byte.
"""

import csv
import json
import os
import shutil
import time
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

from pydantic import ValidationError

from app.core.config import RunConfig
from app.core.errors import (
    DistortForgeError,
    InapplicableDistortionError,
    ManifestError,
    MissingInputError,
    UsageError,
    reading,
)
from app.models.distortion import (
    GLOBAL_KINDS,
    DistortionKind,
    EntryResult,
    EntryStatus,
    Locale,
    Manifest,
    ManifestEntry,
    RunReport,
    SceneContext,
)
from app.services.annotations.coco import AnnotationSet, CocoDataset, load_dataset
from app.services.depth.strata import DepthConvention
from app.services.distortions.mask_sources import MaskSource, mask_source
from app.services.distortions.pipeline import (
    REQUIRES_DEPTH,
    DistortionInputs,
    apply_distortion,
    compose_preview,
    missing_inputs,
    prepare_depth,
)
from app.services.distortions.profiles import ProfileTable, superclass_profiles
from app.services.imaging.core import denormalize, normalize
from app.services.imaging.io import read_depth_raster, read_rgb, write_png
from app.services.planning.assign import (
    activity_map,
    applicable_kinds,
    classify_activity,
    draw_parameters,
    read_scene_index,
)
from app.utils.file_handling import LABELS_FILE, REPORT_FILE, find_depth, output_collisions, output_path

logger = logging.getLogger(__name__)

# Kinds that read depth when it is available without requiring it
USES_DEPTH = REQUIRES_DEPTH | {DistortionKind.LOCAL_MOTION_BLUR}

ProgressCallback = Callable[[int, int, EntryResult], None]


def load_manifest(path: str) -> Manifest:
    with reading(path):
        try:
            with open(path, "rb") as f:
                return Manifest.model_validate_json(f.read())
        except OSError as e:
            raise ManifestError(f"cannot read manifest: {e.strerror}") from e
        except ValidationError as e:
            raise ManifestError(f"malformed manifest: {e.error_count()} errors, first: {e.errors()[0]['msg']}") from e


def dump_manifest(manifest: Manifest) -> str:
    return manifest.model_dump_json(indent=2) + "\n"


def write_manifest(manifest: Manifest, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dump_manifest(manifest))


@dataclass
class ApplyContext:
    """Read-only state shared by the workers of one run."""
    config: RunConfig
    dataset: Optional[CocoDataset] = None
    masks: MaskSource = None
    profiles: ProfileTable = None
    activities: Dict[Any, Any] = field(default_factory=dict)
    locales: Dict[int, Locale] = field(default_factory=dict)

    @classmethod
    def from_config(cls, config: RunConfig) -> "ApplyContext":
        dataset = load_dataset(str(config.annotations)) if config.annotations else None
        return cls(
            config=config,
            dataset=dataset,
            masks=mask_source(
                str(config.rain_masks) if config.rain_masks else None,
                str(config.fog_masks) if config.fog_masks else None,
            ),
            profiles=superclass_profiles(),
            activities=activity_map(),
            locales=read_scene_index(str(config.scene_index)) if config.scene_index else {},
        )

    def annotations(self, image_id: int) -> Optional[AnnotationSet]:
        if self.dataset is None:
            return None
        return self.dataset.images.get(image_id)


def _load_inputs(entry: ManifestEntry, ctx: ApplyContext) -> DistortionInputs:
    config = ctx.config
    image_path = os.path.join(config.images_dir, entry.file_name)
    if not os.path.isfile(image_path):
        raise MissingInputError(f"image not found: {image_path}")
    image = normalize(read_rgb(image_path))
    ann = ctx.annotations(entry.image_id)

    depth = None
    if entry.kind in USES_DEPTH:
        depth_path = find_depth(str(config.depth_dir) if config.depth_dir else None, entry.file_name)
        if depth_path is not None:
            raw = read_depth_raster(depth_path)
            depth = prepare_depth(raw, image.shape[:2], DepthConvention(config.depth_convention))
        elif entry.kind in REQUIRES_DEPTH:
            raise MissingInputError(f"no depth map for {entry.file_name}")

    scene = SceneContext(
        locale=ctx.locales.get(entry.image_id, Locale.OUTDOOR),
        activities=classify_activity(ann, ctx.activities),
    )
    return DistortionInputs(image=image, depth=depth, annotations=ann, scene=scene)


def check_applicable(entry: ManifestEntry, inputs: DistortionInputs, ctx: ApplyContext) -> None:
    """Re-derive applicability from the inputs actually loaded for the entry."""
    if entry.kind in GLOBAL_KINDS:
        return
    kinds = applicable_kinds(inputs.scene, inputs.annotations, inputs.depth is not None, ctx.profiles)
    if entry.kind not in kinds:
        raise InapplicableDistortionError(
            f"{entry.kind.value} does not apply to image {entry.image_id} ({inputs.scene.locale.value})"
        )


def apply_entry(entry: ManifestEntry, ctx: ApplyContext) -> EntryResult:
    """Render one manifest entry; failures are reported, never raised."""
    start = time.perf_counter()
    out_path = output_path(str(ctx.config.out_dir), entry.file_name)
    result = EntryResult(
        image_id=entry.image_id,
        file_name=entry.file_name,
        kind=entry.kind,
        status=EntryStatus.COMPLETED,
        output=out_path,
    )
    if os.path.exists(out_path) and not ctx.config.overwrite:
        result.error_message = "output exists, kept (use --overwrite to regenerate)"
        return result
    try:
        inputs = _load_inputs(entry, ctx)
        check_applicable(entry, inputs, ctx)
        distorted = apply_distortion(
            entry.kind, entry.level, entry.params, entry.seed, inputs, masks=ctx.masks, profiles=ctx.profiles
        )
        write_png(out_path, denormalize(distorted))
    except (DistortForgeError, OSError, ValueError) as e:
        logger.error(f"Entry {entry.image_id} ({entry.kind.value}) failed: {e}")
        result.status = EntryStatus.FAILED
        result.output = None
        result.error_message = str(e)
    except Exception as e:
        logger.exception(f"Entry {entry.image_id} ({entry.kind.value}) crashed")
        result.status = EntryStatus.FAILED
        result.output = None
        result.error_message = f"internal error: {type(e).__name__}: {e}"
    result.seconds = time.perf_counter() - start
    return result


def write_labels(entries: List[ManifestEntry], results: List[EntryResult], out_dir: str) -> str:
    """Distortion-type labels of the produced images: file_name,image_id,kind,level."""
    path = os.path.join(out_dir, LABELS_FILE)
    done = {r.image_id for r in results if r.status is EntryStatus.COMPLETED}
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["file_name", "image_id", "kind", "level"])
        for e in entries:
            if e.image_id in done:
                writer.writerow([os.path.basename(output_path(out_dir, e.file_name)), e.image_id, e.kind.value, e.level or ""])
    return path


def run_apply(
    manifest: Manifest,
    config: RunConfig,
    progress: Optional[ProgressCallback] = None,
    cancelled: Optional[Callable[[], bool]] = None,
    ctx: Optional[ApplyContext] = None,
) -> RunReport:
    """
    Apply every manifest entry with `config.jobs` worker threads.

    Args:
        manifest: Plan to execute
        config: Run paths and options
        progress: Called after each entry with (done, total, result)
        cancelled: Polled before each entry; once true, remaining entries fail as cancelled

    Returns:
        Report with one result per entry, in manifest order
    """
    os.makedirs(config.out_dir, exist_ok=True)
    ctx = ctx or ApplyContext.from_config(config)
    entries = list(manifest.entries)
    total = len(entries)
    start = time.perf_counter()
    done = 0
    clashes = output_collisions((e.image_id, e.file_name) for e in entries)
    if clashes:
        logger.warning(f"{len(clashes)} entries share an output name with an earlier entry and are skipped")

    def failed(entry: ManifestEntry, message: str) -> EntryResult:
        return EntryResult(
            image_id=entry.image_id,
            file_name=entry.file_name,
            kind=entry.kind,
            status=EntryStatus.FAILED,
            error_message=message,
        )

    def work(entry: ManifestEntry) -> EntryResult:
        if cancelled is not None and cancelled():
            return failed(entry, "cancelled")
        if entry.image_id in clashes:
            return failed(entry, f"output name is already taken by image {clashes[entry.image_id]}")
        return apply_entry(entry, ctx)

    results: List[EntryResult] = []
    with ThreadPoolExecutor(max_workers=config.jobs) as pool:
        for result in pool.map(work, entries):
            results.append(result)
            done += 1
            if progress is not None:
                progress(done, total, result)

    succeeded = sum(1 for r in results if r.status is EntryStatus.COMPLETED)
    report = RunReport(
        total=total,
        succeeded=succeeded,
        failed=total - succeeded,
        jobs=config.jobs,
        seconds=time.perf_counter() - start,
        entries=results,
    )

    out_dir = str(config.out_dir)
    with open(os.path.join(out_dir, REPORT_FILE), "w", encoding="utf-8") as f:
        f.write(report.model_dump_json(indent=2))
    write_labels(entries, results, out_dir)
    if config.annotations:
        target = os.path.join(out_dir, os.path.basename(config.annotations))
        if os.path.abspath(target) != os.path.abspath(config.annotations):
            shutil.copyfile(config.annotations, target)
    logger.info(f"Applied {total} entries: {succeeded} succeeded, {report.failed} failed in {report.seconds:.1f}s")
    return report


def render_preview(
    kind: DistortionKind,
    image: bytes,
    depth: Optional[bytes] = None,
    depth_name: Optional[str] = None,
    annotations: Optional[AnnotationSet] = None,
    level: Optional[int] = None,
    params: Optional[Dict[str, Any]] = None,
    seed: int = 0,
    convention: DepthConvention = DepthConvention.NEARNESS,
    locale: Locale = Locale.OUTDOOR,
):
    """
    Preview one distortion on one image.

    Missing level and parameters are drawn from the seed exactly as the
    planner would draw them.

    Returns:
        8-bit preview array (see compose_preview)
    """
    kind = DistortionKind(kind)
    missing = missing_inputs(kind, depth is not None, annotations is not None)
    if missing:
        raise UsageError(f"{kind.value} needs {' and '.join(missing)}")
    img = normalize(read_rgb(image))
    farness = None
    if depth is not None:
        farness = prepare_depth(read_depth_raster(depth, depth_name), img.shape[:2], DepthConvention(convention))

    drawn_level, drawn_params = draw_parameters(kind, locale, seed)
    level = level if level is not None else drawn_level
    params = {**drawn_params, **(params or {})}
    inputs = DistortionInputs(
        image=img,
        depth=farness,
        annotations=annotations,
        scene=SceneContext(locale=locale, activities=classify_activity(annotations, activity_map())),
    )
    distorted = apply_distortion(kind, level, params, seed, inputs)
    return compose_preview(kind, inputs, distorted)
