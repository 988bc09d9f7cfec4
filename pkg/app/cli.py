"""
Batch front-end: plan, apply, preview and validate.

    python -m app.cli plan --images IMG --annotations ann.json --scene-index scenes.csv --depth DEPTH --out manifest.json
    python -m app.cli apply --manifest manifest.json --images IMG --annotations ann.json --depth DEPTH --out OUT --jobs 8
    python -m app.cli preview --image img.jpg --kind local_motion_blur --annotations ann.json --out preview.png
    python -m app.cli validate --manifest manifest.json --images IMG --annotations ann.json

Exit codes: 0 ok, 1 validation or runtime failure, 2 usage error.
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from pydantic import ValidationError

from app.core.config import RunConfig, settings
from app.core.errors import DistortForgeError, UsageError
from app.models.distortion import CorpusImage, DistortionKind, Locale, Manifest
from app.services.annotations.coco import CocoDataset, load_dataset
from app.services.depth.strata import DepthConvention
from app.services.imaging.io import write_png
from app.services.planning.assign import (
    DEFAULT_RATIOS,
    build_plan,
    describe_corpus,
    load_ratios,
    read_scene_index,
    validate_manifest,
)
from app.services.runner import load_manifest, render_preview, run_apply, write_manifest
from app.utils.file_handling import corpus_files, find_depth

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _seed(args) -> int:
    seed = args.seed if args.seed is not None else settings.DISTORT_FORGE_SEED
    if not 0 <= seed < 2**64:
        raise UsageError(f"seed must lie in [0, 2^64), got {seed}")
    return seed


def _dataset(args) -> Optional[CocoDataset]:
    return load_dataset(args.annotations) if args.annotations else None


def scan_corpus(args, dataset: Optional[CocoDataset]) -> List[CorpusImage]:
    """First scan: files on disk, scene index, depth availability."""
    files = corpus_files(args.images, dataset)
    if not files:
        raise UsageError(f"no images found in {args.images}")
    locales = None
    if args.scene_index:
        locales = read_scene_index(args.scene_index)
    with_depth = [image_id for image_id, name in files if find_depth(args.depth, name)]
    return describe_corpus(files, dataset, locales, with_depth)


def print_summary(manifest: Manifest, out=None) -> None:
    """Achieved distribution table, then scene counts."""
    out = out or sys.stdout
    print(f"{'Distortion':<24}{'Target %':>10}{'Images':>10}{'Ratio %':>10}{'Shortfall':>11}", file=out)
    for ks in manifest.summary.kinds:
        print(
            f"{ks.kind.value:<24}{100 * ks.target_ratio:>10.1f}{ks.count:>10d}{100 * ks.achieved_ratio:>10.1f}{ks.shortfall:>11.1f}",
            file=out,
        )
    print(f"{'Total':<24}{'':>10}{manifest.summary.total:>10d}", file=out)
    print("", file=out)
    print(f"{'Scene':<24}{'Images':>10}", file=out)
    for name, count in manifest.summary.scenes.items():
        print(f"{name:<24}{count:>10d}", file=out)


def cmd_plan(args) -> int:
    seed = _seed(args)
    ratios = load_ratios(args.ratios) if args.ratios else DEFAULT_RATIOS
    corpus = scan_corpus(args, _dataset(args))
    manifest = build_plan(corpus, ratios, seed)
    write_manifest(manifest, args.out)
    logger.info(f"Wrote manifest with {len(manifest.entries)} entries to {args.out}")
    print_summary(manifest)
    return EXIT_OK


def cmd_apply(args) -> int:
    try:
        config = RunConfig(
            images_dir=args.images,
            out_dir=args.out,
            depth_dir=args.depth,
            annotations=args.annotations,
            scene_index=args.scene_index,
            rain_masks=args.rain_masks,
            fog_masks=args.fog_masks,
            global_seed=_seed(args),
            jobs=args.jobs,
            depth_convention=args.depth_convention,
            overwrite=args.overwrite,
        )
    except ValidationError as e:
        raise UsageError(f"invalid run configuration: {e.errors()[0]['msg']}") from e
    manifest = load_manifest(args.manifest)
    if not manifest.entries:
        raise UsageError(f"manifest {args.manifest} is empty")
    report = run_apply(manifest, config)
    print(json.dumps({"total": report.total, "succeeded": report.succeeded, "failed": report.failed}))
    return EXIT_OK if report.succeeded > 0 else EXIT_FAILURE


def cmd_preview(args) -> int:
    kind = DistortionKind(args.kind)
    with open(args.image, "rb") as f:
        image = f.read()
    depth = None
    if args.depth:
        with open(args.depth, "rb") as f:
            depth = f.read()

    ann = None
    if args.annotations:
        dataset = load_dataset(args.annotations)
        if args.image_id is not None:
            ann = dataset.images.get(args.image_id)
        else:
            name = os.path.basename(args.image)
            ann = next((a for a in dataset if a.file_name == name), None)
        if ann is None:
            raise UsageError(f"no annotations for {args.image} in {args.annotations}")

    params = json.loads(args.params) if args.params else None
    if params is not None and not isinstance(params, dict):
        raise UsageError("--params must be a JSON object")
    preview = render_preview(
        kind,
        image,
        depth=depth,
        depth_name=args.depth,
        annotations=ann,
        level=args.level,
        params=params,
        seed=_seed(args),
        convention=DepthConvention(args.depth_convention),
        locale=Locale(args.locale),
    )
    write_png(args.out, preview)
    logger.info(f"Wrote {kind.value} preview to {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    manifest = load_manifest(args.manifest)
    corpus = scan_corpus(args, _dataset(args))
    report = validate_manifest(manifest, corpus)
    print(report.model_dump_json(indent=2))
    return EXIT_OK if report.ok else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distort-forge", description="Context-aware image distortion corpus generator")
    sub = parser.add_subparsers(dest="command", required=True)

    def corpus_flags(p, images_required=True):
        p.add_argument("--images", required=images_required, help="Directory of input images")
        p.add_argument("--annotations", help="COCO detection ground-truth JSON")
        p.add_argument("--depth", help="Directory of depth maps named after the image stems")
        p.add_argument("--scene-index", help="CSV image_id,locale")

    def seed_flag(p):
        p.add_argument("--seed", type=int, default=None, help="Global seed (default: DISTORT_FORGE_SEED)")

    def convention_flag(p):
        p.add_argument("--depth-convention", choices=[c.value for c in DepthConvention], default=DepthConvention.NEARNESS.value)

    plan = sub.add_parser("plan", help="Assign one distortion per image and write a manifest")
    corpus_flags(plan)
    seed_flag(plan)
    plan.add_argument("--ratios", help="JSON {kind: fraction} overriding the default distribution")
    plan.add_argument("--out", default="manifest.json", help="Manifest path")
    plan.set_defaults(func=cmd_plan)

    apply = sub.add_parser("apply", help="Render a manifest")
    corpus_flags(apply)
    seed_flag(apply)
    convention_flag(apply)
    apply.add_argument("--manifest", required=True)
    apply.add_argument("--out", required=True, help="Output directory")
    apply.add_argument("--jobs", type=int, default=settings.DEFAULT_JOBS)
    apply.add_argument("--rain-masks", help="Directory of captured rain masks")
    apply.add_argument("--fog-masks", help="Directory of captured fog masks")
    apply.add_argument("--overwrite", action="store_true")
    apply.set_defaults(func=cmd_apply)

    preview = sub.add_parser("preview", help="Render one distortion side by side with the original")
    preview.add_argument("--image", required=True)
    preview.add_argument("--depth", help="Depth map of the image")
    preview.add_argument("--annotations", help="COCO JSON holding the image's annotations")
    preview.add_argument("--image-id", type=int)
    preview.add_argument("--kind", required=True, choices=[k.value for k in DistortionKind])
    preview.add_argument("--level", type=int, choices=range(1, 6))
    preview.add_argument("--params", help="JSON object of distortion parameters")
    preview.add_argument("--locale", choices=[loc.value for loc in Locale], default=Locale.OUTDOOR.value)
    preview.add_argument("--out", default="preview.png")
    seed_flag(preview)
    convention_flag(preview)
    preview.set_defaults(func=cmd_preview)

    validate = sub.add_parser("validate", help="Check a manifest against the corpus")
    corpus_flags(validate)
    validate.add_argument("--manifest", required=True)
    validate.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
        format="%(asctime)s [%(levelname)s] %(message)s",
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"{args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DistortForgeError, OSError, json.JSONDecodeError) as e:
        source = getattr(e, "filename", None) or args.command
        print(f"{source}: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
