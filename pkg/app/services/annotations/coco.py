"""
COCO detection ground-truth parsing.

Only the images / annotations / categories arrays are read; other top-level
keys (info, licenses, captions, ...) are ignored. Segmentations stay in their
compact form and are rasterized on demand through ObjectAnnotation.mask.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from app.core.errors import (
    DistortForgeError,
    GeometryError,
    IntegrityError,
    ParseError,
    SchemaError,
    SegmentationError,
    reading,
)
from app.services.annotations.masks import (
    BBox,
    BitMask,
    check_run_lengths,
    decode_rle,
    rasterize_polygon,
)

logger = logging.getLogger(__name__)

MAX_PIXELS = 1 << 26


class _CocoImage(BaseModel):
    model_config = ConfigDict(extra="ignore", strict=True)
    id: int
    width: int
    height: int
    file_name: str = ""


class _CocoCategory(BaseModel):
    model_config = ConfigDict(extra="ignore", strict=True)
    id: int
    name: str
    supercategory: str = ""


class _CocoAnnotation(BaseModel):
    model_config = ConfigDict(extra="ignore")
    id: int
    image_id: int
    category_id: int
    bbox: Tuple[float, float, float, float]
    segmentation: Any = None
    iscrowd: int = 0


@dataclass(frozen=True)
class Segmentation:
    """Compact segmentation: a list of polygons or one run-length list."""
    polygons: Tuple[Tuple[float, ...], ...] = ()
    rle: Optional[Union[Tuple[int, ...], str]] = None

    def rasterize(self, width: int, height: int) -> BitMask:
        if self.rle is not None:
            return decode_rle(self.rle, (height, width))
        mask = np.zeros((height, width), dtype=bool)
        for poly in self.polygons:
            mask |= rasterize_polygon(poly, width, height)
        return mask


@dataclass(frozen=True)
class ObjectAnnotation:
    object_id: int
    category_id: int
    category: str
    supercategory: str
    bbox: BBox
    segmentation: Segmentation
    width: int
    height: int
    iscrowd: bool = False

    @property
    def mask(self) -> BitMask:
        """Rasterized segmentation; recomputed on every access, bind it locally."""
        return self.segmentation.rasterize(self.width, self.height)


@dataclass(frozen=True)
class AnnotationSet:
    image_id: int
    width: int
    height: int
    file_name: str = ""
    objects: Tuple[ObjectAnnotation, ...] = ()

    def non_crowd(self) -> Tuple[ObjectAnnotation, ...]:
        return tuple(o for o in self.objects if not o.iscrowd)

    def categories(self) -> frozenset:
        return frozenset(o.category for o in self.objects)

    def get(self, object_id: int) -> ObjectAnnotation:
        for o in self.objects:
            if o.object_id == object_id:
                return o
        raise KeyError(object_id)


@dataclass(frozen=True)
class AnnotationIssue:
    annotation_id: int
    image_id: int
    reason: str


@dataclass
class CocoDataset:
    images: Dict[int, AnnotationSet] = field(default_factory=dict)
    issues: List[AnnotationIssue] = field(default_factory=list)

    def __iter__(self):
        return iter(self.images.values())

    def __len__(self) -> int:
        return len(self.images)


def _decode_text(data: Union[bytes, str]) -> Any:
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError(f"invalid UTF-8: {e.reason}", offset=e.start) from e
    else:
        text = data
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        offset = len(text[: e.pos].encode("utf-8"))
        raise ParseError(f"malformed JSON: {e.msg}", offset=offset) from e
    except RecursionError as e:
        raise ParseError("JSON nesting too deep") from e
    except ValueError as e:
        # integer literals past the interpreter digit limit
        raise ParseError(f"unreadable JSON number: {e}") from e


def _records(doc: Dict[str, Any], key: str, model):
    raw = doc.get(key, [])
    if not isinstance(raw, list):
        raise SchemaError(f'"{key}" must be an array')
    records = []
    for i, item in enumerate(raw):
        try:
            records.append(model.model_validate(item))
        except ValidationError as e:
            first = e.errors()[0]
            loc = ".".join(str(p) for p in first["loc"])
            raise SchemaError(f'{key}[{i}]: {loc or "record"}: {first["msg"]}') from e
    return records


def _clamp_bbox(bbox: BBox, width: int, height: int) -> BBox:
    x, y, w, h = bbox
    if not all(math.isfinite(v) for v in bbox):
        raise GeometryError("bbox coordinates must be finite")
    x0 = min(max(x, 0.0), float(width))
    y0 = min(max(y, 0.0), float(height))
    x1 = min(max(x + w, 0.0), float(width))
    y1 = min(max(y + h, 0.0), float(height))
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        raise GeometryError("bbox is empty after clamping to the image")
    return (x0, y0, x1 - x0, y1 - y0)


def _coordinates(poly: Any) -> Tuple[float, ...]:
    if not isinstance(poly, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in poly):
        raise SegmentationError("polygon must be a flat list of numbers")
    if len(poly) < 6 or len(poly) % 2:
        raise GeometryError("polygon needs at least 3 vertices")
    try:
        coords = tuple(float(v) for v in poly)
    except (OverflowError, TypeError, ValueError) as e:
        raise GeometryError(f"polygon coordinate is not representable: {e}") from e
    if not all(math.isfinite(v) for v in coords):
        raise GeometryError("polygon coordinates must be finite")
    return coords


def parse_segmentation(raw: Any, width: int, height: int) -> Segmentation:
    """Normalize a COCO segmentation value: polygon list, uncompressed RLE or compressed RLE."""
    if isinstance(raw, list) and raw:
        return Segmentation(polygons=tuple(_coordinates(poly) for poly in raw))
    if isinstance(raw, dict) and "counts" in raw:
        size = raw.get("size")
        if not (isinstance(size, list) and len(size) == 2 and all(isinstance(v, int) and not isinstance(v, bool) for v in size)):
            raise SegmentationError("RLE size must be [height, width]")
        if tuple(size) != (height, width):
            raise SegmentationError(f"RLE size {size} does not match image {height}x{width}")
        counts = raw["counts"]
        if isinstance(counts, str):
            check_run_lengths(counts, (height, width))
            return Segmentation(rle=counts)
        if not (isinstance(counts, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in counts)):
            raise SegmentationError("RLE counts must be an integer list or a compressed string")
        check_run_lengths(counts, (height, width))
        return Segmentation(rle=tuple(counts))
    raise SegmentationError("unsupported segmentation variant")


def parse_dataset(data: Union[bytes, str], decode_masks: bool = True) -> CocoDataset:
    """
    Parse a COCO detection document.

    Args:
        data: UTF-8 JSON text
        decode_masks: Rasterize every segmentation now so empty masks are
            rejected at parse time (planning can skip this)

    Returns:
        CocoDataset with one AnnotationSet per image, in document order, and the
        per-annotation issues that caused annotations to be skipped

    Raises:
        ParseError: Malformed syntax or schema
        IntegrityError: An annotation references an unknown image or category
    """
    doc = _decode_text(data)
    if not isinstance(doc, dict):
        raise SchemaError("top-level value must be an object")

    images = _records(doc, "images", _CocoImage)
    categories = {c.id: c for c in _records(doc, "categories", _CocoCategory)}
    annotations = _records(doc, "annotations", _CocoAnnotation)

    by_image: Dict[int, _CocoImage] = {}
    for img in images:
        if img.id in by_image:
            raise IntegrityError(f"duplicate image id {img.id}", ref=img.id)
        if img.width <= 0 or img.height <= 0:
            raise SchemaError(f"image {img.id} has non-positive size")
        if img.width * img.height > MAX_PIXELS:
            raise SchemaError(f"image {img.id} exceeds {MAX_PIXELS} pixels")
        by_image[img.id] = img

    dataset = CocoDataset()
    objects: Dict[int, List[ObjectAnnotation]] = {img_id: [] for img_id in by_image}
    seen_ids = set()

    for ann in annotations:
        if ann.image_id not in by_image:
            raise IntegrityError(f"annotation {ann.id} references unknown image id {ann.image_id}", ref=ann.image_id)
        if ann.category_id not in categories:
            raise IntegrityError(f"annotation {ann.id} references unknown category id {ann.category_id}", ref=ann.category_id)
        if ann.id in seen_ids:
            raise IntegrityError(f"duplicate annotation id {ann.id}", ref=ann.id)
        seen_ids.add(ann.id)

        img = by_image[ann.image_id]
        category = categories[ann.category_id]
        try:
            bbox = _clamp_bbox(ann.bbox, img.width, img.height)
            segmentation = parse_segmentation(ann.segmentation, img.width, img.height)
            obj = ObjectAnnotation(
                object_id=ann.id,
                category_id=category.id,
                category=category.name,
                supercategory=category.supercategory,
                bbox=bbox,
                segmentation=segmentation,
                width=img.width,
                height=img.height,
                iscrowd=bool(ann.iscrowd),
            )
            if decode_masks and not obj.mask.any():
                raise GeometryError("segmentation covers no pixel")
        except DistortForgeError as e:
            logger.warning(f"Skipping annotation {ann.id} of image {ann.image_id}: {e}")
            dataset.issues.append(AnnotationIssue(ann.id, ann.image_id, str(e)))
            continue
        objects[ann.image_id].append(obj)

    for img in images:
        dataset.images[img.id] = AnnotationSet(
            image_id=img.id,
            width=img.width,
            height=img.height,
            file_name=img.file_name,
            objects=tuple(objects[img.id]),
        )

    logger.info(f"Parsed {len(dataset.images)} images, {len(seen_ids)} annotations, {len(dataset.issues)} skipped")
    return dataset


def load_dataset(path: str, decode_masks: bool = True) -> CocoDataset:
    with reading(path), open(path, "rb") as f:
        return parse_dataset(f.read(), decode_masks=decode_masks)
