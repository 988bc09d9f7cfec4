"""
Corpus file layout.

Input images live flat in one directory; depth maps share the image stem in
their own directory; outputs are PNGs named after the input stem.
"""

import os
import logging
from typing import Dict, Iterable, List, Optional, Tuple

from app.core.errors import MissingInputError
from app.services.annotations.coco import CocoDataset

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp")
DEPTH_EXTENSIONS = (".png", ".tif", ".tiff", ".depth", ".raw", ".bin")

LABELS_FILE = "distortion_labels.csv"
REPORT_FILE = "run_report.json"


def list_images(images_dir: str) -> List[str]:
    """Sorted image file names in a directory."""
    if not os.path.isdir(images_dir):
        raise MissingInputError(f"image directory not found: {images_dir}")
    return sorted(n for n in os.listdir(images_dir) if n.lower().endswith(IMAGE_EXTENSIONS))


def corpus_files(images_dir: str, dataset: Optional[CocoDataset] = None) -> List[Tuple[int, str]]:
    """
    (image_id, file_name) pairs of the corpus.

    With annotations, the corpus is every annotated image whose file is on
    disk. Without, ids come from numeric file stems (COCO naming); other names
    are numbered after the largest numeric id in sorted order.
    """
    names = list_images(images_dir)
    if dataset is not None:
        on_disk = set(names)
        pairs = [(ann.image_id, ann.file_name) for ann in sorted(dataset, key=lambda a: a.image_id) if ann.file_name in on_disk]
        skipped = len(dataset) - len(pairs)
        if skipped:
            logger.warning(f"{skipped} annotated images are not in {images_dir} and are left out")
        return pairs

    numeric: Dict[str, int] = {}
    for name in names:
        stem = os.path.splitext(name)[0]
        if stem.isdigit():
            numeric[name] = int(stem)
    next_id = max(numeric.values(), default=-1) + 1
    pairs = []
    taken = set()
    for name in names:
        image_id = numeric.get(name)
        if image_id is None or image_id in taken:
            image_id = next_id
            next_id += 1
        taken.add(image_id)
        pairs.append((image_id, name))
    return pairs


def find_depth(depth_dir: Optional[str], file_name: str) -> Optional[str]:
    """Depth map sharing the image stem, or None."""
    if not depth_dir:
        return None
    stem = os.path.splitext(os.path.basename(file_name))[0]
    for ext in DEPTH_EXTENSIONS:
        path = os.path.join(depth_dir, stem + ext)
        if os.path.isfile(path):
            return path
    return None


def output_name(file_name: str) -> str:
    """Output PNG name keeping the input stem."""
    return os.path.splitext(os.path.basename(file_name))[0] + ".png"


def output_path(out_dir: str, file_name: str) -> str:
    return os.path.join(out_dir, output_name(file_name))


def output_collisions(files: Iterable[Tuple[int, str]]) -> Dict[int, int]:
    """
    Images whose output name repeats one taken earlier, e.g. a.jpg after a.png.

    Returns:
        image_id -> id of the first image writing the same output
    """
    first: Dict[str, int] = {}
    clashes: Dict[int, int] = {}
    for image_id, file_name in files:
        name = output_name(file_name).lower()
        if name in first:
            clashes[image_id] = first[name]
        else:
            first[name] = image_id
    return clashes
