"""
Generate a small synthetic corpus for trying the CLI and for the tests:
RGB images, 16-bit nearness depth PNGs, a COCO detection file and a scene
index.

    python create_test_corpus.py [output_dir] [count]
"""

import json
import os
import sys

import numpy as np
from PIL import Image

WIDTH = 64
HEIGHT = 48

CATEGORIES = [
    {"id": 1, "name": "person", "supercategory": "person"},
    {"id": 2, "name": "bicycle", "supercategory": "vehicle"},
    {"id": 3, "name": "car", "supercategory": "vehicle"},
    {"id": 4, "name": "horse", "supercategory": "animal"},
    {"id": 5, "name": "surfboard", "supercategory": "sports"},
    {"id": 6, "name": "chair", "supercategory": "furniture"},
]


def _rect(x, y, w, h):
    return [float(x), float(y), float(x + w), float(y), float(x + w), float(y + h), float(x), float(y + h)]


def _image(rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:HEIGHT, 0:WIDTH]
    base = np.stack([xx / WIDTH, yy / HEIGHT, 0.5 + 0.0 * xx], axis=2)
    img = (base * 200 + 20).astype(np.float64)
    for _ in range(4):
        x, y = rng.integers(0, WIDTH - 10), rng.integers(0, HEIGHT - 10)
        w, h = rng.integers(4, 12), rng.integers(4, 12)
        img[y:y + h, x:x + w] = rng.integers(0, 256, size=3)
    return np.clip(img, 0, 255).astype(np.uint8)


def _depth() -> np.ndarray:
    # nearness grows toward the bottom of the frame
    rows = np.linspace(1000, 60000, HEIGHT)
    return np.repeat(rows[:, None], WIDTH, axis=1).astype(np.uint16)


def create_test_corpus(root: str, count: int = 20, seed: int = 0) -> dict:
    """
    Write the corpus under root and return its paths.

    Every fifth image has no depth map, every third is indoor, and objects
    cycle through rider-on-horse, surfer, parked car, chair-only and empty
    scenes so every distortion kind has candidates.
    """
    rng = np.random.default_rng(seed)
    images_dir = os.path.join(root, "images")
    depth_dir = os.path.join(root, "depth")
    os.makedirs(images_dir, exist_ok=True)
    os.makedirs(depth_dir, exist_ok=True)

    images, annotations, scenes = [], [], ["image_id,locale"]
    ann_id = 1
    for i in range(count):
        image_id = i + 1
        file_name = f"{image_id:012d}.png"
        Image.fromarray(_image(rng)).save(os.path.join(images_dir, file_name))
        if i % 5 != 4:
            Image.fromarray(_depth()).save(os.path.join(depth_dir, file_name))
        images.append({"id": image_id, "width": WIDTH, "height": HEIGHT, "file_name": file_name})
        scenes.append(f"{image_id},{'indoor' if i % 3 == 2 else 'outdoor'}")

        layout = i % 5
        objects = []
        if layout == 0:
            objects = [(4, (20, 20, 20, 16)), (1, (24, 12, 10, 18))]
        elif layout == 1:
            objects = [(1, (10, 10, 8, 20)), (5, (6, 28, 20, 6))]
        elif layout == 2:
            objects = [(3, (30, 24, 24, 14))]
        elif layout == 3:
            objects = [(6, (20, 20, 12, 16))]
        for category_id, (x, y, w, h) in objects:
            annotations.append({
                "id": ann_id,
                "image_id": image_id,
                "category_id": category_id,
                "bbox": [x, y, w, h],
                "area": w * h,
                "segmentation": [_rect(x, y, w, h)],
                "iscrowd": 0,
            })
            ann_id += 1

    annotations_path = os.path.join(root, "instances.json")
    with open(annotations_path, "w", encoding="utf-8") as f:
        json.dump({"images": images, "annotations": annotations, "categories": CATEGORIES}, f)
    scene_index = os.path.join(root, "scenes.csv")
    with open(scene_index, "w", encoding="utf-8") as f:
        f.write("\n".join(scenes) + "\n")

    return {
        "root": root,
        "images": images_dir,
        "depth": depth_dir,
        "annotations": annotations_path,
        "scene_index": scene_index,
        "count": count,
    }


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join("tmp", "test_corpus")
    n = int(sys.argv[2]) if len(sys.argv) > 2 else 20
    paths = create_test_corpus(out, n)
    print(f"Test corpus created at: {paths['root']}")
