import numpy as np
import pytest

from app.services.annotations.coco import AnnotationSet, ObjectAnnotation, Segmentation
from create_test_corpus import create_test_corpus

SUPERCATEGORY = {
    "person": "person",
    "horse": "animal",
    "car": "vehicle",
    "bicycle": "vehicle",
    "surfboard": "sports",
    "skis": "sports",
    "chair": "furniture",
}


def rect_object(object_id, x, y, w, h, width, height, category="person", iscrowd=False):
    """Rectangular object whose polygon covers pixel columns x..x+w-1 and rows y..y+h-1."""
    polygon = (float(x), float(y), float(x + w), float(y), float(x + w), float(y + h), float(x), float(y + h))
    return ObjectAnnotation(
        object_id=object_id,
        category_id=object_id,
        category=category,
        supercategory=SUPERCATEGORY.get(category, "static"),
        bbox=(float(x), float(y), float(w), float(h)),
        segmentation=Segmentation(polygons=(polygon,)),
        width=width,
        height=height,
        iscrowd=iscrowd,
    )


def annotation_set(width, height, *objects, image_id=1):
    return AnnotationSet(image_id=image_id, width=width, height=height, file_name=f"{image_id:012d}.png", objects=tuple(objects))


@pytest.fixture
def make_object():
    return rect_object


@pytest.fixture
def make_annotations():
    return annotation_set


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def natural_image(rng):
    """Smooth gradient with a few flat patches, 48x64."""
    yy, xx = np.mgrid[0:48, 0:64]
    img = np.stack([xx / 64.0, yy / 48.0, 0.5 + 0.25 * np.sin(xx / 5.0)], axis=2)
    img[10:20, 10:30] = (0.9, 0.2, 0.1)
    img[30:40, 40:60] = (0.1, 0.3, 0.8)
    return np.clip(img, 0.0, 1.0)


@pytest.fixture
def corpus(tmp_path):
    return create_test_corpus(str(tmp_path / "corpus"), count=20, seed=0)


def random_objects(rng, width, height, categories=("person", "car", "horse", "chair")):
    """One to three random rectangles with distinct ids."""
    objects = []
    for object_id in range(1, int(rng.integers(1, 4)) + 1):
        w, h = int(rng.integers(4, width // 3)), int(rng.integers(4, height // 3))
        x, y = int(rng.integers(0, width - w)), int(rng.integers(0, height - h))
        objects.append(rect_object(object_id, x, y, w, h, width, height, category=str(rng.choice(categories))))
    return annotation_set(width, height, *objects)
