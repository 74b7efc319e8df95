"""Shared builders for compact test fixtures."""

import pytest

from hatcheck.coco import Dataset, ImageInfo
from hatcheck.core import (
    BBox,
    HARD_HAT_CATEGORY,
    Instance,
    Keypoint,
    PERSON_CATEGORY,
)

_COUNTER = {"id": 0}


def next_id() -> int:
    _COUNTER["id"] += 1
    return _COUNTER["id"]


def box(x, y, w, h) -> BBox:
    return BBox(x, y, w, h)


def person(image_id, bbox, kp=None, score=None, ignore=False, id=None) -> Instance:
    head = Keypoint(*kp) if isinstance(kp, tuple) else kp
    return Instance(id if id is not None else next_id(), image_id, PERSON_CATEGORY,
                    BBox(*bbox), head, score, ignore)


def hat(image_id, bbox, score=None, ignore=False, id=None) -> Instance:
    return Instance(id if id is not None else next_id(), image_id, HARD_HAT_CATEGORY,
                    BBox(*bbox), None, score, ignore)


def dataset(instances, n_images=None, size=(1000, 1000)) -> Dataset:
    image_ids = sorted({i.image_id for i in instances}) or [1]
    if n_images is not None:
        image_ids = sorted(set(image_ids) | set(range(1, n_images + 1)))
    images = tuple(ImageInfo(i, size[0], size[1], f"img_{i}.png") for i in image_ids)
    return Dataset(images, (PERSON_CATEGORY, HARD_HAT_CATEGORY), tuple(instances))


@pytest.fixture(autouse=True)
def _reset_ids():
    _COUNTER["id"] = 0
    yield
