"""Read/write COCO-format annotation and detection files, plus dataset stats.

The on-disk formats are plain COCO JSON: an annotation file with ``images``,
``categories`` and ``annotations`` sections, and a results file that is a
flat list of detection records. A person's head location travels as a
single-keypoint ``keypoints`` triplet [x, y, v].
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass
from functools import cached_property

from .core import (
    BBox,
    Category,
    HARD_HAT,
    Instance,
    Keypoint,
    PERSON,
    PERSON_FAMILY,
    bucket_of,
    contains,
    group_by_image,
)


class FormatError(ValueError):
    """A file or record does not follow the expected wire format."""


class ValidationError(ValueError):
    """A record is well-formed but carries an out-of-range value."""


class IntegrityError(ValueError):
    """A record references an image or category that does not exist."""


@dataclass(frozen=True)
class ImageInfo:
    id: int
    width: int
    height: int
    file_name: str


@dataclass(frozen=True)
class Dataset:
    """An immutable bundle of images, categories and ground-truth instances."""

    images: tuple[ImageInfo, ...]
    categories: tuple[Category, ...]
    instances: tuple[Instance, ...]

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "instances", tuple(self.instances))
        image_ids = {im.id for im in self.images}
        if len(image_ids) != len(self.images):
            raise IntegrityError("duplicate image ids")
        cat_ids = {c.id for c in self.categories}
        if len(cat_ids) != len(self.categories):
            raise IntegrityError("duplicate category ids")
        seen = set()
        for inst in self.instances:
            if inst.id in seen:
                raise IntegrityError(f"duplicate instance id {inst.id}")
            seen.add(inst.id)
            if inst.image_id not in image_ids:
                raise IntegrityError(
                    f"instance {inst.id} references missing image id {inst.image_id}"
                )
            if inst.category.id not in cat_ids:
                raise IntegrityError(
                    f"instance {inst.id} references missing category id {inst.category.id}"
                )

    @cached_property
    def _by_image(self) -> dict[int, tuple[Instance, ...]]:
        grouped = group_by_image(self.instances)
        return {im.id: tuple(grouped.get(im.id, ())) for im in self.images}

    def instances_in(self, image_id: int) -> tuple[Instance, ...]:
        return self._by_image.get(image_id, ())

    def category_by_id(self, cat_id: int) -> Category:
        for c in self.categories:
            if c.id == cat_id:
                return c
        raise IntegrityError(f"no category with id {cat_id}")

    def category_by_name(self, name: str) -> Category | None:
        for c in self.categories:
            if c.name == name:
                return c
        return None


def _get(record, key, ctx):
    try:
        return record[key]
    except (KeyError, TypeError, IndexError):
        raise FormatError(f"{ctx}: missing field {key!r}") from None


def _parse_bbox(value, ctx) -> BBox:
    try:
        x, y, w, h = (float(v) for v in value)
        return BBox(x, y, w, h)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{ctx}: bad bbox {value!r} ({exc})") from None


def _parse_head_keypoint(value, ctx) -> Keypoint | None:
    """First [x, y, v] triplet of a COCO keypoints array, if labeled."""
    try:
        if len(value) % 3 != 0 or len(value) == 0:
            raise ValueError("length must be a positive multiple of 3")
        x, y, v = float(value[0]), float(value[1]), int(value[2])
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{ctx}: bad keypoints {value!r} ({exc})") from None
    if v <= 0:
        return None
    try:
        return Keypoint(x, y, v)
    except ValueError as exc:
        raise FormatError(f"{ctx}: {exc}") from None


def _load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON ({exc})") from None


def load_ground_truth(path) -> Dataset:
    """Load a COCO annotation file into a Dataset.

    Person-family annotations pick up a head keypoint from the first
    ``keypoints`` triplet when its visibility is positive. Records with a
    crowd flag load with ignore=True and are excluded from FP/FN counting
    downstream.
    """
    raw = _load_json(path)
    if not isinstance(raw, dict):
        raise FormatError(f"{path}: expected a JSON object at top level")

    images = []
    for i, rec in enumerate(_get(raw, "images", path)):
        ctx = f"image #{i}"
        images.append(
            ImageInfo(
                id=int(_get(rec, "id", ctx)),
                width=int(rec.get("width", 0)),
                height=int(rec.get("height", 0)),
                file_name=str(rec.get("file_name", "")),
            )
        )

    categories = []
    for i, rec in enumerate(_get(raw, "categories", path)):
        ctx = f"category #{i}"
        try:
            categories.append(Category(int(_get(rec, "id", ctx)), str(_get(rec, "name", ctx))))
        except ValueError as exc:
            raise FormatError(f"{ctx}: {exc}") from None
    cats_by_id = {c.id: c for c in categories}

    instances = []
    for i, rec in enumerate(_get(raw, "annotations", path)):
        ann_id = rec.get("id", i) if isinstance(rec, dict) else i
        ctx = f"annotation #{i} (id={ann_id})"
        cat_id = int(_get(rec, "category_id", ctx))
        if cat_id not in cats_by_id:
            raise IntegrityError(f"{ctx}: unknown category id {cat_id}")
        category = cats_by_id[cat_id]
        head = None
        if "keypoints" in rec and category.name in PERSON_FAMILY:
            head = _parse_head_keypoint(rec["keypoints"], ctx)
        instances.append(
            Instance(
                id=int(_get(rec, "id", ctx)),
                image_id=int(_get(rec, "image_id", ctx)),
                category=category,
                bbox=_parse_bbox(_get(rec, "bbox", ctx), ctx),
                head_keypoint=head,
                score=None,
                ignore=bool(rec.get("iscrowd", 0)),
            )
        )

    return Dataset(tuple(images), tuple(categories), tuple(instances))


def load_detections(path, dataset: Dataset) -> list[Instance]:
    """Load a COCO results file, validating references against ``dataset``.

    Records come back in file order with scores preserved exactly. Records
    may carry an explicit ``id``; otherwise ids are assigned from the read
    position.
    """
    raw = _load_json(path)
    if not isinstance(raw, list):
        raise FormatError(f"{path}: expected a JSON array of detection records")

    image_ids = {im.id for im in dataset.images}
    cats_by_id = {c.id: c for c in dataset.categories}
    detections = []
    for i, rec in enumerate(raw):
        ctx = f"detection #{i}"
        image_id = int(_get(rec, "image_id", ctx))
        if image_id not in image_ids:
            raise IntegrityError(f"{ctx}: unknown image id {image_id}")
        cat_id = int(_get(rec, "category_id", ctx))
        if cat_id not in cats_by_id:
            raise IntegrityError(f"{ctx}: unknown category id {cat_id}")
        category = cats_by_id[cat_id]
        score = float(_get(rec, "score", ctx))
        if not 0.0 <= score <= 1.0:
            raise ValidationError(f"{ctx}: score {score} outside [0, 1]")
        head = None
        if "keypoints" in rec and category.name in PERSON_FAMILY:
            head = _parse_head_keypoint(rec["keypoints"], ctx)
        detections.append(
            Instance(
                id=int(rec.get("id", i)),
                image_id=image_id,
                category=category,
                bbox=_parse_bbox(_get(rec, "bbox", ctx), ctx),
                head_keypoint=head,
                score=score,
                ignore=bool(rec.get("iscrowd", 0)),
            )
        )
    return detections


def _instance_record(inst: Instance) -> dict:
    rec = {
        "id": inst.id,
        "image_id": inst.image_id,
        "category_id": inst.category.id,
        "bbox": [inst.bbox.x, inst.bbox.y, inst.bbox.w, inst.bbox.h],
    }
    if inst.score is not None:
        rec["score"] = inst.score
    if inst.head_keypoint is not None:
        k = inst.head_keypoint
        rec["keypoints"] = [k.x, k.y, k.visibility]
    if inst.ignore:
        rec["iscrowd"] = 1
    return rec


def write_text_atomic(path, text: str) -> None:
    """Write a file via temp-file-plus-rename so readers never see a torn file."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def instances_json(instances) -> str:
    """COCO results-style JSON text for a list of instances."""
    return json.dumps([_instance_record(inst) for inst in instances])


def write_instances(instances, path) -> None:
    """Write instances as a COCO results-style JSON list.

    Scores and coordinates round-trip bit-exactly through
    ``load_detections``; json's shortest-repr float encoding guarantees it.
    """
    write_text_atomic(path, instances_json(instances))


def write_dataset(dataset: Dataset, path) -> None:
    """Write a Dataset as a full COCO annotation file."""
    payload = {
        "images": [
            {"id": im.id, "width": im.width, "height": im.height, "file_name": im.file_name}
            for im in dataset.images
        ],
        "categories": [{"id": c.id, "name": c.name} for c in dataset.categories],
        "annotations": [],
    }
    for inst in dataset.instances:
        rec = _instance_record(inst)
        rec.pop("score", None)
        rec.setdefault("iscrowd", 0)
        rec["area"] = inst.bbox.area
        if "keypoints" in rec:
            rec["num_keypoints"] = 1
        payload["annotations"].append(rec)
    write_text_atomic(path, json.dumps(payload))


SUBGROUP_WITH_KEYPOINT = "with_head_keypoint"
SUBGROUP_WEARING = "wearing_hard_hat"


@dataclass(frozen=True)
class StatsRow:
    category: str
    subgroup: str  # "" for the plain per-category row
    all: int
    small: int
    medium: int
    large: int


@dataclass(frozen=True)
class StatsReport:
    rows: tuple[StatsRow, ...]

    def row(self, category: str, subgroup: str = "") -> StatsRow:
        for r in self.rows:
            if r.category == category and r.subgroup == subgroup:
                return r
        raise KeyError((category, subgroup))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["category", "subgroup", "all", "small", "medium", "large"])
        for r in self.rows:
            writer.writerow([r.category, r.subgroup, r.all, r.small, r.medium, r.large])
        return buf.getvalue()


def _bucket_counts(instances) -> dict:
    counts = {"small": 0, "medium": 0, "large": 0}
    for inst in instances:
        counts[bucket_of(inst.bbox).name] += 1
    return counts


def _row(category: str, subgroup: str, instances) -> StatsRow:
    c = _bucket_counts(instances)
    return StatsRow(category, subgroup, len(instances), c["small"], c["medium"], c["large"])


def dataset_stats(dataset: Dataset) -> StatsReport:
    """Per-category instance counts by size bucket, with person subgroups.

    The person subgroups count persons with a labeled head keypoint, and
    those whose keypoint falls inside some hard-hat box of the same image
    (the same containment rule the compliance classifier uses). Buckets are
    keyed by the person's own box area.
    """
    rows = []
    for cat in dataset.categories:
        members = [i for i in dataset.instances if i.category.id == cat.id]
        rows.append(_row(cat.name, "", members))
        if cat.name == PERSON:
            with_kp = [p for p in members if p.has_head_keypoint]
            rows.append(_row(cat.name, SUBGROUP_WITH_KEYPOINT, with_kp))
            wearing = []
            for p in with_kp:
                hats = [
                    i
                    for i in dataset.instances_in(p.image_id)
                    if i.category.name == HARD_HAT
                ]
                if any(contains(h.bbox, p.head_keypoint) for h in hats):
                    wearing.append(p)
            rows.append(_row(cat.name, SUBGROUP_WEARING, wearing))
    return StatsReport(tuple(rows))
