"""Synthetic ground truth and perturbed detections with known properties.

Persons are laid out on disjoint grid cells so that, by construction, a
wearer's hat box contains their head keypoint while no hat box contains any
other person's keypoint. Detections are the ground truth re-scored and
jittered, with seeded drops and spurious boxes.

Noise draws are consumed for every instance regardless of the rates, so two
specs differing only in ``drop_rate`` (or ``false_positive_rate``) produce
nested detection sets: raising the rate only removes (or adds) instances.
That coupling makes noise-monotonicity checks exact per seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from .coco import Dataset, ImageInfo, write_text_atomic
from .core import (
    BBox,
    HARD_HAT_CATEGORY,
    Instance,
    Keypoint,
    PERSON_CATEGORY,
)

SCENE_SCHEMA_VERSION = 1
FP_SLOTS_PER_IMAGE = 3


@dataclass(frozen=True)
class ScoreModel:
    """Detection score distribution: uniform on [a, b] or normal(a, b).

    Samples are clipped to [0, 1].
    """

    kind: str = "uniform"
    a: float = 0.5
    b: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "normal"):
            raise ValueError(f"score model kind must be uniform or normal, got {self.kind!r}")
        if self.kind == "uniform" and self.b < self.a:
            raise ValueError("uniform score model needs a <= b")
        if self.kind == "normal" and self.b < 0:
            raise ValueError("normal score model needs a non-negative std")

    def sample(self, rng) -> float:
        # one uniform and one normal draw per call keeps rng streams aligned
        # across score-model changes
        u = rng.uniform()
        z = rng.standard_normal()
        if self.kind == "uniform":
            value = self.a + (self.b - self.a) * u
        else:
            value = self.a + self.b * z
        return float(min(1.0, max(0.0, value)))


@dataclass(frozen=True)
class SceneSpec:
    """Everything the generator needs; reproducible per seed."""

    n_images: int = 4
    persons_per_image: tuple[int, int] = (1, 4)
    wearer_probability: float = 0.7
    person_size_range: tuple[float, float] = (30.0, 180.0)  # box height, px
    head_height_fraction: float = 0.08  # keypoint sits this far down the box
    hat_size_fraction: tuple[float, float] = (0.5, 0.2)  # (w, h) vs person box
    score_model: ScoreModel = ScoreModel()
    false_positive_rate: float = 0.0  # per spurious-box slot, 3 slots/image
    drop_rate: float = 0.0
    box_jitter: float = 0.0  # offsets and resizes as a fraction of box size
    seed: int = 0
    image_size: tuple[int, int] = (1000, 1000)

    def __post_init__(self):
        object.__setattr__(self, "persons_per_image", tuple(self.persons_per_image))
        object.__setattr__(self, "person_size_range", tuple(self.person_size_range))
        object.__setattr__(self, "hat_size_fraction", tuple(self.hat_size_fraction))
        object.__setattr__(self, "image_size", tuple(self.image_size))
        for name in ("wearer_probability", "false_positive_rate", "drop_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if self.n_images < 1:
            raise ValueError("n_images must be >= 1")
        lo, hi = self.persons_per_image
        if not (1 <= lo <= hi):
            raise ValueError("persons_per_image must be an increasing range from >= 1")
        lo, hi = self.person_size_range
        if not (0 < lo <= hi):
            raise ValueError("person_size_range must be positive and increasing")
        if not 0.0 <= self.head_height_fraction <= 0.5:
            raise ValueError("head_height_fraction must lie in [0, 0.5]")
        fw, fh = self.hat_size_fraction
        if not (0 < fw <= 1 and 0 < fh <= 1):
            raise ValueError("hat_size_fraction components must lie in (0, 1]")
        if not 0.0 <= self.box_jitter <= 0.5:
            raise ValueError("box_jitter must lie in [0, 0.5]")

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["score_model"] = asdict(self.score_model)
        return {"schema_version": SCENE_SCHEMA_VERSION, **payload}

    @staticmethod
    def from_dict(payload: dict) -> "SceneSpec":
        data = dict(payload)
        version = data.pop("schema_version", SCENE_SCHEMA_VERSION)
        if version != SCENE_SCHEMA_VERSION:
            raise ValueError(f"unsupported scene spec schema version {version!r}")
        if "score_model" in data:
            data["score_model"] = ScoreModel(**data["score_model"])
        known = SceneSpec.__dataclass_fields__
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown scene spec fields: {sorted(unknown)}")
        for name in ("persons_per_image", "person_size_range", "hat_size_fraction", "image_size"):
            if name in data:
                data[name] = tuple(data[name])
        return SceneSpec(**data)

    def save(self, path) -> None:
        write_text_atomic(path, json.dumps(self.to_dict(), indent=2))

    @staticmethod
    def load(path) -> "SceneSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return SceneSpec.from_dict(json.load(fh))


@dataclass(frozen=True)
class Scene:
    """Generated ground truth, detections, and the generator's intent."""

    dataset: Dataset
    detections: tuple[Instance, ...]
    wearer_ids: frozenset[int]  # person instance ids meant as wearers


def _grid_cells(width, height, max_persons):
    cols = max(1, math.ceil(math.sqrt(max_persons)))
    rows = max(1, math.ceil(max_persons / cols))
    cw, ch = width / cols, height / rows
    return [(c * cw, r * ch, cw, ch) for r in range(rows) for c in range(cols)]


def _jitter_box(box: BBox, j: float, rng) -> BBox:
    # draws happen even when j == 0 so streams stay aligned across specs
    dx, dy, sw, sh = rng.uniform(-1.0, 1.0, 4)
    return BBox(
        box.x + dx * j * box.w,
        box.y + dy * j * box.h,
        box.w * (1.0 + sw * j),
        box.h * (1.0 + sh * j),
    )


def _jitter_keypoint(kp: Keypoint, box: BBox, j: float, rng) -> Keypoint:
    dx, dy = rng.uniform(-1.0, 1.0, 2)
    return Keypoint(kp.x + dx * j * box.w, kp.y + dy * j * box.h, kp.visibility)


def generate_scene(spec: SceneSpec) -> Scene:
    """Build one seeded scene with known wearer labels."""
    seq = np.random.SeedSequence(spec.seed)
    layout_rng, jitter_rng, score_rng, drop_rng, fp_rng = (
        np.random.default_rng(child) for child in seq.spawn(5)
    )

    width, height = spec.image_size
    lo_n, hi_n = spec.persons_per_image
    size_lo, size_hi = spec.person_size_range
    fw, fh = spec.hat_size_fraction

    images = []
    instances = []
    wearer_ids = set()
    next_id = 1
    for image_id in range(1, spec.n_images + 1):
        images.append(ImageInfo(image_id, width, height, f"synthetic_{image_id:04d}.png"))
        n_persons = int(layout_rng.integers(lo_n, hi_n + 1))
        cells = _grid_cells(width, height, hi_n)
        order = layout_rng.permutation(len(cells))
        for slot in range(n_persons):
            cx, cy, cw, ch = cells[order[slot]]
            pad_x, pad_y = 0.15 * cw, 0.15 * ch
            inner_w, inner_h = cw - 2 * pad_x, ch - 2 * pad_y
            h = float(layout_rng.uniform(size_lo, size_hi))
            w = h * float(layout_rng.uniform(0.35, 0.6))
            scale = min(1.0, inner_w / w, inner_h / h)
            w, h = w * scale, h * scale
            x = cx + pad_x + float(layout_rng.uniform(0.0, max(inner_w - w, 0.0)))
            y = cy + pad_y + float(layout_rng.uniform(0.0, max(inner_h - h, 0.0)))
            person_box = BBox(x, y, w, h)
            head = Keypoint(x + w / 2, y + spec.head_height_fraction * h, 2)
            is_wearer = bool(layout_rng.uniform() < spec.wearer_probability)

            person = Instance(next_id, image_id, PERSON_CATEGORY, person_box, head)
            next_id += 1
            instances.append(person)
            if is_wearer:
                wearer_ids.add(person.id)
                hat_w, hat_h = fw * w, fh * h
                hat_box = BBox(head.x - hat_w / 2, head.y - hat_h / 2, hat_w, hat_h)
                instances.append(Instance(next_id, image_id, HARD_HAT_CATEGORY, hat_box))
                next_id += 1

    dataset = Dataset(tuple(images), (PERSON_CATEGORY, HARD_HAT_CATEGORY), tuple(instances))

    detections = []
    det_id = 1
    for gt in dataset.instances:
        dropped = bool(drop_rng.uniform() < spec.drop_rate)
        box = _jitter_box(gt.bbox, spec.box_jitter, jitter_rng)
        head = (
            _jitter_keypoint(gt.head_keypoint, gt.bbox, spec.box_jitter, jitter_rng)
            if gt.head_keypoint is not None
            else None
        )
        score = spec.score_model.sample(score_rng)
        if dropped:
            continue
        detections.append(
            Instance(det_id, gt.image_id, gt.category, box, head, score=score)
        )
        det_id += 1

    for image in dataset.images:
        for _ in range(FP_SLOTS_PER_IMAGE):
            emit = bool(fp_rng.uniform() < spec.false_positive_rate)
            cat = PERSON_CATEGORY if fp_rng.uniform() < 0.5 else HARD_HAT_CATEGORY
            w = float(fp_rng.uniform(10.0, 0.3 * image.width))
            h = float(fp_rng.uniform(10.0, 0.3 * image.height))
            x = float(fp_rng.uniform(0.0, image.width - w))
            y = float(fp_rng.uniform(0.0, image.height - h))
            score = spec.score_model.sample(fp_rng)
            if not emit:
                continue
            head = Keypoint(x + w / 2, y + 0.1 * h, 2) if cat is PERSON_CATEGORY else None
            detections.append(Instance(det_id, image.id, cat, BBox(x, y, w, h), head, score=score))
            det_id += 1

    return Scene(dataset, tuple(detections), frozenset(wearer_ids))


def generate(spec: SceneSpec) -> tuple[Dataset, list[Instance]]:
    """Ground truth plus perturbed detections for one seeded scene."""
    scene = generate_scene(spec)
    return scene.dataset, list(scene.detections)
