"""Domain types and exact box/point geometry shared by the whole package.

Boxes use the COCO wire convention: top-left corner plus size, (x, y, w, h),
with y growing downward. Every type here is an immutable value and every
operation is a pure function, so they are safe to share across parallel
evaluation workers without coordination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

PERSON = "person"
HARD_HAT = "hard_hat"
HARD_HAT_WEARER = "hard_hat_wearer"
HARD_HAT_NONWEARER = "hard_hat_nonwearer"

CATEGORY_NAMES = frozenset({PERSON, HARD_HAT, HARD_HAT_WEARER, HARD_HAT_NONWEARER})
PERSON_FAMILY = frozenset({PERSON, HARD_HAT_WEARER, HARD_HAT_NONWEARER})
DERIVED_NAMES = frozenset({HARD_HAT_WEARER, HARD_HAT_NONWEARER})


@dataclass(frozen=True)
class BBox:
    """Axis-aligned bounding box, (left, top, width, height) in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValueError(f"BBox.{name} must be a finite number, got {v!r}")
        if self.w < 0 or self.h < 0:
            raise ValueError(f"BBox size must be non-negative, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def x2(self) -> float:
        """Right edge."""
        return self.x + self.w

    @property
    def y2(self) -> float:
        """Bottom edge."""
        return self.y + self.h


@dataclass(frozen=True)
class Keypoint:
    """A single labeled point with a COCO-style visibility flag.

    visibility 0 means "not labeled"; 1 and 2 mean labeled (occluded /
    plainly visible). Coordinates must be finite whenever the point is
    labeled.
    """

    x: float
    y: float
    visibility: int = 2

    def __post_init__(self):
        if self.visibility not in (0, 1, 2):
            raise ValueError(f"Keypoint.visibility must be 0, 1 or 2, got {self.visibility!r}")
        if self.visibility > 0 and not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("labeled keypoint coordinates must be finite")

    @property
    def labeled(self) -> bool:
        return self.visibility > 0


@dataclass(frozen=True)
class Category:
    id: int
    name: str

    def __post_init__(self):
        if self.name not in CATEGORY_NAMES:
            raise ValueError(
                f"unknown category name {self.name!r}; expected one of {sorted(CATEGORY_NAMES)}"
            )


# Canonical ids used by the synthetic generator and as fallbacks when a
# dataset does not define the derived classes itself.
PERSON_CATEGORY = Category(1, PERSON)
HARD_HAT_CATEGORY = Category(2, HARD_HAT)
WEARER_CATEGORY = Category(3, HARD_HAT_WEARER)
NONWEARER_CATEGORY = Category(4, HARD_HAT_NONWEARER)


@dataclass(frozen=True)
class Instance:
    """One annotated or detected object.

    A score is present iff the instance is a detection. Instances flagged
    ignore never count as false positives or false negatives during
    evaluation.
    """

    id: int
    image_id: int
    category: Category
    bbox: BBox
    head_keypoint: Keypoint | None = None
    score: float | None = None
    ignore: bool = False

    def __post_init__(self):
        if self.score is not None:
            if not math.isfinite(self.score) or not 0.0 <= self.score <= 1.0:
                raise ValueError(f"Instance.score must lie in [0, 1], got {self.score!r}")

    @property
    def is_detection(self) -> bool:
        return self.score is not None

    @property
    def has_head_keypoint(self) -> bool:
        return self.head_keypoint is not None and self.head_keypoint.labeled


@dataclass(frozen=True)
class AreaBucket:
    """A named range of box areas (px^2) used to slice evaluation results.

    The canonical buckets partition [0, inf): small = [0, 1024),
    medium = [1024, 9216], large = (9216, inf); "all" spans everything.
    """

    name: str
    lo: float
    hi: float

    def contains_area(self, area: float) -> bool:
        if self.name == "all":
            return area >= 0
        return bucket_of_area(area) is self


SMALL = AreaBucket("small", 0.0, 1024.0)
MEDIUM = AreaBucket("medium", 1024.0, 9216.0)
LARGE = AreaBucket("large", 9216.0, math.inf)
ALL_AREAS = AreaBucket("all", 0.0, math.inf)

AREA_BUCKETS = (ALL_AREAS, SMALL, MEDIUM, LARGE)


def bucket_of_area(area: float) -> AreaBucket:
    """Map a box area to the unique size bucket containing it."""
    if area < 0:
        raise ValueError(f"area must be non-negative, got {area!r}")
    if area < SMALL.hi:
        return SMALL
    if area <= MEDIUM.hi:
        return MEDIUM
    return LARGE


def bucket_of(b: BBox) -> AreaBucket:
    """Size bucket of a box, by its area."""
    return bucket_of_area(b.area)


def intersection_area(a: BBox, b: BBox) -> float:
    """Area of the overlap of two boxes; 0 when they are disjoint.

    Clamped to min(area a, area b), which is exact mathematically and stops
    corner-form rounding from manufacturing overlap a box cannot contain.
    """
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return min(iw * ih, a.area, b.area)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes.

    Identical boxes score exactly 1. Degenerate (zero-area) boxes are legal
    inputs and yield 0, so that evaluation never aborts on detector garbage.
    """
    if a == b:
        return 1.0 if a.area > 0 else 0.0
    inter = intersection_area(a, b)
    if inter <= 0:
        return 0.0
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def contains(b: BBox, k: Keypoint, inclusive: bool = True) -> bool:
    """True iff the keypoint lies inside the box.

    Boundaries count as inside by default: a keypoint regressed exactly onto
    a box edge should not flip the verdict. Pass inclusive=False for the
    strict-interior variant.
    """
    if not k.labeled:
        raise ValueError("keypoint not labeled")
    if inclusive:
        return b.x <= k.x <= b.x2 and b.y <= k.y <= b.y2
    return b.x < k.x < b.x2 and b.y < k.y < b.y2


def group_by_image(instances) -> dict[int, list[Instance]]:
    """Group instances by image id, preserving input order within each image."""
    groups: dict[int, list[Instance]] = {}
    for inst in instances:
        groups.setdefault(inst.image_id, []).append(inst)
    return groups
