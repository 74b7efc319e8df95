"""Hard-hat compliance verdicts and detection-threshold tuning.

The rule classifier walks every person of an image: a person with a labeled
head keypoint is a wearer iff the keypoint falls inside at least one
hard-hat box (first containing hat wins); with a keypoint but no containing
hat it is a non-wearer; without a keypoint the verdict is indeterminate
rather than defaulting to non-wearer. Hats are never consumed, so one hat
may validate several persons.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import metrics
from .coco import Dataset
from .core import (
    ALL_AREAS,
    Category,
    HARD_HAT,
    HARD_HAT_NONWEARER,
    HARD_HAT_WEARER,
    Instance,
    NONWEARER_CATEGORY,
    PERSON,
    WEARER_CATEGORY,
    contains,
    group_by_image,
    intersection_area,
    iou,
)

WEARER = "wearer"
NONWEARER = "nonwearer"
INDETERMINATE = "indeterminate"

THRESHOLD_GRID = tuple(i / 100 for i in range(5, 100))
SWEEP_CLASSES = (HARD_HAT_WEARER, HARD_HAT_NONWEARER)


@dataclass(frozen=True)
class Verdict:
    """Compliance outcome for one person instance.

    Under the rule classifier, ``matched_hat`` is the first hat whose box
    contains the person's head keypoint and is present iff the label is
    wearer. Decision-tree verdicts never set it (the tree asserts no
    containment) and never yield indeterminate.
    """

    person: Instance
    label: str
    matched_hat: Instance | None = None


@dataclass(frozen=True)
class HatFeatures:
    """Hat position/size normalized to the person box coordinate system.

    When no hat box intersects the person, ``has_hat`` is False and the
    reals are the 0 sentinel; a tree consuming these must separate on
    has_hat before trusting them.
    """

    cx: float
    cy: float
    rw: float
    rh: float
    has_hat: bool

    def to_vector(self) -> tuple[float, ...]:
        return (1.0 if self.has_hat else 0.0, self.cx, self.cy, self.rw, self.rh)


FEATURE_NAMES = ("has_hat", "cx", "cy", "rw", "rh")

NO_HAT_FEATURES = HatFeatures(0.0, 0.0, 0.0, 0.0, False)


def filter_by_threshold(detections, t: float) -> list[Instance]:
    """Keep detections scoring at least ``t``, preserving order."""
    for d in detections:
        if d.score is None:
            raise ValueError(f"detection {d.id} has no score")
    return [d for d in detections if d.score >= t]


def _split_persons_hats(instances):
    persons, hats = [], []
    for inst in instances:
        if inst.category.name == PERSON:
            persons.append(inst)
        elif inst.category.name == HARD_HAT:
            hats.append(inst)
        else:
            raise ValueError(
                f"instance {inst.id}: expected person or hard_hat, got {inst.category.name!r}"
            )
    image_ids = {i.image_id for i in instances}
    if len(image_ids) > 1:
        raise ValueError("classification expects instances from a single image")
    return persons, hats


def classify_rule(instances) -> list[Verdict]:
    """Apply the head-keypoint containment rule to one image's instances."""
    persons, hats = _split_persons_hats(instances)
    verdicts = []
    for p in persons:
        if not p.has_head_keypoint:
            verdicts.append(Verdict(p, INDETERMINATE))
            continue
        verdict = Verdict(p, NONWEARER)
        for hh in hats:
            if contains(hh.bbox, p.head_keypoint):
                verdict = Verdict(p, WEARER, matched_hat=hh)
                break
        verdicts.append(verdict)
    return verdicts


def verdicts_to_instances(verdicts, keep_indeterminate: bool = False,
                          categories: tuple[Category, Category] | None = None) -> list[Instance]:
    """Relabel persons with derived categories, score and box untouched.

    Indeterminate persons keep the person category and are dropped unless
    ``keep_indeterminate``. ``categories`` supplies the (wearer, non-wearer)
    Category values to stamp; defaults to the canonical ids.
    """
    wearer_cat, nonwearer_cat = categories or (WEARER_CATEGORY, NONWEARER_CATEGORY)
    out = []
    for v in verdicts:
        if v.label == WEARER:
            out.append(replace(v.person, category=wearer_cat))
        elif v.label == NONWEARER:
            out.append(replace(v.person, category=nonwearer_cat))
        elif keep_indeterminate:
            out.append(v.person)
    return out


def derived_categories(dataset: Dataset) -> tuple[Category, Category]:
    """Wearer/non-wearer categories for a dataset, reusing ids when present."""
    wearer = dataset.category_by_name(HARD_HAT_WEARER)
    nonwearer = dataset.category_by_name(HARD_HAT_NONWEARER)
    next_id = max((c.id for c in dataset.categories), default=0) + 1
    if wearer is None:
        wearer = Category(next_id, HARD_HAT_WEARER)
        next_id += 1
    if nonwearer is None:
        nonwearer = Category(next_id, HARD_HAT_NONWEARER)
    return wearer, nonwearer


def with_derived_categories(dataset: Dataset) -> Dataset:
    """Dataset with wearer/non-wearer added to the category table."""
    extra = [c for c in derived_categories(dataset) if dataset.category_by_name(c.name) is None]
    if not extra:
        return dataset
    return Dataset(dataset.images, dataset.categories + tuple(extra), dataset.instances)


def extract_features(person: Instance, hats) -> HatFeatures:
    """Normalize the best-overlapping hat box to the person's coordinates.

    Candidates are hats with positive-area intersection; the one with the
    largest intersection-over-hat-area wins, ties going to the higher score
    and then to input order. The result is scale free.
    """
    box = person.bbox
    if box.area <= 0:
        raise ValueError(f"degenerate person box for instance {person.id}")
    best = None
    best_key = None
    for hh in hats:
        inter = intersection_area(box, hh.bbox)
        if inter <= 0:
            continue
        key = (inter / hh.bbox.area, hh.score if hh.score is not None else -1.0)
        if best is None or key > best_key:
            best, best_key = hh, key
    if best is None:
        return NO_HAT_FEATURES
    hat = best.bbox
    return HatFeatures(
        cx=(hat.x + hat.w / 2 - box.x) / box.w,
        cy=(hat.y + hat.h / 2 - box.y) / box.h,
        rw=hat.w / box.w,
        rh=hat.h / box.h,
        has_hat=True,
    )


def classify_dt(instances, tree) -> list[Verdict]:
    """Classify one image's persons with a trained decision tree.

    The tree sees normalized hat features and always answers wearer or
    non-wearer, keypoint or not.
    """
    persons, hats = _split_persons_hats(instances)
    verdicts = []
    for p in persons:
        features = extract_features(p, hats)
        label = tree.predict_one(features.to_vector())
        verdicts.append(Verdict(p, label))
    return verdicts


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    per_class_f1: tuple[float, ...]  # ordered as SWEEP_CLASSES
    overall_f1: float


@dataclass(frozen=True)
class ThresholdSweepResult:
    """F1 over the 5%..99% threshold grid and the chosen operating point."""

    grid: tuple[SweepPoint, ...]
    chosen: float
    class_names: tuple[str, ...] = SWEEP_CLASSES

    def to_csv(self) -> str:
        import csv as _csv
        import io as _io

        buf = _io.StringIO()
        writer = _csv.writer(buf, lineterminator="\n")
        writer.writerow(["threshold"] + [f"f1_{c}" for c in self.class_names]
                        + ["overall_f1", "chosen"])
        for p in self.grid:
            writer.writerow([repr(p.threshold)] + [repr(v) for v in p.per_class_f1]
                            + [repr(p.overall_f1), int(p.threshold == self.chosen)])
        return buf.getvalue()


def _derive_image(instances, keep_indeterminate, categories):
    return verdicts_to_instances(classify_rule(instances), keep_indeterminate, categories)


def derive_dataset_labels(gt: Dataset, keep_indeterminate: bool = False) -> list[Instance]:
    """Run the rule classifier over ground truth, image by image."""
    cats = derived_categories(gt)
    derived = []
    for im in gt.images:
        eligible = [i for i in gt.instances_in(im.id) if i.category.name in (PERSON, HARD_HAT)]
        derived.extend(_derive_image(eligible, keep_indeterminate, cats))
    return derived


def training_data_from_dataset(gt: Dataset):
    """(feature vectors, labels) for the decision-tree baseline.

    Features are the normalized hat position of each person against the
    image's hard-hat boxes; labels come from the rule classifier, with
    indeterminate persons left out.
    """
    X, y = [], []
    for im in gt.images:
        instances = [i for i in gt.instances_in(im.id) if i.category.name in (PERSON, HARD_HAT)]
        hats = [i for i in instances if i.category.name == HARD_HAT]
        for verdict in classify_rule(instances):
            if verdict.label == INDETERMINATE:
                continue
            X.append(extract_features(verdict.person, hats).to_vector())
            y.append(verdict.label)
    return X, y


def _f1_from_counts(tp: int, fp: int, fn: int) -> float:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    if p + r == 0:
        return 0.0
    return 2 * p * r / (p + r)


def tune_threshold(gt: Dataset, detections, iou_for_f1: float = 0.5) -> ThresholdSweepResult:
    """Pick the score cutoff maximizing overall F1 over the 5%..99% grid.

    At each threshold the detections are filtered, rule-classified, and the
    derived wearer/non-wearer detections are matched against rule-derived
    ground-truth labels at IoU >= ``iou_for_f1`` (greedy, score-descending).
    Indeterminate persons on either side are excluded from the counts. The
    overall F1 averages the classes present in the ground truth or surviving
    detections at that threshold; ties pick the smallest threshold.
    """
    cats = derived_categories(gt)
    gt_derived = derive_dataset_labels(gt, keep_indeterminate=False)
    gt_by_image_class = {}
    for g in gt_derived:
        gt_by_image_class.setdefault((g.image_id, g.category.name), []).append(g)
    gt_class_names = {g.category.name for g in gt_derived}

    det_by_image = group_by_image(detections)

    def sim_fn(g, d):
        return iou(g.bbox, d.bbox)

    points = []
    best_idx = 0
    for idx, t in enumerate(THRESHOLD_GRID):
        derived_dets = []
        for image_id, dets_img in det_by_image.items():
            survivors = filter_by_threshold(dets_img, t)
            derived_dets.extend(_derive_image(survivors, False, cats))
        det_by_image_class = {}
        for d in derived_dets:
            det_by_image_class.setdefault((d.image_id, d.category.name), []).append(d)

        present = gt_class_names | {d.category.name for d in derived_dets}
        f1s = {}
        for cls in SWEEP_CLASSES:
            tp = fp = fn = 0
            keys = {k for k in gt_by_image_class if k[1] == cls}
            keys |= {k for k in det_by_image_class if k[1] == cls}
            for key in keys:
                cell = metrics.match(
                    gt_by_image_class.get(key, []),
                    det_by_image_class.get(key, []),
                    sim_fn,
                    iou_for_f1,
                    ALL_AREAS,
                    max_dets=None,
                )
                cell_tp = sum(1 for r in cell.records if r.is_tp)
                tp += cell_tp
                fp += len(cell.records) - cell_tp
                fn += cell.n_gt - cell_tp
            f1s[cls] = _f1_from_counts(tp, fp, fn)
        counted = [f1s[c] for c in SWEEP_CLASSES if c in present]
        overall = sum(counted) / len(counted) if counted else 0.0
        points.append(SweepPoint(t, tuple(f1s[c] for c in SWEEP_CLASSES), overall))
        if points[idx].overall_f1 > points[best_idx].overall_f1:
            best_idx = idx

    return ThresholdSweepResult(tuple(points), THRESHOLD_GRID[best_idx])
