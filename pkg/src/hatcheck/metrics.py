"""COCO-style evaluation engine built from first principles.

Matching is greedy per image: detections are visited in descending score
order and each takes the free ground-truth object of highest similarity at
or above the threshold. Per-class results are pooled over images, turned
into a precision/recall ranking, interpolated at a fixed recall grid, and
averaged over similarity thresholds and area buckets.

Cells with zero evaluable ground truth report ``None`` (the classic "-1"
sentinel) and are excluded from class means.
"""

from __future__ import annotations

import csv
import io
import json
import math
from bisect import bisect_left
from dataclasses import dataclass, replace

from .coco import Dataset, IntegrityError
from .core import ALL_AREAS, AREA_BUCKETS, AreaBucket, Instance, iou

DEFAULT_IOU_THRESHOLDS = tuple((50 + 5 * i) / 100 for i in range(10))
DEFAULT_RECALL_THRESHOLDS = tuple(i / 100 for i in range(101))
DEFAULT_HEAD_SIGMA = 0.026

REPORT_FIELDS = ("ap", "ap50", "ap75", "ap_s", "ap_m", "ap_l")


@dataclass(frozen=True)
class EvalConfig:
    """Thresholds, recall grid, buckets and per-keypoint sigmas."""

    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS
    recall_thresholds: tuple[float, ...] = DEFAULT_RECALL_THRESHOLDS
    area_buckets: tuple[AreaBucket, ...] = AREA_BUCKETS
    max_dets_per_image: int | None = 100
    oks_sigmas: tuple[float, ...] = (DEFAULT_HEAD_SIGMA,)

    def __post_init__(self):
        object.__setattr__(self, "iou_thresholds", tuple(self.iou_thresholds))
        object.__setattr__(self, "recall_thresholds", tuple(self.recall_thresholds))
        object.__setattr__(self, "area_buckets", tuple(self.area_buckets))
        object.__setattr__(self, "oks_sigmas", tuple(self.oks_sigmas))
        for name in ("iou_thresholds", "recall_thresholds"):
            values = getattr(self, name)
            if not values:
                raise ValueError(f"{name} must not be empty")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ValueError(f"{name} must be strictly increasing")
        if any(s <= 0 for s in self.oks_sigmas):
            raise ValueError("oks_sigmas must be positive")
        if self.max_dets_per_image is not None and self.max_dets_per_image < 1:
            raise ValueError("max_dets_per_image must be >= 1")

    def bucket(self, name: str) -> AreaBucket:
        for b in self.area_buckets:
            if b.name == name:
                return b
        raise ValueError(f"config has no {name!r} area bucket")


@dataclass(frozen=True)
class DetRecord:
    """One scored detection outcome inside a match cell."""

    score: float
    is_tp: bool
    gt_id: int | None = None


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching one (image, class, threshold, bucket) cell.

    ``records`` holds the non-ignored detections sorted by descending score
    (ties keep input order); ``n_gt`` counts the non-ignored ground truth.
    """

    records: tuple[DetRecord, ...]
    n_gt: int


def match(gts, dets, sim, thr: float, bucket: AreaBucket = ALL_AREAS,
          max_dets: int | None = 100) -> MatchResult:
    """Greedily match detections of one image and one class to ground truth.

    Detections are truncated to ``max_dets`` by score, then processed in
    descending score order. Each takes the unmatched non-ignored GT of
    highest similarity >= ``thr``; failing that, the best free ignored GT
    (the detection is then absorbed, counting as neither TP nor FP); failing
    that it is a false positive if its own box falls in the bucket, and is
    dropped otherwise. GT outside the bucket is treated as ignored. Every GT
    matches at most once.
    """
    image_ids = {i.image_id for i in gts} | {i.image_id for i in dets}
    if len(image_ids) > 1:
        raise ValueError("match() expects instances from a single image")
    cat_ids = {i.category.id for i in gts} | {i.category.id for i in dets}
    if len(cat_ids) > 1:
        raise ValueError("match() expects instances of a single class")
    if any(d.score is None for d in dets):
        raise ValueError("every detection must carry a score")

    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    if max_dets is not None:
        order = order[:max_dets]

    gt_ignored = [g.ignore or not bucket.contains_area(g.bbox.area) for g in gts]
    gt_taken = [False] * len(gts)
    records = []
    for di in order:
        det = dets[di]
        best = None
        best_sim = thr
        for gi, g in enumerate(gts):
            if gt_taken[gi] or gt_ignored[gi]:
                continue
            s = sim(g, det)
            if s >= thr and (best is None or s > best_sim):
                best, best_sim = gi, s
        if best is not None:
            gt_taken[best] = True
            records.append(DetRecord(det.score, True, gts[best].id))
            continue
        best = None
        best_sim = thr
        for gi, g in enumerate(gts):
            if gt_taken[gi] or not gt_ignored[gi]:
                continue
            s = sim(g, det)
            if s >= thr and (best is None or s > best_sim):
                best, best_sim = gi, s
        if best is not None:
            gt_taken[best] = True  # absorbed by an ignore region
        elif bucket.contains_area(det.bbox.area):
            records.append(DetRecord(det.score, False, None))

    n_gt = sum(1 for flag in gt_ignored if not flag)
    return MatchResult(tuple(records), n_gt)


def merge_matches(results) -> MatchResult:
    """Pool per-image cells: concatenate records, re-sort by score, sum GT."""
    results = list(results)
    records = [r for res in results for r in res.records]
    records.sort(key=lambda r: -r.score)  # stable: ties keep pooled order
    return MatchResult(tuple(records), sum(res.n_gt for res in results))


@dataclass(frozen=True)
class PRPoint:
    score: float
    recall: float
    precision: float


@dataclass(frozen=True)
class PRCurve:
    """Precision/recall ranking plus interpolated precision on a recall grid.

    ``p_interp[i]`` is the maximum precision achieved at any recall >=
    ``recall_thresholds[i]``, or 0 when that recall is never reached.
    """

    points: tuple[PRPoint, ...]
    recall_thresholds: tuple[float, ...]
    p_interp: tuple[float, ...]


def pr_curve(result: MatchResult,
             recall_thresholds=DEFAULT_RECALL_THRESHOLDS) -> PRCurve | None:
    """Cumulative PR points of a match cell; None when there is no GT."""
    if result.n_gt == 0:
        return None
    points = []
    tp = fp = 0
    for rec in result.records:
        if rec.is_tp:
            tp += 1
        else:
            fp += 1
        points.append(PRPoint(rec.score, tp / result.n_gt, tp / (tp + fp)))

    recalls = [p.recall for p in points]  # non-decreasing down the ranking
    suffix_max = [0.0] * len(points)
    running = 0.0
    for i in range(len(points) - 1, -1, -1):
        running = max(running, points[i].precision)
        suffix_max[i] = running
    p_interp = []
    for r_thr in recall_thresholds:
        k = bisect_left(recalls, r_thr)
        p_interp.append(suffix_max[k] if k < len(points) else 0.0)
    return PRCurve(tuple(points), tuple(recall_thresholds), tuple(p_interp))


def ap_interpolated(curve: PRCurve | None, recall_thresholds=None) -> float | None:
    """Mean interpolated precision over the recall grid; None propagates."""
    if curve is None:
        return None
    if recall_thresholds is not None and tuple(recall_thresholds) != curve.recall_thresholds:
        raise ValueError("curve was interpolated on a different recall grid")
    return sum(curve.p_interp) / len(curve.p_interp)


def oks(gt: Instance, det: Instance, sigmas=(DEFAULT_HEAD_SIGMA,)) -> float:
    """Object keypoint similarity between a GT instance and a detection.

    Gaussian falloff of the keypoint error, exp(-d^2 / (2 s^2 k^2)), with
    k = 2*sigma and s the square root of the GT box area, averaged over the
    GT's labeled keypoints (here: the single head keypoint). A detection
    without a keypoint scores 0.
    """
    kp = gt.head_keypoint
    if kp is None or not kp.labeled:
        raise ValueError("OKS undefined: ground truth has no labeled keypoint")
    dkp = det.head_keypoint
    if dkp is None or not dkp.labeled:
        return 0.0
    k = 2.0 * sigmas[0]
    d2 = (dkp.x - kp.x) ** 2 + (dkp.y - kp.y) ** 2
    denom = 2.0 * gt.bbox.area * k * k
    if denom <= 0:
        return 1.0 if d2 == 0 else 0.0
    return math.exp(-d2 / denom)


@dataclass(frozen=True)
class ClassMetrics:
    """One row of the report; None marks cells with zero evaluable GT."""

    class_name: str
    ap: float | None
    ap50: float | None
    ap75: float | None
    ap_s: float | None
    ap_m: float | None
    ap_l: float | None

    def as_dict(self) -> dict:
        return {
            "class": self.class_name,
            "ap": self.ap,
            "ap50": self.ap50,
            "ap75": self.ap75,
            "ap_s": self.ap_s,
            "ap_m": self.ap_m,
            "ap_l": self.ap_l,
        }


@dataclass(frozen=True)
class MetricsReport:
    """AP family per class and overall, plus exportable PR curves.

    ``overall`` is the unweighted mean of the defined per-class values.
    ``curves`` maps (class name, threshold) to the pooled full-area PRCurve
    (or None for zero-GT classes). Keypoint-similarity reports carry no
    small bucket.
    """

    sim: str
    per_class: tuple[ClassMetrics, ...]
    overall: ClassMetrics
    curves: dict
    config: EvalConfig

    def class_row(self, name: str) -> ClassMetrics:
        for row in self.per_class:
            if row.class_name == name:
                return row
        raise KeyError(name)

    def _columns(self):
        cols = ["ap", "ap50", "ap75", "ap_s", "ap_m", "ap_l"]
        if self.sim == "oks":
            cols.remove("ap_s")
        return cols

    def to_csv(self) -> str:
        cols = self._columns()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class"] + cols)
        for row in list(self.per_class) + [self.overall]:
            data = row.as_dict()
            writer.writerow([row.class_name] + ["" if data[c] is None else repr(data[c]) for c in cols])
        return buf.getvalue()

    def to_json(self) -> str:
        cols = self._columns()
        payload = {
            "schema_version": 1,
            "similarity": self.sim,
            "classes": [
                {"class": r.class_name, **{c: r.as_dict()[c] for c in cols}}
                for r in self.per_class
            ],
            "overall": {c: self.overall.as_dict()[c] for c in cols},
        }
        return json.dumps(payload, indent=2)


def _mean_or_none(values) -> float | None:
    defined = [v for v in values if v is not None]
    if not defined:
        return None
    return sum(defined) / len(defined)


def ap_coco(gt: Dataset, dets, cfg: EvalConfig | None = None, sim: str = "iou") -> MetricsReport:
    """Evaluate detections against a dataset, COCO style.

    Per class: AP averages the 101-point interpolated AP over the configured
    similarity thresholds; ap50/ap75 pin single thresholds; the bucketed
    values restrict the evaluable ground truth by box area. With
    ``sim="oks"`` box IoU is replaced by object keypoint similarity, ground
    truth without a labeled keypoint is ignored (and unmatchable), and the
    small bucket is dropped from the report.
    """
    if cfg is None:
        cfg = EvalConfig()
    if sim not in ("iou", "oks"):
        raise ValueError(f"sim must be 'iou' or 'oks', got {sim!r}")

    image_ids = {im.id for im in gt.images}
    cat_ids = {c.id for c in gt.categories}
    for d in dets:
        if d.image_id not in image_ids:
            raise IntegrityError(f"detection {d.id} references unknown image {d.image_id}")
        if d.category.id not in cat_ids:
            raise IntegrityError(f"detection {d.id} references unknown category {d.category.id}")
        if d.score is None:
            raise ValueError(f"detection {d.id} has no score")

    if sim == "oks":
        sigmas = cfg.oks_sigmas

        def sim_fn(g, d):
            if not g.has_head_keypoint:
                return 0.0
            return oks(g, d, sigmas)

        bucket_names = ["all", "medium", "large"]
    else:
        def sim_fn(g, d):
            return iou(g.bbox, d.bbox)

        bucket_names = ["all", "small", "medium", "large"]

    memo = {}

    def cached_sim(g, d):
        key = (id(g), id(d))
        if key not in memo:
            memo[key] = sim_fn(g, d)
        return memo[key]

    buckets = [cfg.bucket(name) for name in bucket_names]
    thresholds = tuple(sorted(set(cfg.iou_thresholds) | {0.5, 0.75}))

    det_groups = {}
    for d in dets:
        det_groups.setdefault((d.image_id, d.category.id), []).append(d)

    per_class = []
    curves = {}
    for cat in gt.categories:
        per_image = []
        for im in gt.images:
            gts_img = [g for g in gt.instances_in(im.id) if g.category.id == cat.id]
            if sim == "oks":
                gts_img = [
                    g if g.has_head_keypoint or g.ignore else replace(g, ignore=True)
                    for g in gts_img
                ]
            dets_img = det_groups.get((im.id, cat.id), [])
            per_image.append((gts_img, dets_img))

        cells = {}
        for thr in thresholds:
            for bucket in buckets:
                merged = merge_matches(
                    match(g, d, cached_sim, thr, bucket, cfg.max_dets_per_image)
                    for g, d in per_image
                )
                cells[(thr, bucket.name)] = ap_interpolated(
                    pr_curve(merged, cfg.recall_thresholds)
                )
                if bucket.name == "all":
                    curves[(cat.name, thr)] = pr_curve(merged, cfg.recall_thresholds)

        def bucket_ap(name):
            return _mean_or_none([cells[(t, name)] for t in cfg.iou_thresholds])

        per_class.append(
            ClassMetrics(
                class_name=cat.name,
                ap=bucket_ap("all"),
                ap50=cells[(0.5, "all")],
                ap75=cells[(0.75, "all")],
                ap_s=bucket_ap("small") if sim == "iou" else None,
                ap_m=bucket_ap("medium"),
                ap_l=bucket_ap("large"),
            )
        )

    overall = ClassMetrics(
        class_name="overall",
        ap=_mean_or_none([c.ap for c in per_class]),
        ap50=_mean_or_none([c.ap50 for c in per_class]),
        ap75=_mean_or_none([c.ap75 for c in per_class]),
        ap_s=_mean_or_none([c.ap_s for c in per_class]) if sim == "iou" else None,
        ap_m=_mean_or_none([c.ap_m for c in per_class]),
        ap_l=_mean_or_none([c.ap_l for c in per_class]),
    )
    return MetricsReport(sim=sim, per_class=tuple(per_class), overall=overall,
                         curves=curves, config=cfg)


def pr_curves_csv(report: MetricsReport) -> str:
    """Flatten a report's PR curves for external plotting.

    One row per ranked detection: class, similarity threshold, score,
    recall, precision and the interpolated precision achieved at that
    recall (the max precision at equal-or-greater recall).
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["class", "threshold", "score", "recall", "precision", "p_interp"])
    for (cls, thr), curve in sorted(report.curves.items()):
        if curve is None:
            continue
        suffix = 0.0
        interp = [0.0] * len(curve.points)
        for i in range(len(curve.points) - 1, -1, -1):
            suffix = max(suffix, curve.points[i].precision)
            interp[i] = suffix
        for point, p_int in zip(curve.points, interp):
            writer.writerow([cls, thr, repr(point.score), repr(point.recall),
                             repr(point.precision), repr(p_int)])
    return buf.getvalue()
