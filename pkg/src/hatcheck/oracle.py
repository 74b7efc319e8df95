"""Brute-force reference implementations used to cross-check the fast paths.

Everything numeric here is written from scratch on purpose: corner-form box
overlap, its own keypoint-similarity formula, its own size-bucket tests, an
exhaustive assignment enumerator instead of a greedy matcher, and exact
rational arithmetic for the F1 sweep. The only shared surface is the data
model (instances, datasets, the evaluation config) that defines the inputs.

Matching per cell enumerates every feasible injective detection-to-GT
assignment and selects the one the matching protocol prescribes: scanning
detections by descending score, each prefers a non-ignored ground truth
over an ignored one, higher similarity next, and earlier list position
last. Precision/recall integration then walks the pooled ranking directly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from fractions import Fraction

MAX_INSTANCES_PER_CELL = 8
MAX_ENUMERATION = 500_000

_FIELDS = ("ap", "ap50", "ap75", "ap_s", "ap_m", "ap_l")


class OracleBoundsError(ValueError):
    """The scene is too large to enumerate."""


@dataclass(frozen=True)
class OracleResult:
    per_class: dict
    overall: dict


def _corners(box):
    return box.x, box.y, box.x + box.w, box.y + box.h


def _box_iou(a, b):
    ax1, ay1, ax2, ay2 = _corners(a)
    bx1, by1, bx2, by2 = _corners(b)
    ix1, iy1 = max(ax1, bx1), max(ay1, by1)
    ix2, iy2 = min(ax2, bx2), min(ay2, by2)
    if ix2 <= ix1 or iy2 <= iy1:
        return 0.0
    inter = (ix2 - ix1) * (iy2 - iy1)
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0:
        return 0.0
    return inter / union


def _keypoint_sim(gt, det, sigma):
    gk = gt.head_keypoint
    if gk is None or gk.visibility <= 0:
        return 0.0
    dk = det.head_keypoint
    if dk is None or dk.visibility <= 0:
        return 0.0
    spread = 2.0 * (gt.bbox.w * gt.bbox.h) * (2.0 * sigma) ** 2
    dist2 = (dk.x - gk.x) ** 2 + (dk.y - gk.y) ** 2
    if spread <= 0:
        return 1.0 if dist2 == 0 else 0.0
    return math.exp(-dist2 / spread)


def _bucket_name(area):
    if area < 1024.0:
        return "small"
    if area <= 9216.0:
        return "medium"
    return "large"


def _in_bucket(area, bucket_name):
    return bucket_name == "all" or _bucket_name(area) == bucket_name


def _protocol_assignment(det_order, sims, gt_ignored, thr):
    """The assignment the matching protocol picks, found by enumeration."""
    candidate_sets = []
    total = 1
    for di in det_order:
        cands = [gi for gi in range(len(gt_ignored)) if sims[di][gi] >= thr]
        candidate_sets.append(cands + [None])
        total *= len(cands) + 1
        if total > MAX_ENUMERATION:
            raise OracleBoundsError(
                f"assignment enumeration would visit {total}+ combinations"
            )

    best_combo = None
    best_key = None
    for combo in itertools.product(*candidate_sets):
        used = [gi for gi in combo if gi is not None]
        if len(used) != len(set(used)):
            continue
        key = tuple(
            (0.0, 0.0, 0.0)
            if gi is None
            else (1.0 if gt_ignored[gi] else 2.0, sims[di][gi], -gi)
            for di, gi in zip(det_order, combo)
        )
        if best_key is None or key > best_key:
            best_key, best_combo = key, combo
    return best_combo


def _match_cell(gts, dets, sims, thr, bucket_name, max_dets):
    """Per-image records [(score, is_tp)] in rank order, plus the GT count."""
    det_order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    if max_dets is not None:
        det_order = det_order[:max_dets]
    gt_ignored = [
        g.ignore or not _in_bucket(g.bbox.w * g.bbox.h, bucket_name) for g in gts
    ]
    assignment = _protocol_assignment(det_order, sims, gt_ignored, thr)
    records = []
    for di, gi in zip(det_order, assignment):
        det = dets[di]
        if gi is not None:
            if not gt_ignored[gi]:
                records.append((det.score, True))
        elif _in_bucket(det.bbox.w * det.bbox.h, bucket_name):
            records.append((det.score, False))
    return records, sum(1 for flag in gt_ignored if not flag)


def _ap_from_cells(cells, recall_thresholds):
    """Pool per-image cells and integrate the exact step PR function."""
    pooled = []
    n_gt = 0
    for image_pos, (records, cell_gt) in enumerate(cells):
        n_gt += cell_gt
        pooled.extend((score, image_pos, rank, is_tp)
                      for rank, (score, is_tp) in enumerate(records))
    if n_gt == 0:
        return None
    pooled.sort(key=lambda r: (-r[0], r[1], r[2]))
    points = []
    tp = fp = 0
    for score, _, _, is_tp in pooled:
        if is_tp:
            tp += 1
        else:
            fp += 1
        points.append((tp / n_gt, tp / (tp + fp)))
    total = 0.0
    for r_thr in recall_thresholds:
        best = 0.0
        for recall, precision in points:
            if recall >= r_thr and precision > best:
                best = precision
        total += best
    return total / len(recall_thresholds)


def oracle_ap(gt_dataset, detections, cfg=None, sim: str = "iou") -> OracleResult:
    """AP table computed by exhaustive assignment enumeration.

    Refuses scenes with more than 8 ground-truth or detected instances in
    any (image, class) cell. Mirrors the evaluation protocol exactly but
    shares none of its code.
    """
    if cfg is None:
        from .metrics import EvalConfig

        cfg = EvalConfig()
    if sim not in ("iou", "oks"):
        raise ValueError(f"sim must be 'iou' or 'oks', got {sim!r}")
    use_oks = sim == "oks"
    sigma = cfg.oks_sigmas[0]
    bucket_names = ("all", "medium", "large") if use_oks else ("all", "small", "medium", "large")
    thresholds = tuple(sorted(set(cfg.iou_thresholds) | {0.5, 0.75}))

    gt_groups = {}
    for inst in gt_dataset.instances:
        gt_groups.setdefault((inst.image_id, inst.category.id), []).append(inst)
    det_groups = {}
    for det in detections:
        det_groups.setdefault((det.image_id, det.category.id), []).append(det)
    for key, group in itertools.chain(gt_groups.items(), det_groups.items()):
        if len(group) > MAX_INSTANCES_PER_CELL:
            raise OracleBoundsError(
                f"image {key[0]} category {key[1]} holds {len(group)} instances; "
                f"oracle handles at most {MAX_INSTANCES_PER_CELL}"
            )

    per_class = {}
    for cat in gt_dataset.categories:
        image_cells = []
        for im in gt_dataset.images:
            gts = gt_groups.get((im.id, cat.id), [])
            dets = det_groups.get((im.id, cat.id), [])
            if use_oks:
                gts = [
                    g if (g.head_keypoint is not None and g.head_keypoint.visibility > 0)
                    or g.ignore
                    else replace(g, ignore=True)
                    for g in gts
                ]
                sims = [[_keypoint_sim(g, d, sigma) for g in gts] for d in dets]
            else:
                sims = [[_box_iou(g.bbox, d.bbox) for g in gts] for d in dets]
            image_cells.append((gts, dets, sims))

        values = {}
        for thr in thresholds:
            for bucket in bucket_names:
                cells = [
                    _match_cell(gts, dets, sims, thr, bucket, cfg.max_dets_per_image)
                    for gts, dets, sims in image_cells
                ]
                values[(thr, bucket)] = _ap_from_cells(cells, cfg.recall_thresholds)

        def averaged(bucket):
            defined = [values[(t, bucket)] for t in cfg.iou_thresholds
                       if values[(t, bucket)] is not None]
            if not defined:
                return None
            return sum(defined) / len(defined)

        per_class[cat.name] = {
            "ap": averaged("all"),
            "ap50": values[(0.5, "all")],
            "ap75": values[(0.75, "all")],
            "ap_s": averaged("small") if not use_oks else None,
            "ap_m": averaged("medium"),
            "ap_l": averaged("large"),
        }

    overall = {}
    for field in _FIELDS:
        defined = [row[field] for row in per_class.values() if row[field] is not None]
        overall[field] = sum(defined) / len(defined) if defined else None
    return OracleResult(per_class, overall)


# ---------------------------------------------------------------------------
# Exhaustive F1 threshold sweep (exact rational arithmetic)

_PERSON = "person"
_HAT = "hard_hat"
_W = "hard_hat_wearer"
_NW = "hard_hat_nonwearer"


def _point_in_box(box, kp):
    return box.x <= kp.x <= box.x + box.w and box.y <= kp.y <= box.y + box.h


def _rule_labels(instances):
    """(category name, instance) pairs after inline rule classification."""
    persons = [i for i in instances if i.category.name == _PERSON]
    hats = [i for i in instances if i.category.name == _HAT]
    labeled = []
    for p in persons:
        kp = p.head_keypoint
        if kp is None or kp.visibility <= 0:
            continue  # indeterminate: excluded from the sweep counts
        name = _NW
        for hh in hats:
            if _point_in_box(hh.bbox, kp):
                name = _W
                break
        labeled.append((name, p))
    return labeled


def _greedy_counts(gt_items, det_items, iou_thr):
    """(tp, fp, fn) for one image and class, naive O(n^2) matching."""
    det_order = sorted(range(len(det_items)), key=lambda i: -det_items[i].score)
    taken = [False] * len(gt_items)
    tp = fp = 0
    for di in det_order:
        det = det_items[di]
        best = None
        best_v = iou_thr
        for gi, g in enumerate(gt_items):
            if taken[gi] or g.ignore:
                continue
            v = _box_iou(g.bbox, det.bbox)
            if v >= iou_thr and (best is None or v > best_v):
                best, best_v = gi, v
        if best is not None:
            taken[best] = True
            tp += 1
            continue
        best = None
        best_v = iou_thr
        for gi, g in enumerate(gt_items):
            if taken[gi] or not g.ignore:
                continue
            v = _box_iou(g.bbox, det.bbox)
            if v >= iou_thr and (best is None or v > best_v):
                best, best_v = gi, v
        if best is not None:
            taken[best] = True
        else:
            fp += 1
    fn = sum(1 for gi, g in enumerate(gt_items) if not g.ignore and not taken[gi])
    return tp, fp, fn


@dataclass(frozen=True)
class OracleSweep:
    chosen: float
    overall: tuple  # Fraction per grid threshold


def oracle_f1_sweep(gt_dataset, detections, iou_threshold: float = 0.5) -> OracleSweep:
    """Exact re-run of the threshold sweep with fractions instead of floats."""
    grid = [t / 100 for t in range(5, 100)]

    gt_by_image = {}
    for inst in gt_dataset.instances:
        gt_by_image.setdefault(inst.image_id, []).append(inst)
    gt_labeled = {
        image_id: _rule_labels(items) for image_id, items in gt_by_image.items()
    }
    gt_class_names = {name for items in gt_labeled.values() for name, _ in items}

    det_by_image = {}
    for det in detections:
        det_by_image.setdefault(det.image_id, []).append(det)

    overall_values = []
    for t in grid:
        det_labeled = {
            image_id: _rule_labels([d for d in dets if d.score >= t])
            for image_id, dets in det_by_image.items()
        }
        det_class_names = {name for items in det_labeled.values() for name, _ in items}
        present = gt_class_names | det_class_names

        class_f1 = []
        for cls in (_W, _NW):
            if cls not in present:
                continue
            tp = fp = fn = 0
            image_ids = set(gt_labeled) | set(det_labeled)
            for image_id in image_ids:
                gt_items = [p for name, p in gt_labeled.get(image_id, []) if name == cls]
                det_items = [p for name, p in det_labeled.get(image_id, []) if name == cls]
                a, b, c = _greedy_counts(gt_items, det_items, iou_threshold)
                tp, fp, fn = tp + a, fp + b, fn + c
            denom = 2 * tp + fp + fn
            class_f1.append(Fraction(2 * tp, denom) if denom else Fraction(0))
        overall_values.append(
            sum(class_f1, Fraction(0)) / len(class_f1) if class_f1 else Fraction(0)
        )

    best = 0
    for i, value in enumerate(overall_values):
        if value > overall_values[best]:
            best = i
    return OracleSweep(grid[best], tuple(overall_values))
