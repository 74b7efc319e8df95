"""The evaluation engine, bottom to top, on a scene you can check by hand.

One ground-truth box and two detections: the high-scoring one is correct,
the low-scoring one is junk. The ranking (TP, FP) keeps interpolated
precision at 1.0 everywhere; flip the scores and it drops to 0.5.
"""

from hatcheck import BBox, Category, Instance, ap_interpolated, iou, match, pr_curve
from hatcheck.metrics import EvalConfig

PERSON = Category(1, "person")


def det(det_id, box, score):
    return Instance(det_id, 1, PERSON, BBox(*box), score=score)


gt = [Instance(1, 1, PERSON, BBox(0, 0, 10, 10))]
good = (0, 0, 10, 10)
junk = (50, 50, 10, 10)


def box_iou(g, d):
    return iou(g.bbox, d.bbox)


cfg = EvalConfig()
for name, ranking in [("TP then FP", [(good, 0.9), (junk, 0.8)]),
                      ("FP then TP", [(junk, 0.9), (good, 0.8)])]:
    dets = [det(100 + i, box, score) for i, (box, score) in enumerate(ranking)]
    cell = match(gt, dets, box_iou, thr=0.5)
    curve = pr_curve(cell, cfg.recall_thresholds)
    print(f"{name}:")
    for point in curve.points:
        print(f"  score {point.score:.1f}  recall {point.recall:.2f}"
              f"  precision {point.precision:.2f}")
    print(f"  101-point interpolated AP: {ap_interpolated(curve):.3f}")
    print()

print("the same machinery across 10 similarity thresholds and size buckets")
print("is what ap_coco() assembles into the familiar AP / AP50 / AP75 /")
print("AP_S / AP_M / AP_L table; see 05_full_pipeline.py.")
