"""End-to-end wiring: filter, classify, derive ground truth, evaluate.

This reproduces the full wearing-detection experiment: detections are
filtered at an operating threshold and classified (rule or decision tree),
ground truth gets its wearer labels from the rule applied to its own
annotations, and the derived classes are evaluated with the COCO-style
engine.
"""

from __future__ import annotations

from .cart import DecisionTree
from .coco import Dataset
from .compliance import (
    classify_dt,
    classify_rule,
    derived_categories,
    filter_by_threshold,
    verdicts_to_instances,
)
from .core import DERIVED_NAMES, HARD_HAT, Instance, PERSON, group_by_image
from .metrics import EvalConfig, MetricsReport, ap_coco


def derive_ground_truth(dataset: Dataset, keep_indeterminate: bool = False) -> Dataset:
    """Dataset whose instances are the rule-derived wearer/non-wearer labels.

    A dataset that already ships derived classes is taken verbatim (its
    wearer/non-wearer instances pass through unchanged). Indeterminate
    persons are dropped unless ``keep_indeterminate``, in which case they
    stay under the person category.
    """
    wearer_cat, nonwearer_cat = derived_categories(dataset)
    pre_derived = [i for i in dataset.instances if i.category.name in DERIVED_NAMES]
    if pre_derived:
        derived = list(pre_derived)
        if keep_indeterminate:
            derived += [i for i in dataset.instances if i.category.name == PERSON]
        categories = [c for c in dataset.categories if c.name in DERIVED_NAMES]
    else:
        derived = []
        for im in dataset.images:
            eligible = [
                i for i in dataset.instances_in(im.id)
                if i.category.name in (PERSON, HARD_HAT)
            ]
            derived.extend(
                verdicts_to_instances(
                    classify_rule(eligible), keep_indeterminate, (wearer_cat, nonwearer_cat)
                )
            )
        categories = [wearer_cat, nonwearer_cat]
    if keep_indeterminate:
        person_cat = dataset.category_by_name(PERSON)
        if person_cat is not None:
            categories.append(person_cat)
    return Dataset(dataset.images, tuple(categories), tuple(derived))


def classify_detections(detections, classifier: str = "rule",
                        tree: DecisionTree | None = None,
                        keep_indeterminate: bool = False,
                        categories=None) -> list[Instance]:
    """Per-image classification of an already-filtered detection list."""
    out = []
    for image_id, dets in group_by_image(detections).items():
        if classifier == "rule":
            verdicts = classify_rule(dets)
        elif classifier == "dt":
            if tree is None:
                raise ValueError("classifier 'dt' needs a trained tree")
            verdicts = classify_dt(dets, tree)
        else:
            raise ValueError(f"unknown classifier {classifier!r}")
        out.extend(verdicts_to_instances(verdicts, keep_indeterminate, categories))
    return out


def pipeline_classify_then_evaluate(gt: Dataset, detections,
                                    cfg: EvalConfig | None = None,
                                    threshold: float = 0.0,
                                    classifier: str = "rule",
                                    tree: DecisionTree | None = None,
                                    keep_indeterminate: bool = False) -> MetricsReport:
    """Score the wearing-detection pipeline against rule-derived ground truth."""
    cats = derived_categories(gt)
    survivors = filter_by_threshold(detections, threshold)
    derived_dets = classify_detections(
        survivors, classifier, tree, keep_indeterminate, cats
    )
    derived_gt = derive_ground_truth(gt, keep_indeterminate)
    return ap_coco(derived_gt, derived_dets, cfg, sim="iou")
