"""Command-line entry point.

Subcommands: stats, classify, evaluate, tune-threshold, fit-dt, generate,
pr-export. Reports go to stdout unless -o is given; files are written
atomically. Exit codes: 0 success, 1 validation/integrity/usage errors,
2 I/O errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass

from . import cart, compliance, metrics, pipeline, synth
from .coco import (
    dataset_stats,
    instances_json,
    load_detections,
    load_ground_truth,
    write_dataset,
    write_instances,
    write_text_atomic,
)
from .compliance import training_data_from_dataset, with_derived_categories

log = logging.getLogger("hatcheck")

CONFIG_ENV_VAR = "HATCHECK_CONFIG"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


@dataclass
class RunConfig:
    """Parsed and validated invocation; input paths are known to exist."""

    subcommand: str
    args: argparse.Namespace


def _add_io_flags(p, gt=True, det=False, det_required=False):
    if gt:
        p.add_argument("--gt", required=True, help="ground-truth annotation JSON")
    if det:
        p.add_argument("--det", required=det_required, help="detection results JSON")
    p.add_argument("-o", "--output", help="write the report here (default: stdout)")
    p.add_argument("--json", action="store_true", help="emit JSON instead of CSV")


def _add_eval_flags(p):
    p.add_argument("--iou-thresholds", help="comma-separated similarity thresholds")
    p.add_argument("--max-dets", type=int, help="max detections kept per image")
    p.add_argument("--oks-sigma", type=float, help="head keypoint sigma")


def build_parser() -> _Parser:
    parser = _Parser(prog="hatcheck", description=__doc__)
    parser.add_argument("--schema", action="store_true",
                        help="print the versioned file-format schemas and exit")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="progress logging on stderr")
    # accepted after the subcommand too; SUPPRESS keeps a pre-subcommand -v
    # from being clobbered by the subparser default
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true",
                        default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)

    p = sub.add_parser("stats", parents=[common],
                       help="dataset composition by category and size bucket")
    _add_io_flags(p)

    p = sub.add_parser("classify", parents=[common],
                       help="turn person/hat instances into wearing verdicts")
    _add_io_flags(p, det=True)
    p.add_argument("--threshold", type=float, default=0.0, help="score cutoff for detections")
    p.add_argument("--classifier", choices=("rule", "dt"), default="rule")
    p.add_argument("--tree", help="decision tree JSON (for --classifier dt)")
    p.add_argument("--keep-indeterminate", action="store_true",
                   help="keep persons whose compliance cannot be judged")

    p = sub.add_parser("evaluate", parents=[common], help="COCO-style AP report")
    _add_io_flags(p, det=True, det_required=True)
    p.add_argument("--sim", choices=("iou", "oks"), default="iou")
    p.add_argument("--derived", action="store_true",
                   help="classify first, then evaluate wearer/non-wearer classes")
    p.add_argument("--threshold", type=float,
                   help="score cutoff before classification (--derived); "
                        "defaults to the F1-optimal value")
    p.add_argument("--classifier", choices=("rule", "dt"), default="rule")
    p.add_argument("--tree", help="decision tree JSON (for --classifier dt)")
    p.add_argument("--keep-indeterminate", action="store_true")
    p.add_argument("--f1-iou", type=float, default=0.5,
                   help="matching IoU used when auto-tuning the threshold")
    _add_eval_flags(p)

    p = sub.add_parser("tune-threshold", parents=[common], help="sweep score cutoffs, maximize overall F1")
    _add_io_flags(p, det=True, det_required=True)
    p.add_argument("--f1-iou", type=float, default=0.5, help="matching IoU for TP/FP counts")

    p = sub.add_parser("fit-dt", parents=[common], help="grid-search and train the decision-tree baseline")
    p.add_argument("--gt", required=True, help="annotation JSON supplying training instances")
    p.add_argument("-o", "--output", required=True, help="where to write the tree JSON")
    p.add_argument("--cv-table", help="also write the cross-validation table CSV here")
    p.add_argument("--criteria", default="gini,entropy")
    p.add_argument("--depths", default="2-15,none",
                   help="comma list of depths; ranges like 2-15 and 'none' allowed")
    p.add_argument("--min-splits", default="2,5,10,14,20")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("generate", parents=[common], help="write a seeded synthetic scene")
    p.add_argument("--spec", help=f"scene spec JSON (default: ${CONFIG_ENV_VAR})")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.add_argument("--gt-out", required=True)
    p.add_argument("--det-out", required=True)

    p = sub.add_parser("pr-export", parents=[common], help="per-class precision/recall curves as CSV")
    _add_io_flags(p, det=True, det_required=True)
    p.add_argument("--sim", choices=("iou", "oks"), default="iou")
    _add_eval_flags(p)

    return parser


def _eval_config(args) -> metrics.EvalConfig:
    kwargs = {}
    if getattr(args, "iou_thresholds", None):
        kwargs["iou_thresholds"] = tuple(
            float(v) for v in args.iou_thresholds.split(",") if v
        )
    if getattr(args, "max_dets", None) is not None:
        kwargs["max_dets_per_image"] = args.max_dets
    if getattr(args, "oks_sigma", None) is not None:
        kwargs["oks_sigmas"] = (args.oks_sigma,)
    return metrics.EvalConfig(**kwargs)


def _emit(args, text: str) -> None:
    if args.output:
        write_text_atomic(args.output, text)
        log.info("wrote %s", args.output)
    else:
        sys.stdout.write(text)


def _require_inputs(args) -> None:
    for flag in ("gt", "det", "tree", "spec"):
        path = getattr(args, flag, None)
        if path is not None and not os.path.exists(path):
            raise FileNotFoundError(f"--{flag} file not found: {path}")


def _parse_depths(text):
    depths = []
    for token in text.split(","):
        token = token.strip().lower()
        if not token:
            continue
        if token in ("none", "unlimited"):
            depths.append(None)
        elif "-" in token:
            lo, hi = token.split("-")
            depths.extend(range(int(lo), int(hi) + 1))
        else:
            depths.append(int(token))
    return tuple(depths)


def _cmd_stats(args) -> int:
    report = dataset_stats(load_ground_truth(args.gt))
    if args.json:
        rows = [vars(r) for r in report.rows]
        _emit(args, json.dumps({"schema_version": 1, "rows": rows}, indent=2) + "\n")
    else:
        _emit(args, report.to_csv())
    return 0


def _load_pair(args):
    gt = load_ground_truth(args.gt)
    dets = load_detections(args.det, with_derived_categories(gt)) if args.det else None
    return gt, dets


def _cmd_classify(args) -> int:
    gt, dets = _load_pair(args)
    tree = cart.load_tree(args.tree) if args.tree else None
    cats = compliance.derived_categories(gt)
    if dets is None:
        derived = compliance.derive_dataset_labels(gt, args.keep_indeterminate)
        log.info("classified %d ground-truth persons", len(derived))
    else:
        survivors = compliance.filter_by_threshold(dets, args.threshold)
        log.info("classifying %d detections (threshold %.2f)", len(survivors), args.threshold)
        derived = pipeline.classify_detections(
            survivors, args.classifier, tree, args.keep_indeterminate, cats
        )
    if args.output:
        write_instances(derived, args.output)
        log.info("wrote %s", args.output)
    else:
        sys.stdout.write(instances_json(derived) + "\n")
    return 0


def _cmd_evaluate(args) -> int:
    gt, dets = _load_pair(args)
    cfg = _eval_config(args)
    if args.derived:
        threshold = args.threshold
        if threshold is None:
            sweep = compliance.tune_threshold(gt, dets, args.f1_iou)
            threshold = sweep.chosen
            log.info("auto-tuned threshold: %.2f", threshold)
        tree = cart.load_tree(args.tree) if args.tree else None
        report = pipeline.pipeline_classify_then_evaluate(
            gt, dets, cfg, threshold, args.classifier, tree, args.keep_indeterminate
        )
    else:
        report = metrics.ap_coco(gt, dets, cfg, sim=args.sim)
    _emit(args, report.to_json() + "\n" if args.json else report.to_csv())
    return 0


def _cmd_tune(args) -> int:
    gt, dets = _load_pair(args)
    result = compliance.tune_threshold(gt, dets, args.f1_iou)
    log.info("chosen threshold %.2f", result.chosen)
    if args.json:
        payload = {
            "schema_version": 1,
            "chosen": result.chosen,
            "classes": list(result.class_names),
            "grid": [
                {"threshold": p.threshold, "per_class_f1": list(p.per_class_f1),
                 "overall_f1": p.overall_f1}
                for p in result.grid
            ],
        }
        _emit(args, json.dumps(payload, indent=2) + "\n")
    else:
        _emit(args, result.to_csv())
    return 0


def _cmd_fit_dt(args) -> int:
    gt = load_ground_truth(args.gt)
    X, y = training_data_from_dataset(gt)
    if not X:
        raise ValueError("no trainable persons in the ground truth")
    log.info("training on %d persons", len(X))
    spec = cart.GridSearchSpec(
        criteria=tuple(args.criteria.split(",")),
        depths=_parse_depths(args.depths),
        min_splits=tuple(int(v) for v in args.min_splits.split(",")),
        folds=args.folds,
        seed=args.seed,
    )
    search = cart.grid_search(X, y, spec)
    tree = cart.fit(X, y, search.best, feature_names=compliance.FEATURE_NAMES)
    tree.save(args.output)
    log.info(
        "best params: %s depth=%s min_split=%d; tree depth %d, %d nodes (%d leaves)",
        search.best.criterion, search.best.max_depth, search.best.min_samples_split,
        tree.depth, tree.n_nodes, tree.n_leaves,
    )
    if args.cv_table:
        write_text_atomic(args.cv_table, search.to_csv())
    return 0


def _cmd_generate(args) -> int:
    spec_path = args.spec or os.environ.get(CONFIG_ENV_VAR)
    spec = synth.SceneSpec.load(spec_path) if spec_path else synth.SceneSpec()
    if args.seed is not None:
        spec = synth.SceneSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    dataset, dets = synth.generate(spec)
    write_dataset(dataset, args.gt_out)
    write_instances(dets, args.det_out)
    log.info("wrote %s (%d instances) and %s (%d detections)",
             args.gt_out, len(dataset.instances), args.det_out, len(dets))
    return 0


def _cmd_pr_export(args) -> int:
    gt, dets = _load_pair(args)
    report = metrics.ap_coco(gt, dets, _eval_config(args), sim=args.sim)
    _emit(args, metrics.pr_curves_csv(report))
    return 0


_HANDLERS = {
    "stats": _cmd_stats,
    "classify": _cmd_classify,
    "evaluate": _cmd_evaluate,
    "tune-threshold": _cmd_tune,
    "fit-dt": _cmd_fit_dt,
    "generate": _cmd_generate,
    "pr-export": _cmd_pr_export,
}


def _schema_text() -> str:
    from .synth import SCENE_SCHEMA_VERSION

    schemas = {
        "annotation_json": {
            "schema": "MS COCO annotation file",
            "sections": {
                "images": ["id", "width", "height", "file_name"],
                "categories": ["id", "name (person|hard_hat|hard_hat_wearer|hard_hat_nonwearer)"],
                "annotations": ["id", "image_id", "category_id", "bbox [x,y,w,h]",
                                 "keypoints [x,y,v] (head, optional)", "iscrowd (optional)"],
            },
        },
        "results_json": {
            "schema": "MS COCO results file: flat list of detections",
            "fields": ["id (optional)", "image_id", "category_id", "bbox [x,y,w,h]",
                        "score in [0,1]", "keypoints [x,y,v] (optional)", "iscrowd (optional)"],
        },
        "tree_json": {"format": cart.TREE_FORMAT, "schema_version": cart.TREE_SCHEMA_VERSION},
        "scene_spec_json": {"schema_version": SCENE_SCHEMA_VERSION,
                             "fields": sorted(synth.SceneSpec.__dataclass_fields__)},
        "stats_csv": ["category", "subgroup", "all", "small", "medium", "large"],
        "metrics_csv": ["class", "ap", "ap50", "ap75", "ap_s (iou only)", "ap_m", "ap_l"],
        "sweep_csv": ["threshold", "f1_hard_hat_wearer", "f1_hard_hat_nonwearer",
                       "overall_f1", "chosen"],
        "pr_csv": ["class", "threshold", "score", "recall", "precision", "p_interp"],
    }
    return json.dumps({"schema_version": 1, "formats": schemas}, indent=2) + "\n"


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(parser.format_usage(), file=sys.stderr, end="")
        print(f"error: {exc}", file=sys.stderr)
        return 1

    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    if args.schema:
        sys.stdout.write(_schema_text())
        return 0
    if args.subcommand is None:
        print(parser.format_usage(), file=sys.stderr, end="")
        print("error: a subcommand is required", file=sys.stderr)
        return 1

    config = RunConfig(args.subcommand, args)
    try:
        _require_inputs(config.args)
        return _HANDLERS[config.subcommand](config.args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
