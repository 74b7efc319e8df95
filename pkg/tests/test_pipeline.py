import pytest

from hatcheck.cart import fit
from hatcheck.coco import Dataset
from hatcheck.compliance import training_data_from_dataset
from hatcheck.core import Category, HARD_HAT_NONWEARER, HARD_HAT_WEARER, PERSON
from hatcheck.oracle import oracle_ap
from hatcheck.pipeline import derive_ground_truth, pipeline_classify_then_evaluate
from hatcheck.synth import SceneSpec, generate

from conftest import dataset, hat, person


def scene(seed=1, **overrides):
    params = {"n_images": 3, "persons_per_image": (1, 3), "wearer_probability": 0.6,
              "seed": seed, **overrides}
    return generate(SceneSpec(**params))


class TestDeriveGroundTruth:
    def test_labels_and_categories(self):
        wearer = person(1, (0, 0, 40, 80), kp=(20, 5))
        lid = hat(1, (12, 0, 16, 10))
        bare = person(1, (100, 0, 40, 80), kp=(120, 5))
        ds = dataset([wearer, lid, bare])
        derived = derive_ground_truth(ds)
        names = sorted(c.name for c in derived.categories)
        assert names == [HARD_HAT_NONWEARER, HARD_HAT_WEARER]
        got = {i.id: i.category.name for i in derived.instances}
        assert got == {wearer.id: HARD_HAT_WEARER, bare.id: HARD_HAT_NONWEARER}

    def test_indeterminate_dropped_or_kept(self):
        headless = person(1, (0, 0, 40, 80))
        ds = dataset([headless])
        assert derive_ground_truth(ds).instances == ()
        kept = derive_ground_truth(ds, keep_indeterminate=True)
        assert [i.category.name for i in kept.instances] == [PERSON]

    def test_pre_derived_dataset_taken_verbatim(self):
        base = dataset([person(1, (0, 0, 40, 80), kp=(20, 5))])
        wearer_cat = Category(7, HARD_HAT_WEARER)
        pre = base.instances[0]
        labeled = type(pre)(pre.id, pre.image_id, wearer_cat, pre.bbox,
                            pre.head_keypoint, None, False)
        ds = Dataset(base.images, base.categories + (wearer_cat,), (labeled,))
        derived = derive_ground_truth(ds)
        assert derived.instances == (labeled,)


class TestPipeline:
    def test_clean_scene_scores_one(self):
        ds, dets = scene(seed=2)
        report = pipeline_classify_then_evaluate(ds, dets, threshold=0.05)
        assert report.overall.ap == 1.0
        names = {c.class_name for c in report.per_class}
        assert names == {HARD_HAT_WEARER, HARD_HAT_NONWEARER}

    def test_noisy_scene_matches_oracle(self):
        ds, dets = scene(seed=3, box_jitter=0.15, drop_rate=0.2,
                         false_positive_rate=0.4, persons_per_image=(1, 2))
        report = pipeline_classify_then_evaluate(ds, dets, threshold=0.3)
        from hatcheck.compliance import filter_by_threshold
        from hatcheck.pipeline import classify_detections, derive_ground_truth
        from hatcheck.compliance import derived_categories

        cats = derived_categories(ds)
        derived_dets = classify_detections(filter_by_threshold(dets, 0.3),
                                           "rule", None, False, cats)
        derived_gt = derive_ground_truth(ds)
        reference = oracle_ap(derived_gt, derived_dets)
        for row in report.per_class:
            expected = reference.per_class[row.class_name]
            for field in ("ap", "ap50", "ap75", "ap_s", "ap_m", "ap_l"):
                a, b = getattr(row, field), expected[field]
                assert (a is None) == (b is None)
                if a is not None:
                    assert a == pytest.approx(b, abs=1e-9)

    def test_dt_classifier_path(self):
        ds, dets = scene(seed=4)
        X, y = training_data_from_dataset(ds)
        tree = fit(X, y)
        report = pipeline_classify_then_evaluate(ds, dets, threshold=0.05,
                                                 classifier="dt", tree=tree)
        assert report.overall.ap == 1.0  # separable synthetic data

    def test_dt_without_tree_rejected(self):
        ds, dets = scene(seed=5)
        with pytest.raises(ValueError, match="needs a trained tree"):
            pipeline_classify_then_evaluate(ds, dets, threshold=0.1, classifier="dt")
