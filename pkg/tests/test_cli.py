import json

import pytest

from hatcheck.cli import run
from hatcheck.coco import load_detections, load_ground_truth, write_dataset, write_instances
from hatcheck.compliance import with_derived_categories
from hatcheck.synth import SceneSpec, generate

from conftest import dataset, hat, person


@pytest.fixture()
def scene_files(tmp_path):
    ds, dets = generate(SceneSpec(n_images=3, persons_per_image=(1, 3),
                                  wearer_probability=0.6, box_jitter=0.05,
                                  false_positive_rate=0.3, seed=42))
    gt = tmp_path / "gt.json"
    det = tmp_path / "det.json"
    write_dataset(ds, gt)
    write_instances(dets, det)
    return gt, det


@pytest.fixture()
def identity_files(tmp_path):
    instances = [
        person(1, (0, 0, 40, 80), kp=(20, 5)),
        hat(1, (12, 0, 16, 10)),
        person(2, (0, 0, 50, 100), kp=(25, 8)),
    ]
    ds = dataset(instances)
    dets = [
        type(i)(100 + n, i.image_id, i.category, i.bbox, i.head_keypoint, 1.0, False)
        for n, i in enumerate(instances)
    ]
    gt = tmp_path / "gt.json"
    det = tmp_path / "det.json"
    write_dataset(ds, gt)
    write_instances(dets, det)
    return gt, det


class TestExitCodes:
    def test_unknown_flag_exits_one(self, capsys):
        assert run(["evaluate", "--bogus"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_no_subcommand_exits_one(self, capsys):
        assert run([]) == 1

    def test_missing_input_file_exits_two(self, tmp_path, capsys):
        assert run(["stats", "--gt", str(tmp_path / "nope.json")]) == 2

    def test_malformed_input_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run(["stats", "--gt", str(bad)]) == 1

    def test_integrity_error_exits_one(self, tmp_path, capsys):
        payload = {
            "images": [],
            "categories": [{"id": 1, "name": "person"}],
            "annotations": [{"id": 1, "image_id": 5, "category_id": 1,
                             "bbox": [0, 0, 1, 1]}],
        }
        bad = tmp_path / "dangling.json"
        bad.write_text(json.dumps(payload))
        assert run(["stats", "--gt", str(bad)]) == 1

    def test_schema_prints_versions(self, capsys):
        assert run(["--schema"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["schema_version"] == 1
        assert "results_json" in payload["formats"]


class TestStats:
    def test_stdout_csv(self, scene_files, capsys):
        gt, _ = scene_files
        assert run(["stats", "--gt", str(gt)]) == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "category,subgroup,all,small,medium,large"

    def test_output_file_written_atomically(self, scene_files, tmp_path):
        gt, _ = scene_files
        out = tmp_path / "stats.csv"
        assert run(["stats", "--gt", str(gt), "-o", str(out)]) == 0
        assert out.read_text().startswith("category,")
        leftovers = [p for p in tmp_path.iterdir() if p.name.startswith(".tmp-")]
        assert leftovers == []


class TestGenerateAndDeterminism:
    def test_generate_then_reload(self, tmp_path):
        gt = tmp_path / "g.json"
        det = tmp_path / "d.json"
        assert run(["generate", "--seed", "9", "--gt-out", str(gt),
                    "--det-out", str(det)]) == 0
        ds = load_ground_truth(gt)
        dets = load_detections(det, with_derived_categories(ds))
        assert ds.instances and dets

    def test_spec_file_and_env_var(self, tmp_path, monkeypatch):
        spec_path = tmp_path / "spec.json"
        SceneSpec(n_images=2, seed=4).save(spec_path)
        monkeypatch.setenv("HATCHECK_CONFIG", str(spec_path))
        gt = tmp_path / "g.json"
        det = tmp_path / "d.json"
        assert run(["generate", "--gt-out", str(gt), "--det-out", str(det)]) == 0
        assert len(load_ground_truth(gt).images) == 2

    def test_byte_identical_reports_for_fixed_seed(self, tmp_path):
        outputs = []
        for attempt in ("a", "b"):
            gt = tmp_path / f"g{attempt}.json"
            det = tmp_path / f"d{attempt}.json"
            rep = tmp_path / f"rep{attempt}.csv"
            assert run(["generate", "--seed", "33", "--gt-out", str(gt),
                        "--det-out", str(det)]) == 0
            assert run(["evaluate", "--gt", str(gt), "--det", str(det),
                        "-o", str(rep)]) == 0
            outputs.append(rep.read_bytes())
        assert outputs[0] == outputs[1]


class TestEvaluate:
    def test_identity_report_is_all_ones(self, identity_files, capsys):
        gt, det = identity_files
        assert run(["evaluate", "--gt", str(gt), "--det", str(det), "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["overall"]["ap"] == 1.0
        assert payload["overall"]["ap50"] == 1.0

    def test_oks_mode(self, identity_files, capsys):
        gt, det = identity_files
        assert run(["evaluate", "--gt", str(gt), "--det", str(det),
                    "--sim", "oks", "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        person_row = next(r for r in payload["classes"] if r["class"] == "person")
        assert person_row["ap"] == 1.0
        assert "ap_s" not in person_row

    def test_derived_pipeline(self, identity_files, capsys):
        gt, det = identity_files
        assert run(["evaluate", "--gt", str(gt), "--det", str(det),
                    "--derived", "--threshold", "0.5", "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        names = {r["class"] for r in payload["classes"]}
        assert names == {"hard_hat_wearer", "hard_hat_nonwearer"}
        assert payload["overall"]["ap"] == 1.0

    def test_derived_auto_threshold(self, identity_files, capsys):
        gt, det = identity_files
        assert run(["evaluate", "--gt", str(gt), "--det", str(det),
                    "--derived", "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["overall"]["ap"] == 1.0


class TestTuneThreshold:
    def test_sweep_csv(self, identity_files, capsys):
        gt, det = identity_files
        assert run(["tune-threshold", "--gt", str(gt), "--det", str(det)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 96
        chosen_rows = [l for l in lines[1:] if l.endswith(",1")]
        assert len(chosen_rows) == 1
        assert chosen_rows[0].startswith("0.05,")

    def test_sweep_json(self, identity_files, capsys):
        gt, det = identity_files
        assert run(["tune-threshold", "--gt", str(gt), "--det", str(det),
                    "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["chosen"] == 0.05
        assert len(payload["grid"]) == 95


class TestClassify:
    def test_classify_detections_to_file(self, identity_files, tmp_path):
        gt, det = identity_files
        out = tmp_path / "derived.json"
        assert run(["classify", "--gt", str(gt), "--det", str(det),
                    "--threshold", "0.5", "-o", str(out)]) == 0
        ds = with_derived_categories(load_ground_truth(gt))
        derived = load_detections(out, ds)
        # image 1 holds the wearer; the image-2 person has no hat
        assert {d.category.name for d in derived} == {"hard_hat_wearer",
                                                      "hard_hat_nonwearer"}

    def test_classify_ground_truth_itself(self, identity_files, capsys):
        gt, _ = identity_files
        assert run(["classify", "--gt", str(gt)]) == 0
        records = json.loads(capsys.readouterr().out)
        assert records and all("category_id" in r for r in records)

    def test_classify_with_tree(self, scene_files, tmp_path):
        gt, det = scene_files
        tree_path = tmp_path / "tree.json"
        assert run(["fit-dt", "--gt", str(gt), "-o", str(tree_path),
                    "--depths", "2-4", "--min-splits", "2", "--seed", "1"]) == 0
        out = tmp_path / "derived.json"
        assert run(["classify", "--gt", str(gt), "--det", str(det),
                    "--classifier", "dt", "--tree", str(tree_path),
                    "-o", str(out)]) == 0
        assert out.exists()

    def test_dt_without_tree_fails(self, scene_files):
        gt, det = scene_files
        assert run(["classify", "--gt", str(gt), "--det", str(det),
                    "--classifier", "dt"]) == 1


class TestFitDT:
    def test_writes_tree_and_cv_table(self, scene_files, tmp_path):
        gt, _ = scene_files
        tree_path = tmp_path / "tree.json"
        cv_path = tmp_path / "cv.csv"
        assert run(["fit-dt", "--gt", str(gt), "-o", str(tree_path),
                    "--cv-table", str(cv_path),
                    "--depths", "2-3,none", "--min-splits", "2,14",
                    "--seed", "7"]) == 0
        payload = json.loads(tree_path.read_text())
        assert payload["format"] == "hatcheck-tree"
        assert cv_path.read_text().startswith("criterion,max_depth")


class TestPRExport:
    def test_pr_csv(self, identity_files, capsys):
        gt, det = identity_files
        assert run(["pr-export", "--gt", str(gt), "--det", str(det)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "class,threshold,score,recall,precision,p_interp"
        assert len(lines) > 1
