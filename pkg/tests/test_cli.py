import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from volcal.cli import main
from volcal.fileio import SubjectEntry, payload_path, write_manifest, write_volume
from volcal.metrics import LabelVolume, ProbVolume
from volcal.pipeline import CORRELATION_COLUMNS, REPORT_COLUMNS, run_analyze

SMALL_SPEC = {
    "model_id": "small", "n_subjects": 6, "grid_dims": [20, 20, 20], "voxel_volume_ml": 0.001,
    "radius_range": [2, 8], "boundary_softness": 1.0, "label_mode": "bernoulli",
    "distortion": {"kind": "temperature", "params": [2.0]}, "size_bias_coupling": -0.3,
    "mask": "ball", "seed": 1,
}


def table(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def cohort(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(SMALL_SPEC))
    assert main(["simulate", str(spec), "--out", str(tmp_path / "sim")]) == 0
    return tmp_path / "sim" / "manifest.json"


def test_analyze_columns_and_summary(cohort, capsys):
    assert main(["analyze", str(cohort)]) == 0
    out = capsys.readouterr().out
    rows = table(out)
    assert tuple(rows[0].keys()) == REPORT_COLUMNS
    assert [r["subject_id"] for r in rows] == [f"sub{i}" for i in range(6)] + ["#mean", "#dataset"]
    subjects = rows[:6]
    mean_abs = sum(abs(float(r["bias_per_voxel"])) for r in subjects) / 6
    assert float(rows[6]["bias_per_voxel"]) == pytest.approx(mean_abs, abs=1e-15)
    assert float(rows[6]["ece"]) == pytest.approx(sum(float(r["ece"]) for r in subjects) / 6, abs=1e-15)
    assert int(rows[7]["n_voxels"]) == sum(int(r["n_voxels"]) for r in subjects)


def test_analyze_perfect_subject(tmp_path, capsys):
    dims = (3, 3, 3)
    labels = (np.arange(27) % 3 == 0).astype(int)
    write_volume(tmp_path / "p.json", ProbVolume(labels.astype(float), dims))
    write_volume(tmp_path / "l.json", LabelVolume(labels, dims))
    write_manifest(tmp_path / "m.json", "perfect", [SubjectEntry("s", tmp_path / "p.json", tmp_path / "l.json")])
    assert main(["analyze", str(tmp_path / "m.json")]) == 0
    row = table(capsys.readouterr().out)[0]
    assert float(row["bias_per_voxel"]) == 0.0 and float(row["ece"]) == 0.0 and float(row["dice"]) == 1.0


def test_counterexample_then_analyze(tmp_path, capsys):
    assert main(["counterexample", "--out", str(tmp_path / "cx")]) == 0
    summary = {r["predictor"]: r for r in table((tmp_path / "cx" / "summary.csv").read_text())}
    assert float(summary["f1"]["exact_ce"]) == 0.0 and float(summary["f2"]["exact_ce"]) == 0.0
    assert float(summary["f3"]["bias"]) == 0.0 and float(summary["f3"]["accuracy"]) == 1.0
    assert float(summary["f3"]["exact_ce"]) == 0.25
    assert main(["analyze", str(tmp_path / "cx" / "manifest.json")]) == 0
    f3 = table(capsys.readouterr().out)[2]
    assert f3["subject_id"] == "f3" and float(f3["ece"]) == 0.25 and float(f3["bias_per_voxel"]) == 0.0


def test_verify_bound(tmp_path, capsys):
    main(["counterexample", "--out", str(tmp_path / "cx")])
    assert main(["verify-bound", str(tmp_path / "cx" / "manifest.json")]) == 0
    f3 = table(capsys.readouterr().out)[2]
    assert (float(f3["exact_ce"]), float(f3["binned_ece"]), float(f3["abs_bias"]), f3["chain_holds"]) == (
        0.25, 0.25, 0.0, "true")


def test_verify_bound_corrupt_file(tmp_path, capsys):
    main(["counterexample", "--out", str(tmp_path / "cx")])
    payload_path(tmp_path / "cx" / "f2.json").write_bytes(b"\0" * 10)
    out = tmp_path / "bound.csv"
    assert main(["verify-bound", str(tmp_path / "cx" / "manifest.json"), "--out", str(out)]) == 2
    err = capsys.readouterr().err
    assert "f2" in err and not out.exists()


def test_curve(tmp_path, capsys):
    main(["counterexample", "--out", str(tmp_path / "cx")])
    assert main(["curve", str(tmp_path / "cx" / "f3.json"), str(tmp_path / "cx" / "labels.json"), "--bins", "4"]) == 0
    rows = table(capsys.readouterr().out)
    assert [r["count"] for r in rows] == ["50", "150", "100", "0"]
    assert rows[3]["mean_conf"] == "" and rows[2]["freq"] == "1.0" and rows[1]["freq"] == "0.0"


def test_curves_dir(cohort, tmp_path):
    main(["analyze", str(cohort), "--curves-dir", str(tmp_path / "curves"), "--out", str(tmp_path / "r.csv")])
    rows = table((tmp_path / "curves" / "sub0.csv").read_text())
    assert len(rows) == 20 and float(rows[-1]["bin_high"]) == 1.0


def test_calibrate_improves_ece(cohort, tmp_path):
    out = tmp_path / "cal"
    assert main(["calibrate", str(cohort), str(cohort), "--out", str(out)]) == 0
    params = json.loads((out / "platt.json").read_text())
    assert set(params) == {"a", "b", "converged", "iterations"}
    before = table(run_analyze(cohort))[-2]
    after = table(run_analyze(out / "manifest.json"))[-2]
    assert float(after["ece"]) < float(before["ece"])


def test_calibrate_input_kind_checked(cohort, tmp_path):
    assert main(["calibrate", str(cohort), str(cohort), "--out", str(tmp_path / "c"), "--input-kind", "logit"]) == 2


def test_calibrate_single_class(tmp_path):
    dims = (4, 1, 1)
    write_volume(tmp_path / "p.json", ProbVolume(np.array([0.1, 0.2, 0.3, 0.4]), dims))
    write_volume(tmp_path / "l.json", LabelVolume(np.zeros(4, int), dims))
    write_manifest(tmp_path / "m.json", "m", [SubjectEntry("s", tmp_path / "p.json", tmp_path / "l.json")])
    assert main(["calibrate", str(tmp_path / "m.json"), str(tmp_path / "m.json"), "--out", str(tmp_path / "c")]) == 2


def test_correlate(cohort, tmp_path, capsys):
    report = tmp_path / "r.csv"
    main(["analyze", str(cohort), "--out", str(report)])
    assert main(["correlate", str(report), "true_volume_ml", "bias_ml"]) == 0
    rows = table(capsys.readouterr().out)
    assert tuple(rows[0].keys()) == CORRELATION_COLUMNS
    assert rows[0]["group"] == "all" and int(rows[0]["n"]) == 6 and float(rows[0]["pearson_r"]) < 0


def test_correlate_grouped(cohort, tmp_path, capsys):
    report = tmp_path / "r.csv"
    main(["analyze", str(cohort), "--out", str(report)])
    assert main(["correlate", str(report), "true_volume_ml", "ece", "--group-tag", "size",
                 "--manifest", str(cohort)]) == 0
    groups = {r["group"] for r in table(capsys.readouterr().out)}
    assert groups <= {"small", "large"}


def test_correlate_group_needs_manifest(cohort, tmp_path):
    report = tmp_path / "r.csv"
    main(["analyze", str(cohort), "--out", str(report)])
    assert main(["correlate", str(report), "true_volume_ml", "ece", "--group-tag", "size"]) == 2


def test_pareto(cohort, tmp_path, capsys):
    main(["analyze", str(cohort), "--out", str(tmp_path / "base.csv")])
    main(["calibrate", str(cohort), str(cohort), "--out", str(tmp_path / "cal")])
    main(["analyze", str(tmp_path / "cal" / "manifest.json"), "--out", str(tmp_path / "platt.csv")])
    capsys.readouterr()
    assert main(["pareto", str(tmp_path / "base.csv"), str(tmp_path / "platt.csv")]) == 0
    rows = {r["model_id"]: r for r in table(capsys.readouterr().out)}
    assert rows["platt"]["on_front"] == "true" and rows["base"]["on_front"] == "false"


def test_simulate_needs_directory(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(SMALL_SPEC))
    assert main(["simulate", str(spec)]) == 2


def test_simulate_seed_override(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(SMALL_SPEC))
    main(["simulate", str(spec), "--out", str(tmp_path / "a"), "--seed", "99"])
    assert json.loads((tmp_path / "a" / "spec.json").read_text())["seed"] == 99


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "volcal", "counterexample", "--out", str(tmp_path / "cx")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout == ""
