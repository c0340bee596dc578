"""Cohort-level workflows behind the command line interface.

Each ``run_*`` function computes its complete result before writing any
file, and every file is written atomically, so a failure leaves no partial
output behind.
"""

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._summation import fsum
from .cohort import SubjectMetrics, pareto_front, subgroup_correlations
from .exceptions import ContainerError
from .fileio import (
    LogitVolume,
    SubjectEntry,
    atomic_write_text,
    dump_json,
    load_manifest,
    load_subject,
    write_manifest,
    write_volume,
)
from .metrics import (
    BinningScheme,
    DiscreteDataset,
    LabelVolume,
    ProbVolume,
    accuracy,
    binned_ece,
    dataset_bias,
    exact_ce,
    reliability_curve,
    soft_volume,
    to_dataset,
    volume_bias,
)
from .recalibration import platt_apply, platt_fit, to_logit
from .synthetic import PhantomSpec, generate_phantom_cohort
from .theory import build_counterexample, verify_bound

logger = logging.getLogger(__name__)

REPORT_COLUMNS = (
    "subject_id", "n_voxels", "true_volume_ml", "soft_volume_ml", "bias_per_voxel",
    "bias_ml", "ece", "exact_ce", "jensen_gap", "dice",
)
CURVE_COLUMNS = ("bin_low", "bin_high", "mean_conf", "freq", "count")
BOUND_COLUMNS = (
    "subject_id", "exact_ce", "binned_ece", "abs_bias", "exact_gap", "binned_gap", "chain_holds",
)
CORRELATION_COLUMNS = ("group", "n", "pearson_r", "pearson_se", "spearman_rho", "kendall_tau")
SUMMARY_COLUMNS = ("predictor", "exact_ce", "binned_ece", "bias", "accuracy")


def fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return "" if np.isnan(value) else repr(float(value))
    return str(value)


def to_csv(columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row[c]) for c in columns])
    return buf.getvalue()


@dataclass(frozen=True)
class SubjectResult:
    row: dict
    data: DiscreteDataset
    curve: object
    hits: tuple  # (|pred & truth|, |pred|, |truth|) at the Dice threshold


def evaluate_subject(prob, label, subject_id, binning, threshold):
    data = to_dataset(prob, label)
    bias_pv, bias_ml = volume_bias(prob, label)
    soft = soft_volume(prob)
    positives = int(np.count_nonzero(data.labels))
    true_ml = positives * prob.voxel_volume_ml
    curve = reliability_curve(data, binning)
    ece = curve.ece()
    ce = exact_ce(data)
    pred = data.scores >= threshold
    truth = data.labels.astype(bool)
    hits = (int(np.count_nonzero(pred & truth)), int(np.count_nonzero(pred)), positives)
    denom = hits[1] + hits[2]
    row = {
        "subject_id": subject_id,
        "n_voxels": len(data),
        "true_volume_ml": true_ml,
        "soft_volume_ml": soft,
        "bias_per_voxel": bias_pv,
        "bias_ml": bias_ml,
        "ece": ece,
        "exact_ce": ce,
        "jensen_gap": ce - abs(bias_pv),
        "dice": 1.0 if denom == 0 else 2.0 * hits[0] / denom,
    }
    return SubjectResult(row, data, curve, hits)


def _evaluate_entry(entry, binning, threshold):
    prob, label, _ = load_subject(entry)
    return evaluate_subject(prob, label, entry.id, binning, threshold)


def _map_subjects(fn, entries, jobs):
    if jobs <= 1:
        return [fn(e) for e in entries]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, entries))


def summary_rows(results, binning):
    """The ``#mean`` and ``#dataset`` rows of an analysis report."""
    rows = [r.row for r in results]
    n = len(rows)
    mean = {"subject_id": "#mean"}
    for c in REPORT_COLUMNS[1:]:
        values = [abs(r[c]) if c.startswith("bias") else r[c] for r in rows]
        mean[c] = fsum(values) / n

    pooled = DiscreteDataset(
        np.concatenate([r.data.scores for r in results]),
        np.concatenate([r.data.labels for r in results]),
    )
    soft = fsum([r["soft_volume_ml"] for r in rows])
    true = fsum([r["true_volume_ml"] for r in rows])
    bias_pv = dataset_bias(pooled)
    ce = exact_ce(pooled)
    inter, n_pred, n_true = (sum(h[k] for h in (r.hits for r in results)) for k in range(3))
    dataset = {
        "subject_id": "#dataset",
        "n_voxels": len(pooled),
        "true_volume_ml": true,
        "soft_volume_ml": soft,
        "bias_per_voxel": bias_pv,
        "bias_ml": soft - true,
        "ece": binned_ece(pooled, binning),
        "exact_ce": ce,
        "jensen_gap": ce - abs(bias_pv),
        "dice": 1.0 if n_pred + n_true == 0 else 2.0 * inter / (n_pred + n_true),
    }
    return mean, dataset, pooled


def curve_rows(curve):
    return [
        {
            "bin_low": float(curve.edges[i]),
            "bin_high": float(curve.edges[i + 1]),
            "mean_conf": curve.mean_confidence[i],
            "freq": curve.empirical_frequency[i],
            "count": int(curve.counts[i]),
        }
        for i in range(curve.num_bins)
    ]


def run_analyze(manifest_path, bins=20, threshold=0.5, out_csv=None, curves_dir=None, jobs=1):
    """Per-subject report plus ``#mean`` and ``#dataset`` rows.

    Returns the CSV text; writes it to ``out_csv`` when given.
    """
    manifest = load_manifest(manifest_path)
    if not manifest.subjects:
        raise ContainerError(f"{manifest_path}: manifest lists no subjects")
    binning = BinningScheme(bins)
    results = _map_subjects(
        lambda e: _evaluate_entry(e, binning, threshold), manifest.subjects, jobs
    )
    mean, dataset, _ = summary_rows(results, binning)
    text = to_csv(REPORT_COLUMNS, [r.row for r in results] + [mean, dataset])
    if curves_dir is not None:
        for r in results:
            atomic_write_text(
                Path(curves_dir) / f"{r.row['subject_id']}.csv",
                to_csv(CURVE_COLUMNS, curve_rows(r.curve)),
            )
    if out_csv is not None:
        atomic_write_text(out_csv, text)
    return text


def run_verify_bound(manifest_path, bins=20, out_csv=None, jobs=1):
    """Return ``(all_hold, csv_text)`` for every subject and the pooled data."""
    manifest = load_manifest(manifest_path)
    binning = BinningScheme(bins)

    def check(entry):
        prob, label, _ = load_subject(entry)
        return to_dataset(prob, label)

    datasets = _map_subjects(check, manifest.subjects, jobs)
    rows, violations = [], []
    pooled = DiscreteDataset(
        np.concatenate([d.scores for d in datasets]), np.concatenate([d.labels for d in datasets])
    )
    ids = [e.id for e in manifest.subjects] + ["#dataset"]
    for sid, data in zip(ids, datasets + [pooled]):
        rep = verify_bound(data, binning)
        rows.append({"subject_id": sid, **rep.__dict__})
        if not rep.chain_holds:
            violations.append(sid)
    text = to_csv(BOUND_COLUMNS, rows)
    if out_csv is not None:
        atomic_write_text(out_csv, text)
    for sid in violations:
        logger.error("bound violated for %s", sid)
    return not violations, text


def run_counterexample(out_dir, bins=20):
    """Write the averaging counterexample as 300-voxel containers.

    Outputs ``labels.json``, ``f1.json``, ``f2.json``, ``f3.json`` (with
    ``.raw`` payloads), ``manifest.json`` and ``summary.csv``. Returns the
    summary rows.
    """
    out_dir = Path(out_dir)
    labels, *predictors = build_counterexample()
    dims = (labels.size, 1, 1)
    binning = BinningScheme(bins)
    rows = []
    for f in predictors:
        data = f.on(labels)
        rows.append({
            "predictor": f.name,
            "exact_ce": exact_ce(data),
            "binned_ece": binned_ece(data, binning),
            "bias": dataset_bias(data),
            "accuracy": accuracy(data),
        })
    write_volume(out_dir / "labels.json", LabelVolume(labels, dims))
    entries = []
    for f in predictors:
        write_volume(out_dir / f"{f.name}.json", ProbVolume(f.scores, dims))
        entries.append(SubjectEntry(f.name, out_dir / f"{f.name}.json", out_dir / "labels.json"))
    write_manifest(out_dir / "manifest.json", "counterexample", entries)
    atomic_write_text(out_dir / "summary.csv", to_csv(SUMMARY_COLUMNS, rows))
    return rows


def _subject_logits(pred, mask, input_kind):
    if isinstance(pred, LogitVolume):
        if input_kind == "probability":
            raise ContainerError("--input-kind probability given for a logit container")
        return pred.values
    if input_kind == "logit":
        raise ContainerError("--input-kind logit given for a prob container")
    return to_logit(pred.scores)


def run_calibrate(train_manifest, apply_manifest, out_dir, input_kind="auto",
                  max_iterations=100, grad_tol=1e-10, label_smoothing=False):
    """Fit Platt scaling on pooled masked training voxels and apply it.

    Writes ``platt.json``, one recalibrated prob container per apply
    subject and ``manifest.json`` pointing at them (labels and masks are
    referenced in place). Returns the fitted PlattParams.
    """
    out_dir = Path(out_dir)
    train = load_manifest(train_manifest)
    logits, labels = [], []
    for entry in train.subjects:
        pred, label, mask = load_subject(entry, allow_logits=True)
        try:
            z = _subject_logits(pred, mask, input_kind)
        except ContainerError as exc:
            raise ContainerError(f"subject {entry.id!r}: {exc}") from exc
        sel = slice(None) if mask is None else mask
        logits.append(z[sel])
        labels.append(label.labels[sel])
    params = platt_fit(
        np.concatenate(logits), np.concatenate(labels), max_iterations=max_iterations,
        grad_tol=grad_tol, label_smoothing=label_smoothing,
    )
    if not params.converged:
        logger.warning("Platt fit did not converge (gradient norm %g)", params.final_gradient_norm)

    target = load_manifest(apply_manifest)
    outputs = []
    for entry in target.subjects:
        pred, label, mask = load_subject(entry, allow_logits=True)
        try:
            z = _subject_logits(pred, mask, input_kind)
        except ContainerError as exc:
            raise ContainerError(f"subject {entry.id!r}: {exc}") from exc
        outputs.append((entry, ProbVolume(platt_apply(params, z), label.dims, label.voxel_volume_ml)))

    entries = []
    for entry, vol in outputs:
        path = out_dir / f"{entry.id}_prob.json"
        write_volume(path, vol)
        entries.append(SubjectEntry(entry.id, path, entry.label_path, entry.mask_path, entry.tags))
    atomic_write_text(out_dir / "platt.json", dump_json(params.to_json_dict()))
    write_manifest(out_dir / "manifest.json", f"{target.model_id}+platt", entries)
    return params


def run_simulate(spec, out_dir, seed=None):
    """Generate a phantom cohort and write it with a manifest.

    ``spec`` is a PhantomSpec, a dict, or a path to a JSON file; an optional
    ``model_id`` key names the cohort. ``seed`` overrides the spec's seed.
    """
    model_id = "phantom"
    if isinstance(spec, (str, Path)):
        spec = json.loads(Path(spec).read_text())
    if isinstance(spec, dict):
        spec = dict(spec)
        model_id = spec.pop("model_id", model_id)
        spec = PhantomSpec.from_json(spec)
    if seed is not None:
        spec = PhantomSpec.from_json({**spec.to_json(), "seed": int(seed)})
    out_dir = Path(out_dir)
    cohort = generate_phantom_cohort(spec)
    entries = []
    mask_path = None
    for prob, label, sid, tags in cohort:
        if prob.mask is not None and mask_path is None:
            mask_path = out_dir / "mask.json"
            write_volume(mask_path, LabelVolume(prob.mask, prob.dims, prob.voxel_volume_ml), kind="mask")
        write_volume(out_dir / f"{sid}_prob.json", ProbVolume(prob.scores, prob.dims, prob.voxel_volume_ml))
        write_volume(out_dir / f"{sid}_label.json", label)
        entries.append(SubjectEntry(
            sid, out_dir / f"{sid}_prob.json", out_dir / f"{sid}_label.json", mask_path, tags
        ))
    atomic_write_text(out_dir / "spec.json", dump_json({"model_id": model_id, **spec.to_json()}))
    write_manifest(out_dir / "manifest.json", model_id, entries)
    return out_dir / "manifest.json"


def read_report(path):
    """Per-subject rows of an analysis report (summary rows dropped)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise ContainerError(f"{path}: not an analysis report (columns {reader.fieldnames})")
        rows = [r for r in reader if not r["subject_id"].startswith("#")]
    return rows, {r["subject_id"] for r in rows}


def report_to_metrics(rows, tags=None):
    tags = tags or {}
    out = []
    for r in rows:
        out.append(SubjectMetrics(
            subject_id=r["subject_id"],
            ece=float(r["ece"]),
            bias_per_voxel=float(r["bias_per_voxel"]),
            bias_ml=float(r["bias_ml"]),
            soft_volume_ml=float(r["soft_volume_ml"]),
            true_volume_ml=float(r["true_volume_ml"]),
            dice=float(r["dice"]),
            exact_ce=float(r["exact_ce"]),
            jensen_gap=float(r["jensen_gap"]),
            tags=tags.get(r["subject_id"], ()),
        ))
    return out


def run_correlate(report_csv, x, y, group_tag=None, manifest_path=None, out_csv=None):
    """Correlation table between two report columns, optionally per tag value.

    Tags come from the manifest that produced the report; a tag ``key``
    groups subjects by their ``key=value`` tags.
    """
    rows, _ = read_report(report_csv)
    tags = {}
    if manifest_path is not None:
        tags = {s.id: s.tags for s in load_manifest(manifest_path).subjects}
    elif group_tag is not None:
        raise ValueError("grouping by tag requires the cohort manifest")
    metrics = report_to_metrics(rows, tags)
    table = subgroup_correlations(metrics, group_tag, x, y)
    out_rows = [{"group": g, **stats} for g, stats in table.items()]
    text = to_csv(CORRELATION_COLUMNS, out_rows)
    if out_csv is not None:
        atomic_write_text(out_csv, text)
    return text


def run_pareto(report_paths, objectives=("ece", "abs_bias"), directions=None, out_csv=None):
    """Mark which model reports lie on the Pareto front of their ``#mean`` rows.

    Models are named by report file stem. ``abs_bias`` reads the
    ``bias_per_voxel`` column of ``#mean``, which already holds the mean
    absolute bias.
    """
    directions = directions or ["min"] * len(objectives)
    points = []
    for path in report_paths:
        with open(path, newline="") as fh:
            mean = next((r for r in csv.DictReader(fh) if r["subject_id"] == "#mean"), None)
        if mean is None:
            raise ContainerError(f"{path}: no #mean row")
        column = {"abs_bias": "bias_per_voxel", "abs_bias_ml": "bias_ml"}
        vec = [float(mean[column.get(o, o)]) for o in objectives]
        points.append((Path(path).stem, vec))
    front = pareto_front(points, directions)
    rows = [
        {"model_id": pid, **dict(zip(objectives, vec)), "on_front": pid in front}
        for pid, vec in points
    ]
    text = to_csv(("model_id", *objectives, "on_front"), rows)
    if out_csv is not None:
        atomic_write_text(out_csv, text)
    return text


def run_curve(prob_path, label_path, mask_path=None, bins=20, out_csv=None):
    entry = SubjectEntry("curve", Path(prob_path), Path(label_path),
                         Path(mask_path) if mask_path else None)
    prob, label, _ = load_subject(entry)
    curve = reliability_curve(to_dataset(prob, label), BinningScheme(bins))
    text = to_csv(CURVE_COLUMNS, curve_rows(curve))
    if out_csv is not None:
        atomic_write_text(out_csv, text)
    return text
