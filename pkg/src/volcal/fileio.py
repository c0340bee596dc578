"""Volume containers, cohort manifests and atomic file output.

A container is a JSON header ``name.json``::

    {"dims": [X, Y, Z], "dtype": "f32" | "u8",
     "voxel_volume_ml": 0.001, "kind": "prob" | "label" | "mask" | "logit"}

next to a payload ``name.raw`` holding the little-endian values in C order.
Converting from NIfTI or similar takes one line: dump ``img.get_fdata()``
with ``astype('<f4').tobytes(order='C')`` and write the matching header.

A manifest is a JSON document::

    {"model_id": "...",
     "subjects": [{"id": "...", "prob_path": "...", "label_path": "...",
                   "mask_path": "..." (optional), "tags": ["grade=HGG"]}]}

with paths relative to the manifest's directory.
"""

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_dims, check_positive
from .exceptions import ContainerError
from .metrics import LabelVolume, ProbVolume

logger = logging.getLogger(__name__)

DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}
KIND_DTYPE = {"prob": "f32", "logit": "f32", "label": "u8", "mask": "u8"}
CLAMP_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class LogitVolume:
    values: np.ndarray
    dims: tuple
    voxel_volume_ml: float


@dataclass(frozen=True)
class SubjectEntry:
    id: str
    prob_path: Path
    label_path: Path
    mask_path: Path | None = None
    tags: tuple = ()


@dataclass(frozen=True)
class CohortManifest:
    model_id: str
    subjects: tuple
    root: Path = field(default=Path("."))


def payload_path(header_path):
    return Path(header_path).with_suffix(".raw")


def atomic_write_bytes(path, data):
    """Write to a temporary sibling and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _read_header(path):
    try:
        header = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: unreadable header ({exc})") from exc
    if not isinstance(header, dict):
        raise ContainerError(f"{path}: header must be a JSON object")
    missing = {"dims", "dtype", "voxel_volume_ml", "kind"} - header.keys()
    if missing:
        raise ContainerError(f"{path}: header lacks {sorted(missing)}")
    kind, dtype = header["kind"], header["dtype"]
    if kind not in KIND_DTYPE:
        raise ContainerError(f"{path}: unknown kind {kind!r}")
    if dtype not in DTYPES:
        raise ContainerError(f"{path}: unknown dtype {dtype!r}")
    if KIND_DTYPE[kind] != dtype:
        raise ContainerError(f"{path}: kind {kind!r} requires dtype {KIND_DTYPE[kind]!r}")
    try:
        dims = check_dims(header["dims"])
        vml = check_positive(header["voxel_volume_ml"], "voxel_volume_ml")
    except (TypeError, ValueError) as exc:
        raise ContainerError(f"{path}: {exc}") from exc
    return kind, dtype, dims, vml


def read_volume(path):
    """Load a container as ProbVolume, LabelVolume (label or mask) or LogitVolume."""
    kind, dtype, dims, vml = _read_header(path)
    raw_path = payload_path(path)
    try:
        raw = raw_path.read_bytes()
    except OSError as exc:
        raise ContainerError(f"{raw_path}: {exc}") from exc
    n = int(np.prod(dims))
    expected = n * DTYPES[dtype].itemsize
    if len(raw) != expected:
        raise ContainerError(f"{raw_path}: payload has {len(raw)} bytes, expected {expected}")
    values = np.frombuffer(raw, dtype=DTYPES[dtype]).astype(np.float64 if dtype == "f32" else np.int8)
    if dtype == "f32" and not np.all(np.isfinite(values)):
        raise ContainerError(f"{raw_path}: non-finite values")
    if kind == "prob":
        lo, hi = values.min(), values.max()
        if lo < -CLAMP_TOL or hi > 1.0 + CLAMP_TOL:
            raise ContainerError(f"{raw_path}: probabilities outside [0, 1] ({lo}, {hi})")
        if lo < 0.0 or hi > 1.0:
            logger.warning("%s: clamping probabilities within %g of [0, 1]", raw_path, CLAMP_TOL)
            values = np.clip(values, 0.0, 1.0)
        return ProbVolume(values, dims, vml)
    if kind == "logit":
        return LogitVolume(values, dims, vml)
    if not np.all((values == 0) | (values == 1)):
        raise ContainerError(f"{raw_path}: {kind} values must be 0 or 1")
    return LabelVolume(values, dims, vml)


def write_volume(path, volume, kind=None):
    """Write ``volume`` as a container; ``kind`` defaults from the volume type."""
    if isinstance(volume, ProbVolume):
        kind, values = kind or "prob", volume.scores
    elif isinstance(volume, LogitVolume):
        kind, values = kind or "logit", volume.values
    elif isinstance(volume, LabelVolume):
        kind, values = kind or "label", volume.labels
    else:
        raise TypeError(f"cannot write {type(volume).__name__}")
    dtype = KIND_DTYPE[kind]
    header = {
        "dims": list(volume.dims),
        "dtype": dtype,
        "voxel_volume_ml": volume.voxel_volume_ml,
        "kind": kind,
    }
    atomic_write_bytes(payload_path(path), np.asarray(values).astype(DTYPES[dtype]).tobytes(order="C"))
    atomic_write_text(path, dump_json(header))


def load_manifest(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: unreadable manifest ({exc})") from exc
    root = path.parent
    subjects, seen = [], set()
    try:
        for s in doc["subjects"]:
            sid = str(s["id"])
            if sid in seen:
                raise ContainerError(f"{path}: duplicate subject id {sid!r}")
            seen.add(sid)
            entry = SubjectEntry(
                sid,
                root / s["prob_path"],
                root / s["label_path"],
                root / s["mask_path"] if s.get("mask_path") else None,
                tuple(s.get("tags", ())),
            )
            for p in (entry.prob_path, entry.label_path, entry.mask_path):
                if p is not None and not p.is_file():
                    raise ContainerError(f"{path}: subject {sid!r} references missing file {p}")
            subjects.append(entry)
        model_id = str(doc.get("model_id", path.stem))
    except (KeyError, TypeError) as exc:
        raise ContainerError(f"{path}: malformed manifest ({exc})") from exc
    return CohortManifest(model_id, tuple(subjects), root)


def write_manifest(path, model_id, subjects):
    """Write a manifest; ``subjects`` are SubjectEntry objects with any paths."""
    path = Path(path)
    root = path.parent.resolve()

    def rel(p):
        return os.path.relpath(Path(p).resolve(), root)

    doc = {"model_id": model_id, "subjects": []}
    for s in subjects:
        item = {"id": s.id, "prob_path": rel(s.prob_path), "label_path": rel(s.label_path)}
        if s.mask_path is not None:
            item["mask_path"] = rel(s.mask_path)
        item["tags"] = list(s.tags)
        doc["subjects"].append(item)
    atomic_write_text(path, dump_json(doc))


def load_subject(entry, allow_logits=False):
    """Read one subject's prediction (mask attached) and labels."""
    try:
        pred = read_volume(entry.prob_path)
        label = read_volume(entry.label_path)
        if not isinstance(label, LabelVolume):
            raise ContainerError(f"{entry.label_path}: expected a label container")
        mask = None
        if entry.mask_path is not None:
            mvol = read_volume(entry.mask_path)
            if not isinstance(mvol, LabelVolume) or mvol.dims != label.dims:
                raise ContainerError(f"{entry.mask_path}: mask must be binary with dims {label.dims}")
            mask = mvol.labels.astype(bool)
        if isinstance(pred, LogitVolume):
            if not allow_logits:
                raise ContainerError(f"{entry.prob_path}: expected probabilities, got logits")
            if pred.dims != label.dims:
                raise ContainerError(f"{entry.prob_path}: dims {pred.dims} != label dims {label.dims}")
            return pred, label, mask
        if not isinstance(pred, ProbVolume):
            raise ContainerError(f"{entry.prob_path}: expected a prob container")
        if pred.dims != label.dims:
            raise ContainerError(f"{entry.prob_path}: dims {pred.dims} != label dims {label.dims}")
        return ProbVolume(pred.scores, pred.dims, pred.voxel_volume_ml, mask), label, mask
    except ContainerError as exc:
        raise ContainerError(f"subject {entry.id!r}: {exc}") from exc
