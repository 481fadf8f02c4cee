"""Graph dataset files and CSV result writers.

A dataset is a JSON manifest next to a JSON Lines samples file::

    manifest.json
        {"name": "toy", "task_type": "regression", "task_names": ["y"],
         "feature_dim": 2, "num_samples": 1, "max_degree": 10,
         "samples_file": "samples.jsonl"}
    samples.jsonl (one graph per line)
        {"id": "g0", "n": 2, "node_features": [[0.1, 0.2], [0.3, 0.4]],
         "edges": [[0, 1, 1.0]], "labels": [1.5], "label_mask": [true]}

Edges are ``[i, j, weight]`` and are mirrored on load. An optional
``edge_features`` list (one vector per edge) is accepted and ignored.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, EgcnError
from .graph import Graph

TASK_TYPES = ("regression", "classification")
CURVE_HEADER = ("epoch", "split", "metric_name", "value")
RESULTS_HEADER = ("dataset", "method", "task", "metric", "mean", "std", "summary")
ABLATION_HEADER = ("seed", "evolving_val_rmse", "frozen_val_rmse", "evolving_final_loss",
                   "frozen_final_loss", "evolving_epochs_to_frozen_loss", "max_epochs",
                   "evolving_wins")
SNAPSHOT_META_HEADER = ("sample_id", "layer", "epoch")


class DatasetWarning(UserWarning):
    pass


@dataclass
class DatasetManifest:
    name: str
    task_type: str
    task_names: list
    feature_dim: int
    num_samples: int
    max_degree: int | None = None
    samples_file: str = "samples.jsonl"

    def __post_init__(self):
        if self.task_type not in TASK_TYPES:
            raise DataError(f"manifest: task_type must be one of {TASK_TYPES}, "
                            f"got {self.task_type!r}")
        if not isinstance(self.task_names, list) or not self.task_names:
            raise DataError("manifest: task_names must be a non-empty list")
        if not isinstance(self.feature_dim, int) or self.feature_dim < 1:
            raise DataError(f"manifest: feature_dim must be a positive integer, "
                            f"got {self.feature_dim!r}")
        if not isinstance(self.num_samples, int) or self.num_samples < 0:
            raise DataError(f"manifest: bad num_samples {self.num_samples!r}")

    @property
    def num_tasks(self) -> int:
        return len(self.task_names)


@dataclass
class ValidationReport:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    num_samples: int = 0

    @property
    def ok(self) -> bool:
        return not self.errors


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot read manifest ({exc})") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise DataError(f"{path}: manifest must be a JSON object")
    allowed = {f for f in DatasetManifest.__dataclass_fields__}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise DataError(f"{path}: unknown manifest key(s) {unknown}")
    try:
        return DatasetManifest(**raw)
    except TypeError as exc:
        raise DataError(f"{path}: {exc}") from None


def _int_index(v, n, what):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v):
        raise DataError(f"{what} must be an integer, got {v!r}")
    v = int(v)
    if not 0 <= v < n:
        raise DataError(f"{what} {v} out of range for {n} nodes")
    return v


def parse_sample(obj, manifest: DatasetManifest, notes: list | None = None) -> Graph:
    """Build a validated :class:`Graph` from one decoded samples-file line."""
    if not isinstance(obj, dict):
        raise DataError("sample must be a JSON object")
    sid = obj.get("id")
    if not isinstance(sid, str) or not sid:
        raise DataError("sample needs a non-empty string 'id'")
    n = obj.get("n")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise DataError(f"sample {sid!r}: 'n' must be a positive integer")
    d = manifest.feature_dim
    feats = obj.get("node_features")
    try:
        x = np.array(feats, dtype=np.float64)
    except (TypeError, ValueError):
        raise DataError(f"sample {sid!r}: node_features must be numeric") from None
    if x.ndim == 1 and x.size == n * d:
        x = x.reshape(n, d)
    if x.shape != (n, d):
        raise DataError(f"sample {sid!r}: node_features shape {x.shape} != ({n}, {d})")
    if not np.all(np.isfinite(x)):
        raise DataError(f"sample {sid!r}: non-finite node feature")
    edges = obj.get("edges", [])
    if not isinstance(edges, list):
        raise DataError(f"sample {sid!r}: 'edges' must be a list")
    edge_feats = obj.get("edge_features")
    if edge_feats is not None and (not isinstance(edge_feats, list)
                                   or len(edge_feats) != len(edges)):
        raise DataError(f"sample {sid!r}: edge_features must have one entry per edge")
    adj = np.zeros((n, n))
    seen = set()
    for k, e in enumerate(edges):
        if not isinstance(e, list) or len(e) != 3:
            raise DataError(f"sample {sid!r}: edge {k} must be [i, j, weight]")
        i = _int_index(e[0], n, f"sample {sid!r}: edge {k} endpoint")
        j = _int_index(e[1], n, f"sample {sid!r}: edge {k} endpoint")
        w = e[2]
        if isinstance(w, bool) or not isinstance(w, (int, float)) or not math.isfinite(w):
            raise DataError(f"sample {sid!r}: edge {k} weight must be a finite number")
        if w < 0:
            raise DataError(f"sample {sid!r}: edge {k} has negative weight {w}")
        if i == j:
            raise DataError(f"sample {sid!r}: self-loop on node {i} (edge {k})")
        key = (min(i, j), max(i, j))
        if key in seen:
            msg = f"sample {sid!r}: duplicate edge {key}, weights summed"
            warnings.warn(msg, DatasetWarning, stacklevel=2)
            if notes is not None:
                notes.append(msg)
        seen.add(key)
        adj[i, j] += w
        adj[j, i] += w
    t = manifest.num_tasks
    labels = obj.get("labels")
    mask = obj.get("label_mask")
    if not isinstance(labels, list) or len(labels) != t:
        raise DataError(f"sample {sid!r}: expected {t} labels")
    if mask is None:
        mask = [v is not None for v in labels]
    if not isinstance(mask, list) or len(mask) != t:
        raise DataError(f"sample {sid!r}: label_mask length must equal {t}")
    if not all(isinstance(m, (bool, int)) and m in (0, 1) for m in mask):
        raise DataError(f"sample {sid!r}: label_mask entries must be booleans")
    mask_arr = np.array(mask, dtype=bool)
    vals = []
    for v, m in zip(labels, mask_arr):
        if v is None or isinstance(v, bool) or not isinstance(v, (int, float)):
            if m:
                raise DataError(f"sample {sid!r}: unmasked label {v!r} is not a number")
            v = 0.0
        vals.append(float(v))
    y = np.array(vals)
    if not np.all(np.isfinite(y[mask_arr])):
        raise DataError(f"sample {sid!r}: non-finite label")
    if manifest.task_type == "classification" and np.any(~np.isin(y[mask_arr], (0.0, 1.0))):
        raise DataError(f"sample {sid!r}: classification labels must be 0 or 1")
    if manifest.max_degree is not None:
        degree = int((adj > 0).sum(axis=1).max())
        if degree > manifest.max_degree:
            msg = (f"sample {sid!r}: node degree {degree} exceeds max_degree "
                   f"{manifest.max_degree}")
            warnings.warn(msg, DatasetWarning, stacklevel=2)
            if notes is not None:
                notes.append(msg)
    try:
        return Graph(x, adj, y, mask_arr, sid)
    except EgcnError as exc:
        raise DataError(str(exc)) from None


def _samples_path(manifest_path: Path, manifest: DatasetManifest) -> Path:
    return manifest_path.parent / manifest.samples_file


def _iter_lines(path: Path):
    try:
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                yield lineno, line
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot read samples ({exc})") from None


def _parse_line(path, lineno, line, manifest, notes=None):
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
    try:
        return parse_sample(obj, manifest, notes)
    except DataError as exc:
        raise DataError(f"{path}:{lineno}: {exc}") from None
    except (TypeError, ValueError, OverflowError) as exc:
        raise DataError(f"{path}:{lineno}: invalid sample ({exc})") from None


def load_dataset(path) -> tuple[DatasetManifest, list[Graph]]:
    """Read and validate a dataset; samples keep file order."""
    path = Path(path)
    manifest = read_manifest(path)
    samples_path = _samples_path(path, manifest)
    graphs, ids = [], set()
    for lineno, line in _iter_lines(samples_path):
        if not line.strip():
            continue
        g = _parse_line(samples_path, lineno, line, manifest)
        if g.id in ids:
            raise DataError(f"{samples_path}:{lineno}: duplicate sample id {g.id!r}")
        ids.add(g.id)
        graphs.append(g)
    if len(graphs) != manifest.num_samples:
        raise DataError(f"{path}: manifest declares {manifest.num_samples} samples, "
                        f"file has {len(graphs)}")
    return manifest, graphs


def validate_dataset(path) -> ValidationReport:
    """Check every line and collect all problems instead of stopping at the first."""
    path = Path(path)
    report = ValidationReport()
    try:
        manifest = read_manifest(path)
    except DataError as exc:
        report.errors.append(str(exc))
        return report
    samples_path = _samples_path(path, manifest)
    ids = set()
    try:
        for lineno, line in _iter_lines(samples_path):
            if not line.strip():
                continue
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", DatasetWarning)
                    notes: list = []
                    g = _parse_line(samples_path, lineno, line, manifest, notes)
                report.warnings.extend(f"{samples_path}:{lineno}: {m}" for m in notes)
                if g.id in ids:
                    report.errors.append(f"{samples_path}:{lineno}: duplicate sample id {g.id!r}")
                ids.add(g.id)
                report.num_samples += 1
            except DataError as exc:
                report.errors.append(str(exc))
    except DataError as exc:
        report.errors.append(str(exc))
        return report
    if report.num_samples != manifest.num_samples and not report.errors:
        report.errors.append(f"{path}: manifest declares {manifest.num_samples} samples, "
                             f"file has {report.num_samples}")
    return report


def _json_number(v: float):
    v = float(v)
    return int(v) if v.is_integer() and abs(v) < 2 ** 53 else v


def sample_to_json(g: Graph) -> dict:
    n = g.num_nodes
    iu, ju = np.triu_indices(n, k=1)
    keep = g.adjacency[iu, ju] != 0
    edges = [[int(i), int(j), _json_number(g.adjacency[i, j])]
             for i, j in zip(iu[keep], ju[keep])]
    obj = {"id": g.id, "n": n,
           "node_features": [[_json_number(v) for v in row] for row in g.node_features],
           "edges": edges}
    if g.labels is not None:
        obj["labels"] = [_json_number(v) if m else None
                         for v, m in zip(g.labels, g.label_mask)]
        obj["label_mask"] = [bool(m) for m in g.label_mask]
    return obj


def write_dataset(path, manifest: DatasetManifest, graphs: Sequence[Graph]) -> Path:
    """Write manifest + samples; output bytes depend only on the inputs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = DatasetManifest(**{**asdict(manifest), "num_samples": len(graphs)})
    path.write_text(json.dumps(asdict(manifest), indent=2) + "\n")
    with _samples_path(path, manifest).open("w", encoding="utf-8", newline="\n") as fh:
        for g in graphs:
            fh.write(json.dumps(sample_to_json(g), separators=(",", ":")) + "\n")
    return path


# ---------------------------------------------------------------------------
# CSV writers

def format_number(v) -> str:
    """Shortest round-trip text; integral floats print without a decimal point."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isfinite(v) and v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _write_rows(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in rows:
            w.writerow([format_number(v) if isinstance(v, (int, float, np.number))
                        and not isinstance(v, bool) else v for v in row])
    return path


def write_curves(records: Iterable, path) -> Path:
    """CSV with columns epoch, split, metric_name, value."""
    return _write_rows(path, CURVE_HEADER,
                       ((r.epoch, r.split, r.metric_name, r.value) for r in records))


def snapshot_meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta")


def write_snapshot(matrix, meta: dict, path) -> Path:
    """Square numeric CSV (no header) plus a ``<path>.meta`` sidecar."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DataError(f"snapshot must be square, got shape {m.shape}")
    _write_rows(path, None, m.tolist())
    _write_rows(snapshot_meta_path(path), SNAPSHOT_META_HEADER,
                [[meta["sample_id"], meta["layer"], meta["epoch"]]])
    return Path(path)


def read_snapshot(path) -> tuple[np.ndarray, dict]:
    m = np.loadtxt(path, delimiter=",", ndmin=2)
    with snapshot_meta_path(path).open() as fh:
        row = list(csv.DictReader(fh))[0]
    return m, {"sample_id": row["sample_id"], "layer": int(row["layer"]),
               "epoch": int(row["epoch"])}


def format_mean_std(mean: float, std: float) -> str:
    """Table style ``0.30607 ± 5.34e-04``."""
    return f"{mean:.5f} ± {std:.2e}"


def write_results(rows: Iterable[dict], path) -> Path:
    """CSV with one row per (dataset, method, task) plus task-averaged rows.

    Each row dict carries ``dataset``, ``method``, ``task``, ``metric``,
    ``mean`` and ``std``.
    """
    return _write_rows(path, RESULTS_HEADER,
                       ((r["dataset"], r["method"], r["task"], r["metric"], r["mean"], r["std"],
                         format_mean_std(r["mean"], r["std"])) for r in rows))


def cv_result_rows(result, dataset: str, method: str, task_names: Sequence[str]) -> list[dict]:
    rows = [{"dataset": dataset, "method": method, "task": name, "metric": result.metric_name,
             "mean": float(m), "std": float(s)}
            for name, m, s in zip(task_names, result.per_task_mean, result.per_task_std)]
    rows.append({"dataset": dataset, "method": method, "task": "average",
                 "metric": result.metric_name, "mean": result.mean, "std": result.std})
    return rows


def write_ablation(rows: Iterable, path) -> Path:
    """One line per seed pairing an evolving run with its frozen-metric twin.

    An empty ``evolving_epochs_to_frozen_loss`` means the evolving run never
    reached the frozen run's final training loss.
    """
    return _write_rows(path, ABLATION_HEADER, (
        (r.seed, r.evolving_val_rmse, r.frozen_val_rmse, r.evolving_final_loss,
         r.frozen_final_loss,
         "" if r.evolving_epochs_to_frozen_loss is None else r.evolving_epochs_to_frozen_loss,
         r.max_epochs, str(r.evolving_wins).lower()) for r in rows))
