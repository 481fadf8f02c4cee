import json
import warnings

import numpy as np
import pytest

from egcn.dataset_io import (DatasetManifest, DatasetWarning, format_mean_std, format_number,
                             load_dataset, read_snapshot, validate_dataset, write_curves,
                             write_dataset, write_results, write_snapshot)
from egcn.errors import DataError
from egcn.graph import normalized_laplacian
from egcn.synthetic import synthesize_hidden_metric_dataset
from egcn.training import CurveRecord

MANIFEST = {"name": "tiny", "task_type": "regression", "task_names": ["y"], "feature_dim": 2,
            "num_samples": 1, "max_degree": 10}


def _write(tmp_path, samples, manifest=None):
    manifest = dict(MANIFEST, num_samples=len(samples), **(manifest or {}))
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest))
    (tmp_path / "samples.jsonl").write_text(
        "".join((s if isinstance(s, str) else json.dumps(s)) + "\n" for s in samples))
    return path


def _sample(**kw):
    base = {"id": "a", "n": 2, "node_features": [[0.5, 1.0], [2.0, -1.0]],
            "edges": [[0, 1, 1.0]], "labels": [0.25], "label_mask": [True]}
    base.update(kw)
    return base


def test_minimal_one_node_file(tmp_path):
    path = _write(tmp_path, [{"id": "s", "n": 1, "node_features": [[1.0, 2.0]], "edges": [],
                              "labels": [3.0], "label_mask": [True]}])
    _, graphs = load_dataset(path)
    assert graphs[0].num_nodes == 1
    np.testing.assert_array_equal(normalized_laplacian(graphs[0].adjacency), [[1.0]])


def test_edges_are_mirrored(tmp_path):
    _, graphs = load_dataset(_write(tmp_path, [_sample()]))
    assert graphs[0].adjacency[1, 0] == 1.0 and graphs[0].adjacency[0, 1] == 1.0


def test_flat_features_accepted(tmp_path):
    _, graphs = load_dataset(_write(tmp_path, [_sample(node_features=[0.5, 1.0, 2.0, -1.0])]))
    np.testing.assert_array_equal(graphs[0].node_features, [[0.5, 1.0], [2.0, -1.0]])


def test_duplicate_edges_sum_with_warning(tmp_path):
    path = _write(tmp_path, [_sample(edges=[[0, 1, 1.0], [1, 0, 0.5]])])
    with pytest.warns(DatasetWarning, match="duplicate edge"):
        _, graphs = load_dataset(path)
    assert graphs[0].adjacency[0, 1] == 1.5


def test_edge_features_are_ignored(tmp_path):
    _, graphs = load_dataset(_write(tmp_path, [_sample(edge_features=[[1, 0, 0, 0, 0, 1]])]))
    assert graphs[0].adjacency[0, 1] == 1.0


def test_masked_null_label(tmp_path):
    _, graphs = load_dataset(_write(tmp_path, [_sample(labels=[None], label_mask=[False])]))
    assert graphs[0].label_mask.tolist() == [False]


def test_max_degree_is_a_warning(tmp_path):
    path = _write(tmp_path, [_sample()], {"max_degree": 0})
    with pytest.warns(DatasetWarning, match="max_degree"):
        load_dataset(path)
    report = validate_dataset(path)
    assert report.ok and len(report.warnings) == 1


@pytest.mark.parametrize("sample, message", [
    (_sample(edges=[[1, 1, 1.0]]), "self-loop"),
    (_sample(edges=[[0, 1, -1.0]]), "negative"),
    (_sample(edges=[[0, 5, 1.0]]), "out of range"),
    (_sample(labels=[1.0, 2.0]), "'a'.*labels"),
    (_sample(label_mask=[True, False]), "label_mask"),
    (_sample(node_features=[[1.0, 2.0]]), "shape"),
    (_sample(labels=[None]), "not a number"),
    ("{not json", "malformed"),
])
def test_invalid_lines_report_location(tmp_path, sample, message):
    path = _write(tmp_path, [_sample(id="ok"), sample])
    with pytest.raises(DataError, match=rf"samples\.jsonl:2: .*{message}"):
        load_dataset(path)
    report = validate_dataset(path)
    assert len(report.errors) == 1 and ":2:" in report.errors[0]


def test_classification_labels_checked(tmp_path):
    path = _write(tmp_path, [_sample(labels=[0.5])], {"task_type": "classification"})
    with pytest.raises(DataError, match="0 or 1"):
        load_dataset(path)


def test_count_mismatch(tmp_path):
    path = _write(tmp_path, [_sample()])
    raw = json.loads(path.read_text())
    path.write_text(json.dumps(dict(raw, num_samples=3)))
    with pytest.raises(DataError, match="declares 3"):
        load_dataset(path)


def test_bad_manifest(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps(dict(MANIFEST, feature_dim=0)))
    with pytest.raises(DataError, match="feature_dim"):
        load_dataset(path)
    path.write_text(json.dumps(dict(MANIFEST, colour="red")))
    with pytest.raises(DataError, match="colour"):
        load_dataset(path)


def test_round_trip(tmp_path):
    ds = synthesize_hidden_metric_dataset(12, seed=4)
    path = write_dataset(tmp_path / "d" / "manifest.json", ds.manifest, ds.graphs)
    manifest, graphs = load_dataset(path)
    assert manifest == ds.manifest
    for a, b in zip(ds.graphs, graphs):
        assert a.id == b.id
        assert np.array_equal(a.node_features, b.node_features)
        assert np.array_equal(a.adjacency, b.adjacency)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.label_mask, b.label_mask)


def test_write_dataset_is_byte_stable(tmp_path):
    ds = synthesize_hidden_metric_dataset(6, seed=1)
    write_dataset(tmp_path / "a" / "manifest.json", ds.manifest, ds.graphs)
    write_dataset(tmp_path / "b" / "manifest.json", ds.manifest, ds.graphs)
    for name in ("manifest.json", "samples.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_loading_does_not_touch_files(tmp_path):
    path = _write(tmp_path, [_sample()])
    before = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    load_dataset(path)
    validate_dataset(path)
    assert {p.name: p.read_bytes() for p in tmp_path.iterdir()} == before


def _mutations(rng, line):
    """Byte-level and JSON-level corruptions of one valid samples line."""
    obj = json.loads(line)
    yield line[: rng.integers(1, len(line))]
    pos = int(rng.integers(len(line)))
    yield line[:pos] + chr(int(rng.integers(32, 127))) + line[pos + 1:]
    key = rng.choice(sorted(obj))
    junk = [None, "x", -1, 1e309, [], {}, [[1, 2, 3]], True, 2**70, [None]]
    yield json.dumps({**obj, key: junk[int(rng.integers(len(junk)))]})
    yield json.dumps({k: v for k, v in obj.items() if k != key})


def test_fuzzed_files_fail_cleanly(tmp_path):
    rng = np.random.default_rng(99)
    ds = synthesize_hidden_metric_dataset(3, seed=0)
    base = write_dataset(tmp_path / "base" / "manifest.json", ds.manifest, ds.graphs)
    lines = (base.parent / "samples.jsonl").read_text().splitlines()
    outcomes = {"ok": 0, "error": 0}
    for trial in range(150):
        idx = int(rng.integers(len(lines)))
        for mutated in _mutations(rng, lines[idx]):
            body = lines[:idx] + [mutated] + lines[idx + 1:]
            (base.parent / "samples.jsonl").write_text("\n".join(body) + "\n")
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DatasetWarning)
                try:
                    load_dataset(base)
                    outcomes["ok"] += 1
                except DataError:
                    outcomes["error"] += 1
            assert isinstance(validate_dataset(base).errors, list)
    assert outcomes["error"] > 0


def test_curves_csv(tmp_path):
    path = write_curves([], tmp_path / "empty.csv")
    assert path.read_text() == "epoch,split,metric_name,value\n"
    path = write_curves([CurveRecord(3, "train", "loss", 0.5)], tmp_path / "one.csv")
    assert path.read_text().splitlines() == ["epoch,split,metric_name,value", "3,train,loss,0.5"]


def test_snapshot_csv(tmp_path):
    path = write_snapshot(np.eye(3), {"sample_id": "s1", "layer": 0, "epoch": 5},
                          tmp_path / "snap.csv")
    assert path.read_text().splitlines() == ["1,0,0", "0,1,0", "0,0,1"]
    assert (tmp_path / "snap.csv.meta").read_text().splitlines() == [
        "sample_id,layer,epoch", "s1,0,5"]
    matrix, meta = read_snapshot(path)
    assert np.array_equal(matrix, np.eye(3)) and meta == {"sample_id": "s1", "layer": 0,
                                                         "epoch": 5}


def test_snapshot_round_trip_is_exact(tmp_path, rng):
    m = rng.random((4, 4))
    matrix, _ = read_snapshot(write_snapshot(m, {"sample_id": "x", "layer": 1, "epoch": 0},
                                             tmp_path / "s.csv"))
    assert np.array_equal(matrix, m)


def test_results_csv(tmp_path):
    rows = [{"dataset": "d", "method": "egcn", "task": "average", "metric": "rmse",
             "mean": 0.30607, "std": 5.34e-4}]
    lines = write_results(rows, tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "dataset,method,task,metric,mean,std,summary"
    assert lines[1] == "d,egcn,average,rmse,0.30607,0.000534,0.30607 ± 5.34e-04"


def test_number_formatting():
    assert format_number(2.0) == "2" and format_number(np.int64(7)) == "7"
    assert format_number(0.1) == "0.1" and format_number(float("nan")) == "nan"
    assert format_mean_std(0.30607, 5.34e-4) == "0.30607 ± 5.34e-04"


def test_manifest_requires_tasks():
    with pytest.raises(DataError):
        DatasetManifest("x", "regression", [], 1, 0)
