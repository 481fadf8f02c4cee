"""Write the two canonical datasets shipped under data/.

data/example            regression on the hidden-metric synthetic task
data/example_multitask  three binary tasks with missing labels and edge features
"""
import json
from pathlib import Path

import numpy as np

from egcn.dataset_io import DatasetManifest, sample_to_json, write_dataset
from egcn.graph import Graph
from egcn.synthetic import knn_adjacency, synthesize_hidden_metric_dataset

root = Path(__file__).resolve().parent.parent / "data"

ds = synthesize_hidden_metric_dataset(60, n_nodes_range=(5, 8), seed=0, name="example")
write_dataset(root / "example" / "manifest.json", ds.manifest, ds.graphs)
print("regression example:", len(ds.graphs), "graphs")

# Molecule-like toy graphs: three node types, bond orders as edge weights.
rng = np.random.default_rng(1)
graphs, lines = [], []
for i in range(40):
    n = int(rng.integers(3, 9))
    kind = rng.integers(0, 3, n)
    x = np.eye(3)[kind] + 0.1 * rng.standard_normal((n, 3))
    adj = np.round(knn_adjacency(x, 2) * 2) / 2
    labels = np.array([kind.sum() > n, (adj > 0).sum() > 2 * n, x[:, 2].mean() > 0.3], float)
    mask = rng.random(3) > 0.2
    g = Graph(x, adj, labels, mask, f"mol{i:03d}")
    graphs.append(g)
    obj = sample_to_json(g)
    # edge features are carried by the format and ignored by the model
    obj["edge_features"] = [[1.0 if w == 1.0 else 0.0, 1.0 if w != 1.0 else 0.0]
                            for _, _, w in obj["edges"]]
    lines.append(json.dumps(obj, separators=(",", ":")))

manifest = DatasetManifest("example_multitask", "classification",
                           ["ring_rich", "dense", "polar"], 3, len(graphs), max_degree=10)
out = write_dataset(root / "example_multitask" / "manifest.json", manifest, graphs)
(out.parent / "samples.jsonl").write_text("\n".join(lines) + "\n")
print("multitask example:", len(graphs), "graphs,",
      int(sum((~g.label_mask).sum() for g in graphs)), "missing labels")
