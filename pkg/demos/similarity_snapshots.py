"""The learned similarity of one molecule drifts as training proceeds."""
import numpy as np

from egcn.synthetic import synthesize_hidden_metric_dataset
from egcn.training import TrainConfig, snapshot_similarity, train

ds = synthesize_hidden_metric_dataset(200, seed=2)
sample = ds.graphs[0]
config = TrainConfig(architecture=[{"type": "sgc_ll", "out": 16}, {"type": "batch_norm"},
                                   {"type": "gather"}, {"type": "dense", "out": 16}],
                     batch_size=32, lr=0.01, validation_fraction=0.0)

previous = None
for epochs in (1, 5, 10, 20):
    model = train(ds.graphs, config.replace(max_epochs=epochs)).model
    snap = snapshot_similarity(model, sample, 0, epochs)
    change = "" if previous is None else f"  change {np.abs(snap.matrix - previous).max():.3f}"
    print(f"epoch {epochs:2d}: mean off-diagonal similarity "
          f"{snap.matrix[~np.eye(len(snap.matrix), dtype=bool)].mean():.3f}{change}")
    previous = snap.matrix
