"""Train on the hidden-metric task and watch the loss fall.

The target depends on a distance that weights the first feature heavily,
so a network that can learn its own metric has something to find.
"""
import numpy as np

from egcn.synthetic import synthesize_hidden_metric_dataset
from egcn.training import TrainConfig, train

ds = synthesize_hidden_metric_dataset(300, seed=0)
config = TrainConfig(architecture=[{"type": "sgc_ll", "out": 16}, {"type": "batch_norm"},
                                   {"type": "gather"}, {"type": "dense", "out": 16}],
                     batch_size=32, lr=0.01, max_epochs=25, validation_fraction=0.2)
result = train(ds.graphs, config)

loss = result.curve("train", "loss")
val = result.curve("validation", "rmse")
for epoch in range(0, len(loss), 5):
    print(f"epoch {epoch:3d}  train loss {loss[epoch]:.4f}  validation rmse {val[epoch]:.4f}")

w_d = result.model.params["l0.w_d"]
print("per-feature norms of the learned basis:", np.round(np.linalg.norm(w_d, axis=1), 2))
