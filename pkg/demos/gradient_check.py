"""Reverse-mode gradients of a whole model against central differences."""
import numpy as np

from egcn import autodiff as ad
from egcn.graph import batch_graphs
from egcn.losses import weighted_l2_loss
from egcn.model import EGCN
from egcn.synthetic import synthesize_hidden_metric_dataset

ds = synthesize_hidden_metric_dataset(3, n_nodes_range=(4, 6), seed=5)
batch = batch_graphs(ds.graphs)
model = EGCN(4, 1, [{"type": "sgc_ll", "out": 5}, {"type": "batch_norm"},
                    {"type": "max_pool"}, {"type": "gather"}, {"type": "dense", "out": 4}],
             mix_sigma=0.5, seed=1)


def loss_of(tape=None):
    pred, _ = model.forward(batch, tape=tape)
    return weighted_l2_loss(pred, batch.labels, batch.label_masks)


tape = ad.Tape()
model.params.zero_grad()
ad.backward(tape, loss_of(tape), model.params)

for name in model.params.names():
    base = model.params[name].copy()

    def f(v):
        model.params[name] = v
        return float(loss_of().data)

    fd = ad.finite_difference(f, base)
    model.params[name] = base
    err = np.linalg.norm(model.params.grads[name] - fd) / max(np.linalg.norm(fd), 1e-6)
    print(f"{name:14s} relative error {err:.1e}")
