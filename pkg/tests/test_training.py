import numpy as np
import pytest

from egcn.errors import ParameterError
from egcn.graph import Graph
from egcn.metric import gaussian_similarity, mahalanobis_distances
from egcn.synthetic import synthesize_hidden_metric_dataset
from egcn.training import (TrainConfig, TrainingDiverged, build_model, cross_validate,
                           kfold_indices, run_ablation, snapshot_similarity, train)

SMALL = [{"type": "sgc_ll", "out": 4}, {"type": "batch_norm"}, {"type": "max_pool"},
         {"type": "sgc_ll", "out": 4}, {"type": "gather"}, {"type": "dense", "out": 4}]


@pytest.fixture(scope="module")
def data():
    return synthesize_hidden_metric_dataset(40, seed=3).graphs


def _cfg(**kw):
    base = dict(batch_size=8, max_epochs=3, architecture=SMALL, lr=0.01)
    base.update(kw)
    return TrainConfig(**base)


def test_training_is_deterministic(data):
    a = train(data, _cfg(seed=5))
    b = train(data, _cfg(seed=5))
    assert a.curves == b.curves
    for name in a.model.params.names():
        assert np.array_equal(a.model.params[name], b.model.params[name])


def test_curves_cover_every_epoch(data):
    result = train(data, _cfg())
    assert result.curve("train", "loss").size == 4
    assert result.curve("validation", "rmse").size == 4
    assert result.iterations == 3 * int(np.ceil(36 / 8))


def test_loss_decreases(data):
    loss = train(data, _cfg(max_epochs=15)).curve("train", "loss")
    assert loss[-1] < loss[0]


def test_frozen_metric_keeps_first_laplacian_constant(data):
    sample = data[0]
    seen = []
    result = train(data, _cfg(freeze_metric=True),
                   on_epoch_end=lambda m, e: seen.append(m.evolved_laplacian(sample, 0)))
    assert len(seen) == 4
    assert all(np.array_equal(seen[0], s) for s in seen[1:])
    init = build_model(_cfg(), sample.feature_dim, 1)
    assert np.array_equal(result.model.params["l0.w_d"], init.params["l0.w_d"])


def test_evolving_metric_moves(data):
    before = train(data, _cfg(max_epochs=1)).model.params["l0.w_d"]
    after = train(data, _cfg(max_epochs=4)).model.params["l0.w_d"]
    assert not np.array_equal(before, after)


def test_masked_labels_do_not_affect_training(rng):
    graphs = synthesize_hidden_metric_dataset(16, seed=1).graphs

    def relabel(noise):
        out = []
        for i, g in enumerate(graphs):
            masked = i % 3 == 0
            label = rng.standard_normal(1) * 100 if (masked and noise) else g.labels
            out.append(Graph(g.node_features, g.adjacency, label, [not masked], g.id))
        return out

    cfg = _cfg(max_epochs=2, validation_fraction=0.0)
    a = train(relabel(False), cfg).model.params
    b = train(relabel(True), cfg).model.params
    for name in a.names():
        assert np.array_equal(a[name], b[name])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises_with_checkpoint(data):
    with pytest.raises(TrainingDiverged) as info:
        train(data, _cfg(lr=1e300, max_epochs=5))
    assert info.value.checkpoint is not None
    assert info.value.epoch >= 0


def test_kfold_partition():
    folds = kfold_indices(23, 5, seed=4)
    joined = np.concatenate(folds)
    assert sorted(joined.tolist()) == list(range(23))
    sizes = [f.size for f in folds]
    assert max(sizes) - min(sizes) <= 1
    assert all(np.array_equal(a, b) for a, b in zip(folds, kfold_indices(23, 5, seed=4)))


def test_kfold_rejects_too_many_folds():
    with pytest.raises(ParameterError):
        kfold_indices(3, 5, seed=0)


def test_mean_predictor_cv_rmse_is_label_std():
    graphs = synthesize_hidden_metric_dataset(500, seed=2).graphs
    labels = np.array([g.labels[0] for g in graphs])
    result = cross_validate(graphs, _cfg(), method="mean")
    assert abs(result.mean - labels.std()) <= 0.05 * labels.std()
    assert len(result.folds) == 5


def test_cv_with_network_reports_mean_and_std(data):
    result = cross_validate(data, _cfg(max_epochs=1, folds=2))
    assert result.metric_name == "rmse"
    assert np.isfinite(result.mean) and result.std >= 0
    assert len(result.fold_metrics) == 2


def test_snapshot_at_init_is_euclidean_kernel(data):
    sample = data[0]
    model = train(data, _cfg(max_epochs=1)).model
    init = build_model(_cfg(), sample.feature_dim, 1)
    snap = snapshot_similarity(init, sample, 0, epoch=0)
    euclid = gaussian_similarity(mahalanobis_distances(sample.node_features,
                                                       np.eye(sample.feature_dim)), 1.0)
    assert np.max(np.abs(snap.matrix - euclid)) <= 1e-2
    later = snapshot_similarity(model, sample, 0, epoch=1)
    assert np.array_equal(later.matrix, later.matrix.T)
    assert np.all(np.diag(later.matrix) == 1.0)
    assert (later.sample_id, later.layer, later.epoch) == (sample.id, 0, 1)


def test_frozen_snapshots_identical(data):
    sample = data[1]
    snaps = {}

    def grab(model, epoch):
        if epoch in (1, 4):
            snaps[epoch] = snapshot_similarity(model, sample, 0, epoch).matrix

    train(data, _cfg(max_epochs=4, freeze_metric=True), on_epoch_end=grab)
    assert np.array_equal(snaps[1], snaps[4])


def test_ablation_rows(data):
    rows = run_ablation(data[:30], data[30:], _cfg(max_epochs=2), seeds=[0, 1])
    assert [r.seed for r in rows] == [0, 1]
    assert all(np.isfinite(r.evolving_val_rmse) and np.isfinite(r.frozen_val_rmse) for r in rows)


def test_config_rejects_unknown_keys():
    with pytest.raises(ParameterError, match="bogus"):
        TrainConfig.from_dict({"bogus": 1})


@pytest.mark.parametrize("field, value", [("batch_size", 0), ("lr", 0.0), ("decay_rate", 1.5),
                                          ("task_type", "ranking"), ("folds", 1)])
def test_config_validation(field, value):
    with pytest.raises(ParameterError):
        TrainConfig(**{field: value})


def test_config_round_trip():
    cfg = _cfg(seed=9)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_synthetic_dataset_is_seeded():
    a = synthesize_hidden_metric_dataset(20, seed=7)
    b = synthesize_hidden_metric_dataset(20, seed=7)
    for ga, gb in zip(a.graphs, b.graphs):
        assert np.array_equal(ga.node_features, gb.node_features)
        assert np.array_equal(ga.adjacency, gb.adjacency)
        assert np.array_equal(ga.labels, gb.labels)
    labels = np.array([g.labels[0] for g in a.graphs])
    assert np.all(np.isfinite(labels)) and labels.std() > 0
