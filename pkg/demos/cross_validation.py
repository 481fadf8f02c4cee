"""Cross-validated multitask classification with missing labels."""
from pathlib import Path

from egcn.dataset_io import load_dataset
from egcn.training import TrainConfig, cross_validate

root = Path(__file__).resolve().parent.parent
manifest, graphs = load_dataset(root / "data" / "example_multitask" / "manifest.json")
config = TrainConfig(task_type="classification", batch_size=16, max_epochs=10, folds=4)

for method in ("mean", "egcn"):
    result = cross_validate(graphs, config, method=method)
    print(f"{method:5s} mean AUC {result.mean:.3f} ± {result.std:.3f}")
    for name, m, s in zip(manifest.task_names, result.per_task_mean, result.per_task_std):
        print(f"      {name:10s} {m:.3f} ± {s:.3f}")
