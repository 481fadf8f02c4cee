"""Command-line entry point: ``egcn <verb> [options]``.

Exit codes: 0 success, 1 usage or parameter error, 2 data error, 3 numerical
failure. Every run writes ``run_manifest.json`` with the effective config into
``--out-dir``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset_io import (cv_result_rows, load_dataset, validate_dataset, write_ablation,
                         write_curves, write_dataset, write_results, write_snapshot)
from .errors import DataError, NumericalError, ParameterError
from .synthetic import synthesize_hidden_metric_dataset
from .training import (TrainConfig, TrainingDiverged, cross_validate, run_ablation,
                       snapshot_similarity, split_validation, train)

log = logging.getLogger("egcn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(config: dict, assignment: str) -> None:
    """Apply one ``dotted.key=value`` override in place.

    The value is parsed as JSON when possible (so ``true``, ``3`` and
    ``[1, 2]`` work) and kept as a string otherwise. Integer path segments
    index into lists, e.g. ``architecture.0.out=16``.
    """
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ParameterError(f"override {assignment!r} is not of the form key=value")
    parts = key.split(".")
    if parts[0] not in config:
        raise ParameterError(f"unknown config key {parts[0]!r} in override {assignment!r}")
    target = config
    for part in parts[:-1]:
        target = _step(target, part, assignment)
    last = parts[-1]
    if isinstance(target, list):
        index = _list_index(target, last, assignment)
        target[index] = _parse_value(raw)
    elif isinstance(target, dict):
        target[last] = _parse_value(raw)
    else:
        raise ParameterError(f"override {assignment!r}: cannot set a field on a scalar")


def _list_index(seq, part, assignment):
    if not part.isdigit() or int(part) >= len(seq):
        raise ParameterError(f"override {assignment!r}: bad list index {part!r}")
    return int(part)


def _step(target, part, assignment):
    if isinstance(target, list):
        return target[_list_index(target, part, assignment)]
    if isinstance(target, dict) and part in target:
        return target[part]
    raise ParameterError(f"override {assignment!r}: no such key {part!r}")


def effective_config(config_path, overrides) -> TrainConfig:
    """Defaults, then the JSON config file, then ``--set`` overrides."""
    merged = TrainConfig().to_dict()
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except OSError as exc:
            raise ParameterError(f"{config_path}: cannot read config ({exc})") from None
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{config_path}: invalid JSON at line {exc.lineno}: "
                                 f"{exc.msg}") from None
        if not isinstance(loaded, dict):
            raise ParameterError(f"{config_path}: config must be a JSON object")
        unknown = sorted(set(loaded) - set(merged))
        if unknown:
            raise ParameterError(f"{config_path}: unknown config key(s): {', '.join(unknown)}")
        merged.update(loaded)
    for assignment in overrides or ():
        apply_override(merged, assignment)
    try:
        return TrainConfig.from_dict(merged)
    except TypeError as exc:
        raise ParameterError(f"invalid config: {exc}") from None


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _run_manifest(args, out_dir: Path, config: TrainConfig | None, extra=None) -> None:
    manifest = {
        "egcn_version": __version__,
        "verb": args.verb,
        "argv": args.argv,
        "threads": os.environ.get("EGCN_THREADS", "default"),
        "config": None if config is None else config.to_dict(),
    }
    manifest.update(extra or {})
    _write_json(out_dir / "run_manifest.json", manifest)


def _save_params(model, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **{n: model.params[n] for n in model.params.names()})


def _load(path):
    manifest, graphs = load_dataset(path)
    if not graphs:
        raise DataError(f"{path}: dataset has no samples")
    return manifest, graphs


def _check_task_type(manifest, config: TrainConfig, data_path):
    if manifest.task_type != config.task_type:
        raise ParameterError(f"config task_type {config.task_type!r} does not match dataset "
                             f"{data_path} ({manifest.task_type!r}); set task_type")


def cmd_train(args) -> int:
    config = effective_config(args.config, args.set)
    manifest, graphs = _load(args.data)
    _check_task_type(manifest, config, args.data)
    out = Path(args.out_dir)
    try:
        result = train(graphs, config)
    except TrainingDiverged as exc:
        path = out / f"checkpoint_epoch{exc.epoch}.npz"
        _save_params(exc.checkpoint, path)
        _run_manifest(args, out, config, {"data": str(args.data), "checkpoint": path.name})
        raise NumericalError(f"{exc} (saved to {path})") from exc
    write_curves(result.curves, out / "curves.csv")
    _save_params(result.model, out / "params.npz")
    final = {f"{r.split}_{r.metric_name}": r.value for r in result.curves
             if r.epoch == config.max_epochs}
    _write_json(out / "final_metrics.json", final)
    _run_manifest(args, out, config, {"data": str(args.data)})
    for key, value in sorted(final.items()):
        print(f"{key} {value:.6g}")
    return EXIT_OK


def cmd_cv(args) -> int:
    config = effective_config(args.config, args.set)
    manifest, graphs = _load(args.data)
    _check_task_type(manifest, config, args.data)
    out = Path(args.out_dir)
    result = cross_validate(graphs, config, method=args.method)
    rows = cv_result_rows(result, manifest.name, args.method, manifest.task_names)
    write_results(rows, out / "results.csv")
    _run_manifest(args, out, config, {"data": str(args.data), "method": args.method})
    print(f"{manifest.name} {args.method} {result.metric_name} "
          f"{result.mean:.5f} ± {result.std:.2e} over {config.folds} folds")
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = effective_config(args.config, args.set)
    manifest, graphs = _load(args.data)
    if manifest.task_type != "regression":
        raise ParameterError("ablate compares validation RMSE and needs a regression dataset")
    train_set, validation = split_validation(graphs, config.validation_fraction, config.seed)
    if not validation:
        raise ParameterError("ablate needs a validation split; raise validation_fraction")
    if args.seeds < 1:
        raise ParameterError("--seeds must be positive")
    seeds = [config.seed + s for s in range(args.seeds)]
    out = Path(args.out_dir)
    rows = run_ablation(train_set, validation, config, seeds)
    write_ablation(rows, out / "ablation.csv")
    _run_manifest(args, out, config, {"data": str(args.data), "seeds": seeds})
    wins = sum(r.evolving_wins for r in rows)
    fast = sum(r.speed_ratio <= 0.6 for r in rows)
    print(f"evolving beats frozen on validation RMSE in {wins} of {len(rows)} seeds")
    print(f"evolving reaches frozen final loss within 60% of epochs in {fast} of {len(rows)}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    config = effective_config(args.config, args.set)
    manifest, graphs = _load(args.data)
    _check_task_type(manifest, config, args.data)
    by_id = {g.id: g for g in graphs}
    if args.sample not in by_id:
        raise ParameterError(f"--sample {args.sample!r} is not in {args.data}")
    sample = by_id[args.sample]
    try:
        epochs = sorted({int(e) for e in args.epochs.split(",")})
    except ValueError:
        raise ParameterError(f"--epochs must be comma-separated integers, got "
                             f"{args.epochs!r}") from None
    if epochs and (epochs[0] < 0 or epochs[-1] > config.max_epochs):
        raise ParameterError(f"--epochs must lie in [0, max_epochs={config.max_epochs}]")
    out = Path(args.out_dir)
    written = []

    def snap(model, epoch):
        if epoch in epochs:
            s = snapshot_similarity(model, sample, args.layer, epoch)
            path = out / f"similarity_{sample.id}_layer{args.layer}_epoch{epoch}.csv"
            write_snapshot(s.matrix, {"sample_id": s.sample_id, "layer": s.layer,
                                      "epoch": s.epoch}, path)
            written.append(path.name)

    result = train(graphs, config, on_epoch_end=snap)
    write_curves(result.curves, out / "curves.csv")
    _run_manifest(args, out, config, {"data": str(args.data), "sample": sample.id,
                                      "layer": args.layer, "epochs": epochs})
    for name in written:
        print(name)
    return EXIT_OK


def cmd_validate(args) -> int:
    report = validate_dataset(args.data)
    for msg in report.errors:
        print(f"error: {msg}")
    for msg in report.warnings:
        print(f"warning: {msg}")
    print(f"{report.num_samples} samples, {len(report.errors)} errors, "
          f"{len(report.warnings)} warnings")
    return EXIT_OK if report.ok else EXIT_DATA


def cmd_synth(args) -> int:
    try:
        lo, hi = (int(v) for v in args.nodes.split(","))
    except ValueError:
        raise ParameterError(f"--nodes must be 'min,max', got {args.nodes!r}") from None
    ds = synthesize_hidden_metric_dataset(args.samples, (lo, hi), args.dim, args.seed,
                                          name=args.name)
    out = Path(args.out_dir)
    path = write_dataset(out / "manifest.json", ds.manifest, ds.graphs)
    _write_json(out / "hidden_metric.json", {"w_star": ds.w_star.tolist(),
                                              "theta_star": ds.theta_star.tolist(),
                                              "readout": ds.readout.tolist()})
    _run_manifest(args, out, None, {"samples": args.samples, "nodes": [lo, hi],
                                    "dim": args.dim, "seed": args.seed})
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="egcn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"egcn {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(p, data=True, config=True):
        if data:
            p.add_argument("--data", required=True, help="dataset manifest JSON")
        if config:
            p.add_argument("--config", help="JSON file with TrainConfig fields")
            p.add_argument("--set", action="append", metavar="KEY=VALUE",
                           help="override a config field; dotted keys reach nested entries")
        p.add_argument("--out-dir", default=".", help="directory for all outputs")

    p = sub.add_parser("train", help="fit a model and write per-epoch curves")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="k-fold cross-validation, results as mean ± std")
    common(p)
    p.add_argument("--method", choices=("egcn", "mean"), default="egcn")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("ablate", help="paired evolving vs frozen-metric runs")
    common(p)
    p.add_argument("--seeds", type=int, default=5, help="number of paired runs")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("inspect-laplacian", help="similarity snapshots of one sample")
    common(p)
    p.add_argument("--sample", required=True, help="sample id")
    p.add_argument("--layer", type=int, default=0, help="SGC-LL layer index")
    p.add_argument("--epochs", default="5,10,15,20", help="comma-separated epochs")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("validate-data", help="lint a dataset")
    p.add_argument("data", help="dataset manifest JSON")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth-data", help="write a hidden-metric synthetic dataset")
    common(p, data=False, config=False)
    p.add_argument("--samples", type=int, default=600)
    p.add_argument("--nodes", default="6,12", help="min,max nodes per graph")
    p.add_argument("--dim", type=int, default=4, help="node feature dimension")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="hidden_metric")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"{exc}\n{parser.format_usage().rstrip()}", file=sys.stderr)
        return EXIT_USAGE
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"egcn {args.verb}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"egcn {args.verb}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"egcn {args.verb}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
