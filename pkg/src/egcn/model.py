"""Evolving graph convolutional network assembled from a layer list."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ParamStore, Tape
from .errors import ParameterError, StructuralError
from .graph import Graph, GraphBatch, batch_graphs
from .layers import (ACTIVATIONS, HeadParams, SgcLayerParams, batch_norm_forward,
                     dense_forward, graph_gather, graph_max_pool, multitask_head_forward,
                     sgc_ll_forward)
from .metric import MetricParams, init_metric_weights

NODE_LAYERS = {"sgc_ll", "batch_norm", "max_pool"}
GRAPH_LAYERS = {"dense"}

DEFAULT_ARCHITECTURE = (
    {"type": "sgc_ll", "out": 32},
    {"type": "batch_norm"},
    {"type": "max_pool"},
    {"type": "sgc_ll", "out": 32},
    {"type": "batch_norm"},
    {"type": "gather"},
    {"type": "dense", "out": 64},
)


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class LayerTrace:
    """Intermediates of one forward pass (tape tensors).

    ``evolved`` and ``similarity`` hold one entry per SGC-LL layer; ``outputs``
    holds every layer's output in architecture order.
    """

    evolved: list = field(default_factory=list)
    similarity: list = field(default_factory=list)
    outputs: list = field(default_factory=list)


class EGCN:
    """Stack of SGC-LL / batch-norm / max-pool layers, a gather, dense layers
    and a per-task head.

    ``architecture`` is a list of dicts with a ``type`` key. SGC-LL entries take
    ``out`` and optionally ``K``, ``activation``, ``metric_dim``,
    ``mix_sigma``, ``gaussian_sigma``, ``threshold`` and ``lambda_max``; the
    constructor keyword arguments provide their defaults. Exactly one
    ``gather`` separates node-level from graph-level layers.
    """

    def __init__(self, in_dim: int, num_tasks: int, architecture=DEFAULT_ARCHITECTURE,
                 K: int = 3, mix_sigma: float = 1.0, gaussian_sigma: float = 1.0,
                 threshold: float = 0.0, lambda_max="auto", seed: int = 0):
        if num_tasks < 1:
            raise StructuralError("model needs at least one task")
        self.in_dim = in_dim
        self.num_tasks = num_tasks
        self.layers = self._resolve(architecture, K, mix_sigma, gaussian_sigma, threshold,
                                    lambda_max)
        self.params = ParamStore()
        self._init_params(np.random.default_rng(seed))

    @staticmethod
    def _resolve(architecture, K, mix_sigma, gaussian_sigma, threshold, lambda_max):
        layers = []
        gathered = False
        for i, spec in enumerate(architecture):
            spec = dict(spec)
            kind = spec.get("type")
            if kind == "gather":
                if gathered:
                    raise ParameterError("architecture has more than one gather layer")
                gathered = True
            elif kind in NODE_LAYERS:
                if gathered:
                    raise ParameterError(f"layer {i} ({kind}) is node-level but follows gather")
            elif kind in GRAPH_LAYERS:
                if not gathered:
                    raise ParameterError(f"layer {i} ({kind}) is graph-level but precedes gather")
            else:
                raise ParameterError(f"layer {i}: unknown type {kind!r}")
            if kind == "sgc_ll":
                spec.setdefault("K", K)
                spec.setdefault("activation", "relu")
                spec.setdefault("mix_sigma", mix_sigma)
                spec.setdefault("gaussian_sigma", gaussian_sigma)
                spec.setdefault("threshold", threshold)
                spec.setdefault("lambda_max", lambda_max)
                if int(spec["K"]) < 1:
                    raise ParameterError(f"layer {i}: K must be >= 1")
            if kind == "dense":
                spec.setdefault("activation", "relu")
            if kind in ("sgc_ll", "dense"):
                if int(spec.get("out", 0)) < 1:
                    raise ParameterError(f"layer {i}: 'out' must be a positive integer")
                if spec["activation"] not in ACTIVATIONS:
                    raise ParameterError(f"layer {i}: unknown activation {spec['activation']!r}")
            layers.append(spec)
        if not gathered:
            raise ParameterError("architecture needs a gather layer")
        return layers

    def _init_params(self, rng):
        p = self.params
        dim = self.in_dim
        for i, spec in enumerate(self.layers):
            kind = spec["type"]
            if kind == "sgc_ll":
                out, k = int(spec["out"]), int(spec["K"])
                m = int(spec.get("metric_dim", dim))
                theta = np.zeros(k)
                theta[0] = 1.0
                theta = theta + 0.1 * rng.standard_normal(k)
                p.add(f"l{i}.theta", theta)
                p.add(f"l{i}.w_k", _glorot(rng, dim, out))
                p.add(f"l{i}.b_k", np.zeros(out))
                p.add(f"l{i}.w_d", init_metric_weights(dim, m, rng))
                dim = out
            elif kind == "batch_norm":
                p.add(f"l{i}.bn_scale", np.ones(dim))
                p.add(f"l{i}.bn_shift", np.zeros(dim))
                p.buffers[f"l{i}.running_mean"] = np.zeros(dim)
                p.buffers[f"l{i}.running_var"] = np.ones(dim)
            elif kind == "dense":
                out = int(spec["out"])
                p.add(f"l{i}.w", _glorot(rng, dim, out))
                p.add(f"l{i}.b", np.zeros(out))
                dim = out
        for t in range(self.num_tasks):
            p.add(f"head.t{t}.w", _glorot(rng, dim, 1))
            p.add(f"head.t{t}.b", np.zeros(1))

    @property
    def sgc_layer_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.layers) if s["type"] == "sgc_ll"]

    def metric_param_names(self) -> list[str]:
        return [n for n in self.params.names() if n.endswith(".w_d")]

    def sgc_params(self, i: int, get=None) -> SgcLayerParams:
        get = get or self.params.__getitem__
        spec = self.layers[i]
        metric = MetricParams(get(f"l{i}.w_d"), spec["gaussian_sigma"], spec["mix_sigma"],
                              spec["threshold"])
        return SgcLayerParams(get(f"l{i}.theta"), get(f"l{i}.w_k"), get(f"l{i}.b_k"), metric,
                              spec["activation"], spec["lambda_max"])

    def head_params(self, get=None) -> HeadParams:
        get = get or self.params.__getitem__
        return HeadParams([get(f"head.t{t}.w") for t in range(self.num_tasks)],
                          [get(f"head.t{t}.b") for t in range(self.num_tasks)])

    def forward(self, batch: GraphBatch, tape: Tape | None = None, mode: str = "eval"):
        """Return ``(logits, trace)``; logits are (B, T)."""
        if tape is None:
            tape = Tape(enabled=False)
        if batch.features.shape[-1] != self.in_dim:
            raise StructuralError(f"batch feature dim {batch.features.shape[-1]} != model "
                                  f"input dim {self.in_dim}")
        cache = {}

        def get(name):
            if name not in cache:
                cache[name] = tape.param(self.params, name)
            return cache[name]

        trace = LayerTrace()
        intrinsic = batch.intrinsic_laplacians()
        h = tape.constant(batch.features)
        for i, spec in enumerate(self.layers):
            kind = spec["type"]
            if kind == "sgc_ll":
                h, evolved, sim = sgc_ll_forward(tape, h, batch, intrinsic,
                                                 self.sgc_params(i, get), name=f"l{i}")
                trace.evolved.append(evolved)
                trace.similarity.append(sim)
            elif kind == "batch_norm":
                buffers = {"running_mean": self.params.buffers[f"l{i}.running_mean"],
                           "running_var": self.params.buffers[f"l{i}.running_var"]}
                h = batch_norm_forward(h, batch, get(f"l{i}.bn_scale"), get(f"l{i}.bn_shift"),
                                       buffers, mode)
                if mode == "train":
                    self.params.buffers[f"l{i}.running_mean"] = buffers["running_mean"]
                    self.params.buffers[f"l{i}.running_var"] = buffers["running_var"]
            elif kind == "max_pool":
                h = graph_max_pool(h, batch)
            elif kind == "gather":
                h = graph_gather(h, batch)
            elif kind == "dense":
                h = dense_forward(h, get(f"l{i}.w"), get(f"l{i}.b"), spec["activation"])
            trace.outputs.append(h)
        return multitask_head_forward(h, self.head_params(get)), trace

    def predict(self, graphs, batch_size: int = 256) -> np.ndarray:
        """Eval-mode logits (or regression outputs) for a list of graphs."""
        graphs = list(graphs)
        out = [self.forward(batch_graphs(graphs[s:s + batch_size]))[0].data
               for s in range(0, len(graphs), batch_size)]
        return np.concatenate(out, axis=0)

    def similarity(self, graph: Graph, layer: int = 0) -> np.ndarray:
        """Learned similarity S of the ``layer``-th SGC-LL layer for one graph."""
        _, trace = self.forward(batch_graphs([graph]))
        if not 0 <= layer < len(trace.similarity):
            raise ParameterError(f"model has {len(trace.similarity)} SGC-LL layers, "
                                 f"asked for {layer}")
        n = graph.num_nodes
        return trace.similarity[layer].data[0, :n, :n]

    def evolved_laplacian(self, graph: Graph, layer: int = 0) -> np.ndarray:
        _, trace = self.forward(batch_graphs([graph]))
        n = graph.num_nodes
        return trace.evolved[layer].data[0, :n, :n]

    def copy(self) -> "EGCN":
        new = copy.copy(self)
        new.layers = [dict(s) for s in self.layers]
        new.params = self.params.copy()
        return new
