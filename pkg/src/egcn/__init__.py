"""Evolving graph convolutional networks with learned residual Laplacians."""
import os as _os

# EGCN_THREADS caps BLAS worker threads; it has to be in place before numpy loads.
if _os.environ.get("EGCN_THREADS", "").isdigit() and int(_os.environ["EGCN_THREADS"]) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ[_var] = _os.environ["EGCN_THREADS"]

from .autodiff import ParamStore, Tape, Tensor, backward
from .errors import (CapacityError, DataError, EgcnError, NumericalError, ParameterError,
                     StructuralError)
from .graph import Graph, GraphBatch, batch_graphs, degree_vector, normalized_laplacian
from .metric import (MetricParams, evolved_laplacian, gaussian_similarity,
                     mahalanobis_distances, similarity_to_adjacency)
from .model import EGCN
from .spectral import chebyshev_filter, estimate_lambda_max, scale_laplacian, spectral_oracle
from .training import TrainConfig, cross_validate, run_ablation, snapshot_similarity, train

__version__ = "0.1.0"
