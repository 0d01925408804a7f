"""Multi-view Kronecker RLS link prediction with consensus fusion and graph regularization."""

from .dataset import AdjacencyMatrix, load_edge_list, make_folds, mask_fold, stats, synthesize
from .evaluation import cross_validate, evaluate
from .fusion import Hyperparams, fit
from .kernels import KernelConfig, build_catalog

__version__ = "0.1.0"

__all__ = [
    "AdjacencyMatrix",
    "Hyperparams",
    "KernelConfig",
    "build_catalog",
    "cross_validate",
    "evaluate",
    "fit",
    "load_edge_list",
    "make_folds",
    "mask_fold",
    "stats",
    "synthesize",
]
