"""Single-view Kronecker regularized least squares.

Fits ``a = (K_S kron K_D + lam I)^{-1} vec(F)`` and predicts ``K a`` through
factor eigendecompositions; cost is O(N^3 + M^3) instead of O(N^3 M^3).
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kron_ops import EigenSystem, eigen_grid, filter_solve, from_spectral, kronrls_filter, sym_eig, to_spectral
from .matrix_io import write_matrix


class KronRlsError(ValueError):
    pass


@dataclass(frozen=True)
class KronRlsModel:
    eig_D: EigenSystem
    eig_S: EigenSystem
    lam: float
    dual: np.ndarray
    prediction: np.ndarray


def _values(K):
    return np.asarray(getattr(K, "values", K), dtype=np.float64)


def _train_array(F):
    return F.as_float() if hasattr(F, "as_float") else np.asarray(F, dtype=np.float64)


def fit_eig(eig_D, eig_S, F_train, lam):
    """Fit from precomputed factor eigensystems; lets callers sweep ``lam`` cheaply."""
    if lam <= 0:
        raise KronRlsError(f"lambda must be positive, got {lam}")
    F = _train_array(F_train)
    if F.shape != (eig_D.size, eig_S.size):
        raise KronRlsError(f"kernel sizes {(eig_D.size, eig_S.size)} do not match F_train {F.shape}")
    coeffs = to_spectral(eig_D, eig_S, F)
    prod = eigen_grid(eig_D, eig_S)
    dual_hat = coeffs / (prod + lam)
    dual = from_spectral(eig_D, eig_S, dual_hat)
    prediction = from_spectral(eig_D, eig_S, prod * dual_hat)
    return KronRlsModel(eig_D, eig_S, float(lam), dual, prediction)


def fit(K_D, K_S, F_train, lam):
    K_D, K_S = _values(K_D), _values(K_S)
    F = _train_array(F_train)
    if K_D.shape != (F.shape[0],) * 2 or K_S.shape != (F.shape[1],) * 2:
        raise KronRlsError(f"kernel shapes {K_D.shape}, {K_S.shape} do not match F_train {F.shape}")
    return fit_eig(sym_eig(K_D), sym_eig(K_S), F, lam)


def predict(model):
    return model.prediction


def recompute_prediction(model, F_train):
    """Closed-form prediction via the shrinkage grid (used to cross-check ``fit``)."""
    grid = kronrls_filter(model.eig_D, model.eig_S, model.lam)
    return filter_solve(model.eig_D, model.eig_S, grid, _train_array(F_train))


def save(model, directory, kernel_hashes=(), fmt="bin"):
    """Write ``dual``, ``prediction`` and a ``meta.json`` with lambda and kernel hashes."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_matrix(directory / f"dual.{fmt}", model.dual)
    write_matrix(directory / f"prediction.{fmt}", model.prediction)
    meta = {
        "model": "kron_rls",
        "lambda": model.lam,
        "shape": list(model.dual.shape),
        "kernel_hashes": list(kernel_hashes),
        "format": fmt,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2))
    return directory
