"""Similarity kernels over interaction profiles and the pairwise view catalog.

Drug kernels are built from rows of the (masked) training matrix, side-effect
kernels from its columns. Degenerate profiles (all-zero rows for COS/NTK,
zero variance for Corr, zero entropy for NMI) get zero off-diagonal
similarity and a unit diagonal.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import _accel

KINDS = ("gip", "cos", "corr", "nmi", "ntk")
SPACES = ("drug", "side_effect")
PSD_TOL = 1e-10


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelMatrix:
    values: np.ndarray
    kind: str
    space: str

    @property
    def size(self):
        return self.values.shape[0]

    @property
    def label(self):
        return f"{self.kind}_{'d' if self.space == 'drug' else 's'}"

    def digest(self):
        return hashlib.sha256(np.ascontiguousarray(self.values).tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class KernelConfig:
    """Which kernel kinds to build per space, plus kernel parameters."""

    drug_kinds: tuple = KINDS
    side_effect_kinds: tuple = KINDS
    gamma: float = 1.0
    ntk_depth: int = 2

    def __post_init__(self):
        for kinds in (self.drug_kinds, self.side_effect_kinds):
            unknown = set(kinds) - set(KINDS)
            if unknown:
                raise KernelError(f"unknown kernel kinds {sorted(unknown)}")
            if len(set(kinds)) != len(kinds):
                raise KernelError(f"duplicate kernel kinds in {kinds}")


@dataclass(frozen=True)
class ViewCatalog:
    drug_kernels: list
    side_effect_kernels: list
    views: list = field(default_factory=list)

    @property
    def n_views(self):
        return len(self.views)

    def view_labels(self):
        return [
            f"{self.drug_kernels[d].label}:{self.side_effect_kernels[s].label}"
            for d, s in self.views
        ]


def _as_profiles(profiles):
    X = np.asarray(profiles, dtype=np.float64)
    if X.ndim != 2:
        raise KernelError(f"profiles must be a 2-D array, got shape {X.shape}")
    return X


def _isolate(K, degenerate):
    """Zero similarities of degenerate rows and force a unit diagonal."""
    if degenerate.any():
        K[degenerate, :] = 0.0
        K[:, degenerate] = 0.0
    np.fill_diagonal(K, 1.0)
    return K


def gip_kernel(profiles, gamma=1.0):
    X = _as_profiles(profiles)
    if gamma <= 0:
        raise KernelError(f"gamma must be positive, got {gamma}")
    sq = np.einsum("ij,ij->i", X, X)
    dist = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (X @ X.T), 0.0)
    K = np.exp(-gamma * dist)
    np.fill_diagonal(K, 1.0)
    return 0.5 * (K + K.T)


def cos_kernel(profiles):
    X = _as_profiles(profiles)
    norms = np.linalg.norm(X, axis=1)
    zero = norms == 0
    Xn = X / np.where(zero, 1.0, norms)[:, None]
    K = np.clip(Xn @ Xn.T, -1.0, 1.0)
    return _isolate(0.5 * (K + K.T), zero)


def corr_kernel(profiles):
    X = _as_profiles(profiles)
    Xc = X - X.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(Xc, axis=1)
    flat = norms <= 1e-12 * max(1.0, np.sqrt(X.shape[1]))
    Xn = Xc / np.where(flat, 1.0, norms)[:, None]
    K = np.clip(Xn @ Xn.T, -1.0, 1.0)
    return _isolate(0.5 * (K + K.T), flat)


def nmi_kernel(profiles):
    X = _as_profiles(profiles)
    if not np.isin(X, (0.0, 1.0)).all():
        raise KernelError("NMI kernel requires binary profiles")
    ones = X.sum(axis=1)
    length = X.shape[1]
    K = _accel.nmi_from_counts(X @ X.T, ones, length)
    constant = (ones == 0) | (ones == length)
    K = np.clip(K, 0.0, 1.0)
    return _isolate(0.5 * (K + K.T), constant)


def ntk_kernel(profiles, depth=2):
    """Infinite-width ReLU NTK of a ``depth``-hidden-layer MLP on unit-normalized profiles."""
    if depth < 1:
        raise KernelError(f"depth must be >= 1, got {depth}")
    X = _as_profiles(profiles)
    norms = np.linalg.norm(X, axis=1)
    zero = norms == 0
    Xn = X / np.where(zero, 1.0, norms)[:, None]
    K = _accel.ntk_from_cosine(Xn @ Xn.T, depth)
    return _isolate(0.5 * (K + K.T), zero)


def psd_repair(K, tol=PSD_TOL):
    """Clip negative eigenvalues to zero; PSD inputs are returned unchanged."""
    K = np.asarray(K, dtype=np.float64)
    if np.abs(K - K.T).max(initial=0.0) > 1e-10 * max(1.0, np.abs(K).max(initial=0.0)):
        raise KernelError("psd_repair needs a symmetric matrix")
    values, vectors = np.linalg.eigh(K)
    if values[0] >= -tol:
        return K
    repaired = (vectors * np.maximum(values, 0.0)) @ vectors.T
    return 0.5 * (repaired + repaired.T)


_BUILDERS = {
    "gip": lambda X, cfg: gip_kernel(X, cfg.gamma),
    "cos": lambda X, cfg: cos_kernel(X),
    "corr": lambda X, cfg: corr_kernel(X),
    "nmi": lambda X, cfg: nmi_kernel(X),
    "ntk": lambda X, cfg: ntk_kernel(X, cfg.ntk_depth),
}


def build_kernel(profiles, kind, space, config=None):
    config = config or KernelConfig()
    if kind not in _BUILDERS:
        raise KernelError(f"unknown kernel kind {kind!r}")
    if space not in SPACES:
        raise KernelError(f"unknown space {space!r}")
    return KernelMatrix(psd_repair(_BUILDERS[kind](profiles, config)), kind, space)


def build_catalog(train, config=None, cache=None):
    """Kernels from the training matrix and the full drug x side-effect view grid.

    Views are enumerated with the drug kernel index varying slowest. ``cache``
    is an optional :class:`kronfuse.matrix_io.KernelCache`.
    """
    config = config or KernelConfig()
    if not config.drug_kinds or not config.side_effect_kinds:
        raise KernelError("kernel selection is empty")
    F = train.as_float() if hasattr(train, "as_float") else np.asarray(train, dtype=np.float64)

    def get(kind, space, profiles):
        if cache is not None:
            hit = cache.load(F, kind, space, config)
            if hit is not None:
                return KernelMatrix(hit, kind, space)
        km = build_kernel(profiles, kind, space, config)
        if cache is not None:
            cache.store(F, kind, space, config, km.values)
        return km

    drug = [get(k, "drug", F) for k in config.drug_kinds]
    side = [get(k, "side_effect", F.T) for k in config.side_effect_kinds]
    views = [(d, s) for d in range(len(drug)) for s in range(len(side))]
    return ViewCatalog(drug, side, views)
