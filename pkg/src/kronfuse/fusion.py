"""Multi-view Kronecker RLS fusion with multiple graph Laplacian regularization.

The model keeps one Kron-RLS partition per pairwise view, a consensus score
matrix fitted to their weighted sum, simplex view weights, and simplex graph
weights that build the drug and side-effect affinities of a Kronecker
Laplacian smoothing the consensus. Fitting alternates exact block updates:

    consensus -> view weights -> drug graph weights -> side-effect graph
    weights -> each view's dual coefficients (Gauss-Seidel over views)

Every pairwise-space operation runs on N x N, M x M or N x M arrays.

Objective::

    1/2 ||F_hat - sum_v w_v F_v||^2
      + mu * sum_v (w_v/2 ||F - F_v||^2 + lam_v/2 a_v^T K_v a_v)
      + beta/2 ||w||^2 + sigma/2 vec(F_hat)^T (I - A kron B) vec(F_hat)

with ``F_v = K_D^v a_v K_S^v^T`` and ``A``/``B`` the degree-normalized
combinations ``sum_i theta_i^eps K^i`` on the side-effect/drug side.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .kron_ops import (
    consensus_filter,
    eigen_grid,
    filter_solve,
    from_spectral,
    laplacian_quadratic,
    normalized_affinity,
    sym_eig,
    to_spectral,
)
from .matrix_io import write_matrix
from .optim import SimplexQP, solve_simplex_qp

logger = logging.getLogger(__name__)

THETA_FLOOR = 1e-12
TINY_WEIGHT = 1e-6

# Published single-view lambdas for drug kernels paired with the side-effect
# GIP kernel; every other view defaults to 1.
DEFAULT_LAMBDAS = {
    ("gip", "gip"): 2.0**0,
    ("cos", "gip"): 2.0**2,
    ("corr", "gip"): 2.0**3,
    ("nmi", "gip"): 2.0**0,
    ("ntk", "gip"): 2.0**2,
}


class FusionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Hyperparams:
    mu: float = 2.0**-7
    beta: float = 2.0**0
    sigma: float = 2.0**-8
    epsilon: float = 2.0
    lambdas: tuple = None
    max_sweeps: int = 100
    rel_tol: float = 1e-6
    qp_tol: float = 1e-10
    qp_max_iter: int = 10_000

    def __post_init__(self):
        if self.mu <= 0 or self.beta < 0 or self.sigma < 0:
            raise ValueError("need mu > 0, beta >= 0, sigma >= 0")
        if self.epsilon <= 1:
            raise ValueError(f"epsilon must exceed 1, got {self.epsilon}")
        if self.lambdas is not None:
            lams = tuple(float(x) for x in self.lambdas)
            if any(x <= 0 for x in lams):
                raise ValueError("all lambdas must be positive")
            object.__setattr__(self, "lambdas", lams)

    def resolve_lambdas(self, catalog):
        if self.lambdas is None:
            return default_lambdas(catalog)
        if len(self.lambdas) != catalog.n_views:
            raise ValueError(f"{len(self.lambdas)} lambdas given for {catalog.n_views} views")
        return self.lambdas

    def with_lambdas(self, lambdas):
        return replace(self, lambdas=tuple(lambdas))


def default_lambdas(catalog):
    out = []
    for d, s in catalog.views:
        key = (catalog.drug_kernels[d].kind, catalog.side_effect_kernels[s].kind)
        out.append(DEFAULT_LAMBDAS.get(key, 1.0))
    return tuple(out)


@dataclass
class SweepRecord:
    sweep: int
    objective: float
    frozen_objective: float
    start_objective: float
    w: list
    theta_d: list
    theta_s: list


@dataclass
class FusionState:
    """All variables of the fusion objective plus cached factor spectra."""

    drug_kernels: list
    side_effect_kernels: list
    views: list
    lambdas: tuple
    eig_drug: list
    eig_side: list
    consensus: np.ndarray
    dual_spectral: list
    view_partitions: list
    w: np.ndarray
    theta_d: np.ndarray
    theta_s: np.ndarray
    degree_d: np.ndarray = None
    degree_s: np.ndarray = None
    A: np.ndarray = None
    B: np.ndarray = None
    eig_A: object = None
    eig_B: object = None
    trace: list = field(default_factory=list)

    @property
    def n_views(self):
        return len(self.views)

    def view_eigs(self, v):
        d, s = self.views[v]
        return self.eig_drug[d], self.eig_side[s]

    def view_kernels(self, v):
        d, s = self.views[v]
        return self.drug_kernels[d], self.side_effect_kernels[s]

    def view_dual(self, v):
        """Dual coefficients of view ``v`` as an N x M matrix."""
        eD, eS = self.view_eigs(v)
        return from_spectral(eD, eS, self.dual_spectral[v])

    @property
    def view_duals(self):
        return [self.view_dual(v) for v in range(self.n_views)]

    def weighted_partitions(self):
        return sum(wv * P for wv, P in zip(self.w, self.view_partitions))


def _kernel_values(k):
    return np.asarray(getattr(k, "values", k), dtype=np.float64)


def _degree_scaled(K, degree):
    s = 1.0 / np.sqrt(degree)
    return K * s[:, None] * s[None, :]


def combined_affinity(kernels, theta, epsilon):
    """Degree-normalized ``sum_i theta_i^eps K_i``; returns ``(affinity, degree)``."""
    K = sum((t**epsilon) * Ki for t, Ki in zip(theta, kernels))
    return normalized_affinity(K), K.sum(axis=1)


def rebuild_affinities(state, hp):
    state.A, state.degree_s = combined_affinity(state.side_effect_kernels, state.theta_s, hp.epsilon)
    state.B, state.degree_d = combined_affinity(state.drug_kernels, state.theta_d, hp.epsilon)
    state.eig_A = sym_eig(state.A)
    state.eig_B = sym_eig(state.B)
    return state


def _train_array(F):
    return F.as_float() if hasattr(F, "as_float") else np.asarray(F, dtype=np.float64)


def initialize(catalog, F_train, hp):
    """Single-view Kron-RLS partitions, uniform weights, affinities from uniform thetas."""
    F = _train_array(F_train)
    drug = [_kernel_values(k) for k in catalog.drug_kernels]
    side = [_kernel_values(k) for k in catalog.side_effect_kernels]
    if any(K.shape != (F.shape[0],) * 2 for K in drug) or any(K.shape != (F.shape[1],) * 2 for K in side):
        raise FusionError(f"kernel sizes do not match F_train {F.shape}")
    lambdas = hp.resolve_lambdas(catalog)
    eig_drug = [sym_eig(K) for K in drug]
    eig_side = [sym_eig(K) for K in side]
    V = catalog.n_views
    duals, parts = [], []
    for (d, s), lam in zip(catalog.views, lambdas):
        eD, eS = eig_drug[d], eig_side[s]
        prod = eigen_grid(eD, eS)
        dual_hat = to_spectral(eD, eS, F) / (prod + lam)
        duals.append(dual_hat)
        parts.append(from_spectral(eD, eS, prod * dual_hat))
    w = np.full(V, 1.0 / V)
    state = FusionState(
        drug_kernels=drug,
        side_effect_kernels=side,
        views=list(catalog.views),
        lambdas=tuple(lambdas),
        eig_drug=eig_drug,
        eig_side=eig_side,
        consensus=sum(wv * P for wv, P in zip(w, parts)),
        dual_spectral=duals,
        view_partitions=parts,
        w=w,
        theta_d=np.full(len(drug), 1.0 / len(drug)),
        theta_s=np.full(len(side), 1.0 / len(side)),
    )
    return rebuild_affinities(state, hp)


def objective(state, F_train, hp, affinities=None):
    """Value of the fusion objective; ``affinities=(A, B)`` overrides the state's."""
    F = _train_array(F_train)
    A, B = affinities if affinities is not None else (state.A, state.B)
    resid = state.consensus - state.weighted_partitions()
    value = 0.5 * float(np.sum(resid * resid))
    for v in range(state.n_views):
        P = state.view_partitions[v]
        eD, eS = state.view_eigs(v)
        a_hat = state.dual_spectral[v]
        rkhs = float(np.sum(eigen_grid(eD, eS) * a_hat * a_hat))
        fit_err = float(np.sum((F - P) ** 2))
        value += hp.mu * (0.5 * state.w[v] * fit_err + 0.5 * state.lambdas[v] * rkhs)
    value += 0.5 * hp.beta * float(state.w @ state.w)
    if hp.sigma:
        value += 0.5 * hp.sigma * laplacian_quadratic(state.consensus, A, B)
    return value


def update_consensus(state, hp):
    grid = consensus_filter(state.eig_A, state.eig_B, hp.sigma)
    state.consensus = filter_solve(state.eig_B, state.eig_A, grid, state.weighted_partitions())
    return state


def weight_qp(state, F_train, hp):
    """The view-weight subproblem as ``min w^T G w - w^T h`` on the simplex."""
    F = _train_array(F_train)
    P = np.stack([p.ravel() for p in state.view_partitions])
    gram = P @ P.T
    G = 0.5 * gram + 0.5 * hp.beta * np.eye(state.n_views)
    h = P @ state.consensus.ravel() - 0.5 * hp.mu * np.sum((F.ravel()[None, :] - P) ** 2, axis=1)
    return SimplexQP(G, h)


def weight_objective(state, F_train, hp, w):
    """Direct (unexpanded) view-weight subproblem objective at ``w``."""
    F = _train_array(F_train)
    mix = sum(wv * p for wv, p in zip(w, state.view_partitions))
    value = 0.5 * float(np.sum((state.consensus - mix) ** 2))
    for wv, p in zip(w, state.view_partitions):
        value += 0.5 * hp.mu * wv * float(np.sum((F - p) ** 2))
    return value + 0.5 * hp.beta * float(np.dot(w, w))


def update_weights(state, F_train, hp):
    qp = weight_qp(state, F_train, hp)
    state.w = solve_simplex_qp(qp, state.w, tol=hp.qp_tol, max_iter=hp.qp_max_iter)
    small = np.flatnonzero(state.w < TINY_WEIGHT)
    if small.size:
        logger.debug("views with weight below %g: %s", TINY_WEIGHT, small.tolist())
    return state


def _theta_closed_form(traces, epsilon):
    traces = np.asarray(traces, dtype=np.float64)
    if traces.size == 1:
        return np.ones(1)
    if np.all(traces < 0):
        raise FusionError("Laplacian smoothness degenerate: all graph traces are negative")
    clamped = np.maximum(traces, THETA_FLOOR)
    logs = np.log(clamped) / (1.0 - epsilon)
    logs -= logs.max()
    theta = np.exp(logs)
    return theta / theta.sum()


def drug_graph_traces(state):
    """``trace(F^T B_i F A^T)`` per drug kernel, with ``B_i`` scaled by the current drug degrees."""
    FA = state.consensus @ state.A.T
    return np.array([
        float(np.sum(state.consensus * (_degree_scaled(K, state.degree_d) @ FA)))
        for K in state.drug_kernels
    ])


def side_graph_traces(state):
    """``trace(F^T B F A_i^T)`` per side-effect kernel, with ``A_i`` scaled by the current side degrees."""
    BF = state.B @ state.consensus
    return np.array([
        float(np.sum(state.consensus * (BF @ _degree_scaled(K, state.degree_s).T)))
        for K in state.side_effect_kernels
    ])


def update_theta_d(state, hp, rebuild=True):
    state.theta_d = _theta_closed_form(drug_graph_traces(state), hp.epsilon)
    return rebuild_affinities(state, hp) if rebuild else state


def update_theta_s(state, hp, rebuild=True):
    state.theta_s = _theta_closed_form(side_graph_traces(state), hp.epsilon)
    return rebuild_affinities(state, hp) if rebuild else state


def dual_system(state, v, F_train, hp):
    """Shift ``s`` and right-hand side ``R`` with ``(K_v + s I) a_v = vec(R)``.

    Stationarity of the objective in ``a_v`` with everything else fixed reads
    ``(w_v^2 + mu w_v) K_v a_v + mu lam_v a_v = w_v (F_hat - sum_{i!=v} w_i F_i + mu F)``.
    Returns ``None`` for a zero-weight view, whose minimizer is ``a_v = 0``.
    """
    wv = float(state.w[v])
    if wv <= 0.0:
        return None
    F = _train_array(F_train)
    others = state.weighted_partitions() - wv * state.view_partitions[v]
    R = (state.consensus - others + hp.mu * F) / (wv + hp.mu)
    shift = hp.mu * state.lambdas[v] / (wv * (wv + hp.mu))
    return shift, R


def update_view_dual(state, v, F_train, hp):
    eD, eS = state.view_eigs(v)
    system = dual_system(state, v, F_train, hp)
    if system is None:
        state.dual_spectral[v] = np.zeros_like(state.dual_spectral[v])
        state.view_partitions[v] = np.zeros_like(state.view_partitions[v])
        return state
    shift, R = system
    prod = eigen_grid(eD, eS)
    dual_hat = to_spectral(eD, eS, R) / (prod + shift)
    state.dual_spectral[v] = dual_hat
    state.view_partitions[v] = from_spectral(eD, eS, prod * dual_hat)
    return state


def sweep(state, F_train, hp):
    """One pass of block updates; affinities are rebuilt once after both theta updates."""
    update_consensus(state, hp)
    update_weights(state, F_train, hp)
    update_theta_d(state, hp, rebuild=False)
    update_theta_s(state, hp, rebuild=False)
    rebuild_affinities(state, hp)
    for v in range(state.n_views):
        update_view_dual(state, v, F_train, hp)
    return state


def _record(k, state, obj, frozen, start):
    return SweepRecord(k, obj, frozen, start, state.w.tolist(), state.theta_d.tolist(), state.theta_s.tolist())


def fit(catalog, F_train, hp=None):
    """Alternating minimization until the relative objective change drops below ``rel_tol``.

    ``state.trace`` records, per sweep, the objective, the objective with the
    affinities held at their sweep-start values (``frozen_objective``), and the
    sweep-start objective. The frozen value never exceeds the start value.
    """
    hp = hp or Hyperparams()
    state = initialize(catalog, F_train, hp)
    obj = objective(state, F_train, hp)
    state.trace.append(_record(0, state, obj, obj, obj))
    for k in range(1, hp.max_sweeps + 1):
        start, A0, B0 = obj, state.A, state.B
        sweep(state, F_train, hp)
        frozen = objective(state, F_train, hp, affinities=(A0, B0))
        obj = objective(state, F_train, hp)
        if not (math.isfinite(obj) and math.isfinite(frozen)):
            raise FusionError(f"non-finite objective at sweep {k}")
        state.trace.append(_record(k, state, obj, frozen, start))
        if abs(obj - start) / max(1.0, abs(start)) < hp.rel_tol:
            break
    return state


def predict(state):
    return state.consensus.copy()


def write_trace(trace, path):
    """One JSON record per line: sweep, objectives, w, theta_d, theta_s."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in trace:
            fh.write(json.dumps(asdict(rec)) + "\n")


def save_state(state, directory, view_labels=None, fmt="bin"):
    """Write the consensus matrix and the learned weights."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_matrix(directory / f"prediction.{fmt}", state.consensus)
    meta = {
        "model": "fusion",
        "shape": list(state.consensus.shape),
        "lambdas": list(state.lambdas),
        "views": view_labels or [f"{d}:{s}" for d, s in state.views],
        "w": state.w.tolist(),
        "theta_d": state.theta_d.tolist(),
        "theta_s": state.theta_s.tolist(),
        "sweeps": len(state.trace) - 1,
        "format": fmt,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2))
    write_trace(state.trace, directory / "trace.jsonl")
    return directory
