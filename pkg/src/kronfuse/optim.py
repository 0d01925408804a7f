"""Quadratic programs over the probability simplex.

Solves ``min_w w^T G w - w^T h`` subject to ``sum(w) = 1, w >= 0`` by
projected gradient descent with backtracking, warm-started, with a face
polish step: once the support looks settled, the equality-constrained KKT
system on that face is solved exactly and kept if it is feasible and no worse.
"""

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


class SimplexQPError(RuntimeError):
    """Solver failure; ``best`` holds the best feasible iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class SimplexQP:
    G: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        G = np.asarray(self.G, dtype=np.float64)
        h = np.asarray(self.h, dtype=np.float64).ravel()
        if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] != h.shape[0]:
            raise ValueError(f"incompatible shapes G {G.shape}, h {h.shape}")
        scale = max(1.0, np.abs(G).max(initial=0.0))
        if np.abs(G - G.T).max(initial=0.0) > 1e-10 * scale:
            raise ValueError("G must be symmetric")
        object.__setattr__(self, "G", 0.5 * (G + G.T))
        object.__setattr__(self, "h", h)

    @property
    def dim(self):
        return self.h.shape[0]

    def objective(self, w):
        return float(w @ self.G @ w - w @ self.h)

    def gradient(self, w):
        return 2.0 * (self.G @ w) - self.h


def project_simplex(v):
    """Euclidean projection onto ``{w : w >= 0, sum(w) = 1}``."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def kkt_residual(qp, w, support_tol=1e-12):
    """Scaled KKT violation of ``w`` for the simplex QP.

    On the support every gradient entry must equal the shared multiplier;
    off the support it must not fall below it. Scaled by the gradient size.
    """
    g = qp.gradient(w)
    scale = max(1.0, np.abs(g).max())
    on = w > support_tol
    if not on.any():
        return np.inf
    nu = g[on].mean()
    res_on = np.abs(g[on] - nu).max()
    res_off = np.maximum(nu - g[~on], 0.0).max(initial=0.0)
    return max(res_on, res_off) / scale


def _polish(qp, support):
    """Minimizer on the affine hull of a face, or None if singular."""
    idx = np.flatnonzero(support)
    k = idx.size
    M = np.zeros((k + 1, k + 1))
    M[:k, :k] = 2.0 * qp.G[np.ix_(idx, idx)]
    M[:k, k] = -1.0
    M[k, :k] = 1.0
    rhs = np.concatenate([qp.h[idx], [1.0]])
    try:
        sol = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        return None
    w = np.zeros(qp.dim)
    w[idx] = sol[:k]
    return w


def _finalize(w):
    w = np.maximum(w, 0.0)
    return w / w.sum()


def solve_simplex_qp(qp, w0=None, tol=1e-10, max_iter=10_000):
    """Minimize ``w^T G w - w^T h`` over the simplex.

    Parameters
    ----------
    qp : SimplexQP
    w0 : array, optional
        Warm start; projected onto the simplex. Defaults to uniform weights.
    tol : float
        Bound on the scaled KKT residual (see :func:`kkt_residual`).
    max_iter : int

    Returns
    -------
    numpy.ndarray
        Nonnegative weights summing to one.
    """
    V = qp.dim
    if V == 1:
        return np.ones(1)
    if np.linalg.eigvalsh(qp.G)[0] <= 0:
        logger.warning("simplex QP is not strictly convex; adding 1e-12 ridge")
        qp = SimplexQP(qp.G + 1e-12 * np.eye(V), qp.h)

    w = project_simplex(np.full(V, 1.0 / V) if w0 is None else np.asarray(w0, dtype=np.float64))
    f = qp.objective(w)
    lip = 2.0 * np.linalg.eigvalsh(qp.G)[-1]
    step = 1.0 / lip
    prev_support = None

    for it in range(max_iter):
        if kkt_residual(qp, w) <= tol:
            return _finalize(w)

        g = qp.gradient(w)
        t = step * 4.0
        while True:
            cand = project_simplex(w - t * g)
            d = cand - w
            f_cand = qp.objective(cand)
            if f_cand <= f + g @ d + (0.5 / t) * (d @ d) + 1e-15 * abs(f) or t <= step:
                break
            t *= 0.5
        if f_cand <= f:
            w, f = cand, f_cand

        support = w > 0
        if prev_support is not None and np.array_equal(support, prev_support):
            polished = _polish(qp, support)
            if polished is not None and polished.min() >= 0:
                f_pol = qp.objective(polished)
                # the face minimizer is exact; allow for rounding when the objective is large
                if f_pol <= f + 4 * np.finfo(float).eps * max(1.0, abs(f)):
                    w, f = polished, f_pol
        prev_support = support

    if kkt_residual(qp, w) <= tol:
        return _finalize(w)
    raise SimplexQPError(
        f"simplex QP did not reach KKT tolerance {tol} in {max_iter} iterations "
        f"(residual {kkt_residual(qp, w):.3e})",
        best=_finalize(w),
    )
