"""Ranking and thresholded metrics, threshold search, masked k-fold CV."""

import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import rankdata

from . import fusion, kron_rls
from .dataset import FoldAssignment, make_folds, mask_fold
from .kernels import build_catalog
from .kron_ops import sym_eig
from .matrix_io import KernelCache

logger = logging.getLogger(__name__)

METRICS = ("aupr", "auc", "recall", "precision", "f_score")


class MetricError(ValueError):
    pass


def _pairs(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise MetricError(f"scores and labels differ in length: {s.size} vs {y.size}")
    if s.size == 0:
        raise MetricError("empty score set")
    if not np.isin(y, (0, 1)).all():
        raise MetricError("labels must be 0 or 1")
    return s, y.astype(bool)


def auc(scores, labels):
    """Mann-Whitney AUC with ties counted as one half."""
    s, y = _pairs(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC undefined: need at least one positive and one negative")
    ranks = rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _descending_groups(s, y):
    """Unique scores (descending) with cumulative TP and FP counts at each."""
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    last = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), s.size - 1]
    tp = np.cumsum(y_sorted)[last]
    fp = (last + 1) - tp
    return s_sorted[last], tp, fp


def pr_curve(scores, labels):
    """Stepwise precision-recall points, one per unique score threshold.

    Returns ``(recall, precision, thresholds)`` with thresholds descending.
    """
    s, y = _pairs(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise MetricError("AUPR undefined: no positives")
    thr, tp, fp = _descending_groups(s, y)
    return tp / n_pos, tp / (tp + fp), thr


def aupr(scores, labels):
    """Non-interpolated average precision: sum of precision times recall increments."""
    recall, precision, _ = pr_curve(scores, labels)
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def _f_counts(tp, fp, fn):
    """Harmonic mean of precision and recall as one rounded division.

    Equal F values then compare equal, so threshold ties break deterministically.
    """
    tp = np.asarray(tp, dtype=np.float64)
    denom = 2.0 * tp + fp + fn
    f = np.where(tp > 0, 2.0 * tp / np.where(denom > 0, denom, 1.0), 0.0)
    return float(f) if f.ndim == 0 else f


def prf_at(scores, labels, threshold):
    """Recall, precision and F-score of ``score >= threshold``."""
    s, y = _pairs(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    recall = tp / (tp + fn) if tp + fn else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    return recall, precision, _f_counts(tp, fp, fn)


def threshold_candidates(scores):
    """Midpoints between consecutive unique scores plus +/- infinity, descending."""
    u = np.unique(np.asarray(scores, dtype=np.float64))[::-1]
    mids = 0.5 * (u[:-1] + u[1:])
    return np.r_[np.inf, mids, -np.inf]


def best_threshold(scores, labels):
    """Threshold maximizing the F-score; ties go to the larger threshold."""
    s, y = _pairs(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise MetricError("no positives: F-score is identically zero")
    thr, tp, fp = _descending_groups(s, y)
    # candidate k (k >= 1) predicts the top-k unique score groups
    tp = np.r_[0, tp]
    fp = np.r_[0, fp]
    f = _f_counts(tp, fp, n_pos - tp)
    k = int(np.argmax(f))
    candidates = np.r_[np.inf, 0.5 * (thr[:-1] + thr[1:]), -np.inf]
    return float(candidates[k]), float(f[k])


@dataclass
class MetricsReport:
    aupr: float
    auc: float
    recall: float
    precision: float
    f_score: float
    threshold: float
    n_pos: int
    n_neg: int
    repeat: int = 0
    fold: int = 0

    def lines(self):
        return [f"{k}: {v}" for k, v in asdict(self).items()]


def evaluate(scores, labels, repeat=0, fold=0):
    s, y = _pairs(scores, labels)
    thr, _ = best_threshold(s, y)
    recall, precision, f = prf_at(s, y, thr)
    return MetricsReport(
        aupr=aupr(s, y),
        auc=auc(s, y),
        recall=recall,
        precision=precision,
        f_score=f,
        threshold=thr,
        n_pos=int(y.sum()),
        n_neg=int((~y).sum()),
        repeat=repeat,
        fold=fold,
    )


def aggregate(reports):
    """Mean and sample standard deviation of each metric over the reports."""
    out = {}
    for name in METRICS:
        vals = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        out[name] = {
            "mean": float(vals.mean()),
            "std": float(vals.std(ddof=1)) if vals.size > 1 else float("nan"),
        }
    return out


@dataclass
class FoldResult:
    report: MetricsReport
    pr_curve: tuple
    trace: list = field(default_factory=list)


@dataclass
class CVResult:
    folds: list
    summary: dict

    @property
    def reports(self):
        return [f.report for f in self.folds]


def fit_predict(catalog, train, hp):
    """Scores for every pair; a single view runs plain Kron-RLS."""
    if catalog.n_views == 1:
        K_D = catalog.drug_kernels[0]
        K_S = catalog.side_effect_kernels[0]
        lam = hp.resolve_lambdas(catalog)[0]
        return kron_rls.fit(K_D, K_S, train, lam).prediction, []
    state = fusion.fit(catalog, train, hp)
    return fusion.predict(state), state.trace


def run_fold(F, assignment, n_folds, test_fold, kernel_config, hp, repeat=0, cache_dir=None):
    folds = FoldAssignment(n_folds, assignment)
    train, test_mask = mask_fold(F, folds, test_fold)
    cache = KernelCache(cache_dir, fold=f"{repeat}-{test_fold}") if cache_dir else None
    catalog = build_catalog(train, kernel_config, cache=cache)
    scores, trace = fit_predict(catalog, train, hp)
    s = scores[test_mask]
    y = F.entries[test_mask]
    report = evaluate(s, y, repeat=repeat, fold=test_fold)
    recall, precision, _ = pr_curve(s, y)
    logger.info("repeat %d fold %d: AUPR %.4f AUC %.4f", repeat, test_fold, report.aupr, report.auc)
    return FoldResult(report, (recall, precision), trace)


def cross_validate(F, kernel_config, hp, n_folds=5, n_repeats=1, seed=0, jobs=1, cache_dir=None):
    """Repeated masked k-fold CV; repeat ``r`` draws folds with seed ``seed + r``.

    The F-score threshold is chosen on each held-out fold's own scores.
    """
    tasks = []
    for r in range(n_repeats):
        folds = make_folds(F, n_folds, seed + r)
        for t in range(n_folds):
            tasks.append((F, folds.assignment, n_folds, t, kernel_config, hp, r, cache_dir))
    if jobs > 1 and len(tasks) > 1:
        # spawn: forking after numba's OpenMP runtime has started is unsafe
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            results = list(pool.map(run_fold, *zip(*tasks)))
    else:
        results = [run_fold(*task) for task in tasks]
    return CVResult(results, aggregate([res.report for res in results]))


# ---------------------------------------------------------------------------
# hyperparameter search
# ---------------------------------------------------------------------------


def power_grid(lo, hi):
    """``2**lo, 2**(lo+1), ..., 2**hi``."""
    return [2.0**k for k in range(lo, hi + 1)]


def _fold_catalogs(F, kernel_config, n_folds, seed):
    folds = make_folds(F, n_folds, seed)
    out = []
    for t in range(n_folds):
        train, test_mask = mask_fold(F, folds, t)
        out.append((train, test_mask, build_catalog(train, kernel_config)))
    return out


def select_lambdas(F, kernel_config, grid, n_folds=5, seed=0, fold_data=None):
    """Per-view lambda by mean single-view Kron-RLS AUPR over masked folds.

    Returns ``(best, table)`` where ``table[v][g]`` is the mean AUPR of view
    ``v`` at ``grid[g]``; ties go to the smaller lambda.
    """
    if not grid:
        raise ValueError("lambda grid is empty")
    fold_data = fold_data or _fold_catalogs(F, kernel_config, n_folds, seed)
    n_views = fold_data[0][2].n_views
    table = np.zeros((n_views, len(grid)))
    for train, test_mask, catalog in fold_data:
        eig_d = [sym_eig(k.values) for k in catalog.drug_kernels]
        eig_s = [sym_eig(k.values) for k in catalog.side_effect_kernels]
        y = F.entries[test_mask]
        for v, (d, s) in enumerate(catalog.views):
            for g, lam in enumerate(grid):
                pred = kron_rls.fit_eig(eig_d[d], eig_s[s], train, lam).prediction
                table[v, g] += aupr(pred[test_mask], y)
    table /= len(fold_data)
    best = tuple(float(grid[int(np.argmax(row))]) for row in table)
    return best, table


def grid_search(F, kernel_config, base_hp, mus, betas, sigmas, n_folds=5, seed=0, fold_data=None):
    """Exhaustive (mu, beta, sigma) search by mean fusion AUPR; lambdas taken from ``base_hp``.

    Returns the best ``Hyperparams`` and a leaderboard sorted by AUPR.
    """
    if not (mus and betas and sigmas):
        raise ValueError("hyperparameter grid is empty")
    fold_data = fold_data or _fold_catalogs(F, kernel_config, n_folds, seed)
    board = []
    for mu in mus:
        for beta in betas:
            for sigma in sigmas:
                hp = replace(base_hp, mu=mu, beta=beta, sigma=sigma)
                reports = []
                for t, (train, test_mask, catalog) in enumerate(fold_data):
                    scores, _ = fit_predict(catalog, train, hp)
                    reports.append(evaluate(scores[test_mask], F.entries[test_mask], fold=t))
                agg = aggregate(reports)
                board.append({
                    "mu": mu,
                    "beta": beta,
                    "sigma": sigma,
                    "aupr_mean": agg["aupr"]["mean"],
                    "aupr_std": agg["aupr"]["std"],
                    "auc_mean": agg["auc"]["mean"],
                })
    board.sort(key=lambda row: -row["aupr_mean"])
    top = board[0]
    return replace(base_hp, mu=top["mu"], beta=top["beta"], sigma=top["sigma"]), board
