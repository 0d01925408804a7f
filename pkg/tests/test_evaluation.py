import numpy as np
import pytest

from kronfuse import evaluation as ev
from kronfuse.dataset import synthesize
from kronfuse.fusion import Hyperparams
from kronfuse.kernels import KernelConfig


def brute_auc(s, y):
    pos, neg = s[y == 1], s[y == 0]
    diff = pos[:, None] - neg[None, :]
    return (np.sum(diff > 0) + 0.5 * np.sum(diff == 0)) / (pos.size * neg.size)


def brute_aupr(s, y):
    # walk every distinct threshold from the top, summing precision times recall gained
    total, prev_recall = 0.0, 0.0
    for t in sorted(set(s.tolist()), reverse=True):
        pred = s >= t
        tp = np.sum(pred & (y == 1))
        recall = tp / np.sum(y == 1)
        precision = tp / np.sum(pred)
        total += (recall - prev_recall) * precision
        prev_recall = recall
    return total


def random_scored(rng, ties):
    n = int(rng.integers(2, 60))
    y = (rng.random(n) < rng.uniform(0.1, 0.6)).astype(int)
    y[0], y[1] = 1, 0
    s = rng.integers(0, 6, n).astype(float) if ties else rng.standard_normal(n)
    return s, y


def test_auc_examples():
    assert ev.auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert ev.auc([0.1, 0.2, 0.9], [1, 1, 0]) == 0.0
    with pytest.raises(ev.MetricError, match="AUC undefined"):
        ev.auc([0.1, 0.2], [1, 1])


def test_auc_pair_counting_oracle(rng):
    for k in range(200):
        s, y = random_scored(rng, ties=k % 2 == 0)
        assert ev.auc(s, y) == brute_auc(s, y)


def test_aupr_examples():
    assert ev.aupr([0.9, 0.8, 0.1, 0.0], [1, 1, 0, 0]) == 1.0
    assert ev.aupr([0.5] * 5, [1, 0, 0, 1, 0]) == pytest.approx(0.4, abs=1e-15)
    with pytest.raises(ev.MetricError):
        ev.aupr([0.5, 0.2], [0, 0])


def test_aupr_threshold_enumeration_oracle(rng):
    for k in range(200):
        s, y = random_scored(rng, ties=k % 2 == 0)
        assert abs(ev.aupr(s, y) - brute_aupr(s, y)) <= 1e-12


def test_monotone_transform_invariance(rng):
    for _ in range(30):
        s, y = random_scored(rng, ties=False)
        for f in (np.exp, lambda x: 3 * x - 7):
            assert ev.auc(f(s), y) == pytest.approx(ev.auc(s, y), abs=1e-15)
            assert ev.aupr(f(s), y) == pytest.approx(ev.aupr(s, y), abs=1e-15)


def test_flipped_labels_complement_auc(rng):
    for _ in range(30):
        s, y = random_scored(rng, ties=False)
        assert ev.auc(s, 1 - y) == pytest.approx(1 - ev.auc(s, y), abs=1e-15)


def test_prf_at_examples():
    assert ev.prf_at([0.9, 0.8, 0.2], [1, 1, 0], 0.5) == (1.0, 1.0, 1.0)
    assert ev.prf_at([0.9, 0.8, 0.2, 0.1], [1, 0, 1, 0], -1.0)[:2] == (1.0, 0.5)
    assert ev.prf_at([0.9, 0.8, 0.2], [1, 1, 0], 2.0) == (0.0, 0.0, 0.0)


def test_best_threshold_examples():
    assert ev.best_threshold([0.9, 0.8, 0.2], [1, 1, 0]) == (0.5, 1.0)
    thr, f = ev.best_threshold([0.9, 0.5, 0.4, 0.1], [1, 0, 0, 0])
    assert thr == pytest.approx(0.7) and f == 1.0
    with pytest.raises(ev.MetricError):
        ev.best_threshold([0.3, 0.1], [0, 0])


def test_best_threshold_exhaustive_scan(rng):
    for k in range(100):
        s, y = random_scored(rng, ties=k % 2 == 0)
        thr, f = ev.best_threshold(s, y)
        cands = ev.threshold_candidates(s)
        scan = [ev.prf_at(s, y, c)[2] for c in cands]
        assert f == pytest.approx(max(scan), abs=1e-15)
        assert ev.prf_at(s, y, thr)[2] == pytest.approx(f, abs=1e-15)
        # ties toward the larger threshold: the first maximizer in descending order
        first = cands[int(np.argmax(np.isclose(scan, max(scan), rtol=0, atol=1e-15)))]
        assert thr == first


def test_inverted_scores_threshold():
    s = np.arange(10, dtype=float)
    y = (s < 3).astype(int)
    thr, f = ev.best_threshold(s, y)
    # predicting everything positive is best: F = 2 * 0.3 / 1.3
    assert thr == -np.inf and f == pytest.approx(0.6 / 1.3)


def test_report_f_score_invariant(rng):
    s, y = random_scored(rng, ties=False)
    r = ev.evaluate(s, y)
    denom = r.precision + r.recall
    assert r.f_score == pytest.approx(2 * r.precision * r.recall / denom if denom else 0.0)
    assert r.n_pos + r.n_neg == s.size
    assert any(line.startswith("aupr: ") for line in r.lines())


def test_aggregate_uses_sample_std():
    reps = [ev.MetricsReport(a, 0.5, 0.1, 0.2, 0.3, 0.0, 1, 1) for a in (0.2, 0.4, 0.9)]
    agg = ev.aggregate(reps)
    assert agg["aupr"]["mean"] == pytest.approx(0.5)
    assert agg["aupr"]["std"] == pytest.approx(np.std([0.2, 0.4, 0.9], ddof=1))
    assert np.isnan(ev.aggregate(reps[:1])["aupr"]["std"])


@pytest.fixture(scope="module")
def cv_setup():
    F = synthesize(30, 20, 3, 0.2, seed=0)
    return F, KernelConfig(("gip", "cos"), ("gip", "ntk")), Hyperparams(max_sweeps=30)


def test_cv_learns_low_rank_structure(cv_setup):
    F, cfg, hp = cv_setup
    res = ev.cross_validate(F, cfg, hp, n_folds=5, n_repeats=1, seed=0)
    assert len(res.reports) == 5
    assert res.summary["auc"]["mean"] > 0.9


def test_cv_repeats_and_determinism(cv_setup):
    F, cfg, hp = cv_setup
    hp = Hyperparams(max_sweeps=3)
    a = ev.cross_validate(F, cfg, hp, n_repeats=2, seed=3)
    b = ev.cross_validate(F, cfg, hp, n_repeats=2, seed=3)
    assert len(a.reports) == 10
    assert {r.repeat for r in a.reports} == {0, 1}
    assert a.summary == b.summary


def test_cv_parallel_matches_serial(cv_setup):
    F, cfg, _ = cv_setup
    hp = Hyperparams(max_sweeps=3)
    serial = ev.cross_validate(F, cfg, hp, seed=1)
    parallel = ev.cross_validate(F, cfg, hp, seed=1, jobs=2)
    assert serial.summary == parallel.summary


def test_single_view_cv_is_kron_rls(cv_setup):
    F, _, _ = cv_setup
    res = ev.cross_validate(F, KernelConfig(("gip",), ("ntk",)), Hyperparams(), seed=0)
    assert all(f.trace == [] for f in res.folds)


def test_test_entries_never_influence_their_scores():
    F = synthesize(14, 12, 2, 0.25, seed=9)
    cfg = KernelConfig(("gip", "cos"), ("gip", "nmi"))
    hp = Hyperparams(max_sweeps=5)
    folds = ev.make_folds(F, 5, seed=0)
    rng = np.random.default_rng(0)
    for t in range(5):
        base = ev.run_fold(F, folds.assignment, 5, t, cfg, hp)
        base_scores = _fold_scores(F, folds, t, cfg, hp)
        idx = np.argwhere(folds.assignment == t)
        for i, j in idx[rng.choice(len(idx), 10, replace=False)]:
            flipped = F.entries.copy()
            flipped[i, j] = 1 - flipped[i, j]
            scores = _fold_scores(F.with_entries(flipped), folds, t, cfg, hp)
            np.testing.assert_array_equal(scores, base_scores)
        assert base.report.n_pos + base.report.n_neg == len(idx)


def _fold_scores(F, folds, t, cfg, hp):
    from kronfuse.dataset import mask_fold
    from kronfuse.kernels import build_catalog

    train, _ = mask_fold(F, folds, t)
    return ev.fit_predict(build_catalog(train, cfg), train, hp)[0]


def test_kernel_cache_used_across_cv(tmp_path, cv_setup):
    F, cfg, _ = cv_setup
    hp = Hyperparams(max_sweeps=2)
    first = ev.cross_validate(F, cfg, hp, cache_dir=tmp_path)
    files = sorted(p.name for p in tmp_path.iterdir())
    assert len(files) == 5 * 4
    second = ev.cross_validate(F, cfg, hp, cache_dir=tmp_path)
    assert first.summary == second.summary
    assert sorted(p.name for p in tmp_path.iterdir()) == files


def test_select_lambdas_matches_direct_sweep(cv_setup):
    from kronfuse import kron_rls

    F, cfg, _ = cv_setup
    grid = ev.power_grid(-2, 2)
    best, table = ev.select_lambdas(F, cfg, grid, n_folds=3, seed=0)
    fold_data = ev._fold_catalogs(F, cfg, 3, 0)
    for v, (d, s) in enumerate(fold_data[0][2].views):
        means = []
        for lam in grid:
            vals = []
            for train, mask, cat in fold_data:
                pred = kron_rls.fit(cat.drug_kernels[d], cat.side_effect_kernels[s], train, lam).prediction
                vals.append(ev.aupr(pred[mask], F.entries[mask]))
            means.append(np.mean(vals))
        np.testing.assert_allclose(table[v], means, atol=1e-12)
        assert best[v] == grid[int(np.argmax(means))]


def test_grid_search_single_point_and_leaderboard(cv_setup):
    F, cfg, _ = cv_setup
    base = Hyperparams(max_sweeps=3)
    best, board = ev.grid_search(F, cfg, base, [0.5], [1.0], [0.25], n_folds=3)
    assert (best.mu, best.beta, best.sigma) == (0.5, 1.0, 0.25)
    assert len(board) == 1
    best, board = ev.grid_search(F, cfg, base, [0.5, 1.0], [1.0], [0.0, 0.25], n_folds=3)
    assert len(board) == 4
    assert [r["aupr_mean"] for r in board] == sorted((r["aupr_mean"] for r in board), reverse=True)
    with pytest.raises(ValueError):
        ev.grid_search(F, cfg, base, [], [1.0], [0.1])
