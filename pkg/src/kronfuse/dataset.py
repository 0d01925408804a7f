"""Bipartite drug/side-effect link data: loading, statistics, CV folds."""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed or degenerate link data."""


@dataclass(frozen=True)
class AdjacencyMatrix:
    """Binary N x M drug-by-side-effect link matrix with node identifiers."""

    entries: np.ndarray
    drug_ids: tuple
    side_effect_ids: tuple

    def __post_init__(self):
        F = np.asarray(self.entries)
        if F.ndim != 2:
            raise DatasetError(f"adjacency must be 2-D, got shape {F.shape}")
        if not np.isin(F, (0, 1)).all():
            raise DatasetError("adjacency entries must be exactly 0 or 1")
        n, m = F.shape
        if n < 2 or m < 2:
            raise DatasetError(f"need at least 2 drugs and 2 side effects, got {n}x{m}")
        drug_ids = tuple(str(d) for d in self.drug_ids)
        se_ids = tuple(str(s) for s in self.side_effect_ids)
        if len(drug_ids) != n or len(se_ids) != m:
            raise DatasetError("identifier lists do not match matrix shape")
        if len(set(drug_ids)) != n or len(set(se_ids)) != m:
            raise DatasetError("duplicate node identifiers")
        F = F.astype(np.int8)
        F.setflags(write=False)
        object.__setattr__(self, "entries", F)
        object.__setattr__(self, "drug_ids", drug_ids)
        object.__setattr__(self, "side_effect_ids", se_ids)

    @classmethod
    def from_array(cls, F, drug_ids=None, side_effect_ids=None):
        F = np.asarray(F)
        n, m = F.shape
        if drug_ids is None:
            drug_ids = [f"d{i}" for i in range(n)]
        if side_effect_ids is None:
            side_effect_ids = [f"s{j}" for j in range(m)]
        return cls(F, tuple(drug_ids), tuple(side_effect_ids))

    @property
    def shape(self):
        return self.entries.shape

    @property
    def n_drugs(self):
        return self.entries.shape[0]

    @property
    def n_side_effects(self):
        return self.entries.shape[1]

    def as_float(self):
        return self.entries.astype(np.float64)

    def with_entries(self, F):
        return AdjacencyMatrix(F, self.drug_ids, self.side_effect_ids)


@dataclass(frozen=True)
class DatasetStats:
    n_drugs: int
    n_side_effects: int
    n_associations: int
    sparsity: float

    def lines(self):
        return [
            f"drugs: {self.n_drugs}",
            f"side_effects: {self.n_side_effects}",
            f"associations: {self.n_associations}",
            f"sparsity: {100 * self.sparsity:.2f}%",
        ]


@dataclass(frozen=True)
class FoldAssignment:
    n_folds: int
    assignment: np.ndarray

    def fold_sizes(self):
        return np.bincount(self.assignment.ravel(), minlength=self.n_folds)


def load_edge_list(path, format="tsv_edges"):
    """Read a link matrix from a TSV edge list or a dense CSV.

    ``tsv_edges``: one ``drug<TAB>side_effect`` per line, ``#`` comments allowed,
    ids ordered by first appearance. ``dense_csv``: a header row of side-effect
    ids (an optional leading corner cell is tolerated), then one row per drug.
    """
    path = Path(path)
    if format == "tsv_edges":
        return _load_tsv(path)
    if format == "dense_csv":
        return _load_dense_csv(path)
    raise DatasetError(f"unknown format {format!r}")


def _load_tsv(path):
    drugs, effects, edges = {}, {}, []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
                raise DatasetError(f"{path}:{lineno}: expected 'drug<TAB>side_effect', got {line!r}")
            d, s = parts[0].strip(), parts[1].strip()
            i = drugs.setdefault(d, len(drugs))
            j = effects.setdefault(s, len(effects))
            edges.append((i, j))
    if not edges:
        raise DatasetError(f"{path}: no edges")
    F = np.zeros((len(drugs), len(effects)), dtype=np.int8)
    rows, cols = zip(*edges)
    F[list(rows), list(cols)] = 1
    return AdjacencyMatrix(F, tuple(drugs), tuple(effects))


def _load_dense_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise DatasetError(f"{path}: no edges")
    header = [c.strip() for c in rows[0]]
    width = len(rows[1])
    if len(header) == width:
        header = header[1:]
    elif len(header) != width - 1:
        raise DatasetError(f"{path}:1: header has {len(header)} ids but rows have {width - 1} values")
    drug_ids, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header) + 1:
            raise DatasetError(f"{path}:{lineno}: expected {len(header) + 1} fields, got {len(row)}")
        try:
            vals = [int(float(c)) for c in row[1:]]
        except ValueError as exc:
            raise DatasetError(f"{path}:{lineno}: non-numeric value ({exc})") from None
        if any(v not in (0, 1) for v in vals):
            raise DatasetError(f"{path}:{lineno}: values must be 0 or 1")
        drug_ids.append(row[0].strip())
        values.append(vals)
    F = np.array(values, dtype=np.int8)
    if not F.any():
        raise DatasetError(f"{path}: no edges")
    return AdjacencyMatrix(F, tuple(drug_ids), tuple(header))


def save_edge_list(F, path):
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in zip(*np.nonzero(F.entries)):
            fh.write(f"{F.drug_ids[i]}\t{F.side_effect_ids[j]}\n")


def save_dense_csv(F, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["drug", *F.side_effect_ids])
        for d, row in zip(F.drug_ids, F.entries):
            w.writerow([d, *row.tolist()])


def stats(F):
    n, m = F.shape
    k = int(F.entries.sum())
    return DatasetStats(n, m, k, 1.0 - k / (n * m))


def make_folds(F, n_folds=5, seed=0):
    """Uniformly random partition of all N*M pairs into ``n_folds`` folds.

    Fold sizes differ by at most one.
    """
    n, m = F.shape
    if n_folds < 2:
        raise DatasetError(f"n_folds must be >= 2, got {n_folds}")
    if n * m < n_folds:
        raise DatasetError(f"cannot split {n * m} pairs into {n_folds} folds")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n * m)
    assignment = np.empty(n * m, dtype=np.int64)
    assignment[perm] = np.arange(n * m) % n_folds
    return FoldAssignment(n_folds, assignment.reshape(n, m))


def mask_fold(F, folds, test_fold):
    """Zero the test fold out of ``F``; returns ``(train, test_mask)``."""
    if not 0 <= test_fold < folds.n_folds:
        raise DatasetError(f"test_fold {test_fold} out of range [0, {folds.n_folds})")
    test_mask = folds.assignment == test_fold
    train = F.entries.copy()
    train[test_mask] = 0
    return F.with_entries(train), test_mask


def low_rank_scores(n, m, rank, seed=0):
    """Random nonnegative rank-``rank`` score matrix (product of uniform factors)."""
    if not 1 <= rank <= min(n, m):
        raise DatasetError(f"rank must be in [1, {min(n, m)}], got {rank}")
    rng = np.random.default_rng(seed)
    U = rng.random((n, rank))
    V = rng.random((m, rank))
    return U @ V.T


def synthesize(n, m, rank, density, seed=0, return_scores=False):
    """Threshold a random low-rank score matrix to an exact number of links.

    The top ``round(density * n * m)`` scores become links.
    """
    if not 0.0 < density < 1.0:
        raise DatasetError(f"density must lie in (0, 1), got {density}")
    k = int(round(density * n * m))
    if k <= 0 or k >= n * m:
        raise DatasetError(f"density {density} gives {k} links out of {n * m}; infeasible")
    scores = low_rank_scores(n, m, rank, seed)
    order = np.argsort(-scores, axis=None, kind="stable")
    F = np.zeros(n * m, dtype=np.int8)
    F[order[:k]] = 1
    adj = AdjacencyMatrix.from_array(F.reshape(n, m))
    if return_scores:
        return adj, scores
    return adj
