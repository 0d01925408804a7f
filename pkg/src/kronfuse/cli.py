"""Command-line front end.

Subcommands: ``stats``, ``kernels``, ``train``, ``cv``, ``tune``, ``predict``.
Settings come from defaults, then an optional JSON ``--config`` file, then
command-line flags (highest precedence). Exit codes: 0 success, 1 numerical
failure, 2 I/O or configuration error.
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import evaluation, fusion, kron_rls
from .dataset import DatasetError, load_edge_list, stats
from .kernels import KINDS, KernelConfig, KernelError, build_catalog
from .kron_ops import KronOpsError
from .matrix_io import CACHE_ENV, KernelCache, read_matrix, write_matrix
from .optim import SimplexQPError

logger = logging.getLogger("kronfuse")

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dataset: str = None
    format: str = "tsv_edges"
    views: str = "all"
    gamma: float = 1.0
    ntk_depth: int = 2
    mu: float = 2.0**-7
    beta: float = 2.0**0
    sigma: float = 2.0**-8
    epsilon: float = 2.0
    lambdas: list = field(default_factory=list)
    max_sweeps: int = 100
    rel_tol: float = 1e-6
    folds: int = 5
    repeats: int = 1
    seed: int = 0
    jobs: int = 1
    out: str = "kronfuse_out"
    cache: bool = False
    cache_dir: str = None
    matrix_format: str = "bin"
    model: str = None
    top_k: int = 20
    lambda_grid: list = field(default_factory=lambda: [-5, 5])
    mu_grid: list = field(default_factory=lambda: [-10, 0])
    beta_grid: list = field(default_factory=lambda: [-10, 0])
    sigma_grid: list = field(default_factory=lambda: [-10, 0])

    @classmethod
    def from_sources(cls, file_values, flag_values):
        known = {f.name for f in fields(cls)}
        merged = {}
        for source in (file_values, flag_values):
            unknown = set(source) - known
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
            merged.update({k: v for k, v in source.items() if v is not None})
        return cls(**merged)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def parse_views(text):
    """``all`` or comma-separated ``drug:side`` pairs; ``+`` joins kinds on one side.

    The listed pairs must form a full drug x side-effect cross product.
    """
    text = (text or "all").strip().lower()
    if text == "all":
        return KINDS, KINDS
    drug, side, pairs = [], [], set()
    for token in text.split(","):
        if ":" not in token:
            raise ConfigError(f"view {token!r} must look like 'gip_d:ntk_s'")
        left, right = token.split(":", 1)
        ds = [_strip_kind(k, "_d") for k in left.split("+")]
        ss = [_strip_kind(k, "_s") for k in right.split("+")]
        for d in ds:
            for s in ss:
                pairs.add((d, s))
                drug.append(d) if d not in drug else None
                side.append(s) if s not in side else None
    if pairs != {(d, s) for d in drug for s in side}:
        raise ConfigError("views must form a full drug x side-effect cross product")
    return tuple(drug), tuple(side)


def _strip_kind(token, suffix):
    token = token.strip()
    if token.endswith(suffix):
        token = token[: -len(suffix)]
    if token not in KINDS:
        raise ConfigError(f"unknown kernel kind {token!r}; choose from {', '.join(KINDS)}")
    return token


def view_labels(drug_kinds, side_kinds):
    return [f"{d}_d:{s}_s" for d in drug_kinds for s in side_kinds]


def resolve_lambdas(cfg, drug_kinds, side_kinds):
    labels = view_labels(drug_kinds, side_kinds)
    lams = [fusion.DEFAULT_LAMBDAS.get((d, s), 1.0) for d in drug_kinds for s in side_kinds]
    for item in cfg.lambdas or []:
        item = str(item)
        if "=" not in item:
            lams = [float(item)] * len(lams)
            continue
        key, value = item.rsplit("=", 1)
        key = key.strip()
        if key.isdigit():
            idx = int(key)
            if idx >= len(lams):
                raise ConfigError(f"lambda index {idx} out of range for {len(lams)} views")
        elif key in labels:
            idx = labels.index(key)
        else:
            raise ConfigError(f"unknown view {key!r} in lambda override")
        lams[idx] = float(value)
    return tuple(lams)


def build_setup(cfg):
    if not cfg.dataset:
        raise ConfigError("no dataset given (--dataset)")
    F = load_edge_list(cfg.dataset, cfg.format)
    drug_kinds, side_kinds = parse_views(cfg.views)
    kcfg = KernelConfig(drug_kinds, side_kinds, gamma=cfg.gamma, ntk_depth=cfg.ntk_depth)
    hp = fusion.Hyperparams(
        mu=cfg.mu,
        beta=cfg.beta,
        sigma=cfg.sigma,
        epsilon=cfg.epsilon,
        lambdas=resolve_lambdas(cfg, drug_kinds, side_kinds),
        max_sweeps=cfg.max_sweeps,
        rel_tol=cfg.rel_tol,
    )
    return F, kcfg, hp


def _cache_dir(cfg):
    if not cfg.cache:
        return None
    import os

    directory = cfg.cache_dir or os.environ.get(CACHE_ENV) or str(Path(cfg.out) / "kernel_cache")
    return directory


def _outdir(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())
    return out


def _write_lines(path, lines):
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_stats(cfg):
    if not cfg.dataset:
        raise ConfigError("no dataset given (--dataset)")
    st = stats(load_edge_list(cfg.dataset, cfg.format))
    for line in st.lines():
        print(line)
    out = _outdir(cfg)
    (out / "stats.json").write_text(json.dumps(asdict(st), indent=2))
    return st


def cmd_kernels(cfg):
    F, kcfg, _ = build_setup(cfg)
    out = _outdir(cfg)
    cache_dir = _cache_dir(cfg)
    cache = KernelCache(cache_dir, fmt=cfg.matrix_format) if cache_dir else None
    catalog = build_catalog(F, kcfg, cache=cache)
    index = []
    for k in catalog.drug_kernels + catalog.side_effect_kernels:
        path = write_matrix(out / "kernels" / f"{k.label}.{cfg.matrix_format}", k.values)
        index.append({"kind": k.kind, "space": k.space, "file": str(path.name), "sha256_16": k.digest()})
        print(f"{k.label}\t{k.size}x{k.size}\t{path}")
    (out / "kernels" / "index.json").write_text(json.dumps(index, indent=2))
    return catalog


def _save_ids(directory, F):
    ids = {"drug_ids": list(F.drug_ids), "side_effect_ids": list(F.side_effect_ids)}
    (Path(directory) / "ids.json").write_text(json.dumps(ids))


def cmd_train(cfg):
    F, kcfg, hp = build_setup(cfg)
    out = _outdir(cfg)
    catalog = build_catalog(F, kcfg)
    model_dir = out / "model"
    if catalog.n_views == 1:
        K_D, K_S = catalog.drug_kernels[0], catalog.side_effect_kernels[0]
        model = kron_rls.fit(K_D, K_S, F, hp.lambdas[0])
        kron_rls.save(model, model_dir, (K_D.digest(), K_S.digest()), fmt=cfg.matrix_format)
        print(f"kron_rls view {catalog.view_labels()[0]} lambda={model.lam}")
    else:
        state = fusion.fit(catalog, F, hp)
        fusion.save_state(state, model_dir, catalog.view_labels(), fmt=cfg.matrix_format)
        last = state.trace[-1]
        print(f"fusion: {catalog.n_views} views, {last.sweep} sweeps, objective {last.objective:.6g}")
        for label, wv in zip(catalog.view_labels(), state.w):
            print(f"w[{label}] = {wv:.6f}")
    _save_ids(model_dir, F)
    print(f"model written to {model_dir}")
    return model_dir


def _format_summary(summary, n_reports):
    lines = [f"n_reports: {n_reports}"]
    for name in evaluation.METRICS:
        lines.append(f"{name}_mean: {summary[name]['mean']:.6f}")
        lines.append(f"{name}_std: {summary[name]['std']:.6f}")
    return lines


def cmd_cv(cfg):
    F, kcfg, hp = build_setup(cfg)
    out = _outdir(cfg)
    result = evaluation.cross_validate(
        F, kcfg, hp, n_folds=cfg.folds, n_repeats=cfg.repeats, seed=cfg.seed,
        jobs=cfg.jobs, cache_dir=_cache_dir(cfg),
    )
    cols = ["repeat", "fold", "aupr", "auc", "recall", "precision", "f_score", "threshold", "n_pos", "n_neg"]
    rows = ["\t".join(cols)]
    (out / "pr_curves").mkdir(exist_ok=True)
    (out / "traces").mkdir(exist_ok=True)
    for res in result.folds:
        r = asdict(res.report)
        rows.append("\t".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols))
        tag = f"r{res.report.repeat}_f{res.report.fold}"
        recall, precision = res.pr_curve
        _write_lines(out / "pr_curves" / f"pr_{tag}.tsv",
                     ["recall\tprecision"] + [f"{a!r}\t{b!r}" for a, b in zip(recall, precision)])
        if res.trace:
            fusion.write_trace(res.trace, out / "traces" / f"trace_{tag}.jsonl")
    _write_lines(out / "folds.tsv", rows)
    lines = _format_summary(result.summary, len(result.folds))
    _write_lines(out / "report.txt", lines)
    (out / "summary.json").write_text(json.dumps(result.summary, indent=2, sort_keys=True))
    for line in lines:
        print(line)
    return result


def _grid(bounds):
    if len(bounds) == 2 and all(float(b).is_integer() for b in bounds):
        return evaluation.power_grid(int(bounds[0]), int(bounds[1]))
    raise ConfigError(f"grid must be [lo_exponent, hi_exponent], got {bounds}")


def cmd_tune(cfg):
    F, kcfg, hp = build_setup(cfg)
    out = _outdir(cfg)
    fold_data = evaluation._fold_catalogs(F, kcfg, cfg.folds, cfg.seed)
    lam_grid = _grid(cfg.lambda_grid)
    best_lams, table = evaluation.select_lambdas(F, kcfg, lam_grid, fold_data=fold_data)
    labels = view_labels(kcfg.drug_kinds, kcfg.side_effect_kinds)
    rows = ["view\t" + "\t".join(repr(x) for x in lam_grid) + "\tbest"]
    for label, row, lam in zip(labels, table, best_lams):
        rows.append(f"{label}\t" + "\t".join(f"{x:.6f}" for x in row) + f"\t{lam!r}")
    _write_lines(out / "leaderboard_lambda.tsv", rows)

    hp = hp.with_lambdas(best_lams)
    best, board = evaluation.grid_search(
        F, kcfg, hp, _grid(cfg.mu_grid), _grid(cfg.beta_grid), _grid(cfg.sigma_grid), fold_data=fold_data,
    )
    cols = ["mu", "beta", "sigma", "aupr_mean", "aupr_std", "auc_mean"]
    _write_lines(out / "leaderboard.tsv", ["\t".join(cols)] + ["\t".join(repr(r[c]) for c in cols) for r in board])
    chosen = {"mu": best.mu, "beta": best.beta, "sigma": best.sigma, "lambdas": dict(zip(labels, best_lams))}
    (out / "best.json").write_text(json.dumps(chosen, indent=2))
    print(f"best mu={best.mu!r} beta={best.beta!r} sigma={best.sigma!r} aupr={board[0]['aupr_mean']:.6f}")
    return best, board


def cmd_predict(cfg):
    if not cfg.model:
        raise ConfigError("no model directory given (--model)")
    model_dir = Path(cfg.model)
    meta_path = model_dir / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no model dump at {model_dir}")
    meta = json.loads(meta_path.read_text())
    scores = read_matrix(model_dir / f"prediction.{meta.get('format', 'bin')}")
    if not cfg.dataset:
        raise ConfigError("no dataset given (--dataset)")
    F = load_edge_list(cfg.dataset, cfg.format)
    if scores.shape != F.shape:
        raise ConfigError(f"model scores are {scores.shape[0]}x{scores.shape[1]} but dataset is {F.shape[0]}x{F.shape[1]}")
    out = _outdir(cfg)
    write_matrix(out / f"scores.{cfg.matrix_format}", scores)
    novel = top_novel_links(F, scores, cfg.top_k)
    if cfg.top_k > 0:
        _write_lines(out / "novel_links.tsv",
                     ["drug\tside_effect\tscore"] + [f"{d}\t{s}\t{v!r}" for d, s, v in novel])
    for d, s, v in novel:
        print(f"{d}\t{s}\t{v:.6f}")
    return novel


def top_novel_links(F, scores, k):
    """The ``k`` highest-scoring pairs among those without a known link."""
    if k <= 0:
        return []
    candidates = np.flatnonzero(F.entries.ravel() == 0)
    if candidates.size == 0:
        return []
    flat = scores.ravel()[candidates]
    order = np.argsort(-flat, kind="stable")[:k]
    out = []
    for idx in candidates[order]:
        i, j = divmod(int(idx), F.shape[1])
        out.append((F.drug_ids[i], F.side_effect_ids[j], float(scores[i, j])))
    return out


COMMANDS = {
    "stats": cmd_stats,
    "kernels": cmd_kernels,
    "train": cmd_train,
    "cv": cmd_cv,
    "tune": cmd_tune,
    "predict": cmd_predict,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default settings")
    common.add_argument("--dataset", help="edge list or dense CSV")
    common.add_argument("--format", choices=["tsv_edges", "dense_csv"])
    common.add_argument("--views", help="'all' or pairs like 'gip_d:ntk_s' or 'gip_d+cos_d:ntk_s'")
    common.add_argument("--folds", type=int)
    common.add_argument("--repeats", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--cache", action="store_true", default=None, help="cache kernels on disk")
    common.add_argument("--cache-dir", dest="cache_dir", help=f"kernel cache directory (default ${CACHE_ENV})")
    common.add_argument("--matrix-format", dest="matrix_format", choices=["bin", "csv"])
    common.add_argument("--mu", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--sigma", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--lambda", dest="lambdas", action="append", metavar="[VIEW=]VALUE",
                        help="view lambda; VIEW is an index or a label like gip_d:ntk_s (repeatable)")
    common.add_argument("--gamma", type=float, help="GIP bandwidth")
    common.add_argument("--ntk-depth", dest="ntk_depth", type=int)
    common.add_argument("--max-sweeps", dest="max_sweeps", type=int)
    common.add_argument("--rel-tol", dest="rel_tol", type=float)
    common.add_argument("--model", help="model directory written by 'train'")
    common.add_argument("--top-k", dest="top_k", type=int)
    for name in ("lambda", "mu", "beta", "sigma"):
        common.add_argument(f"--{name}-grid", dest=f"{name}_grid", type=int, nargs=2, metavar=("LO", "HI"),
                            help=f"{name} grid exponents: 2**LO ... 2**HI")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="kronfuse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        file_values = json.loads(Path(args.config).read_text()) if args.config else {}
        cfg = RunConfig.from_sources(file_values, flags)
        COMMANDS[args.command](cfg)
    except (fusion.FusionError, SimplexQPError, KronOpsError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"kronfuse {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"kronfuse {args.command}: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, DatasetError, KernelError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"kronfuse {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
