"""Dense matrix files and the on-disk kernel cache.

Two formats, chosen by suffix:

* ``.csv``: one row per line, comma separated, full float precision.
* ``.bin``: two little-endian int64 dimensions (rows, cols) followed by
  rows*cols little-endian float64 values in row-major order.
"""

import hashlib
import os
from pathlib import Path

import numpy as np

CACHE_ENV = "KRONFUSE_CACHE"
_HEADER = np.dtype("<i8")
_DATA = np.dtype("<f8")


def write_matrix(path, M):
    path = Path(path)
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {M.shape}")
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".csv":
        np.savetxt(path, M, delimiter=",", fmt="%.17g")
    elif path.suffix == ".bin":
        with open(path, "wb") as fh:
            fh.write(np.array(M.shape, dtype=_HEADER).tobytes())
            fh.write(np.ascontiguousarray(M, dtype=_DATA).tobytes())
    else:
        raise ValueError(f"unsupported matrix file suffix {path.suffix!r} (use .csv or .bin)")
    return path


def read_matrix(path):
    path = Path(path)
    if path.suffix == ".csv":
        return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64))
    if path.suffix == ".bin":
        raw = path.read_bytes()
        if len(raw) < 16:
            raise ValueError(f"{path}: truncated header")
        rows, cols = np.frombuffer(raw[:16], dtype=_HEADER)
        expected = 16 + int(rows) * int(cols) * 8
        if len(raw) != expected:
            raise ValueError(f"{path}: expected {expected} bytes for {rows}x{cols}, found {len(raw)}")
        return np.frombuffer(raw[16:], dtype=_DATA).reshape(int(rows), int(cols)).copy()
    raise ValueError(f"unsupported matrix file suffix {path.suffix!r} (use .csv or .bin)")


def array_digest(M):
    M = np.ascontiguousarray(M)
    h = hashlib.sha256()
    h.update(str(M.shape).encode())
    h.update(M.astype(np.float64).tobytes())
    return h.hexdigest()[:16]


class KernelCache:
    """One file per kernel, keyed by (training-matrix hash, fold, kind, space, params).

    The training matrix already differs between folds; ``fold`` only makes
    file names readable.
    """

    def __init__(self, directory=None, fmt="bin", fold=None):
        directory = directory or os.environ.get(CACHE_ENV)
        if not directory:
            raise ValueError(f"no cache directory given and {CACHE_ENV} is unset")
        if fmt not in ("bin", "csv"):
            raise ValueError(f"unknown cache format {fmt!r}")
        self.directory = Path(directory)
        self.fmt = fmt
        self.fold = fold

    def path(self, F, kind, space, config):
        params = f"g{config.gamma!r}_L{config.ntk_depth}"
        fold = "full" if self.fold is None else f"fold{self.fold}"
        name = f"{array_digest(F)}_{fold}_{kind}_{space}_{params}.{self.fmt}"
        return self.directory / name

    def load(self, F, kind, space, config):
        p = self.path(F, kind, space, config)
        return read_matrix(p) if p.exists() else None

    def store(self, F, kind, space, config, values):
        write_matrix(self.path(F, kind, space, config), values)
