"""Matrix Market I/O, seeded right-hand sides, CSV output."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .sparse import FeatureMatrix, spmv_transpose


class MatrixMarketError(ValueError):
    pass


_FIELDS = ("real", "integer", "pattern", "double")
_SYMMETRIES = ("general", "symmetric", "skew-symmetric")


def _data_lines(fh):
    for line in fh:
        s = line.strip()
        if s and not s.startswith("%"):
            yield s


def read_matrix_market(path) -> FeatureMatrix:
    """Read a coordinate or array Matrix Market file into a FeatureMatrix.

    Supports real/integer/pattern fields and general/symmetric/skew-symmetric
    storage; pattern entries become 1.0 and symmetric storage is expanded.
    """
    path = Path(path)
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        header = fh.readline().split()
        if len(header) != 5 or header[0].lower() != "%%matrixmarket" or header[1].lower() != "matrix":
            raise MatrixMarketError(f"{path}: malformed header {' '.join(header)!r}")
        fmt, fld, sym = (h.lower() for h in header[2:])
        if fld == "complex":
            raise MatrixMarketError(f"{path}: complex matrices are not supported")
        if fmt not in ("coordinate", "array") or fld not in _FIELDS or sym not in _SYMMETRIES:
            raise MatrixMarketError(f"{path}: unsupported format {fmt} {fld} {sym}")
        if fmt == "array" and fld == "pattern":
            raise MatrixMarketError(f"{path}: array format cannot be pattern")
        lines = _data_lines(fh)
        try:
            size = next(lines).split()
        except StopIteration:
            raise MatrixMarketError(f"{path}: missing size line") from None
        body = list(lines)

    try:
        if fmt == "coordinate":
            n_rows, n_cols, nnz = (int(t) for t in size)
        else:
            n_rows, n_cols = (int(t) for t in size)
    except ValueError:
        raise MatrixMarketError(f"{path}: malformed size line {' '.join(size)!r}") from None

    if fmt == "array":
        vals = np.array([float(s.split()[0]) for s in body])
        if sym == "general":
            if vals.size != n_rows * n_cols:
                raise MatrixMarketError(f"{path}: expected {n_rows * n_cols} values, found {vals.size}")
            dense = vals.reshape((n_cols, n_rows)).T
        else:
            expect = n_rows * (n_rows + 1) // 2 if sym == "symmetric" else n_rows * (n_rows - 1) // 2
            if n_rows != n_cols or vals.size != expect:
                raise MatrixMarketError(f"{path}: inconsistent {sym} array data")
            dense = np.zeros((n_rows, n_cols))
            k = 0
            for j in range(n_cols):
                start = j if sym == "symmetric" else j + 1
                for i in range(start, n_rows):
                    dense[i, j] = vals[k]
                    dense[j, i] = vals[k] if sym == "symmetric" else -vals[k]
                    k += 1
        return FeatureMatrix(sp.csr_matrix(dense))

    if len(body) != nnz:
        raise MatrixMarketError(f"{path}: header declares {nnz} entries, found {len(body)}")
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.ones(nnz)
    for k, s in enumerate(body):
        parts = s.split()
        try:
            rows[k] = int(parts[0]) - 1
            cols[k] = int(parts[1]) - 1
            if fld != "pattern":
                vals[k] = float(parts[2])
        except (IndexError, ValueError):
            raise MatrixMarketError(f"{path}: malformed entry line {s!r}") from None
    if nnz and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n_rows or cols.max() >= n_cols):
        raise MatrixMarketError(f"{path}: entry index out of range")
    if sym != "general":
        off = rows != cols
        sign = 1.0 if sym == "symmetric" else -1.0
        rows, cols, vals = (np.concatenate([rows, cols[off]]), np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, sign * vals[off]]))
    return FeatureMatrix(sp.coo_matrix((vals, (rows, cols)), shape=(n_rows, n_cols)).tocsr())


def write_matrix_market(path, X: FeatureMatrix, field="real", symmetry="general", comment=None):
    """Write coordinate Matrix Market; symmetric output keeps the lower triangle."""
    if field not in ("real", "integer", "pattern"):
        raise ValueError(f"unsupported field {field!r}")
    if symmetry not in ("general", "symmetric"):
        raise ValueError(f"unsupported symmetry {symmetry!r}")
    coo = X.csr.tocoo()
    r, c, v = coo.row, coo.col, coo.data
    if symmetry == "symmetric":
        if X.n_samples != X.n_features or (abs(X.csr - X.csr.T) > 0).nnz:
            raise ValueError("matrix is not symmetric")
        keep = r >= c
        r, c, v = r[keep], c[keep], v[keep]
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate {field} {symmetry}\n")
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{X.n_samples} {X.n_features} {len(v)}\n")
        for i, j, x in zip(r, c, v):
            if field == "pattern":
                fh.write(f"{i + 1} {j + 1}\n")
            elif field == "integer":
                fh.write(f"{i + 1} {j + 1} {int(x)}\n")
            else:
                fh.write(f"{i + 1} {j + 1} {float(x)!r}\n")


@dataclass(frozen=True)
class RhsSpec:
    """Standard-normal sample vector b drawn from ``numpy.random.Philox(seed)``.

    Philox4x64-10 is a counter-based 64-bit generator; the normals come from
    ``Generator.standard_normal`` (ziggurat), so b depends only on the seed
    and numpy's stable Generator stream.
    """

    seed: int = 0
    distribution: str = "standard_normal"


def sample_vector(n: int, spec: RhsSpec) -> np.ndarray:
    if spec.distribution != "standard_normal":
        raise ValueError(f"unsupported distribution {spec.distribution!r}")
    gen = np.random.Generator(np.random.Philox(spec.seed))
    return gen.standard_normal(n)


def generate_rhs(X: FeatureMatrix, spec: RhsSpec = RhsSpec()):
    """Return ``(b, X^T b)`` with b ~ N(0, I_N)."""
    b = sample_vector(X.n_samples, spec)
    return b, spmv_transpose(X, b)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_assignment_csv(path, membership):
    write_csv(path, ("feature_id", "cluster_id"), ((i, int(c)) for i, c in enumerate(membership)))


def read_assignment_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        if [h.strip() for h in header] != ["feature_id", "cluster_id"]:
            raise ValueError(f"{path}: expected header feature_id,cluster_id")
        pairs = sorted((int(a), int(b)) for a, b in r)
    ids = [a for a, _ in pairs]
    if ids != list(range(len(ids))):
        raise ValueError(f"{path}: feature ids must be 0..F-1")
    return np.array([b for _, b in pairs], dtype=np.int64)
