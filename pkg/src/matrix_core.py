import os
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import sparse

from src import logs
from src.errors import (BoundsError, ContractError, DegenerateInputError,
                        DuplicateEntryError, ParameterError, ParseError)
from src.mr_engine import Emission, MapReduceEngine

MATRIX_MARKET = "matrix-market"
TSV_TRIPLES = "tsv"

_EXTENSIONS = {
    ".mtx": MATRIX_MARKET,
    ".mm": MATRIX_MARKET,
    ".tsv": TSV_TRIPLES,
    ".txt": TSV_TRIPLES,
}

MM_HEADER = "%%MatrixMarket matrix coordinate real general"


class SparseRow(NamedTuple):
    cols: np.ndarray
    vals: np.ndarray


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SparseRowMatrix:
    """
    m x n matrix stored row by row (CSR arrays). Rows hold strictly increasing
    column indices and no explicit zeros. Immutable: the arrays are read-only.
    """
    n_rows: int
    n_cols: int
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    dropped_zeros: int = 0

    def __post_init__(self):
        object.__setattr__(self, "indptr", _frozen(self.indptr, np.int64))
        object.__setattr__(self, "indices", _frozen(self.indices, np.int64))
        object.__setattr__(self, "values", _frozen(self.values, np.float64))

    # --- shape & access -------------------------------------------------------
    @property
    def nnz(self):
        return int(self.values.shape[0])

    @property
    def row_nnz(self):
        return np.diff(self.indptr)

    @property
    def max_row_nnz(self):
        return int(self.row_nnz.max()) if self.n_rows else 0

    @property
    def max_abs(self):
        return float(np.abs(self.values).max()) if self.nnz else 0.0

    @property
    def is_nonnegative(self):
        return bool(np.all(self.values >= 0))

    def row(self, i):
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return SparseRow(self.indices[lo:hi], self.values[lo:hi])

    def rows(self):
        for i in range(self.n_rows):
            yield self.row(i)

    def row_ids(self):
        """Row index of every stored entry, aligned with ``indices``/``values``."""
        return np.repeat(np.arange(self.n_rows, dtype=np.int64), self.row_nnz)

    def entries(self):
        return {(int(r), int(c)): float(v)
                for r, c, v in zip(self.row_ids(), self.indices, self.values)}

    def to_scipy(self):
        return sparse.csr_matrix((self.values, self.indices, self.indptr),
                                 shape=(self.n_rows, self.n_cols))

    def to_dense(self):
        return self.to_scipy().toarray()

    def summary(self):
        h = float(np.abs(self.values).min() / self.max_abs) if self.nnz else 0.0
        return {"m": self.n_rows, "n": self.n_cols, "L": self.max_row_nnz,
                "nnz": self.nnz, "H": h}

    # --- construction ---------------------------------------------------------
    @classmethod
    def from_triples(cls, n_rows, n_cols, rows, cols, vals, line_numbers=None):
        """
        Build from coordinate triples (0-based). Rejects out-of-range and
        duplicate coordinates; explicit zeros are dropped and counted.
        :param line_numbers: source line of each triple, for error messages
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)

        def _line(k):
            return None if line_numbers is None else int(line_numbers[k])

        bad = np.flatnonzero((rows < 0) | (rows >= n_rows) | (cols < 0) | (cols >= n_cols))
        if bad.size:
            k = bad[0]
            raise BoundsError(f"entry ({rows[k]}, {cols[k]}) outside declared shape {n_rows}x{n_cols}",
                              _line(k))

        order = np.lexsort((cols, rows))
        r_sorted, c_sorted = rows[order], cols[order]
        dup = np.flatnonzero((r_sorted[1:] == r_sorted[:-1]) & (c_sorted[1:] == c_sorted[:-1]))
        if dup.size:
            k = order[dup[0] + 1]
            raise DuplicateEntryError(f"duplicate coordinate ({rows[k]}, {cols[k]})", _line(k))

        keep = vals[order] != 0.0
        dropped = int(np.count_nonzero(~keep))
        if dropped:
            logs.warn(f"Dropped {dropped} explicit zero entr{'y' if dropped == 1 else 'ies'}.")
        r_kept = r_sorted[keep]
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(r_kept, minlength=n_rows), out=indptr[1:])
        return cls(n_rows, n_cols, indptr, c_sorted[keep], vals[order][keep], dropped)

    @classmethod
    def from_dense(cls, dense):
        dense = np.atleast_2d(np.asarray(dense, dtype=np.float64))
        r, c = np.nonzero(dense)
        return cls.from_triples(dense.shape[0], dense.shape[1], r, c, dense[r, c])


def validate_matrix(A):
    """Re-check every SparseRowMatrix invariant; raise ContractError naming the first failure."""
    if A.indptr.shape != (A.n_rows + 1,) or A.indptr[0] != 0 or A.indptr[-1] != A.nnz:
        raise ContractError("indptr does not describe the stored entries")
    if np.any(np.diff(A.indptr) < 0):
        raise ContractError("indptr is not non-decreasing")
    if A.nnz:
        if A.indices.min() < 0 or A.indices.max() >= A.n_cols:
            raise ContractError("column index outside [0, n)")
        same_row = A.row_ids()[1:] == A.row_ids()[:-1]
        if np.any(np.diff(A.indices)[same_row] <= 0):
            raise ContractError("column indices not strictly increasing within a row")
        if np.any(A.values == 0.0):
            raise ContractError("explicit zero stored")
        if not np.all(np.isfinite(A.values)):
            raise ContractError("non-finite value stored")
    return True


# -----------------------------------------------------------------------------
# FILE INGESTION
# -----------------------------------------------------------------------------
def detect_format(path):
    ext = os.path.splitext(path)[1].lower()
    if ext not in _EXTENSIONS:
        raise ParameterError(f"Cannot infer matrix format from extension '{ext}' (use .mtx or .tsv)")
    return _EXTENSIONS[ext]


def _parse_int(token, line_number, what):
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"{what} '{token}' is not an integer", line_number)


def _parse_value(token, line_number):
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"value '{token}' is not a real number", line_number)
    if not np.isfinite(value):
        raise ParseError(f"value '{token}' is not finite", line_number)
    return value


def _parse_matrix_market(lines):
    if not lines or not lines[0].lower().startswith("%%matrixmarket"):
        raise ParseError("missing %%MatrixMarket header", 1)
    header = lines[0].lower().split()
    if header[1:] != ["matrix", "coordinate", "real", "general"]:
        raise ParseError(f"unsupported header '{lines[0].strip()}' (expected '{MM_HEADER}')", 1)

    shape = None
    rows, cols, vals, where = [], [], [], []
    for number, line in enumerate(lines[1:], start=2):
        text = line.strip()
        if not text or text.startswith("%"):
            continue
        parts = text.split()
        if shape is None:
            if len(parts) != 3:
                raise ParseError("size line must be 'rows cols entries'", number)
            shape = tuple(_parse_int(p, number, "size") for p in parts)
            if min(shape) < 0:
                raise ParseError("negative size", number)
            continue
        if len(parts) != 3:
            raise ParseError(f"expected 'row col value', got {len(parts)} fields", number)
        i = _parse_int(parts[0], number, "row index")
        j = _parse_int(parts[1], number, "column index")
        if not (1 <= i <= shape[0] and 1 <= j <= shape[1]):
            raise BoundsError(f"entry ({i}, {j}) outside declared shape {shape[0]}x{shape[1]}", number)
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(_parse_value(parts[2], number))
        where.append(number)

    if shape is None:
        raise ParseError("missing size line")
    if len(vals) != shape[2]:
        raise ParseError(f"header declares {shape[2]} entries but {len(vals)} were found")
    return shape[0], shape[1], rows, cols, vals, where


def _parse_tsv(lines):
    shape = None
    rows, cols, vals, where = [], [], [], []
    for number, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#"):
            parts = text.split("\t")
            if parts[0] == "#shape":
                if len(parts) != 3:
                    raise ParseError("shape header must be '#shape<TAB>m<TAB>n'", number)
                shape = (_parse_int(parts[1], number, "row count"),
                         _parse_int(parts[2], number, "column count"))
            continue
        parts = text.split("\t")
        if len(parts) != 3:
            raise ParseError(f"expected 'row<TAB>col<TAB>value', got {len(parts)} fields", number)
        i = _parse_int(parts[0].strip(), number, "row index")
        j = _parse_int(parts[1].strip(), number, "column index")
        if i < 0 or j < 0 or (shape is not None and (i >= shape[0] or j >= shape[1])):
            bound = f"{shape[0]}x{shape[1]}" if shape else "non-negative indices"
            raise BoundsError(f"entry ({i}, {j}) outside {bound}", number)
        rows.append(i)
        cols.append(j)
        vals.append(_parse_value(parts[2].strip(), number))
        where.append(number)

    if shape is None:
        shape = (max(rows, default=-1) + 1, max(cols, default=-1) + 1)
    return shape[0], shape[1], rows, cols, vals, where


def load_matrix(path, fmt=None):
    """
    Read a SparseRowMatrix from MatrixMarket coordinate (1-based) or TSV
    triples (0-based). Duplicate coordinates are an error, never summed.
    """
    if not os.path.exists(path):
        raise ParameterError(f"File {path} not found.")
    fmt = fmt or detect_format(path)
    with open(path, 'r', encoding='utf-8') as f:
        lines = f.read().splitlines()

    if fmt == MATRIX_MARKET:
        parsed = _parse_matrix_market(lines)
    elif fmt == TSV_TRIPLES:
        parsed = _parse_tsv(lines)
    else:
        raise ParameterError(f"Unknown matrix format '{fmt}'")

    n_rows, n_cols, rows, cols, vals, where = parsed
    A = SparseRowMatrix.from_triples(n_rows, n_cols, rows, cols, vals, line_numbers=where)
    logs.debug(f"Loaded {n_rows}x{n_cols} matrix with {A.nnz} nonzeros from {path}")
    return A


def write_matrix(A, path, fmt=None):
    """Write A so that load_matrix(path) reproduces it entry for entry."""
    fmt = fmt or detect_format(path)
    row_ids = A.row_ids()
    with open(path, 'w', encoding='utf-8', newline="\n") as f:
        if fmt == MATRIX_MARKET:
            f.write(MM_HEADER + "\n")
            f.write(f"{A.n_rows} {A.n_cols} {A.nnz}\n")
            for r, c, v in zip(row_ids, A.indices, A.values):
                f.write(f"{r + 1} {c + 1} {float(v)!r}\n")
        elif fmt == TSV_TRIPLES:
            f.write(f"#shape\t{A.n_rows}\t{A.n_cols}\n")
            for r, c, v in zip(row_ids, A.indices, A.values):
                f.write(f"{r}\t{c}\t{float(v)!r}\n")
        else:
            raise ParameterError(f"Unknown matrix format '{fmt}'")
    return path


# -----------------------------------------------------------------------------
# SCALING & COLUMN STATISTICS
# -----------------------------------------------------------------------------
def scale_entries(A):
    """
    Divide every entry by max |a_ij| so the result lies in [-1, 1].
    :return: (scaled matrix, scale_factor)
    """
    if A.nnz == 0:
        raise DegenerateInputError("Cannot scale an all-zero matrix.")
    scale = A.max_abs
    scaled = A.values / scale
    if np.any(scaled == 0.0):
        raise DegenerateInputError(f"Entries underflow to zero when divided by {scale!r}.")
    return SparseRowMatrix(A.n_rows, A.n_cols, A.indptr, A.indices, scaled, A.dropped_zeros), scale


@dataclass(frozen=True)
class ColumnStats:
    """Column magnitudes ||c_j||, per-column nonzero counts and H (smallest nonzero |a_ij|)."""
    norms: np.ndarray
    h_min: float
    col_nnz: np.ndarray
    run_stats: Optional[object] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "norms", _frozen(self.norms, np.float64))
        object.__setattr__(self, "col_nnz", _frozen(self.col_nnz, np.int64))

    @property
    def n(self):
        return int(self.norms.shape[0])

    @property
    def max_norm(self):
        return float(self.norms.max()) if self.n else 0.0

    @classmethod
    def from_norms(cls, norms, h_min=1.0, col_nnz=None):
        norms = np.asarray(norms, dtype=np.float64)
        if col_nnz is None:
            col_nnz = np.zeros(norms.shape[0], dtype=np.int64)
        return cls(norms, float(h_min), col_nnz)


def _square_map(row, row_index, rng):
    return [Emission((int(c), int(c)), float(v) * float(v)) for c, v in zip(row.cols, row.vals)]


def _sum_reduce(key, values):
    return key, sum(values)


def column_stats(A, engine=None):
    """
    ||c_j|| via one map/reduce pass (each row emits ((j, j), a_ij^2)), so the
    pass has a measurable shuffle size. H is taken over the scaled entries.
    """
    if A.nnz == 0:
        raise DegenerateInputError("Column statistics of an all-zero matrix are undefined.")
    if A.max_abs > 1.0:
        raise ContractError("column_stats expects a scaled matrix (max |a_ij| <= 1); call scale_entries first.")
    engine = engine or MapReduceEngine()
    result = engine.run_job(A, _square_map, _sum_reduce)

    squares = np.zeros(A.n_cols, dtype=np.float64)
    for (j, _), total in result.output.items():
        squares[j] = total
    return ColumnStats(
        norms=np.sqrt(squares),
        h_min=float(np.abs(A.values).min()),
        col_nnz=np.bincount(A.indices, minlength=A.n_cols),
        run_stats=result.stats,
    )


# -----------------------------------------------------------------------------
# DATASET GENERATORS
# -----------------------------------------------------------------------------
VALUE_DISTRIBUTIONS = ("binary", "uniform01", "signs")

# Rows are generated in blocks so the random key matrix stays around 4M floats.
_GENERATOR_BLOCK = 4_000_000


def generate_random_sparse(m, n, L, value_dist="binary", seed=0):
    """
    m x n matrix whose rows each hold exactly L nonzeros at distinct, uniformly
    chosen columns. Deterministic given seed.
    """
    if m < 1 or n < 1:
        raise ParameterError(f"Matrix shape must be positive, got {m}x{n}")
    if not 1 <= L <= n:
        raise ParameterError(f"Row sparsity L={L} must satisfy 1 <= L <= n={n}")
    if value_dist not in VALUE_DISTRIBUTIONS:
        raise ParameterError(f"value_dist must be one of {VALUE_DISTRIBUTIONS}, got '{value_dist}'")

    rng = np.random.default_rng(seed)
    block = max(1, _GENERATOR_BLOCK // n)
    col_blocks, val_blocks = [], []
    for start in range(0, m, block):
        count = min(block, m - start)
        keys = rng.random((count, n))
        cols = np.sort(np.argpartition(keys, L - 1, axis=1)[:, :L], axis=1)
        if value_dist == "binary":
            vals = np.ones((count, L))
        elif value_dist == "signs":
            vals = np.where(rng.random((count, L)) < 0.5, -1.0, 1.0)
        else:
            # (0, 1]: never an exact zero
            vals = 1.0 - rng.random((count, L))
        col_blocks.append(cols.ravel())
        val_blocks.append(vals.ravel())

    indptr = np.arange(m + 1, dtype=np.int64) * L
    return SparseRowMatrix(m, n, indptr, np.concatenate(col_blocks), np.concatenate(val_blocks))


def generate_lowerbound_dataset(n, L):
    """
    n/L column groups of L columns; group g contributes one all-ones row over its
    columns, repeated L times. Every within-group column pair has cosine exactly 1.
    """
    if n < 1 or L < 1 or n % L != 0:
        raise ParameterError(f"L={L} must divide n={n}")
    group = np.arange(n, dtype=np.int64) // L
    indices = (group[:, None] * L + np.arange(L, dtype=np.int64)[None, :]).ravel()
    indptr = np.arange(n + 1, dtype=np.int64) * L
    return SparseRowMatrix(n, n, indptr, indices, np.ones(n * L))


def matrix_from_spec(spec):
    """Build a matrix from a config dict: {"path": ...} or {"generator": "random"|"lowerbound", ...}."""
    try:
        if spec.get("path"):
            return load_matrix(spec["path"], spec.get("format"))
        generator = spec.get("generator", "random")
        if generator == "random":
            return generate_random_sparse(int(spec["m"]), int(spec["n"]), int(spec["L"]),
                                          spec.get("value_dist", "binary"), int(spec.get("seed", 0)))
        if generator == "lowerbound":
            return generate_lowerbound_dataset(int(spec["n"]), int(spec["L"]))
    except KeyError as e:
        raise ParameterError(f"Matrix spec is missing '{e.args[0]}'")
    raise ParameterError(f"Unknown generator '{generator}'")
