"""
Dense linear algebra around the n x n Gram matrix: exact oracles, DBD
un-normalization, spectral norm, symmetric eigendecomposition and singular
value recovery (A^T A = V Sigma^2 V^T).
"""
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from src import logs
from src.config import DENSE_GUARD, JACOBI_MAX_SWEEPS, JACOBI_TOL, POWER_MAX_ITER, POWER_TOL
from src.errors import CapacityError, ContractError, DegenerateInputError, NumericError
from src.pipelines import KIND_COSINE, SimilarityMatrix


@dataclass(frozen=True)
class DenseSymmetric:
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ContractError(f"expected a square matrix, got shape {values.shape}")
        if not np.array_equal(values, values.T):
            raise ContractError("matrix is not exactly symmetric")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self):
        return int(self.values.shape[0])

    @classmethod
    def from_upper(cls, upper):
        upper = np.triu(np.asarray(upper, dtype=np.float64))
        return cls(upper + np.triu(upper, 1).T)


@dataclass(frozen=True)
class EigenResult:
    eigenvalues: np.ndarray    # descending
    eigenvectors: np.ndarray   # orthonormal columns


@dataclass(frozen=True)
class SvdResult:
    sigma: np.ndarray
    V: np.ndarray
    clamped_negative: int


def _guard(n):
    if n > DENSE_GUARD:
        raise CapacityError(f"n={n} exceeds the dense guard of {DENSE_GUARD}")


# -----------------------------------------------------------------------------
# ORACLES
# -----------------------------------------------------------------------------
def exact_gram(A):
    """A^T A accumulated row by row in float64."""
    _guard(A.n_cols)
    gram = np.zeros((A.n_cols, A.n_cols))
    for row in A.rows():
        if len(row.cols):
            gram[np.ix_(row.cols, row.cols)] += np.outer(row.vals, row.vals)
    return DenseSymmetric(gram)


def cosine_oracle(A):
    """Exact cosine matrix D^-1 A^T A D^-1; zero columns get zero rows."""
    gram = exact_gram(A).values
    norms = np.sqrt(np.diag(gram))
    denom = np.outer(norms, norms)
    cosine = np.zeros_like(gram)
    np.divide(gram, denom, out=cosine, where=denom > 0)
    return cosine


def co_occurrence(A):
    """#(j, k): number of rows where columns j and k are both nonzero."""
    _guard(A.n_cols)
    pattern = A.to_scipy().copy()
    pattern.data[:] = 1.0
    return np.rint((pattern.T @ pattern).toarray()).astype(np.int64)


# -----------------------------------------------------------------------------
# UN-NORMALIZATION
# -----------------------------------------------------------------------------
def with_exact_diagonal(B):
    """Replace b_jj by 1, the exact cosine of a column with itself."""
    if B.kind != KIND_COSINE:
        raise ContractError(f"exact diagonal only applies to cosine output, got kind '{B.kind}'")
    entries = np.array(B.entries)
    np.fill_diagonal(entries, 1.0)
    return SimilarityMatrix(B.n, entries, B.kind, {**B.metadata, "exact_diagonal": True})


def unnormalize(B, stats, exact_diagonal=True):
    """DBD with d_ii = ||c_i||: turns a cosine estimate back into an estimate of A^T A."""
    if B.kind != KIND_COSINE:
        raise ContractError(f"unnormalize expects a cosine similarity matrix, got kind '{B.kind}'")
    if B.n != stats.n:
        raise ContractError(f"B is {B.n}x{B.n} but stats describe {stats.n} columns")
    if exact_diagonal:
        B = with_exact_diagonal(B)
    norms = np.asarray(stats.norms)
    return DenseSymmetric(B.entries * np.outer(norms, norms))


# -----------------------------------------------------------------------------
# SPECTRAL NORM
# -----------------------------------------------------------------------------
def _power_run(M, start, tol, max_iter):
    x = start / np.linalg.norm(start)
    sigma = 0.0
    for _ in range(max_iter):
        y = M @ x
        sigma_new = float(np.linalg.norm(y))
        if sigma_new == 0.0:
            return 0.0
        if abs(sigma_new - sigma) <= tol * sigma_new:
            return sigma_new
        sigma = sigma_new
        x = y / sigma_new
    raise NumericError(f"power iteration did not converge in {max_iter} iterations "
                       f"(last estimate {sigma:.6g})", last_iterate=x)


def spectral_norm(M, tol=POWER_TOL, max_iter=POWER_MAX_ITER):
    """
    max |eigenvalue| of a symmetric matrix by power iteration.

    The estimate at iterate x is ||M x|| (square root of the Rayleigh quotient
    of M^2), which converges even when +lambda and -lambda tie. Runs from the
    normalized all-ones vector and from one fixed perturbed start, in case the
    first is orthogonal to the dominant eigenvector, and keeps the larger value.
    """
    values = M.values if isinstance(M, DenseSymmetric) else np.asarray(M, dtype=np.float64)
    n = values.shape[0]
    if n == 0:
        return 0.0
    first = _power_run(values, np.ones(n), tol, max_iter)
    retry = _power_run(values, 1.0 + 0.5 * np.sin(np.arange(1, n + 1)), tol, max_iter)
    if abs(retry - first) > 1e-8 * max(retry, first):
        logs.debug(f"spectral_norm: perturbed start moved the estimate {first:.12g} -> {retry:.12g}")
    return max(first, retry)


# -----------------------------------------------------------------------------
# EIGENDECOMPOSITION
# -----------------------------------------------------------------------------
def _jacobi(values, tol, max_sweeps):
    a = np.array(values, dtype=np.float64)
    n = a.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.diag(a).copy(), V
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off < tol * scale:
            return np.diag(a).copy(), V
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p], a[:, q] = c * col_p - s * col_q, s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :], a[q, :] = c * row_p - s * row_q, s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                v_p, v_q = V[:, p].copy(), V[:, q].copy()
                V[:, p], V[:, q] = c * v_p - s * v_q, s * v_p + c * v_q
    raise NumericError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps", last_iterate=a)


def symmetric_eig(M, method="eigh", tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """
    Eigenvalues (descending) and orthonormal eigenvectors of a symmetric matrix.
    :param method: "eigh" (LAPACK) or "jacobi" (cyclic Jacobi rotations, O(n^3)
                   per sweep in Python loops; meant for n up to a few hundred)
    """
    values = M.values if isinstance(M, DenseSymmetric) else DenseSymmetric(M).values
    _guard(values.shape[0])
    if method == "eigh":
        w, V = np.linalg.eigh(values)
    elif method == "jacobi":
        w, V = _jacobi(values, tol, max_sweeps)
    else:
        raise ContractError(f"Unknown eigensolver '{method}'")

    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    # Deterministic signs: largest-magnitude component of each vector is positive.
    if V.size:
        pivots = np.argmax(np.abs(V), axis=0)
        signs = np.sign(V[pivots, np.arange(V.shape[1])])
        signs[signs == 0] = 1.0
        V = V * signs
    return EigenResult(w, V)


def eigen_diagnostics(M, result):
    """Largest eigenpair residual relative to ||M||_2, and max |V^T V - I|."""
    values = M.values if isinstance(M, DenseSymmetric) else np.asarray(M)
    V, w = result.eigenvectors, result.eigenvalues
    norm = max(float(np.max(np.abs(w))) if w.size else 0.0, np.finfo(float).tiny)
    residual = np.linalg.norm(values @ V - V * w, axis=0).max() / norm if w.size else 0.0
    ortho = np.abs(V.T @ V - np.eye(V.shape[1])).max() if w.size else 0.0
    return {"max_residual": float(residual), "orthogonality_error": float(ortho)}


def recover_singular_values(G, method="eigh"):
    """
    sigma_i = sqrt(max(lambda_i, 0)) and V from the eigendecomposition of a
    Gram estimate. Negative eigenvalues come from sampling noise; they are
    clamped here and counted.
    """
    eig = symmetric_eig(G, method=method)
    negative = int(np.count_nonzero(eig.eigenvalues < 0))
    if negative:
        logs.warn(f"Clamped {negative} negative eigenvalue(s) of the Gram estimate to zero.")
    return SvdResult(np.sqrt(np.maximum(eig.eigenvalues, 0.0)), eig.eigenvectors, negative)


def relative_spectral_error(estimate, truth):
    """||estimate - truth||_2 / ||truth||_2 on the raw (unclamped) matrices."""
    if estimate.n != truth.n:
        raise ContractError(f"size mismatch: {estimate.n} vs {truth.n}")
    truth_norm = spectral_norm(truth)
    if truth_norm == 0.0:
        raise DegenerateInputError("relative error against a zero matrix is undefined")
    return spectral_norm(DenseSymmetric(estimate.values - truth.values)) / truth_norm


# -----------------------------------------------------------------------------
# DENSE TSV I/O
# -----------------------------------------------------------------------------
def write_dense_tsv(values, path):
    pd.DataFrame(np.asarray(values)).to_csv(path, sep="\t", header=False, index=False, float_format="%.17g")
    return path


def read_dense_tsv(path):
    try:
        return pd.read_csv(path, sep="\t", header=None, dtype=np.float64, float_precision="round_trip").to_numpy()
    except (OSError, ValueError) as e:
        raise ContractError(f"Could not read dense matrix '{path}': {e}")


MM_SYMMETRIC_HEADER = "%%MatrixMarket matrix coordinate real symmetric"


def write_similarity(B, path):
    """
    Write a SimilarityMatrix: ``.mtx`` as MatrixMarket symmetric coordinate
    (lower triangle, 1-based, zeros omitted), anything else as dense TSV.
    """
    if os.path.splitext(path)[1].lower() in (".mtx", ".mm"):
        rows, cols = np.nonzero(np.tril(B.entries))
        with open(path, 'w', encoding='utf-8', newline="\n") as f:
            f.write(MM_SYMMETRIC_HEADER + "\n")
            f.write(f"% kind={B.kind}\n")
            f.write(f"{B.n} {B.n} {rows.shape[0]}\n")
            for i, j in zip(rows, cols):
                f.write(f"{i + 1} {j + 1} {float(B.entries[i, j])!r}\n")
        return path
    return write_dense_tsv(B.entries, path)
