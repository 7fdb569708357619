"""
Mapper/reducer pairs for the Gram matrix A^T A:

- naive:  every pair of nonzeros in a row is emitted; reducer sums (raw dot products).
- dimsum: pair (j, k) is emitted with probability min(1, gamma / (||c_j|| ||c_k||));
          reducer rescales to an unbiased cosine estimate.
- lean:   one survival coin per (row, column) with probability min(1, sqrt(gamma)/||c_j||);
          surviving pairs carry pre-scaled values and the reducer is a plain sum.

All mappers emit the diagonal pair (j, j).
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src import logs
from src.config import DEFAULT_CALIBRATION_C
from src.errors import ContractError, ParameterError
from src.mr_engine import Emission, MapReduceEngine, RunStats, uniform_draws

KIND_GRAM = "gram"
KIND_COSINE = "cosine"
ALGORITHMS = ("naive", "dimsum", "lean")
SAMPLED_MODES = ("dimsum", "lean")


# -----------------------------------------------------------------------------
# TYPES
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class SamplingConfig:
    gamma: float
    mode: str = "dimsum"

    def __post_init__(self):
        gamma = float(self.gamma)
        if not math.isfinite(gamma) or gamma < 0:
            raise ParameterError(f"gamma must be a finite non-negative number, got {self.gamma}")
        if self.mode not in SAMPLED_MODES:
            raise ParameterError(f"mode must be one of {SAMPLED_MODES}, got '{self.mode}'")
        object.__setattr__(self, "gamma", gamma)

    @property
    def sqrt_gamma(self):
        return math.sqrt(self.gamma)


@dataclass(frozen=True)
class SimilarityMatrix:
    """
    Symmetric n x n reducer output B. ``kind`` is "gram" for raw dot products
    and "cosine" for normalized estimates (which are never clamped to [-1, 1]).
    """
    n: int
    entries: np.ndarray
    kind: str
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in (KIND_GRAM, KIND_COSINE):
            raise ContractError(f"Unknown similarity kind '{self.kind}'")
        entries = np.array(self.entries, dtype=np.float64, copy=True)
        if entries.shape != (self.n, self.n):
            raise ContractError(f"entries must be {self.n}x{self.n}, got {entries.shape}")
        if not np.array_equal(entries, entries.T):
            raise ContractError("similarity entries are not symmetric")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_upper(cls, upper, kind, metadata=None):
        """Mirror the j <= k triangle of ``upper``; the strict lower triangle is ignored."""
        upper = np.triu(np.asarray(upper, dtype=np.float64))
        return cls(upper.shape[0], upper + np.triu(upper, 1).T, kind, dict(metadata or {}))

    @classmethod
    def from_reduced(cls, output, n, kind, metadata=None):
        upper = np.zeros((n, n))
        for (j, k), value in output.items():
            upper[j, k] = value
        return cls.from_upper(upper, kind, metadata)


@dataclass
class PipelineResult:
    similarity: SimilarityMatrix
    stats: RunStats
    log: Optional[list] = None


# -----------------------------------------------------------------------------
# GAMMA POLICIES
# -----------------------------------------------------------------------------
def gamma_for_epsilon(n, epsilon, c=DEFAULT_CALIBRATION_C):
    """gamma = c * n / epsilon^2, the singular-value preserving oversampling."""
    if n < 1 or epsilon <= 0 or c <= 0:
        raise ParameterError(f"gamma_for_epsilon needs n >= 1, epsilon > 0, c > 0 (got {n}, {epsilon}, {c})")
    return c * n / epsilon ** 2


def gamma_for_threshold(alpha, epsilon):
    """gamma = alpha / epsilon, enough to estimate entries whose cosine is at least epsilon."""
    if alpha <= 0 or epsilon <= 0:
        raise ParameterError(f"gamma_for_threshold needs alpha > 0 and epsilon > 0 (got {alpha}, {epsilon})")
    return alpha / epsilon


def saturation_gamma(stats):
    """Smallest gamma at which every emission probability is 1 (both DIMSUM variants)."""
    return stats.max_norm ** 2


def emission_probability(gamma, norm_product):
    return np.minimum(1.0, gamma / norm_product)


# -----------------------------------------------------------------------------
# NAIVE
# -----------------------------------------------------------------------------
def _emit(cols_a, cols_b, values):
    return [Emission((int(j), int(k)), float(v)) for j, k, v in zip(cols_a, cols_b, values)]


def naive_map(row, row_index=None, rng=None):
    a, b = np.triu_indices(len(row.cols))
    return _emit(row.cols[a], row.cols[b], row.vals[a] * row.vals[b])


def naive_reduce(key, values):
    return key, sum(values)


# -----------------------------------------------------------------------------
# DIMSUM
# -----------------------------------------------------------------------------
def dimsum_map(row, row_index, cfg, stats, rng):
    """One uniform draw per pair, consumed even when the probability is 1."""
    a, b = np.triu_indices(len(row.cols))
    cols_a, cols_b = row.cols[a], row.cols[b]
    prob = emission_probability(cfg.gamma, stats.norms[cols_a] * stats.norms[cols_b])
    keep = rng.random(len(a)) < prob
    return _emit(cols_a[keep], cols_b[keep], (row.vals[a] * row.vals[b])[keep])


def dimsum_reduce(key, values, cfg, stats):
    i, j = key
    norm_product = stats.norms[i] * stats.norms[j]
    total = sum(values)
    if cfg.gamma / norm_product > 1:
        return key, total / norm_product
    return key, total / cfg.gamma


# -----------------------------------------------------------------------------
# LEAN DIMSUM
# -----------------------------------------------------------------------------
def lean_dimsum_map(row, row_index, cfg, stats, rng):
    """One survival coin per nonzero column of the row, shared by every pair it appears in."""
    norms = stats.norms[row.cols]
    root = cfg.sqrt_gamma
    survive = rng.random(len(row.cols)) < np.minimum(1.0, root / norms)
    cols = row.cols[survive]
    weighted = row.vals[survive] / np.minimum(root, norms[survive])
    a, b = np.triu_indices(len(cols))
    return _emit(cols[a], cols[b], weighted[a] * weighted[b])


# -----------------------------------------------------------------------------
# JOB DRIVERS
# -----------------------------------------------------------------------------
def run_naive(A, engine=None, keep_log=False):
    engine = engine or MapReduceEngine()
    job = engine.run_job(A, naive_map, naive_reduce, keep_log=keep_log)
    meta = {"algorithm": "naive", "kind": KIND_GRAM, "gamma": None, "seed": None}
    return PipelineResult(SimilarityMatrix.from_reduced(job.output, A.n_cols, KIND_GRAM, meta), job.stats, job.log)


def run_dimsum(A, cfg, stats, seed=0, engine=None, keep_log=False):
    engine = engine or MapReduceEngine()
    job = engine.run_job(
        A,
        lambda row, i, rng: dimsum_map(row, i, cfg, stats, rng),
        lambda key, values: dimsum_reduce(key, values, cfg, stats),
        master_seed=seed,
        keep_log=keep_log,
    )
    meta = {"algorithm": "dimsum", "kind": KIND_COSINE, "gamma": cfg.gamma, "seed": seed}
    return PipelineResult(SimilarityMatrix.from_reduced(job.output, A.n_cols, KIND_COSINE, meta), job.stats, job.log)


def run_lean(A, cfg, stats, seed=0, engine=None, keep_log=False):
    engine = engine or MapReduceEngine()
    job = engine.run_job(
        A,
        lambda row, i, rng: lean_dimsum_map(row, i, cfg, stats, rng),
        naive_reduce,
        master_seed=seed,
        keep_log=keep_log,
    )
    meta = {"algorithm": "lean", "kind": KIND_COSINE, "gamma": cfg.gamma, "seed": seed}
    return PipelineResult(SimilarityMatrix.from_reduced(job.output, A.n_cols, KIND_COSINE, meta), job.stats, job.log)


def run_pipeline(A, algorithm, stats=None, gamma=None, seed=0, engine=None, keep_log=False):
    if algorithm == "naive":
        return run_naive(A, engine, keep_log)
    if algorithm not in SAMPLED_MODES:
        raise ParameterError(f"algorithm must be one of {ALGORITHMS}, got '{algorithm}'")
    if stats is None or gamma is None:
        raise ParameterError(f"algorithm '{algorithm}' needs column stats and gamma")
    cfg = SamplingConfig(gamma, algorithm)
    driver = run_dimsum if algorithm == "dimsum" else run_lean
    return driver(A, cfg, stats, seed, engine, keep_log)


# -----------------------------------------------------------------------------
# VECTORIZED MAP PHASE
# -----------------------------------------------------------------------------
@dataclass
class SampledJob:
    entries: np.ndarray      # symmetric n x n estimate
    key_counts: np.ndarray   # values per key, n x n upper triangle
    stats: RunStats


class PairSampler:
    """
    Whole-matrix version of the DIMSUM / Lean map phases for Monte Carlo work.

    The pair table (every j <= k pair of every row, row-major) is built once;
    each trial then draws from the same per-row streams the engine mappers use,
    so a trial with seed s emits exactly what run_dimsum / run_lean with
    seed s would emit, in the same order.
    """

    def __init__(self, A, stats):
        self.n = A.n_cols
        self.n_rows = A.n_rows
        self.norms = np.asarray(stats.norms, dtype=np.float64)
        self.nz_row = A.row_ids()
        self.nz_slot = np.arange(A.nnz, dtype=np.int64) - A.indptr[self.nz_row]
        self.nz_col = A.indices
        self.nz_val = A.values

        firsts, seconds, rows, slots = [], [], [], []
        row_nnz = A.row_nnz
        for t in np.unique(row_nnz[row_nnz > 0]):
            members = np.flatnonzero(row_nnz == t)
            a, b = np.triu_indices(int(t))
            starts = A.indptr[members][:, None]
            firsts.append((starts + a[None, :]).ravel())
            seconds.append((starts + b[None, :]).ravel())
            rows.append(np.repeat(members, a.shape[0]))
            slots.append(np.tile(np.arange(a.shape[0], dtype=np.int64), members.shape[0]))

        def _cat(parts):
            return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)

        first, second, row, slot = _cat(firsts), _cat(seconds), _cat(rows), _cat(slots)
        order = np.lexsort((slot, row))
        self.pair_first = first[order]
        self.pair_second = second[order]
        self.pair_row = row[order]
        self.pair_slot = slot[order]
        j, k = self.nz_col[self.pair_first], self.nz_col[self.pair_second]
        self.pair_key = j * self.n + k
        self.pair_value = self.nz_val[self.pair_first] * self.nz_val[self.pair_second]
        self.pair_norm_product = self.norms[j] * self.norms[k]
        self._key_norm_product = np.outer(self.norms, self.norms).ravel()
        self._entry_cache = {}
        logs.debug(f"PairSampler: {self.pair_key.shape[0]} candidate pairs over {self.n_rows} rows")

    @property
    def naive_shuffle_size(self):
        return int(self.pair_key.shape[0])

    def _finish(self, keys, sums):
        n = self.n
        counts = np.bincount(keys, minlength=n * n).reshape(n, n)
        upper = sums.reshape(n, n)
        entries = upper + np.triu(upper, 1).T
        return SampledJob(entries, counts, RunStats.from_key_counts(counts.ravel(), self.n_rows))

    def dimsum_trial(self, gamma, seed):
        draws = uniform_draws(seed, self.pair_row, self.pair_slot)
        keep = draws < emission_probability(gamma, self.pair_norm_product)
        keys = self.pair_key[keep]
        n2 = self.n * self.n
        sums = np.bincount(keys, weights=self.pair_value[keep], minlength=n2)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(gamma / self._key_norm_product > 1, self._key_norm_product, gamma)
        estimate = np.zeros(n2)
        np.divide(sums, scale, out=estimate, where=sums != 0)
        return self._finish(keys, estimate)

    def _lean_weights(self, gamma, seed, positions):
        root = math.sqrt(gamma)
        norms = self.norms[self.nz_col[positions]]
        draws = uniform_draws(seed, self.nz_row[positions], self.nz_slot[positions])
        survive = draws < np.minimum(1.0, root / norms)
        with np.errstate(divide="ignore", invalid="ignore"):
            weighted = self.nz_val[positions] / np.minimum(root, norms)
        return survive, weighted

    def lean_trial(self, gamma, seed):
        survive, weighted = self._lean_weights(gamma, seed, slice(None))
        keep = survive[self.pair_first] & survive[self.pair_second]
        first, second = self.pair_first[keep], self.pair_second[keep]
        keys = self.pair_key[keep]
        sums = np.bincount(keys, weights=weighted[first] * weighted[second], minlength=self.n * self.n)
        return self._finish(keys, sums)

    def trial(self, mode, gamma, seed):
        if mode == "dimsum":
            return self.dimsum_trial(gamma, seed)
        if mode == "lean":
            return self.lean_trial(gamma, seed)
        raise ParameterError(f"mode must be one of {SAMPLED_MODES}, got '{mode}'")

    def _entry_pairs(self, i, j):
        key = (min(i, j), max(i, j))
        if key not in self._entry_cache:
            self._entry_cache[key] = np.flatnonzero(self.pair_key == key[0] * self.n + key[1])
        return key, self._entry_cache[key]

    def sample_entry(self, i, j, mode, gamma, seed):
        """b_ij alone, drawing only the random numbers that entry depends on."""
        (i, j), idx = self._entry_pairs(i, j)
        if mode == "dimsum":
            draws = uniform_draws(seed, self.pair_row[idx], self.pair_slot[idx])
            total = float(self.pair_value[idx][draws < emission_probability(gamma, self.pair_norm_product[idx])].sum())
            norm_product = self.norms[i] * self.norms[j]
            return total / norm_product if gamma / norm_product > 1 else total / gamma
        if mode == "lean":
            firsts, seconds = self.pair_first[idx], self.pair_second[idx]
            s_first, w_first = self._lean_weights(gamma, seed, firsts)
            s_second, w_second = self._lean_weights(gamma, seed, seconds)
            keep = s_first & s_second
            return float((w_first[keep] * w_second[keep]).sum())
        raise ParameterError(f"mode must be one of {SAMPLED_MODES}, got '{mode}'")
