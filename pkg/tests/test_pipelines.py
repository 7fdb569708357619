import numpy as np
import pytest

from src.errors import ContractError, ParameterError
from src.matrix_core import (ColumnStats, SparseRow, SparseRowMatrix, column_stats, generate_random_sparse,
                             scale_entries)
from src.mr_engine import RngStream, derive_seed
from src.pipelines import (KIND_COSINE, KIND_GRAM, PairSampler, SamplingConfig, SimilarityMatrix, dimsum_map,
                           dimsum_reduce, emission_probability, gamma_for_epsilon, gamma_for_threshold,
                           lean_dimsum_map, naive_map, naive_reduce, run_dimsum, run_lean, run_naive,
                           run_pipeline, saturation_gamma)
from src.spectral import cosine_oracle, exact_gram


def _row(cols, vals):
    return SparseRow(np.array(cols, dtype=np.int64), np.array(vals, dtype=np.float64))


# -----------------------------------------------------------------------------
# NAIVE
# -----------------------------------------------------------------------------
def test_naive_map_pairs():
    emitted = naive_map(_row([0, 1], [1.0, 1.0]), 0)
    assert [(e.key, e.value) for e in emitted] == [((0, 0), 1.0), ((0, 1), 1.0), ((1, 1), 1.0)]


def test_naive_map_empty_row():
    assert naive_map(_row([], []), 0) == []


def test_naive_reduce():
    assert naive_reduce((0, 1), [1.0, 1.0, 0.5]) == ((0, 1), 2.5)
    assert naive_reduce((2, 2), [0.3]) == ((2, 2), 0.3)


def test_naive_pipeline_identity(identity3):
    result = run_naive(identity3)
    np.testing.assert_array_equal(result.similarity.entries, np.eye(3))
    assert result.similarity.kind == KIND_GRAM
    assert result.stats.shuffle_size == 3
    assert result.stats.distinct_keys == 3


def test_naive_pipeline_matches_gram_oracle():
    A = generate_random_sparse(100, 10, 5, "uniform01", seed=17)
    result = run_naive(A)
    np.testing.assert_allclose(result.similarity.entries, exact_gram(A).values, rtol=1e-12)
    assert result.stats.shuffle_size == 100 * 15


@pytest.mark.slow
def test_naive_pipeline_oracle_equivalence_many():
    rng = np.random.default_rng(123)
    for k in range(50):
        n = int(rng.integers(2, 51))
        L = int(rng.integers(1, min(n, 10) + 1))
        m = int(rng.integers(1, 501))
        A = generate_random_sparse(m, n, L, "uniform01", seed=k)
        truth = exact_gram(A).values
        np.testing.assert_allclose(run_naive(A).similarity.entries, truth, rtol=1e-12, atol=1e-12 * truth.max())


# -----------------------------------------------------------------------------
# DIMSUM
# -----------------------------------------------------------------------------
def test_dimsum_reduce_branches():
    cfg = SamplingConfig(100.0)
    assert dimsum_reduce((0, 1), [1.0, 2.0], cfg, ColumnStats.from_norms([2.0, 2.0])) == ((0, 1), 0.75)
    cfg = SamplingConfig(1.0)
    assert dimsum_reduce((0, 1), [0.5], cfg, ColumnStats.from_norms([10.0, 10.0])) == ((0, 1), 0.5)


def test_dimsum_map_saturated_matches_naive(small_binary, small_binary_stats):
    cfg = SamplingConfig(saturation_gamma(small_binary_stats))
    for i in range(20):
        row = small_binary.row(i)
        assert dimsum_map(row, i, cfg, small_binary_stats, RngStream(0, i)) == naive_map(row, i)


def test_dimsum_map_consumes_one_draw_per_pair(small_binary, small_binary_stats):
    rng = RngStream(0, 0)
    dimsum_map(small_binary.row(0), 0, SamplingConfig(1e9), small_binary_stats, rng)
    assert rng.consumed == 4 * 5 // 2


def test_dimsum_gamma_zero_emits_nothing(small_binary, small_binary_stats):
    result = run_dimsum(small_binary, SamplingConfig(0.0), small_binary_stats, seed=1)
    assert result.stats.shuffle_size == 0
    assert not result.similarity.entries.any()


@pytest.mark.parametrize("driver", [run_dimsum, run_lean])
def test_saturated_runs_reproduce_cosines(small_uniform, driver):
    scaled, _ = scale_entries(small_uniform)
    stats = column_stats(scaled)
    cfg = SamplingConfig(saturation_gamma(stats) * 1.01, "dimsum" if driver is run_dimsum else "lean")
    oracle = cosine_oracle(scaled)
    for seed in (1, 2):
        B = driver(scaled, cfg, stats, seed=seed).similarity
        assert B.kind == KIND_COSINE
        np.testing.assert_allclose(B.entries, oracle, atol=1e-10)


@pytest.mark.slow
def test_dimsum_acceptance_frequency():
    # Columns 0 and 1 share one row; ||c_0||^2 = 4, ||c_1||^2 = 9, gamma = 3 -> p = 0.5
    dense = np.zeros((12, 2))
    dense[0] = 1.0
    dense[1:4, 0] = 1.0
    dense[4:12, 1] = 1.0
    A = SparseRowMatrix.from_dense(dense)
    stats = column_stats(A)
    sampler = PairSampler(A, stats)
    gamma = 3.0
    p = float(emission_probability(gamma, stats.norms[0] * stats.norms[1]))
    assert p == pytest.approx(0.5)

    trials = 100_000
    hits = sum(sampler.sample_entry(0, 1, "dimsum", gamma, derive_seed(8, t)) * gamma for t in range(trials))
    freq = hits / trials
    assert abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / trials)


def _unbiased_check(A, mode, gamma, trials):
    stats = column_stats(A)
    sampler = PairSampler(A, stats)
    samples = np.array([sampler.trial(mode, gamma, derive_seed(99, t)).entries for t in range(trials)])
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(trials)
    oracle = cosine_oracle(A)
    off = ~np.eye(A.n_cols, dtype=bool)
    gap = np.abs(mean - oracle)[off]
    se = se[off]
    assert np.all(np.where(se > 0, gap <= 4 * se, gap <= 1e-12))


@pytest.mark.slow
@pytest.mark.parametrize("mode", ["dimsum", "lean"])
def test_entries_are_unbiased(mode):
    A = generate_random_sparse(200, 8, 3, "binary", seed=31)
    _unbiased_check(A, mode, gamma=10.0, trials=10_000)


# -----------------------------------------------------------------------------
# LEAN DIMSUM
# -----------------------------------------------------------------------------
def test_lean_single_nonzero_row_emits_diagonal_only():
    stats = ColumnStats.from_norms([1.0, 3.0, 2.0])
    out = lean_dimsum_map(_row([1], [0.5]), 0, SamplingConfig(100.0, "lean"), stats, RngStream(0, 0))
    assert [e.key for e in out] == [(1, 1)]
    assert out[0].value == pytest.approx(0.25 / 9.0)


def test_lean_draws_one_coin_per_column(small_binary, small_binary_stats):
    rng = RngStream(4, 0)
    lean_dimsum_map(small_binary.row(0), 0, SamplingConfig(2.0, "lean"), small_binary_stats, rng)
    assert rng.consumed == 4


# -----------------------------------------------------------------------------
# VECTORIZED MAP PHASE
# -----------------------------------------------------------------------------
@pytest.mark.parametrize("mode,gamma", [("dimsum", 5.0), ("dimsum", 40.0), ("lean", 5.0), ("lean", 40.0)])
def test_pair_sampler_reproduces_engine(small_uniform, mode, gamma):
    scaled, _ = scale_entries(small_uniform)
    stats = column_stats(scaled)
    sampler = PairSampler(scaled, stats)
    for seed in (0, 7, 123456789):
        engine = run_pipeline(scaled, mode, stats, gamma, seed)
        fast = sampler.trial(mode, gamma, seed)
        np.testing.assert_array_equal(fast.entries, engine.similarity.entries)
        assert fast.stats.shuffle_size == engine.stats.shuffle_size
        assert fast.stats.distinct_keys == engine.stats.distinct_keys
        assert fast.stats.reduce_key_max == engine.stats.reduce_key_max


@pytest.mark.parametrize("mode", ["dimsum", "lean"])
def test_sample_entry_matches_full_trial(small_binary, small_binary_stats, mode):
    sampler = PairSampler(small_binary, small_binary_stats)
    for seed in (1, 2, 3):
        full = sampler.trial(mode, 6.0, seed).entries
        assert sampler.sample_entry(2, 5, mode, 6.0, seed) == pytest.approx(full[2, 5], rel=1e-12, abs=1e-15)
        assert sampler.sample_entry(5, 2, mode, 6.0, seed) == pytest.approx(full[2, 5], rel=1e-12, abs=1e-15)


def test_pair_sampler_naive_shuffle(small_binary, small_binary_stats):
    assert PairSampler(small_binary, small_binary_stats).naive_shuffle_size == run_naive(small_binary).stats.shuffle_size


# -----------------------------------------------------------------------------
# CONFIG & TYPES
# -----------------------------------------------------------------------------
def test_gamma_policies():
    assert gamma_for_epsilon(40, 0.5, 4.0) == 640.0
    assert gamma_for_threshold(20.0, 0.5) == 40.0
    with pytest.raises(ParameterError):
        gamma_for_epsilon(40, 0.0)
    with pytest.raises(ParameterError):
        gamma_for_threshold(20.0, -1.0)


def test_sampling_config_validation():
    assert SamplingConfig(9.0, "lean").sqrt_gamma == 3.0
    with pytest.raises(ParameterError):
        SamplingConfig(-1.0)
    with pytest.raises(ParameterError):
        SamplingConfig(float("nan"))
    with pytest.raises(ParameterError):
        SamplingConfig(1.0, "naive")


def test_similarity_matrix_rejects_asymmetry():
    with pytest.raises(ContractError):
        SimilarityMatrix(2, np.array([[1.0, 0.5], [0.4, 1.0]]), KIND_COSINE)


def test_similarity_matrix_mirrors_upper():
    B = SimilarityMatrix.from_reduced({(0, 1): 0.5, (1, 1): 2.0}, 2, KIND_GRAM)
    assert B.entries[1, 0] == 0.5
    assert B.entries[0, 0] == 0.0


def test_run_pipeline_requires_gamma(small_binary):
    with pytest.raises(ParameterError):
        run_pipeline(small_binary, "dimsum")
    with pytest.raises(ParameterError):
        run_pipeline(small_binary, "jaccard")
