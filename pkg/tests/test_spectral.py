import numpy as np
import pytest
from scipy import io as spio

from src.errors import CapacityError, ContractError, DegenerateInputError, NumericError
from src.matrix_core import ColumnStats, SparseRowMatrix, column_stats, generate_random_sparse, scale_entries
from src.pipelines import (KIND_COSINE, KIND_GRAM, SamplingConfig, SimilarityMatrix, run_dimsum,
                           saturation_gamma)
from src.spectral import (DenseSymmetric, co_occurrence, cosine_oracle, eigen_diagnostics, exact_gram,
                          read_dense_tsv, recover_singular_values, relative_spectral_error, spectral_norm,
                          symmetric_eig, unnormalize, with_exact_diagonal, write_dense_tsv, write_similarity)


def _random_symmetric(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, n))
    return DenseSymmetric(x + x.T)


def _gapped_symmetric(n, seed):
    # Q diag(w) Q^T with |w_1| at least twice every other |w_i|.
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    w = np.concatenate([[-10.0], rng.uniform(-5.0, 5.0, size=n - 1)])
    m = (q * w) @ q.T
    return DenseSymmetric((m + m.T) / 2.0)


# -----------------------------------------------------------------------------
# ORACLES
# -----------------------------------------------------------------------------
def test_exact_gram_examples():
    np.testing.assert_array_equal(exact_gram(SparseRowMatrix.from_dense(np.eye(3))).values, np.eye(3))
    np.testing.assert_array_equal(exact_gram(SparseRowMatrix.from_dense([[1, 0], [1, 1]])).values,
                                  [[2, 1], [1, 1]])
    np.testing.assert_array_equal(exact_gram(SparseRowMatrix.from_dense(np.ones((5, 3)))).values,
                                  np.full((3, 3), 5.0))


@pytest.mark.parametrize("seed", range(5))
def test_gram_norm_at_least_largest_column_norm_squared(seed):
    A = generate_random_sparse(300, 15, 4, "uniform01", seed=seed)
    gram = exact_gram(A)
    c_star = np.sqrt(np.diag(gram.values)).max()
    assert spectral_norm(gram) >= c_star ** 2 * (1 - 1e-9)


def test_exact_gram_capacity_guard():
    A = SparseRowMatrix(1, 10_001, [0, 0], [], [])
    with pytest.raises(CapacityError):
        exact_gram(A)


def test_co_occurrence_matches_pattern_product(small_uniform):
    pattern = (small_uniform.to_dense() != 0).astype(np.int64)
    np.testing.assert_array_equal(co_occurrence(small_uniform), pattern.T @ pattern)


def test_cosine_oracle_zero_column():
    cos = cosine_oracle(SparseRowMatrix.from_dense([[1.0, 0.0, 1.0], [1.0, 0.0, 0.0]]))
    assert cos[1].tolist() == [0.0, 0.0, 0.0]
    assert cos[0, 2] == pytest.approx(1 / np.sqrt(2))


# -----------------------------------------------------------------------------
# UN-NORMALIZATION
# -----------------------------------------------------------------------------
def test_unnormalize_identity():
    B = SimilarityMatrix(2, np.eye(2), KIND_COSINE)
    np.testing.assert_array_equal(unnormalize(B, ColumnStats.from_norms([2.0, 3.0])).values, np.diag([4.0, 9.0]))


def test_unnormalize_unit_norms_returns_b():
    entries = np.array([[0.9, 0.3, -0.2], [0.3, 1.1, 0.0], [-0.2, 0.0, 1.0]])
    B = SimilarityMatrix(3, entries, KIND_COSINE)
    out = unnormalize(B, ColumnStats.from_norms(np.ones(3)), exact_diagonal=False)
    np.testing.assert_array_equal(out.values, entries)


def test_exact_diagonal_flag():
    B = SimilarityMatrix(2, [[0.8, 0.1], [0.1, 1.3]], KIND_COSINE)
    fixed = with_exact_diagonal(B)
    np.testing.assert_array_equal(np.diag(fixed.entries), [1.0, 1.0])
    assert fixed.metadata["exact_diagonal"] is True
    np.testing.assert_array_equal(np.diag(unnormalize(B, ColumnStats.from_norms([1.0, 1.0])).values), [1.0, 1.0])


def test_unnormalize_kind_mismatch():
    with pytest.raises(ContractError):
        unnormalize(SimilarityMatrix(1, [[1.0]], KIND_GRAM), ColumnStats.from_norms([1.0]))


def test_saturated_dimsum_unnormalizes_to_gram(small_uniform):
    scaled, _ = scale_entries(small_uniform)
    stats = column_stats(scaled)
    B = run_dimsum(scaled, SamplingConfig(saturation_gamma(stats)), stats, seed=5).similarity
    truth = exact_gram(scaled)
    np.testing.assert_allclose(unnormalize(B, stats).values, truth.values, rtol=1e-12, atol=1e-12)
    assert relative_spectral_error(unnormalize(B, stats), truth) <= 1e-10


def test_submultiplicativity_spot_check():
    rng = np.random.default_rng(6)
    for seed in range(5):
        X = _random_symmetric(12, seed).values
        d = rng.uniform(0.1, 3.0, size=12)
        DXD = X * np.outer(d, d)
        assert np.linalg.norm(DXD, 2) <= d.max() ** 2 * np.linalg.norm(X, 2) * (1 + 1e-12)


# -----------------------------------------------------------------------------
# SPECTRAL NORM
# -----------------------------------------------------------------------------
def test_spectral_norm_examples():
    assert spectral_norm(DenseSymmetric(np.eye(4))) == pytest.approx(1.0)
    assert spectral_norm(DenseSymmetric(np.diag([3.0, 1.0]))) == pytest.approx(3.0, rel=1e-9)
    assert spectral_norm(DenseSymmetric(np.zeros((3, 3)))) == 0.0


@pytest.mark.parametrize("seed", range(3))
def test_spectral_norm_matches_eigendecomposition(seed):
    M = _gapped_symmetric(20, seed)
    expected = np.abs(np.linalg.eigvalsh(M.values)).max()
    assert spectral_norm(M) == pytest.approx(expected, rel=1e-8)


def test_spectral_norm_plus_minus_tie():
    assert spectral_norm(DenseSymmetric(np.diag([2.0, -2.0, 1.0]))) == pytest.approx(2.0, rel=1e-9)


def test_spectral_norm_retries_when_ones_is_orthogonal():
    # Dominant eigenvector (1, -1); the all-ones start lies in the null space.
    M = DenseSymmetric([[1.0, -1.0], [-1.0, 1.0]])
    assert spectral_norm(M) == pytest.approx(2.0, rel=1e-9)


def test_spectral_norm_iteration_cap():
    with pytest.raises(NumericError) as exc:
        spectral_norm(DenseSymmetric(np.diag([3.0, 1.0])), max_iter=1)
    assert exc.value.last_iterate is not None


# -----------------------------------------------------------------------------
# EIGENDECOMPOSITION
# -----------------------------------------------------------------------------
@pytest.mark.parametrize("method", ["eigh", "jacobi"])
def test_symmetric_eig_diagonal(method):
    result = symmetric_eig(DenseSymmetric(np.diag([1.0, 5.0, 2.0])), method=method)
    np.testing.assert_allclose(result.eigenvalues, [5.0, 2.0, 1.0])
    np.testing.assert_allclose(np.abs(result.eigenvectors), np.eye(3)[:, [1, 2, 0]], atol=1e-12)


@pytest.mark.parametrize("method", ["eigh", "jacobi"])
def test_symmetric_eig_two_by_two(method):
    result = symmetric_eig(DenseSymmetric([[2.0, 1.0], [1.0, 2.0]]), method=method)
    np.testing.assert_allclose(result.eigenvalues, [3.0, 1.0], rtol=1e-12)


@pytest.mark.parametrize("method", ["eigh", "jacobi"])
def test_symmetric_eig_reconstruction(method):
    M = _random_symmetric(30, 11)
    result = symmetric_eig(M, method=method)
    V, w = result.eigenvectors, result.eigenvalues
    assert np.all(np.diff(w) <= 0)
    assert np.abs(V @ np.diag(w) @ V.T - M.values).max() <= 1e-9 * np.abs(M.values).max()
    diag = eigen_diagnostics(M, result)
    assert diag["max_residual"] <= 1e-8
    assert diag["orthogonality_error"] <= 1e-10


def test_jacobi_agrees_with_eigh():
    M = _random_symmetric(25, 3)
    np.testing.assert_allclose(symmetric_eig(M, "jacobi").eigenvalues, symmetric_eig(M, "eigh").eigenvalues,
                               rtol=1e-10, atol=1e-10)


def test_symmetric_eig_rejects_bad_input():
    with pytest.raises(ContractError):
        symmetric_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ContractError):
        symmetric_eig(DenseSymmetric(np.eye(2)), method="qr")


def test_jacobi_sweep_cap():
    with pytest.raises(NumericError):
        symmetric_eig(_random_symmetric(10, 1), method="jacobi", max_sweeps=1)


# -----------------------------------------------------------------------------
# SINGULAR VALUES & ERRORS
# -----------------------------------------------------------------------------
def test_recover_identity():
    svd = recover_singular_values(exact_gram(SparseRowMatrix.from_dense(np.eye(3))))
    np.testing.assert_allclose(svd.sigma, [1.0, 1.0, 1.0])
    assert svd.clamped_negative == 0


def test_recover_diagonal():
    svd = recover_singular_values(exact_gram(SparseRowMatrix.from_dense(np.diag([2.0, 1.0]))))
    np.testing.assert_allclose(svd.sigma, [2.0, 1.0])


def test_recover_matches_dense_svd():
    A = generate_random_sparse(200, 20, 6, "uniform01", seed=14)
    svd = recover_singular_values(exact_gram(A))
    np.testing.assert_allclose(svd.sigma, np.linalg.svd(A.to_dense(), compute_uv=False), rtol=1e-8)
    jacobi = recover_singular_values(exact_gram(A), method="jacobi")
    np.testing.assert_allclose(jacobi.sigma, svd.sigma, rtol=1e-8)


def test_recover_clamps_negative():
    svd = recover_singular_values(DenseSymmetric(np.diag([4.0, -1e-3])))
    np.testing.assert_array_equal(svd.sigma, [2.0, 0.0])
    assert svd.clamped_negative == 1


def test_relative_error_examples():
    truth = _gapped_symmetric(8, 2)
    assert relative_spectral_error(truth, truth) == 0.0
    scaled = DenseSymmetric(truth.values * 1.25)
    assert relative_spectral_error(scaled, truth) == pytest.approx(0.25, rel=1e-7)


def test_relative_error_zero_truth():
    with pytest.raises(DegenerateInputError):
        relative_spectral_error(DenseSymmetric(np.eye(2)), DenseSymmetric(np.zeros((2, 2))))


# -----------------------------------------------------------------------------
# FILES
# -----------------------------------------------------------------------------
def test_dense_tsv_exact(tmp_path):
    values = _random_symmetric(6, 9).values / 7.0
    path = write_dense_tsv(values, str(tmp_path / "g.tsv"))
    np.testing.assert_array_equal(read_dense_tsv(path), values)


def test_write_similarity_matrix_market(tmp_path, small_binary):
    B = SimilarityMatrix.from_upper(np.triu(exact_gram(small_binary).values), KIND_GRAM)
    path = write_similarity(B, str(tmp_path / "b.mtx"))
    np.testing.assert_array_equal(spio.mmread(path).toarray(), B.entries)
