import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (
    companion_roots,
    covariance_double_loop,
    normal_equations,
    optimal_pairing_error,
    random_conjugate_symmetric,
    random_hermitian_psd,
    reciprocal_closure_error,
)
from rootprop.array_model import ArrayGeometry, Scenario, simulate_snapshots, steering_vector
from rootprop.numerics import (
    ComplexPolynomial,
    NoSignalRootsError,
    SingularPartitionError,
    companion_matrix,
    find_roots,
    hermitian_eigendecomposition,
    is_hermitian,
    least_squares_solve,
    sample_covariance,
)

seeds = st.integers(0, 2**32 - 1)


def complex_normal(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# -- sample covariance -----------------------------------------------------------


def test_covariance_single_snapshot():
    R = sample_covariance(np.array([[1.0], [1j]])).data
    np.testing.assert_allclose(R, [[1, -1j], [1j, 1]], atol=1e-15)


def test_covariance_matches_double_loop():
    U = complex_normal(np.random.default_rng(1), 4, 50)
    np.testing.assert_allclose(sample_covariance(U).data, covariance_double_loop(U), rtol=0, atol=1e-12)


def test_covariance_noise_free_rank_one():
    geometry = ArrayGeometry(8, 0.5)
    sc = Scenario(geometry, (65.0,), 0.0, snapshot_count=40, seed=2)
    R = sample_covariance(simulate_snapshots(sc, noise_variance=0.0))
    w, V = hermitian_eigendecomposition(R)
    assert w[1] <= 1e-10 * w[0]
    a = steering_vector(geometry, 65.0)
    assert abs(abs(V[:, 0].conj() @ a) / np.linalg.norm(a) - 1.0) < 1e-10


def test_covariance_rejects_empty():
    with pytest.raises(ValueError):
        sample_covariance(np.zeros((3, 0)))


@settings(max_examples=40)
@given(seeds, st.integers(1, 8), st.integers(1, 30))
def test_covariance_hermitian_psd(seed, M, N):
    rng = np.random.default_rng(seed)
    U = complex_normal(rng, M, N) * 10 ** rng.uniform(-3, 3)
    R = sample_covariance(U).data
    assert np.linalg.norm(R - R.conj().T) <= 1e-12 * np.linalg.norm(R)
    w = np.linalg.eigvalsh(R)
    assert w[0] >= -1e-10 * w[-1]


# -- eigendecomposition ----------------------------------------------------------


def test_eig_identity_and_diagonal():
    w, V = hermitian_eigendecomposition(np.eye(3))
    np.testing.assert_allclose(w, [1, 1, 1])
    np.testing.assert_allclose(V.conj().T @ V, np.eye(3), atol=1e-12)
    w, V = hermitian_eigendecomposition(np.diag([1.0, 3.0, 2.0]).astype(complex))
    np.testing.assert_allclose(w, [3, 2, 1])
    np.testing.assert_allclose(np.abs(V), np.eye(3)[:, [1, 2, 0]], atol=1e-12)


def test_eig_rejects_non_hermitian():
    with pytest.raises(ValueError):
        hermitian_eigendecomposition(np.array([[1.0, 2.0], [0.0, 1.0]]))


@settings(max_examples=40)
@given(seeds, st.integers(1, 6))
def test_eig_reconstruction_and_trace(seed, M):
    rng = np.random.default_rng(seed)
    X = complex_normal(rng, M, M)
    R = X + X.conj().T
    w, V = hermitian_eigendecomposition(R)
    scale = np.linalg.norm(R)
    assert np.all(np.diff(w) <= 0)
    assert np.linalg.norm(V @ np.diag(w) @ V.conj().T - R) <= 1e-8 * scale
    assert np.linalg.norm(R @ V - V * w) <= 1e-8 * scale
    np.testing.assert_allclose(V.conj().T @ V, np.eye(M), atol=1e-8)
    assert abs(np.trace(R).real - w.sum()) <= 1e-8 * scale
    if M <= 4:
        det = np.linalg.det(R).real
        assert abs(np.prod(w) - det) <= 1e-6 * max(abs(det), 1e-300) + 1e-12 * scale**M


# -- least squares ---------------------------------------------------------------


def test_ls_scalar_mean():
    P = least_squares_solve(np.array([[1.0], [1.0]]), np.array([[0.0], [2.0]]))
    np.testing.assert_allclose(P, [[1.0]])


def test_ls_square_system_exact():
    rng = np.random.default_rng(3)
    G = complex_normal(rng, 4, 4)
    H = complex_normal(rng, 4, 3)
    P = least_squares_solve(G, H)
    np.testing.assert_allclose(G @ P, H, atol=1e-10)


def test_ls_overdetermined_matches_normal_equations():
    rng = np.random.default_rng(4)
    G = complex_normal(rng, 12, 2)
    H = complex_normal(rng, 12, 10)
    np.testing.assert_allclose(least_squares_solve(G, H), normal_equations(G, H), rtol=0, atol=1e-8)


def test_ls_rank_deficient_raises():
    G = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(SingularPartitionError):
        least_squares_solve(G, np.ones((3, 1)))
    with pytest.raises(SingularPartitionError):
        least_squares_solve(np.zeros((3, 1)), np.ones((3, 1)))


@settings(max_examples=50)
@given(seeds, st.integers(1, 4), st.integers(0, 6), st.integers(1, 5))
def test_ls_residual_orthogonality_and_transform(seed, D, extra, K):
    rng = np.random.default_rng(seed)
    M = D + extra
    G = complex_normal(rng, M, D)
    H = complex_normal(rng, M, K)
    P = least_squares_solve(G, H)
    resid = G.conj().T @ (G @ P - H)
    assert np.linalg.norm(resid) <= 1e-8 * np.linalg.norm(G) * np.linalg.norm(H)
    T = complex_normal(rng, D, D) + 3 * np.eye(D)
    PT = least_squares_solve(G @ T, H)
    np.testing.assert_allclose(PT, np.linalg.solve(T, P), rtol=0, atol=1e-10 * max(1.0, np.abs(P).max()))


# -- polynomial and roots --------------------------------------------------------


def test_polynomial_requires_odd_length():
    with pytest.raises(ValueError):
        ComplexPolynomial(np.ones(4))


def test_polynomial_evaluation_and_lags():
    p = ComplexPolynomial(np.array([2.0, 0.5, 3.0]))  # c_-1 = 2, c_0 = 0.5, c_1 = 3
    assert p.half_order == 1
    assert p.coefficient(-1) == 2 and p.coefficient(1) == 3
    z = 0.3 + 0.7j
    assert np.isclose(p(z), 2 * z + 0.5 + 3 / z)
    phase = 0.4
    assert np.isclose(p.on_unit_circle(phase), p(np.exp(1j * phase)))


def test_find_roots_real_reciprocal_pair():
    roots = find_roots(np.array([1.0, -2.5, 1.0])).roots
    np.testing.assert_allclose(np.sort(roots.real), [0.5, 2.0], atol=1e-12)
    roots = find_roots(ComplexPolynomial(np.array([1.0, -2.5, 1.0]))).roots
    np.testing.assert_allclose(np.sort(roots.real), [0.5, 2.0], atol=1e-12)
    np.testing.assert_allclose(roots.imag, 0.0, atol=1e-12)


def test_find_roots_identity_matrix_has_no_signal_roots():
    with pytest.raises(NoSignalRootsError):
        find_roots(ComplexPolynomial(np.array([0, 0, 3, 0, 0], dtype=complex)))
    with pytest.raises(NoSignalRootsError):
        find_roots(np.zeros(5))


def test_find_roots_strips_leading_zeros():
    roots = find_roots(np.array([0.0, 0.0, 1.0, -3.0, 2.0])).roots
    assert roots.size == 2
    np.testing.assert_allclose(np.sort(roots.real), [1.0, 2.0], atol=1e-12)


def test_companion_matrix_eigenvalues_are_roots():
    c = np.array([2.0, -6.0, 4.0])
    np.testing.assert_allclose(np.sort(np.linalg.eigvals(companion_matrix(c)).real), [1.0, 2.0])


def test_degree_ten_matches_companion_oracle():
    rng = np.random.default_rng(10)
    c = random_conjugate_symmetric(rng, 5)
    roots = find_roots(ComplexPolynomial(c)).roots
    assert roots.size == 10
    assert optimal_pairing_error(roots, companion_roots(c)) <= 1e-6


def test_unit_circle_double_roots_at_minus_one():
    # (z + 1)^2 / z is conjugate symmetric with a double root at -1
    roots = find_roots(ComplexPolynomial(np.array([1.0, 2.0, 1.0]))).roots
    np.testing.assert_allclose(roots, [-1, -1], atol=1e-6)


@settings(max_examples=60)
@given(seeds, st.integers(1, 11))
def test_roots_residual_and_reciprocal_pairing(seed, half_order):
    rng = np.random.default_rng(seed)
    c = random_conjugate_symmetric(rng, half_order)
    roots = find_roots(ComplexPolynomial(c)).roots
    deg = 2 * half_order
    assert roots.size == deg
    bound = 1e-6 * np.abs(c).max() * np.maximum(1.0, np.abs(roots)) ** deg
    assert np.all(np.abs(np.polyval(c, roots)) <= bound)
    assert reciprocal_closure_error(roots) <= 1e-6


@settings(max_examples=40)
@given(seeds, st.integers(2, 22))
def test_general_complex_polynomial_residual(seed, deg):
    rng = np.random.default_rng(seed)
    c = complex_normal(rng, deg + 1)
    roots = find_roots(c).roots
    assert roots.size == deg
    bound = 1e-6 * np.abs(c).max() * np.maximum(1.0, np.abs(roots)) ** deg
    assert np.all(np.abs(np.polyval(c, roots)) <= bound)
    assert optimal_pairing_error(roots, companion_roots(c)) <= 1e-6 * max(1.0, np.abs(roots).max())


@settings(max_examples=30)
@given(seeds, st.integers(2, 12))
def test_hermitian_derived_polynomial_is_conjugate_symmetric(seed, M):
    from rootprop.estimators import diagonal_sums

    C = random_hermitian_psd(np.random.default_rng(seed), M)
    assert is_hermitian(C)
    poly = diagonal_sums(C)
    assert poly.is_conjugate_symmetric(1e-12)
    values = poly.on_unit_circle(np.linspace(-np.pi, np.pi, 37))
    assert np.all(np.abs(values.imag) <= 1e-10 * np.abs(values).max())
    assert np.all(values.real >= -1e-10 * np.abs(poly.coefficients).sum())
