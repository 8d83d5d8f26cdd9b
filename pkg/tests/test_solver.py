import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import KERNELS, random_orthonormal
from ktrr.data import Dataset2D, SyntheticSpec, generate_synthetic
from ktrr.errors import DimensionMismatch, IndexOutOfRange, InvalidSpec, SolveFailure
from ktrr.kernels import KernelBlocks, KernelDescriptor, compute_kernel_blocks
from ktrr.solver import (
    HMatrices,
    SolverConfig,
    assemble_H,
    assemble_Kbar,
    feature,
    fit,
    initial_Z,
    load_model,
    objective,
    reconstruct,
    save_model,
    update_P,
    update_Z,
)


def explicit_objective(features, P, Z, lam, gamma):
    """Objective evaluated directly on explicit feature maps phi(X_i), shape (n, f, b)."""
    n = features.shape[0]
    proj = features @ P
    total = 0.0
    for i in range(n):
        resid = proj[i] - np.einsum("j,jfr->fr", Z[:, i], proj)
        total += np.sum(resid**2)
        total += lam * np.sum((features[i] - features[i] @ P @ P.T) ** 2)
    return total + gamma * np.sum(Z**2)


def poly2_features(X, c):
    """Explicit column map for (u.v + c)^2: [u (x) u, sqrt(2c) u, c]."""
    n, a, b = X.shape
    outer = np.einsum("nap,ncp->nacp", X, X).reshape(n, a * a, b)
    return np.concatenate([outer, np.sqrt(2 * c) * X, np.full((n, 1, b), c)], axis=1)


def H_from(M):
    return HMatrices(M=np.asarray(M, float), xi=0.0, H1=None, H2=None, H3=None)


# -- assemble_H ---------------------------------------------------------------

def test_H_zero_Z(random_data):
    kb = compute_kernel_blocks(random_data, KernelDescriptor.rbf(1.0))
    H = assemble_H(kb, np.zeros((kb.n, kb.n)), 0.3)
    assert not H.H2.any() and not H.H3.any()
    np.testing.assert_allclose(H.M, 0.7 * H.H1, rtol=1e-15)


def test_H_lambda_one_zero_Z(random_data):
    kb = compute_kernel_blocks(random_data, KernelDescriptor.linear())
    H = assemble_H(kb, np.zeros((kb.n, kb.n)), 1.0)
    assert not H.M.any()
    assert H.xi == pytest.approx(np.trace(H.H1))


def test_H_single_sample():
    K = np.array([[2.0, 0.5], [0.5, 1.0]])
    kb = KernelBlocks(K[None, None], KernelDescriptor.linear())
    z = 0.3
    H = assemble_H(kb, [[z]], 0.0)
    np.testing.assert_allclose(H.M, K * (1 - z) ** 2, rtol=1e-14)


def test_H_matches_loops(rng, small_data):
    kb = compute_kernel_blocks(small_data, KernelDescriptor.polynomial(2))
    n = kb.n
    Z = rng.standard_normal((n, n))
    H = assemble_H(kb, Z, 0.2)
    H2 = sum(kb[s, t] * Z[s, i] * Z[t, i] for s in range(n) for t in range(n) for i in range(n))
    H3 = sum((kb[i, j] + kb[j, i]) * Z[j, i] for i in range(n) for j in range(n))
    np.testing.assert_allclose(H.H2, H2, rtol=1e-10)
    np.testing.assert_allclose(H.H3, H3, rtol=1e-10)


def test_M_nearly_symmetric_before_symmetrization(rng, small_data):
    kb = compute_kernel_blocks(small_data, KernelDescriptor.rbf(2.0))
    Z = rng.standard_normal((kb.n, kb.n))
    H = assemble_H(kb, Z, 0.5)
    raw = 0.5 * H.H1 + H.H2 - H.H3
    assert np.abs(raw - raw.T).max() <= 1e-10 * max(1.0, np.abs(raw).max())


def test_H_dimension_mismatch(random_data):
    kb = compute_kernel_blocks(random_data, KernelDescriptor.linear())
    with pytest.raises(DimensionMismatch):
        assemble_H(kb, np.zeros((3, 3)), 0.1)


# -- update_P -----------------------------------------------------------------

def test_update_P_diagonal():
    P = update_P(H_from(np.diag([1.0, 2.0, 3.0])), 2)
    np.testing.assert_array_equal(P, np.eye(3)[:, :2])


def test_update_P_two_by_two():
    P = update_P(H_from([[0.0, 1.0], [1.0, 0.0]]), 1)
    np.testing.assert_allclose(P[:, 0], np.array([1.0, -1.0]) / np.sqrt(2), atol=1e-15)


def test_update_P_range():
    with pytest.raises(IndexOutOfRange):
        update_P(H_from(np.eye(3)), 4)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_update_P_orthonormal_and_signed(b, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((b, b))
    r = int(rng.integers(1, b + 1))
    P = update_P(H_from(A + A.T), r)
    np.testing.assert_allclose(P.T @ P, np.eye(r), atol=1e-12)
    pivots = np.argmax(np.abs(P), axis=0)
    assert np.all(P[pivots, np.arange(r)] > 0)


def test_update_P_eigen_optimal(rng, small_data):
    kb = compute_kernel_blocks(small_data, KernelDescriptor.rbf(1.0))
    H = assemble_H(kb, rng.standard_normal((kb.n, kb.n)) * 0.1, 0.4)
    r = 3
    P = update_P(H, r)
    best = np.trace(P.T @ H.M @ P)
    for _ in range(100):
        Q = random_orthonormal(rng, kb.b, r)
        assert best <= np.trace(Q.T @ H.M @ Q) + 1e-12


# -- assemble_Kbar --------------------------------------------------------------

def test_Kbar_full_projection_is_gram(random_data):
    kb = compute_kernel_blocks(random_data, KernelDescriptor.linear())
    V = random_data.vectors()
    np.testing.assert_allclose(assemble_Kbar(kb, np.eye(kb.b)), V.T @ V, rtol=1e-12)


def test_Kbar_symmetric_psd(rng, small_data):
    for desc in KERNELS:
        kb = compute_kernel_blocks(small_data, desc)
        K = assemble_Kbar(kb, random_orthonormal(rng, kb.b, 2))
        assert np.array_equal(K, K.T)
        assert np.linalg.eigvalsh(K)[0] >= -1e-9 * np.linalg.norm(K)


def test_Kbar_single_sample():
    K = np.array([[2.0, 0.5], [0.5, 1.0]])
    kb = KernelBlocks(K[None, None], KernelDescriptor.linear())
    P = np.array([[0.6], [0.8]])
    Kbar = assemble_Kbar(kb, P)
    assert Kbar.shape == (1, 1)
    assert Kbar[0, 0] == pytest.approx((P.T @ K @ P).item())
    assert Kbar[0, 0] >= 0


def test_Kbar_dimension_mismatch(random_data):
    kb = compute_kernel_blocks(random_data, KernelDescriptor.linear())
    with pytest.raises(DimensionMismatch):
        assemble_Kbar(kb, np.eye(kb.b + 1))


# -- update_Z -------------------------------------------------------------------

def test_update_Z_examples():
    np.testing.assert_allclose(update_Z(np.eye(3), 1.0), 0.5 * np.eye(3), atol=1e-15)
    assert not update_Z(np.zeros((3, 3)), 0.7).any()
    np.testing.assert_allclose(update_Z(np.diag([2.0, 0.0]), 2.0), np.diag([0.5, 0.0]), atol=1e-15)


def test_update_Z_matches_eigen_map(rng):
    A = rng.standard_normal((8, 8))
    K = A @ A.T
    mu, V = np.linalg.eigh(K)
    expected = V @ np.diag(mu / (mu + 0.3)) @ V.T
    Z = update_Z(K, 0.3)
    np.testing.assert_allclose(Z, expected, atol=1e-12)
    assert np.abs(Z - Z.T).max() <= 1e-8


def test_update_Z_bad_gamma():
    with pytest.raises(SolveFailure):
        update_Z(np.eye(2), 0.0)


def test_update_Z_indefinite_fallback():
    # slightly indefinite from rounding: Cholesky fails, symmetric solve recovers
    K = np.diag([1.0, -1e-3])
    Z = update_Z(K, 1e-3 / 2)
    np.testing.assert_allclose((K + 5e-4 * np.eye(2)) @ Z, K, atol=1e-12)


# -- objective ------------------------------------------------------------------

def test_objective_zero_Z_nonnegative(random_data, rng):
    kb = compute_kernel_blocks(random_data, KernelDescriptor.linear())
    Z = np.zeros((kb.n, kb.n))
    H = assemble_H(kb, Z, 0.0)
    P = random_orthonormal(rng, kb.b, 2)
    g = objective(H, P, Z, 1.0)
    assert g == pytest.approx(np.trace(P.T @ H.H1 @ P)) and g >= 0


@pytest.mark.parametrize("lam", [0.0, 0.3, 2.0])
def test_objective_linear_explicit(rng, random_data, lam):
    kb = compute_kernel_blocks(random_data, KernelDescriptor.linear())
    Z = rng.standard_normal((kb.n, kb.n)) * 0.2
    P = random_orthonormal(rng, kb.b, 3)
    got = objective(assemble_H(kb, Z, lam), P, Z, 0.4)
    want = explicit_objective(random_data.samples, P, Z, lam, 0.4)
    assert got == pytest.approx(want, rel=1e-8)


def test_objective_polynomial_explicit(rng, random_data):
    c = 1.0
    kb = compute_kernel_blocks(random_data, KernelDescriptor.polynomial(2, c))
    Z = rng.standard_normal((kb.n, kb.n)) * 0.2
    P = random_orthonormal(rng, kb.b, 2)
    got = objective(assemble_H(kb, Z, 0.25), P, Z, 0.1)
    want = explicit_objective(poly2_features(random_data.samples, c), P, Z, 0.25, 0.1)
    assert got == pytest.approx(want, rel=1e-8)


def test_objective_gamma_additive(rng, random_data):
    kb = compute_kernel_blocks(random_data, KernelDescriptor.rbf(1.0))
    Z = rng.standard_normal((kb.n, kb.n))
    H = assemble_H(kb, Z, 0.1)
    P = random_orthonormal(rng, kb.b, 2)
    assert objective(H, P, Z, 0.0) == pytest.approx(objective(H, P, Z, 0.7) - 0.7 * np.sum(Z**2))


def test_Z_update_first_order_optimal(rng, small_data):
    kb = compute_kernel_blocks(small_data, KernelDescriptor.rbf(1.0))
    lam, gamma = 0.3, 0.2
    P = random_orthonormal(rng, kb.b, 3)
    Z = update_Z(assemble_Kbar(kb, P), gamma)
    base = objective(assemble_H(kb, Z, lam), P, Z, gamma)
    for _ in range(100):
        d = rng.standard_normal(Z.shape)
        d *= 1e-3 / np.linalg.norm(d)
        Zp = Z + d
        assert objective(assemble_H(kb, Zp, lam), P, Zp, gamma) >= base


# -- fit --------------------------------------------------------------------------

def test_config_validation():
    for bad in (dict(r=0), dict(lam=-1.0), dict(gamma=0.0), dict(epsilon=0.0), dict(t_max=0)):
        with pytest.raises(InvalidSpec):
            SolverConfig(**bad)


def test_fit_r_too_large(random_data):
    kb = compute_kernel_blocks(random_data, KernelDescriptor.linear())
    with pytest.raises(InvalidSpec):
        fit(kb, SolverConfig(r=kb.b + 1))


@pytest.mark.parametrize("init", ["ridge", "zero"])
@pytest.mark.parametrize("desc", KERNELS, ids=lambda d: d.kind)
def test_fit_monotone_and_contracts(small_data, desc, init):
    kb = compute_kernel_blocks(small_data, desc)
    m = fit(kb, SolverConfig(r=3, lam=0.5, gamma=0.2, t_max=40), init=init)
    h = np.array(m.objective_history)
    assert np.all(np.diff(h) <= 1e-9)
    assert np.abs(m.P.T @ m.P - np.eye(3)).max() <= 1e-10
    assert np.abs(m.Z - m.Z.T).max() <= 1e-8
    ev = np.linalg.eigvalsh(0.5 * (m.Z + m.Z.T))
    assert ev.min() >= -1e-8 and ev.max() < 1 + 1e-8


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(KERNELS), st.sampled_from([0.01, 0.5, 3.0]),
       st.sampled_from([0.05, 1.0]), st.integers(1, 4))
def test_fit_monotone_property(seed, desc, lam, gamma, r):
    data = generate_synthetic(SyntheticSpec(2, 5, 5, 4, 1, 0.1, seed=seed))
    m = fit(compute_kernel_blocks(data, desc), SolverConfig(r=r, lam=lam, gamma=gamma, t_max=25))
    assert np.all(np.diff(m.objective_history) <= 1e-9)


def test_fit_deterministic(small_data):
    kb = compute_kernel_blocks(small_data, KernelDescriptor.rbf(1.0))
    cfg = SolverConfig(r=2, lam=0.1, gamma=0.1)
    a, b = fit(kb, cfg), fit(kb, cfg)
    assert a.Z.tobytes() == b.Z.tobytes() and a.P.tobytes() == b.P.tobytes()
    assert a.objective_history == b.objective_history


def test_fit_full_projection_linear_oracle(rng):
    data = Dataset2D(rng.standard_normal((20, 5, 4)))
    kb = compute_kernel_blocks(data, KernelDescriptor.linear())
    m = fit(kb, SolverConfig(r=4, lam=0.2, gamma=0.3), init="zero")
    G = data.vectors().T @ data.vectors()
    Z = np.linalg.solve(G + 0.3 * np.eye(20), G)
    assert np.linalg.norm(m.Z - Z) <= 1e-8 * np.linalg.norm(Z)


def test_initial_Z_ridge_is_unprojected_solution(random_data):
    kb = compute_kernel_blocks(random_data, KernelDescriptor.linear())
    G = random_data.vectors().T @ random_data.vectors()
    np.testing.assert_allclose(initial_Z(kb, 0.5), np.linalg.solve(G + 0.5 * np.eye(kb.n), G), atol=1e-10)
    with pytest.raises(InvalidSpec):
        initial_Z(kb, 0.5, "random")


def test_fit_stops_at_t_max(small_data):
    kb = compute_kernel_blocks(small_data, KernelDescriptor.rbf(1.0))
    m = fit(kb, SolverConfig(r=2, t_max=1))
    assert m.iterations == 1 and len(m.objective_history) == 1 and not m.converged


# -- reconstruction -------------------------------------------------------------

def test_reconstruct_full_basis(rng):
    X = rng.standard_normal((6, 4))
    P = random_orthonormal(rng, 4, 4)
    np.testing.assert_allclose(reconstruct(X, P, 4), X, atol=1e-13)


def test_reconstruct_rank_one(rng):
    X = rng.standard_normal((6, 4))
    P = random_orthonormal(rng, 4, 3)
    R = reconstruct(X, P, 1)
    assert np.linalg.matrix_rank(R) <= 1
    np.testing.assert_allclose(R, feature(X, P, 1), atol=1e-14)


def test_reconstruct_error_monotone(rng):
    for _ in range(20):
        X = rng.standard_normal((7, 6))
        P = random_orthonormal(rng, 6, 6)
        errs = [np.linalg.norm(X - reconstruct(X, P, j)) for j in range(1, 7)]
        assert np.all(np.diff(errs) <= 1e-12)


def test_reconstruct_sum_of_features(rng):
    X = rng.standard_normal((5, 4))
    P = random_orthonormal(rng, 4, 3)
    np.testing.assert_allclose(reconstruct(X, P, 3), sum(feature(X, P, j) for j in (1, 2, 3)), atol=1e-13)


def test_reconstruct_index_errors(rng):
    X = rng.standard_normal((5, 4))
    P = random_orthonormal(rng, 4, 2)
    for j in (0, 3):
        with pytest.raises(IndexOutOfRange):
            reconstruct(X, P, j)
        with pytest.raises(IndexOutOfRange):
            feature(X, P, j)


def test_model_round_trip(tmp_path, small_data):
    kb = compute_kernel_blocks(small_data, KernelDescriptor.polynomial(3, 0.5))
    m = fit(kb, SolverConfig(r=2, lam=0.3, gamma=0.05))
    save_model(m, tmp_path / "model.json")
    back = load_model(tmp_path / "model.json")
    assert back.P.tobytes() == m.P.tobytes() and back.Z.tobytes() == m.Z.tobytes()
    assert back.objective_history == m.objective_history
    assert back.config == m.config and back.descriptor == m.descriptor
