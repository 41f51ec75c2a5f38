import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsdp.sylvester import SingularPencilError, SylvesterFactorization, factorize, kron_solve, solve


def _pair(rng, m, k, symmetric=False):
    A = rng.standard_normal((m, m))
    B = rng.standard_normal((k, k))
    if symmetric:
        A, B = A + A.T, B + B.T
    return A + 3 * m * np.eye(m), B + 3 * k * np.eye(k)


@settings(max_examples=60, deadline=None)
@given(m=st.integers(1, 10), k=st.integers(1, 10), seed=st.integers(0, 2**31 - 1), symmetric=st.booleans())
def test_matches_kronecker_solve(m, k, seed, symmetric):
    rng = np.random.default_rng(seed)
    A, B = _pair(rng, m, k, symmetric)
    C = rng.standard_normal((m, k))
    X = SylvesterFactorization(A, B).solve(C)
    assert np.linalg.norm(A @ X + X @ B - C) <= 1e-10 * (1 + np.linalg.norm(C))
    assert np.abs(X - kron_solve(A, B, C)).max() <= 1e-10


def test_batched_right_hand_sides(rng):
    A, B = _pair(rng, 5, 4)
    fact = factorize(A, B)
    C = rng.standard_normal((3, 5, 4))
    X = solve(fact, C)
    for i in range(3):
        assert np.allclose(X[i], fact.solve(C[i]), atol=1e-13)


def test_singular_pencil_is_detected_and_deflated():
    # Neumann-like operators: both have a zero eigenvalue
    L = np.array([[-1.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -1.0]])
    fact = SylvesterFactorization(L, L)
    assert fact.is_singular
    C = np.arange(9.0).reshape(3, 3)
    C -= C.mean()
    with pytest.raises(SingularPencilError):
        fact.solve(C)
    X = fact.solve(C, deflate=True)
    assert np.allclose(L @ X + X @ L, C, atol=1e-12)


def test_shape_checks(rng):
    with pytest.raises(ValueError):
        SylvesterFactorization(np.ones((2, 3)), np.eye(2))
    fact = SylvesterFactorization(np.eye(2), np.eye(3))
    with pytest.raises(ValueError):
        fact.solve(np.ones((3, 2)))


def test_reconstruct_returns_inputs(rng):
    A, B = _pair(rng, 4, 6)
    Ar, Br = SylvesterFactorization(A, B).reconstruct()
    assert np.allclose(Ar, A) and np.allclose(Br, B)
