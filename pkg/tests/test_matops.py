import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from lfsynth.errors import (
    DimensionError,
    DomainError,
    SingularMatrixError,
    UnstableError,
)
from lfsynth.matops import (
    as_matrix,
    eigenvalues,
    max_singular_value,
    solve_linear,
    solve_lyapunov,
)

finite_matrices = hnp.arrays(
    dtype=np.float64,
    shape=st.tuples(st.integers(1, 6), st.integers(1, 6)),
    elements=st.floats(-1e6, 1e6),
)


def sorted_complex(vals):
    return np.sort_complex(np.asarray(vals))


class TestValidation:
    def test_rejects_nan(self):
        with pytest.raises(DomainError):
            as_matrix([[np.nan, 0.0]])

    def test_rejects_inf(self):
        with pytest.raises(DomainError):
            as_matrix([[1.0, np.inf]])

    def test_non_square_eigenvalues(self):
        with pytest.raises(DimensionError):
            eigenvalues(np.ones((2, 3)))


class TestEigenvalues:
    def test_identity(self):
        assert np.allclose(sorted_complex(eigenvalues(np.eye(2))), [1.0, 1.0])

    def test_rotation_generator(self):
        lam = sorted_complex(eigenvalues([[0.0, 1.0], [-1.0, 0.0]]))
        assert np.allclose(lam, [-1j, 1j], atol=1e-12)

    def test_construct_then_recover(self, rng):
        lam = np.array([-3.0, -1.5, -0.2, 0.7, 2.0, 4.5])
        q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
        m = q @ np.diag(lam) @ q.T
        got = np.sort(eigenvalues(m).real)
        assert np.allclose(got, lam, atol=1e-8)
        assert np.abs(eigenvalues(m).imag).max() < 1e-8

    def test_conjugate_pairs(self, rng):
        m = rng.normal(size=(7, 7))
        lam = eigenvalues(m)
        assert np.allclose(sorted_complex(lam), sorted_complex(lam.conj()), atol=1e-10)


class TestMaxSingularValue:
    def test_diagonal(self):
        assert max_singular_value(np.diag([3.0, 1.0])) == pytest.approx(3.0)

    def test_zero(self):
        assert max_singular_value(np.zeros((3, 2))) == 0.0

    def test_shear(self):
        expected = np.sqrt((3.0 + np.sqrt(5.0)) / 2.0)
        assert max_singular_value([[1.0, 1.0], [0.0, 1.0]]) == pytest.approx(
            expected, rel=1e-12
        )

    @settings(max_examples=60, deadline=None)
    @given(m=finite_matrices)
    def test_transpose_invariant(self, m):
        assert max_singular_value(m) == pytest.approx(
            max_singular_value(m.T), rel=1e-12, abs=1e-12
        )


class TestSolveLinear:
    def test_identity(self, rng):
        b = rng.normal(size=(4, 2))
        assert np.allclose(solve_linear(np.eye(4), b), b)

    def test_scaled_identity(self):
        assert np.allclose(solve_linear(2.0 * np.eye(3), np.eye(3)), 0.5 * np.eye(3))

    def test_construct_then_recover(self, rng):
        a = rng.normal(size=(8, 8)) + 8.0 * np.eye(8)
        x0 = rng.normal(size=(8, 3))
        assert np.allclose(solve_linear(a, a @ x0), x0, atol=1e-9)

    def test_singular_raises(self):
        a = np.array([[1.0, 2.0], [2.0, 4.0]])
        with pytest.raises(SingularMatrixError):
            solve_linear(a, np.eye(2))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            solve_linear(np.eye(2), np.ones((3, 1)))

    def test_roundtrip_many_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = rng.integers(1, 13)
            a = rng.normal(size=(n, n)) + (n + 2.0) * np.eye(n)
            if np.linalg.cond(a) > 1e6:
                continue
            x0 = rng.normal(size=(n, 2))
            assert np.allclose(solve_linear(a, a @ x0), x0, atol=1e-9)


class TestSolveLyapunov:
    def test_scaled_identity(self):
        p = solve_lyapunov(-np.eye(4), 2.0 * np.eye(4))
        assert np.allclose(p, np.eye(4), atol=1e-12)

    def test_scalar(self):
        assert solve_lyapunov([[-1.0]], [[1.0]]) == pytest.approx(0.5)

    def test_residual_random_hurwitz(self, rng):
        a = rng.normal(size=(6, 6))
        a -= (np.max(np.linalg.eigvals(a).real) + 0.5) * np.eye(6)
        q = rng.normal(size=(6, 6))
        q = q @ q.T
        p = solve_lyapunov(a, q)
        res = np.linalg.norm(a @ p + p @ a.T + q)
        assert res <= 1e-8 * np.linalg.norm(q)
        assert np.allclose(p, p.T, atol=1e-10)
        # positive semidefinite for psd q
        assert np.min(np.linalg.eigvalsh(p)) >= -1e-10

    def test_not_hurwitz(self):
        with pytest.raises(UnstableError):
            solve_lyapunov(np.eye(2), np.eye(2))

    def test_asymmetric_q(self):
        with pytest.raises(DomainError):
            solve_lyapunov(-np.eye(2), [[0.0, 1.0], [0.0, 0.0]])


@settings(max_examples=40, deadline=None)
@given(
    diag=hnp.arrays(np.float64, st.integers(2, 6), elements=st.floats(-10, 10)),
    seed=st.integers(0, 2**16),
)
def test_triangular_eigenvalues_match_diagonal(diag, seed):
    rng = np.random.default_rng(seed)
    n = diag.size
    m = np.triu(rng.normal(size=(n, n)), k=1) + np.diag(diag)
    got = np.sort(eigenvalues(m).real)
    assert np.allclose(got, np.sort(diag), atol=1e-12 * max(1.0, np.abs(m).max()))
    assert np.abs(eigenvalues(m).imag).max() <= 1e-12
