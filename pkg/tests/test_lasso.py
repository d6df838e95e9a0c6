import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbls.errors import DataError, PreconditionError
from fbls.lasso import LassoProblem, largest_eigenvalue, lasso_solve, soft_threshold

from oracles import soft_threshold_1d


def random_problem(seed, s=40, n1=8, f=6, lam=0.1, **kw):
    rng = np.random.default_rng(seed)
    return LassoProblem(rng.random((s, n1)), rng.standard_normal((s, f + 1)), lam, **kw)


def test_one_dimensional_closed_form():
    # a1 = [1], x = [3], lam = 2  ->  w = 3 - 1 = 2
    p = LassoProblem(np.array([[1.0]]), np.array([[3.0]]), 2.0)
    assert lasso_solve(p)[0, 0] == pytest.approx(soft_threshold_1d([1.0], [3.0], 2.0), abs=1e-12)
    assert lasso_solve(p)[0, 0] == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("lam", [0.1, 1.0, 5.0, 40.0])
def test_single_column_matches_soft_threshold(lam):
    rng = np.random.default_rng(int(lam * 10))
    a, x = rng.standard_normal((20, 1)), rng.standard_normal((20, 1))
    p = LassoProblem(a, x, lam, max_iters=500, tol=1e-14)
    assert lasso_solve(p)[0, 0] == pytest.approx(soft_threshold_1d(a, x, lam), abs=1e-10)


def test_vanishing_lambda_is_least_squares():
    rng = np.random.default_rng(4)
    q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    a1 = q @ np.diag(np.linspace(1.0, 2.0, 6)) @ q.T
    x = rng.standard_normal((6, 3))
    w = lasso_solve(LassoProblem(a1, x, 1e-12, max_iters=2000, tol=1e-13))
    np.testing.assert_allclose(w, np.linalg.solve(a1, x), atol=1e-4)


def test_large_lambda_gives_exact_zero():
    p = random_problem(1)
    lam = 2.0 * np.max(np.abs(p.a1.T @ p.x))
    w = lasso_solve(LassoProblem(p.a1, p.x, lam))
    assert np.array_equal(w, np.zeros_like(w))


def test_objective_non_increasing():
    w, hist = lasso_solve(random_problem(2), return_objective=True)
    assert len(hist) >= 2
    assert all(b <= a for a, b in zip(hist, hist[1:]))


def test_history_starts_at_zero_iterate():
    p = random_problem(3)
    _, hist = lasso_solve(p, return_objective=True)
    assert hist[0] == pytest.approx(float(np.sum(p.x**2)))


def test_zero_design_matrix():
    p = LassoProblem(np.zeros((5, 3)), np.ones((5, 2)), 0.1)
    assert np.array_equal(lasso_solve(p), np.zeros((3, 2)))


def test_max_iters_zero_returns_zero():
    assert not np.any(lasso_solve(random_problem(5, max_iters=0)))


def test_deterministic():
    assert lasso_solve(random_problem(6)).tobytes() == lasso_solve(random_problem(6)).tobytes()


def test_invariants():
    with pytest.raises(PreconditionError):
        LassoProblem(np.ones((3, 2)), np.ones((4, 2)), 0.1)
    with pytest.raises(PreconditionError):
        LassoProblem(np.ones((3, 2)), np.ones((3, 2)), 0.0)
    with pytest.raises(PreconditionError):
        LassoProblem(np.ones((3, 2)), np.ones((3, 2)), 0.1, tol=0.0)


def test_non_finite_input():
    a1 = np.ones((3, 2))
    a1[1, 1] = np.inf
    with pytest.raises(DataError):
        lasso_solve(LassoProblem(a1, np.ones((3, 2)), 0.1))


def test_soft_threshold():
    np.testing.assert_array_equal(soft_threshold(np.array([-3.0, -0.5, 0.0, 0.5, 3.0]), 1.0),
                                  [-2.0, 0.0, 0.0, 0.0, 2.0])


def test_power_iteration():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((30, 8))
    g = a.T @ a
    assert largest_eigenvalue(g) == pytest.approx(np.linalg.eigvalsh(g)[-1], rel=1e-6)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), lam=st.floats(1e-4, 10.0))
def test_objective_monotone_property(seed, lam):
    _, hist = lasso_solve(random_problem(seed, lam=lam), return_objective=True)
    assert all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:]))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_sparsity_monotone_in_lambda(seed):
    # run each problem to convergence so the zero pattern is the optimum's
    base = random_problem(seed, s=30, n1=5, f=3)
    zeros = []
    for lam in np.geomspace(0.01, 100.0, 10):
        p = LassoProblem(base.a1, base.x, lam, max_iters=5000, tol=1e-12)
        zeros.append(int(np.sum(lasso_solve(p) == 0.0)))
    assert zeros == sorted(zeros)
