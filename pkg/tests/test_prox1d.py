import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from tvprox.prox1d import (
    NewtonOptions,
    apply_diff,
    apply_diff_transpose,
    dual_from_primal,
    dual_objective,
    duality_gap,
    prox_tv1d,
    prox_tv1d_batch,
    prox_tv1d_newton,
    prox_tv1d_tautstring,
)
from tvprox.testkit import pgd_dual_oracle_1d, unit_step
from tvprox.tvcore import BatchError, InfeasibleDualError, NonFiniteError, ShapeMismatchError, TVError

signals = hnp.arrays(np.float64, st.integers(1, 40),
                     elements=st.floats(-10, 10, allow_nan=False, allow_infinity=False))
lambdas = st.sampled_from([0.0, 0.05, 0.1, 0.5, 1.0, 3.0, 10.0])


def naive_dual(u, x):
    n = len(x)
    d = np.diff(np.eye(n), axis=0)
    return -0.5 * np.sum((d.T @ u) ** 2) + u @ d @ x


def two_point(x, lam):
    half = (x[1] - x[0]) / 2
    step = np.sign(half) * min(lam, abs(half))
    return np.array([x[0] + step, x[1] - step])


class TestDiffOperators:
    @pytest.mark.parametrize("x, expected", [([0, 2], [2]), ([5, 5, 5], [0, 0]),
                                             ([1, 3, 2], [2, -1]), ([4], [])])
    def test_apply_diff(self, x, expected):
        np.testing.assert_array_equal(apply_diff(x), expected)

    @pytest.mark.parametrize("u, n, expected", [([1], 2, [-1, 1]), ([0, 0], 3, [0, 0, 0]),
                                                ([1, 1], 3, [-1, 0, 1])])
    def test_apply_diff_transpose(self, u, n, expected):
        np.testing.assert_array_equal(apply_diff_transpose(u, n), expected)

    def test_transpose_shape(self):
        with pytest.raises(ShapeMismatchError):
            apply_diff_transpose([1, 2], 2)

    def test_adjoint(self):
        rng = np.random.default_rng(0)
        x, u = rng.standard_normal(9), rng.standard_normal(8)
        assert np.isclose(apply_diff(x) @ u, x @ apply_diff_transpose(u, 9))


class TestDual:
    def test_dual_objective_examples(self):
        assert dual_objective([0.0], [3.0, -1.0]) == 0.0
        assert dual_objective([1.0], [0.0, 2.0]) == pytest.approx(1.0)
        assert naive_dual(np.array([1.0]), np.array([0.0, 2.0])) == pytest.approx(1.0)

    def test_dual_matches_naive(self):
        rng = np.random.default_rng(1)
        for n in (2, 3, 10):
            x, u = rng.standard_normal(n), rng.standard_normal(n - 1)
            assert dual_objective(u, x) == pytest.approx(naive_dual(u, x))

    def test_dual_decreases_against_gradient(self):
        x = np.array([1.0, 0.0])
        u = np.array([-0.2])
        g = apply_diff(x - apply_diff_transpose(u, 2))
        moved = u - 0.1 * np.sign(g)
        assert dual_objective(moved, x) < dual_objective(u, x)
        assert naive_dual(moved, x) < naive_dual(u, x)

    def test_gap_examples(self):
        assert duality_gap([0.0, 0.0], [1.0, -2.0, 3.0], 0.0) == 0.0
        assert duality_gap([0.5], [0.0, 2.0], 0.5) == pytest.approx(0.0, abs=1e-15)
        assert duality_gap([0.0], [0.0, 2.0], 0.5) == pytest.approx(1.0)

    def test_gap_infeasible(self):
        with pytest.raises(InfeasibleDualError):
            duality_gap([0.6], [0.0, 2.0], 0.5)

    @settings(max_examples=50, deadline=None)
    @given(signals, lambdas, st.integers(0, 2**31))
    def test_gap_nonnegative(self, x, lam, seed):
        u = np.random.default_rng(seed).uniform(-lam, lam, x.size - 1)
        assert duality_gap(u, x, lam) >= -1e-12


class TestNewton:
    def test_two_point(self):
        y, u, stats = prox_tv1d_newton([0.0, 2.0], 0.5)
        np.testing.assert_allclose(y, [0.5, 1.5], atol=1e-14)
        np.testing.assert_allclose(u, [0.5])
        assert stats.converged
        np.testing.assert_allclose(prox_tv1d_newton([0.0, 2.0], 5.0)[0], [1.0, 1.0], atol=1e-14)

    def test_two_point_formula_and_pgd(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = rng.standard_normal(2) * 3
            lam = rng.uniform(0, 2)
            expect = two_point(x, lam)
            np.testing.assert_allclose(prox_tv1d_newton(x, lam)[0], expect, atol=1e-12)
            np.testing.assert_allclose(pgd_dual_oracle_1d(x, lam, iters=2000), expect, atol=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(signals)
    def test_lambda_zero_identity(self, x):
        y, u, stats = prox_tv1d_newton(x, 0.0)
        assert y.tobytes() == x.tobytes()
        assert stats.iters == 0 and stats.converged
        assert np.all(u == 0)

    def test_single_sample(self):
        y, u, stats = prox_tv1d_newton([3.0], 7.0)
        np.testing.assert_array_equal(y, [3.0])
        assert u.size == 0 and stats.iters == 0

    def test_unit_step_matches_tautstring(self):
        x = unit_step(64, 1, 0.1, seed=5)[0]
        y, _, stats = prox_tv1d_newton(x, 1.0)
        assert stats.converged
        assert np.max(np.abs(y - prox_tv1d_tautstring(x, 1.0))) <= 1e-8

    def test_primal_recovery(self):
        x = np.random.default_rng(3).standard_normal(30)
        y, u, stats = prox_tv1d_newton(x, 0.4)
        np.testing.assert_allclose(y, x - apply_diff_transpose(u, 30), atol=1e-14)
        assert np.all(np.abs(u) <= 0.4)
        assert stats.final_gap <= 1e-10 * (1 + x @ x)

    def test_iteration_budget(self):
        x = unit_step(512, 1, 0.5, seed=1)[0]
        y, u, stats = prox_tv1d_newton(x, 1.0, NewtonOptions(max_iters=1))
        assert not stats.converged
        assert stats.iters == 1
        assert np.all(np.abs(u) <= 1.0)
        # Best iterate is still a valid dual point with its own certificate.
        assert stats.final_gap == pytest.approx(duality_gap(u, x, 1.0), rel=1e-9, abs=1e-12)

    def test_errors(self):
        with pytest.raises(NonFiniteError):
            prox_tv1d_newton([0.0, np.nan], 1.0)
        with pytest.raises(TVError):
            prox_tv1d_newton([0.0, 1.0], -1.0)
        with pytest.raises(TVError):
            NewtonOptions(armijo_c=1.5)
        with pytest.raises(TVError):
            NewtonOptions(gap_tol=0)

    def test_dense_linear_solver_same_answer(self):
        xs = unit_step(100, 4, 0.2, seed=9)
        a = prox_tv1d_batch(xs, 1.0)
        b = prox_tv1d_batch(xs, 1.0, linear_solver="dense")
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestTautString:
    def test_examples(self):
        np.testing.assert_allclose(prox_tv1d_tautstring([0.0, 2.0], 0.5), [0.5, 1.5], atol=1e-15)
        np.testing.assert_array_equal(prox_tv1d_tautstring([4.0] * 7, 2.0), [4.0] * 7)
        np.testing.assert_array_equal(prox_tv1d_tautstring([3.0], 1.0), [3.0])

    @settings(max_examples=60, deadline=None)
    @given(hnp.arrays(np.float64, st.integers(1, 16),
                      elements=st.floats(-3, 3, allow_nan=False)),
           st.sampled_from([0.0, 0.1, 0.5, 1.0, 4.0]))
    def test_agrees_with_pgd(self, x, lam):
        ref = pgd_dual_oracle_1d(x, lam)
        assert np.max(np.abs(prox_tv1d_tautstring(x, lam) - ref)) <= 1e-6

    def test_gap_of_induced_dual(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            x = rng.standard_normal(rng.integers(2, 64))
            lam = rng.choice([0.1, 1.0, 10.0])
            y = prox_tv1d_tautstring(x, lam)
            assert duality_gap(dual_from_primal(x, y, lam), x, lam) <= 1e-9 * (1 + x @ x)


class TestProperties:
    @settings(max_examples=100, deadline=None)
    @given(signals, lambdas)
    def test_newton_matches_tautstring(self, x, lam):
        y, u, stats = prox_tv1d_newton(x, lam)
        assert stats.converged
        assert np.max(np.abs(y - prox_tv1d_tautstring(x, lam))) <= 1e-8

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 40), lambdas, st.integers(0, 2**31))
    def test_nonexpansive(self, n, lam, seed):
        rng = np.random.default_rng(seed)
        x1, x2 = rng.standard_normal(n) * 2, rng.standard_normal(n) * 2
        for solver in ("newton", "tautstring"):
            d = prox_tv1d(x1, lam, solver) - prox_tv1d(x2, lam, solver)
            assert np.linalg.norm(d) <= np.linalg.norm(x1 - x2) + 1e-12

    @settings(max_examples=60, deadline=None)
    @given(signals, st.floats(0, 5), st.floats(0, 5))
    def test_monotone_smoothing(self, x, l1, l2):
        lo, hi = sorted((l1, l2))
        tv = lambda v: np.abs(np.diff(v)).sum()
        assert tv(prox_tv1d(x, hi)) <= tv(prox_tv1d(x, lo)) + 1e-9

    @settings(max_examples=60, deadline=None)
    @given(signals, lambdas)
    def test_mean_preserved(self, x, lam):
        for solver in ("newton", "tautstring"):
            assert abs(prox_tv1d(x, lam, solver).mean() - x.mean()) <= 1e-10 * max(1, np.abs(x).max())

    @settings(max_examples=60, deadline=None)
    @given(signals, lambdas, st.floats(-5, 5))
    def test_translation_equivariant(self, x, lam, c):
        for solver in ("newton", "tautstring"):
            np.testing.assert_allclose(prox_tv1d(x + c, lam, solver), prox_tv1d(x, lam, solver) + c,
                                       rtol=0, atol=1e-10)


class TestBatch:
    def test_examples(self):
        out = prox_tv1d_batch([[0.0, 2.0], [0.0, 2.0]], [0.5, 5.0])
        np.testing.assert_allclose(out, [[0.5, 1.5], [1.0, 1.0]], atol=1e-14)
        single = prox_tv1d_batch([[0.0, 3.0, 1.0]], [0.7])
        np.testing.assert_array_equal(single[0], prox_tv1d_newton([0.0, 3.0, 1.0], 0.7)[0])
        assert prox_tv1d_batch(np.zeros((0, 5)), 1.0).shape == (0, 5)
        assert prox_tv1d_batch([], 1.0).size == 0

    def test_error_carries_index(self):
        xs = np.zeros((4, 3))
        xs[2, 1] = np.inf
        with pytest.raises(BatchError) as info:
            prox_tv1d_batch(xs, 1.0)
        assert info.value.context == {"index": 2}
        with pytest.raises(BatchError) as info:
            prox_tv1d_batch(np.zeros((3, 3)), [1.0, -1.0, 1.0])
        assert info.value.context == {"index": 1}

    @pytest.mark.parametrize("solver", ["newton", "tautstring"])
    def test_deterministic_across_workers(self, solver, monkeypatch):
        import tvprox._parallel as par
        monkeypatch.setattr(par, "_MIN_WORK_PER_THREAD", 1)
        xs = unit_step(64, 37, 0.3, seed=2)
        lams = np.linspace(0.1, 2, 37)
        ref = prox_tv1d_batch(xs, lams, solver=solver, workers=1)
        for w in (2, 3, 8):
            assert prox_tv1d_batch(xs, lams, solver=solver, workers=w).tobytes() == ref.tobytes()
        for i in range(37):
            assert prox_tv1d(xs[i], lams[i], solver).tobytes() == ref[i].tobytes()

    def test_threads_env(self, monkeypatch):
        from tvprox._parallel import max_workers
        monkeypatch.setenv("TVPROX_THREADS", "3")
        assert max_workers() == 3
        monkeypatch.setenv("TVPROX_THREADS", "0")
        assert max_workers() >= 1

    def test_info(self):
        ys, info = prox_tv1d_batch(unit_step(32, 5, 0.1, 0), 1.0, return_info=True)
        assert info["converged"].all()
        assert info["u"].shape == (5, 31)
        assert np.all(info["gap"] >= 0)
