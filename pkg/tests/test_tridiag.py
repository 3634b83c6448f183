import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvprox import _kernels
from tvprox.testkit import dense_solve_baseline
from tvprox.tridiag import (
    CholFactor,
    TridiagSPD,
    chol_factor,
    chol_solve,
    hessian_full,
    principal_submatrix,
)
from tvprox.tvcore import (
    IndexOutOfBoundsError,
    NotPositiveDefiniteError,
    ShapeMismatchError,
    ShapeTooSmallError,
)


@pytest.mark.parametrize("n, diag, off", [
    (3, [2, 2], [-1]),
    (2, [2], []),
    (5, [2, 2, 2, 2], [-1, -1, -1]),
])
def test_hessian_full(n, diag, off):
    h = hessian_full(n)
    np.testing.assert_array_equal(h.diag, diag)
    np.testing.assert_array_equal(h.off, off)
    d = np.diff(np.eye(n), axis=0)
    np.testing.assert_array_equal(h.to_dense(), d @ d.T)


def test_hessian_too_small():
    with pytest.raises(ShapeTooSmallError):
        hessian_full(1)


def test_principal_submatrix():
    t = TridiagSPD([2, 2, 2], [-1, -1])
    s = principal_submatrix(t, [0, 2])
    np.testing.assert_array_equal(s.diag, [2, 2])
    np.testing.assert_array_equal(s.off, [0])
    s = principal_submatrix(t, [0, 1])
    np.testing.assert_array_equal(s.off, [-1])
    empty = principal_submatrix(TridiagSPD([2, 2], [-1]), [])
    assert empty.size == 0
    assert chol_solve(chol_factor(empty), []).size == 0
    with pytest.raises(IndexOutOfBoundsError):
        principal_submatrix(t, [3])


def test_principal_submatrix_matches_dense():
    rng = np.random.default_rng(3)
    t = TridiagSPD(rng.uniform(2, 4, 9), rng.uniform(-1, 0, 8))
    idx = np.flatnonzero(rng.random(9) < 0.6)
    np.testing.assert_array_equal(principal_submatrix(t, idx).to_dense(),
                                  t.to_dense()[np.ix_(idx, idx)])


def test_chol_factor_examples():
    # Values from numpy's dense Cholesky of [[2, -1], [-1, 2]].
    f = chol_factor(TridiagSPD([2, 2], [-1]))
    np.testing.assert_allclose(f.l_diag, [1.41421356, 1.22474487], atol=1e-8)
    np.testing.assert_allclose(f.l_off, [-0.70710678], atol=1e-8)
    f = chol_factor(TridiagSPD([1, 1], [0]))
    np.testing.assert_array_equal(f.l_diag, [1, 1])
    np.testing.assert_array_equal(f.l_off, [0])
    f = chol_factor(TridiagSPD([2], []))
    np.testing.assert_allclose(f.l_diag, [np.sqrt(2)], rtol=0, atol=0)


def test_chol_solve_examples():
    f = chol_factor(TridiagSPD([2, 2], [-1]))
    np.testing.assert_allclose(chol_solve(f, [1, 0]), [2 / 3, 1 / 3], atol=1e-15)
    b = np.array([3.0, -1.0, 7.5])
    np.testing.assert_array_equal(chol_solve(chol_factor(TridiagSPD([1, 1, 1], [0, 0])), b), b)
    np.testing.assert_allclose(chol_solve(chol_factor(TridiagSPD([2], [])), [4]), [2])
    with pytest.raises(ShapeMismatchError):
        chol_solve(f, [1, 2, 3])


def test_not_positive_definite():
    with pytest.raises(NotPositiveDefiniteError):
        chol_factor(TridiagSPD([1, 1], [-1]))
    with pytest.raises(NotPositiveDefiniteError):
        chol_factor(TridiagSPD([-2], []))


def test_shape_checks():
    with pytest.raises(ShapeMismatchError):
        TridiagSPD([2, 2], [-1, -1])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 256), st.integers(0, 2**32 - 1))
def test_random_spd_residual(m, seed):
    rng = np.random.default_rng(seed)
    t = TridiagSPD(rng.uniform(2, 4, m), rng.uniform(-1, 0, m - 1))
    b = rng.standard_normal(m)
    f = chol_factor(t)
    d = chol_solve(f, b)
    assert np.max(np.abs(t.matvec(d) - b)) <= 1e-9 * np.max(np.abs(b))
    # Reconstruction L L^T = T.
    rec = f.to_dense() @ f.to_dense().T
    np.testing.assert_allclose(rec, t.to_dense(), rtol=1e-12, atol=1e-12 * 4)
    assert np.all(f.l_diag > 0)


@pytest.mark.parametrize("n", [2, 3, 10, 1000, 100_000])
def test_full_hessian_always_factors(n):
    f = chol_factor(hessian_full(n))
    assert np.all(f.l_diag > 1.0)


def test_matches_dense_baseline():
    rng = np.random.default_rng(11)
    t = TridiagSPD(rng.uniform(2, 4, 64), rng.uniform(-1, 0, 63))
    b = rng.standard_normal(64)
    np.testing.assert_allclose(chol_solve(chol_factor(t), b), dense_solve_baseline(t, b),
                               rtol=0, atol=1e-9)


def _per_element_ns(m, reps=15):
    diag = np.full(m, 2.0)
    off = np.full(m - 1, -1.0)
    ld, lo, out = np.empty(m), np.empty(m - 1), np.empty(m)
    b = np.ones(m)
    _kernels.tri_chol(diag, off, ld, lo)
    _kernels.tri_chol_solve(ld, lo, b, out)
    best = np.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        _kernels.tri_chol(diag, off, ld, lo)
        _kernels.tri_chol_solve(ld, lo, b, out)
        best = min(best, time.perf_counter() - t0)
    return best / m * 1e9


def test_cost_per_element_is_flat():
    # Quadratic growth would multiply the per-element cost by 64 over this range.
    costs = [_per_element_ns(m) for m in (4096, 32768, 262144)]
    assert max(costs) <= 2 * min(costs)


def test_out_buffers():
    t = TridiagSPD([2, 2, 2], [-1, -1])
    work = (np.empty(3), np.empty(2))
    f = chol_factor(t, out=work)
    np.testing.assert_array_equal(f.l_diag, work[0])
    assert np.shares_memory(f.l_diag, work[0])
    np.testing.assert_array_equal(f.l_diag, chol_factor(t).l_diag)
    out = np.empty(3)
    d = chol_solve(f, [1.0, 0.0, 1.0], out=out)
    assert d is out
    np.testing.assert_allclose(t.matvec(d), [1, 0, 1], atol=1e-15)
    with pytest.raises(ShapeMismatchError):
        chol_solve(f, [1.0, 0.0, 1.0], out=np.empty(4))
    with pytest.raises(ShapeMismatchError):
        chol_factor(t, out=(np.empty(3, dtype=np.float32), np.empty(2)))


def test_dataclasses_are_immutable():
    t = TridiagSPD([2, 2], [-1])
    with pytest.raises(ValueError):
        t.diag[0] = 5.0
    f = CholFactor([1.0], [])
    assert f.size == 1
