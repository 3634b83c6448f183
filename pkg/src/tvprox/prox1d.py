"""Proximal operator of 1D total variation.

Solves

    argmin_y  0.5 * ||y - x||^2 + lam * sum_i |y[i+1] - y[i]|

either by projected Newton on the box-constrained dual (production path) or
by the direct taut-string scan (exact reference). The dual problem is

    max_u  -0.5 * ||D^T u||^2 + u^T D x    s.t. |u_i| <= lam

with D the forward-difference operator, and y = x - D^T u recovers the
primal solution.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._parallel import run_chunked
from .tvcore import (
    BatchError,
    InfeasibleDualError,
    NonFiniteError,
    NotPositiveDefiniteError,
    ShapeMismatchError,
    TVError,
    as_signal,
    check_lambda,
)

__all__ = [
    "NewtonOptions",
    "SolveStats",
    "apply_diff",
    "apply_diff_transpose",
    "dual_objective",
    "duality_gap",
    "dual_from_primal",
    "prox_tv1d_newton",
    "prox_tv1d_tautstring",
    "prox_tv1d_batch",
    "prox_tv1d",
]


@dataclass(frozen=True)
class NewtonOptions:
    """Stopping and line-search settings of the projected Newton solver.

    The solver stops once the duality gap drops below
    ``gap_tol * (1 + ||x||^2)``.
    """

    max_iters: int = 100
    gap_tol: float = 1e-10
    armijo_c: float = 1e-4
    step_floor: float = 1e-12
    active_tol: float = 1e-12

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise TVError("max_iters must be a positive integer")
        for name in ("gap_tol", "step_floor", "active_tol"):
            if not getattr(self, name) > 0:
                raise TVError(f"{name} must be strictly positive")
        if not 0 < self.armijo_c < 1:
            raise TVError("armijo_c must lie in (0, 1)")


@dataclass(frozen=True)
class SolveStats:
    iters: int
    final_gap: float
    converged: bool


def apply_diff(x) -> np.ndarray:
    """Forward differences ``x[i+1] - x[i]``; empty for a length-1 signal."""
    return np.diff(np.asarray(x, dtype=np.float64))


def apply_diff_transpose(u, n: int) -> np.ndarray:
    """Adjoint of :func:`apply_diff` for signals of length ``n``."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    if u.size != n - 1:
        raise ShapeMismatchError(f"dual vector of length {u.size} for a length-{n} signal")
    v = np.zeros(n)
    v[:-1] -= u
    v[1:] += u
    return v


def dual_objective(u, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    dtu = apply_diff_transpose(u, x.size)
    return float(-0.5 * dtu @ dtu + u @ apply_diff(x))


def duality_gap(u, x, lam) -> float:
    """Primal minus dual objective at ``y = x - D^T u``.

    Equals ``lam * ||D y||_1 - u^T D y``; nonnegative for feasible ``u`` and
    zero exactly at the optimum.
    """
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    lam = check_lambda(lam)
    if u.size != max(x.size - 1, 0):
        raise ShapeMismatchError(f"dual vector of length {u.size} for a length-{x.size} signal")
    if u.size and np.max(np.abs(u)) > lam * (1 + 1e-12):
        raise InfeasibleDualError(f"max |u| = {np.max(np.abs(u)):.17g} exceeds lambda = {lam}")
    dy = apply_diff(x - apply_diff_transpose(u, x.size))
    return float(lam * np.abs(dy).sum() - u @ dy)


def dual_from_primal(x, y, lam) -> np.ndarray:
    """Dual point induced by a primal estimate: solves ``x - y = D^T u``.

    The result is clipped to the feasible box ``[-lam, lam]``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    u = -np.cumsum(x - y)[:-1]
    return np.clip(u, -lam, lam)


def _check_opts(opts):
    if opts is None:
        return NewtonOptions()
    if not isinstance(opts, NewtonOptions):
        raise TypeError("opts must be a NewtonOptions instance")
    return opts


def prox_tv1d_newton(x, lam, opts: NewtonOptions | None = None):
    """1D TV prox by projected Newton on the dual.

    Returns ``(y, u, stats)``. When the iteration budget runs out the best
    iterate is returned with ``stats.converged == False``.
    """
    x = as_signal(x)
    lam = check_lambda(lam)
    opts = _check_opts(opts)
    n = x.size
    if lam == 0.0 or n == 1:
        return x.copy(), np.zeros(n - 1), SolveStats(0, 0.0, True)
    y = np.empty(n)
    u = np.empty(n - 1)
    stats = np.zeros(2)
    code = _kernels.newton_tv1d(x, lam, opts.max_iters, opts.gap_tol, opts.armijo_c,
                                opts.step_floor, opts.active_tol, False, y, u, stats)
    if code == _kernels.NOT_PD:
        raise NotPositiveDefiniteError("degenerate Newton system")
    return y, u, SolveStats(int(stats[0]), max(float(stats[1]), 0.0), code == _kernels.OK)


def prox_tv1d_tautstring(x, lam) -> np.ndarray:
    """Exact 1D TV prox by the direct taut-string method."""
    x = as_signal(x)
    lam = check_lambda(lam)
    y = np.empty_like(x)
    _kernels.taut_string_tv1d(x, lam, y)
    return y


def prox_tv1d(x, lam, solver: str = "newton", opts: NewtonOptions | None = None) -> np.ndarray:
    if solver == "newton":
        return prox_tv1d_newton(x, lam, opts)[0]
    if solver == "tautstring":
        return prox_tv1d_tautstring(x, lam)
    raise TVError(f"unknown solver {solver!r}")


def _check_batch(xs, lambdas):
    xs = np.array(xs, dtype=np.float64, copy=True)
    if xs.ndim != 2:
        if xs.size == 0:
            return np.zeros((0, 0)), np.zeros(0)
        raise ShapeMismatchError(f"expected a (batch, length) array, got shape {xs.shape}")
    lams = np.broadcast_to(np.asarray(lambdas, dtype=np.float64), (xs.shape[0],)).copy()
    if xs.shape[0] == 0:
        return xs, lams
    if xs.shape[1] == 0:
        raise ShapeMismatchError("signals of length 0")
    finite = np.isfinite(xs).all(axis=1)
    if not finite.all():
        i = int(np.argmin(finite))
        raise BatchError("signal contains NaN or Inf", NonFiniteError(), index=i)
    bad = ~np.isfinite(lams) | (lams < 0)
    if bad.any():
        i = int(np.argmax(bad))
        raise BatchError(f"invalid lambda {lams[i]!r}", TVError(), index=i)
    return xs, lams


def prox_tv1d_batch(xs, lambdas, opts: NewtonOptions | None = None, *,
                    solver: str = "newton", linear_solver: str = "tridiag",
                    return_info: bool = False, workers: int | None = None):
    """Solve a batch of equal-length 1D TV prox problems.

    Parameters
    ----------
    xs : array of shape (B, N)
        One signal per row.
    lambdas : float or array of shape (B,)
        Regularization weight per signal.
    solver : {"newton", "tautstring"}
    linear_solver : {"tridiag", "dense"}
        Newton system solve. ``"dense"`` swaps the O(N) banded Cholesky for a
        dense LU solve and exists for benchmarking only.
    return_info : bool
        Also return a dict with per-signal ``iters``, ``gap``, ``converged``
        and dual ``u`` (Newton only).

    Output equals the sequential map over signals for any worker count.
    """
    xs, lams = _check_batch(xs, lambdas)
    opts = _check_opts(opts)
    b, n = xs.shape
    ys = np.empty_like(xs)
    info = None
    if solver == "newton":
        if linear_solver not in ("tridiag", "dense"):
            raise TVError(f"unknown linear solver {linear_solver!r}")
        dense = linear_solver == "dense"
        us = np.empty((b, max(n - 1, 0)))
        stats = np.zeros((b, 2))
        codes = np.zeros(b, dtype=np.int64)

        def work(lo, hi):
            _kernels.newton_tv1d_batch(xs[lo:hi], lams[lo:hi], opts.max_iters, opts.gap_tol,
                                       opts.armijo_c, opts.step_floor, opts.active_tol,
                                       dense, ys[lo:hi], us[lo:hi], stats[lo:hi], codes[lo:hi])

        run_chunked(work, b, 20 * n, workers)
        if np.any(codes == _kernels.NOT_PD):
            i = int(np.argmax(codes == _kernels.NOT_PD))
            raise BatchError("degenerate Newton system", NotPositiveDefiniteError(), index=i)
        if return_info:
            info = {
                "iters": stats[:, 0].astype(np.int64),
                "gap": np.maximum(stats[:, 1], 0.0),
                "converged": codes == _kernels.OK,
                "u": us,
            }
    elif solver == "tautstring":
        def work(lo, hi):
            _kernels.taut_string_batch(xs[lo:hi], lams[lo:hi], ys[lo:hi])

        run_chunked(work, b, 4 * n, workers)
        if return_info:
            info = {
                "iters": np.zeros(b, dtype=np.int64),
                "gap": np.zeros(b),
                "converged": np.ones(b, dtype=bool),
            }
    else:
        raise TVError(f"unknown solver {solver!r}")
    return (ys, info) if return_info else ys
