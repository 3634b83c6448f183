"""Backward pass of the 1D TV prox.

Around a solution ``y`` the prox is locally affine: inputs that move within
a constant run of ``y`` get averaged together, and the run levels move with
lambda according to the signs of the jumps at their two ends. Hence the
Jacobian in ``x`` is the orthogonal projector onto signals that are constant
on every run of ``y``. The fast functions here use that segment-averaging
form; :func:`jacobian_x_explicit` builds the same matrices from the
cumulative-sum parameterization ``y = L z`` and exists to cross-check them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .tvcore import ShapeMismatchError, ShapeTooLargeError, TVError

__all__ = [
    "SEG_TOL",
    "SegmentPartition",
    "segments",
    "vjp_x",
    "vjp_lambda",
    "vjp_x_batch",
    "vjp_lambda_batch",
    "jacobian_x_explicit",
    "jacobian_lambda_explicit",
]

SEG_TOL = 1e-9
EXPLICIT_MAX_N = 512


@dataclass(frozen=True)
class SegmentPartition:
    """Constant runs of a signal.

    ``boundaries`` starts at 0 and ends at ``n``; run ``j`` covers
    ``boundaries[j]:boundaries[j+1]``.
    """

    boundaries: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=np.int64).reshape(-1).copy()
        if b.size < 2 or b[0] != 0 or np.any(np.diff(b) <= 0):
            raise TVError("boundaries must start at 0 and strictly increase")
        b.setflags(write=False)
        object.__setattr__(self, "boundaries", b)

    @property
    def n(self) -> int:
        return int(self.boundaries[-1])

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.boundaries)

    def __len__(self):
        return self.boundaries.size - 1

    def labels(self) -> np.ndarray:
        """Run index of every sample."""
        return np.repeat(np.arange(len(self)), self.lengths)

    def runs(self):
        return [(int(a), int(b)) for a, b in zip(self.boundaries[:-1], self.boundaries[1:])]


def segments(y, seg_tol: float = SEG_TOL) -> SegmentPartition:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    cuts = np.flatnonzero(np.abs(np.diff(y)) > seg_tol) + 1
    return SegmentPartition(np.concatenate(([0], cuts, [y.size])))


def _check_len(p: SegmentPartition, g) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    if g.size != p.n:
        raise ShapeMismatchError(f"gradient of length {g.size} for a partition of {p.n}")
    return g


def vjp_x(p: SegmentPartition, g) -> np.ndarray:
    """``g^T dy/dx``: replace ``g`` by its mean over every run."""
    g = _check_len(p, g)
    means = np.add.reduceat(g, p.boundaries[:-1]) / p.lengths
    return np.repeat(means, p.lengths)


def _run_slopes(y, p: SegmentPartition) -> np.ndarray:
    """d(level)/d(lambda) of every run: (sign of right jump - sign of left jump) / length."""
    b = p.boundaries
    jumps = np.sign(y[b[1:-1]] - y[b[1:-1] - 1])
    right = np.append(jumps, 0.0)
    left = np.insert(jumps, 0, 0.0)
    return (right - left) / p.lengths


def vjp_lambda(y, p: SegmentPartition, g) -> float:
    """``g^T dy/dlambda`` at the solution ``y`` with runs ``p``."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    g = _check_len(p, g)
    if y.size != p.n:
        raise ShapeMismatchError("y does not match the partition")
    sums = np.add.reduceat(g, p.boundaries[:-1])
    return float(sums @ _run_slopes(y, p))


def _batch_runs(ys, seg_tol):
    b, n = ys.shape
    starts = np.ones((b, n), dtype=bool)
    starts[:, 1:] = np.abs(np.diff(ys, axis=1)) > seg_tol
    flat = starts.ravel()
    labels = np.cumsum(flat) - 1
    return starts, flat, labels


def vjp_x_batch(ys, gs, seg_tol: float = SEG_TOL) -> np.ndarray:
    """Row-wise :func:`vjp_x` for solutions ``ys`` and cotangents ``gs`` of shape (B, N)."""
    ys = np.asarray(ys, dtype=np.float64)
    gs = np.asarray(gs, dtype=np.float64)
    if ys.shape != gs.shape or ys.ndim != 2:
        raise ShapeMismatchError(f"shapes {ys.shape} and {gs.shape} do not match")
    if ys.size == 0:
        return np.zeros_like(gs)
    _, _, labels = _batch_runs(ys, seg_tol)
    counts = np.bincount(labels)
    means = np.bincount(labels, weights=gs.ravel()) / counts
    return means[labels].reshape(gs.shape)


def vjp_lambda_batch(ys, gs, seg_tol: float = SEG_TOL) -> np.ndarray:
    """Row-wise :func:`vjp_lambda`; returns one value per row."""
    ys = np.asarray(ys, dtype=np.float64)
    gs = np.asarray(gs, dtype=np.float64)
    if ys.shape != gs.shape or ys.ndim != 2:
        raise ShapeMismatchError(f"shapes {ys.shape} and {gs.shape} do not match")
    b, n = ys.shape
    if ys.size == 0 or n == 1:
        return np.zeros(b)
    starts, flat, labels = _batch_runs(ys, seg_tol)
    counts = np.bincount(labels)
    sums = np.bincount(labels, weights=gs.ravel())
    # Jump sign entering each sample (zero unless it starts a run after the row start).
    entering = np.zeros((b, n))
    entering[:, 1:] = np.where(starts[:, 1:], np.sign(np.diff(ys, axis=1)), 0.0)
    run_first = np.flatnonzero(flat)
    left = entering.ravel()[run_first]
    # The right jump of a run is the left jump of the next run in the same row.
    right = np.zeros_like(left)
    row_of_run = run_first // n
    same_row = row_of_run[1:] == row_of_run[:-1]
    right[:-1] = np.where(same_row, left[1:], 0.0)
    contrib = sums * (right - left) / counts
    return np.bincount(row_of_run, weights=contrib, minlength=b)


def _support_columns(y, seg_tol):
    """Columns of L kept in the local model: the intercept plus one per jump."""
    jumps = np.diff(y)
    nz = np.flatnonzero(np.abs(jumps) > seg_tol)
    cols = np.concatenate(([0], nz + 1))
    signs = np.concatenate(([0.0], np.sign(jumps[nz])))
    return cols, signs


def _explicit_m(y, seg_tol):
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = y.size
    if n > EXPLICIT_MAX_N:
        raise ShapeTooLargeError(f"explicit Jacobian limited to N <= {EXPLICIT_MAX_N}")
    lower = np.tril(np.ones((n, n)))
    cols, signs = _support_columns(y, seg_tol)
    l_s = lower[:, cols]
    gram = cho_factor(l_s.T @ l_s, lower=True)
    # M = L_S (L_S^T L_S)^{-1}, formed as a solve against L_S^T.
    m = cho_solve(gram, l_s.T).T
    return m, l_s, signs


def jacobian_x_explicit(y, p: SegmentPartition | None = None,
                        seg_tol: float = SEG_TOL) -> np.ndarray:
    """Dense ``dy/dx = M L_S^T`` with ``M = L_S (L_S^T L_S)^{-1}``.

    ``L`` is the lower-triangular all-ones (cumulative sum) matrix and ``S``
    the intercept column plus the columns following each nonzero jump of
    ``y``. Testing path only; ``N`` is capped at 512.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if p is not None and p.n != y.size:
        raise ShapeMismatchError("y does not match the partition")
    m, l_s, _ = _explicit_m(y, seg_tol)
    return m @ l_s.T


def jacobian_lambda_explicit(y, seg_tol: float = SEG_TOL) -> np.ndarray:
    """Dense ``dy/dlambda = -M sign(z_S)`` with a zero sign on the intercept."""
    m, _, signs = _explicit_m(y, seg_tol)
    return -m @ signs
