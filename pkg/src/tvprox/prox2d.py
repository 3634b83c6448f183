"""Anisotropic 2D TV prox by proximal Dykstra over rows and columns.

Each iteration solves every row problem as one batch, updates the row
correction ``P``, solves every column problem as one batch and updates the
column correction ``Q``. The returned tape records the inputs and outputs of
every 1D solve so the unrolled iterations can be differentiated in reverse.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grad1d import SEG_TOL, vjp_lambda_batch, vjp_x_batch
from .prox1d import NewtonOptions, prox_tv1d_batch
from .tvcore import (
    BatchError,
    ShapeMismatchError,
    TapeMismatchError,
    TVError,
    as_plane,
    check_lambda,
)

__all__ = [
    "DEFAULT_ITERS",
    "DykstraState",
    "DykstraTape",
    "prox_tv2d_dykstra",
    "prox_tv2d_vjp",
    "objective_2d",
]

DEFAULT_ITERS = 4


@dataclass
class DykstraState:
    y: np.ndarray
    z: np.ndarray
    p: np.ndarray
    q: np.ndarray
    k: int = 0

    @classmethod
    def start(cls, x: np.ndarray) -> "DykstraState":
        return cls(x.copy(), x.copy(), np.zeros_like(x), np.zeros_like(x))


@dataclass
class DykstraTape:
    """Per-iteration record of the row and column 1D solves.

    ``row_out[k]`` is the row-pass output (M, N); ``col_out[k]`` the
    column-pass output stored transposed (N, M), one signal per row.
    """

    shape: tuple
    lam: float
    k_iters: int
    row_in: list = field(default_factory=list)
    row_out: list = field(default_factory=list)
    col_in: list = field(default_factory=list)
    col_out: list = field(default_factory=list)
    max_gap: float = 0.0
    converged: bool = True
    iters_total: int = 0

    def __len__(self):
        m, n = self.shape
        return len(self.row_out) * m + len(self.col_out) * n

    @property
    def is_identity(self) -> bool:
        return self.lam == 0.0


def _solve_rows(a, lam, opts, solver, tape, k, axis):
    try:
        out, info = prox_tv1d_batch(a, lam, opts, solver=solver, return_info=True)
    except BatchError as exc:
        raise BatchError("1D prox failed inside Dykstra", exc.cause or exc,
                         iteration=k, axis=axis, **exc.context) from exc
    tape.max_gap = max(tape.max_gap, float(info["gap"].max(initial=0.0)))
    tape.converged = tape.converged and bool(info["converged"].all())
    tape.iters_total += int(info["iters"].sum())
    return out


def prox_tv2d_dykstra(x, lam, k_iters: int = DEFAULT_ITERS,
                      opts: NewtonOptions | None = None, solver: str = "newton",
                      record: bool = True):
    """Anisotropic 2D TV prox of an image plane.

    Returns ``(y, tape)``; ``y`` is the column-pass output of the last
    iteration. With ``record=False`` the tape only carries solver
    diagnostics and cannot be used for :func:`prox_tv2d_vjp`.
    """
    x = as_plane(x)
    lam = check_lambda(lam)
    k_iters = int(k_iters)
    if k_iters < 1:
        raise TVError("k_iters must be >= 1")
    tape = DykstraTape(x.shape, lam, k_iters)
    if lam == 0.0:
        return x.copy(), tape
    st = DykstraState.start(x)
    for k in range(1, k_iters + 1):
        a = st.y + st.p
        st.z = _solve_rows(a, lam, opts, solver, tape, k, "rows")
        st.p = a - st.z
        b = np.ascontiguousarray((st.z + st.q).T)
        y_t = _solve_rows(b, lam, opts, solver, tape, k, "cols")
        y_new = y_t.T.copy()
        st.q = st.z + st.q - y_new
        st.y = y_new
        st.k = k
        if record:
            tape.row_in.append(a)
            tape.row_out.append(st.z)
            tape.col_in.append(b)
            tape.col_out.append(y_t)
    if not record:
        tape.k_iters = -1
    return st.y, tape


def prox_tv2d_vjp(tape: DykstraTape, g, seg_tol: float = SEG_TOL):
    """Reverse-mode gradient of the unrolled Dykstra iterations.

    Returns ``(gx, glambda)`` for the cotangent ``g`` of the output.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.shape != tuple(tape.shape):
        raise TapeMismatchError(f"cotangent shape {g.shape} does not match tape {tape.shape}")
    if tape.is_identity:
        return g.copy(), 0.0
    if tape.k_iters < 0 or len(tape.row_out) != tape.k_iters or len(tape.col_out) != tape.k_iters:
        raise TapeMismatchError("tape does not hold a complete recorded forward pass")
    g_y = g.copy()
    g_p = np.zeros_like(g)
    g_q = np.zeros_like(g)
    g_lam = 0.0
    for k in reversed(range(tape.k_iters)):
        # Q' = B - Y', Y' = cols(B), B = Z + Q
        g_ybar = g_y - g_q
        g_ybar_t = np.ascontiguousarray(g_ybar.T)
        col_out = tape.col_out[k]
        g_b = g_q + vjp_x_batch(col_out, g_ybar_t, seg_tol).T
        g_lam += vjp_lambda_batch(col_out, g_ybar_t, seg_tol).sum()
        g_z = g_b.copy()
        g_q = g_b
        # P' = A - Z, Z = rows(A), A = Y + P
        g_z -= g_p
        row_out = tape.row_out[k]
        g_a = g_p + vjp_x_batch(row_out, g_z, seg_tol)
        g_lam += vjp_lambda_batch(row_out, g_z, seg_tol).sum()
        g_y = g_a
        g_p = g_a.copy()
    return g_y, float(g_lam)


def objective_2d(y, x, lam) -> float:
    """0.5 ||Y - X||_F^2 + lam * (row TV + column TV)."""
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if y.shape != x.shape or y.ndim != 2:
        raise ShapeMismatchError(f"shapes {y.shape} and {x.shape} do not match")
    tv = np.abs(np.diff(y, axis=1)).sum() + np.abs(np.diff(y, axis=0)).sum()
    return float(0.5 * np.sum((y - x) ** 2) + lam * tv)
