"""Symmetric positive-definite tridiagonal systems in compact band storage.

A matrix of size m is stored as its diagonal (length m) and a single
off-diagonal (length m - 1). Factorization and solve are both O(m).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .tvcore import (
    NotPositiveDefiniteError,
    ShapeMismatchError,
    ShapeTooSmallError,
    as_active_set,
)

__all__ = [
    "TridiagSPD",
    "CholFactor",
    "hessian_full",
    "principal_submatrix",
    "chol_factor",
    "chol_solve",
]


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TridiagSPD:
    diag: np.ndarray
    off: np.ndarray

    def __post_init__(self):
        diag, off = _readonly(self.diag), _readonly(self.off)
        if off.size != max(diag.size - 1, 0):
            raise ShapeMismatchError(
                f"off-diagonal has length {off.size}, expected {max(diag.size - 1, 0)}"
            )
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "off", off)

    @property
    def size(self) -> int:
        return self.diag.size

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)

    def matvec(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        out = self.diag * v
        out[:-1] += self.off * v[1:]
        out[1:] += self.off * v[:-1]
        return out


@dataclass(frozen=True)
class CholFactor:
    """Lower bidiagonal factor L with T = L L^T."""

    l_diag: np.ndarray
    l_off: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "l_diag", _readonly(self.l_diag))
        object.__setattr__(self, "l_off", _readonly(self.l_off))

    @classmethod
    def _adopt(cls, l_diag: np.ndarray, l_off: np.ndarray) -> "CholFactor":
        # Take ownership of freshly computed arrays without the defensive copy.
        l_diag.setflags(write=False)
        l_off.setflags(write=False)
        f = object.__new__(cls)
        object.__setattr__(f, "l_diag", l_diag)
        object.__setattr__(f, "l_off", l_off)
        return f

    @property
    def size(self) -> int:
        return self.l_diag.size

    def to_dense(self) -> np.ndarray:
        return np.diag(self.l_diag) + np.diag(self.l_off, -1)


def hessian_full(n: int) -> TridiagSPD:
    """H = D D^T for the forward-difference operator D of a length-n signal."""
    if n < 2:
        raise ShapeTooSmallError(f"need a signal of length >= 2, got {n}")
    return TridiagSPD(np.full(n - 1, 2.0), np.full(n - 2, -1.0))


def principal_submatrix(t: TridiagSPD, s) -> TridiagSPD:
    """Rows and columns ``s`` of ``t``.

    Consecutive selected indices that are not adjacent in ``t`` decouple, so
    the result is again tridiagonal.
    """
    idx = as_active_set(s, t.size)
    k = idx.size
    sub_diag = np.empty(k)
    sub_off = np.empty(max(k, 1))
    _kernels.tri_submatrix(t.diag, t.off if t.off.size else np.zeros(1), idx, k,
                           sub_diag, sub_off)
    return TridiagSPD(sub_diag, sub_off[: max(k - 1, 0)])


def _check_out(buf, size: int, name: str) -> np.ndarray:
    if not (isinstance(buf, np.ndarray) and buf.dtype == np.float64 and buf.ndim == 1
            and buf.size == size and buf.flags.c_contiguous and buf.flags.writeable):
        raise ShapeMismatchError(f"{name} must be a writable contiguous float64 array of "
                                 f"length {size}")
    return buf


def chol_factor(t: TridiagSPD, out=None) -> CholFactor:
    """Cholesky factor of ``t`` in O(m).

    ``out`` may be a ``(l_diag, l_off)`` pair of preallocated arrays to write
    into, so repeated factorizations can reuse memory. The returned factor
    then holds read-only views of those buffers.
    """
    m = t.size
    if out is None:
        l_diag = np.empty(m)
        l_off = np.empty(max(m - 1, 0))
    else:
        l_diag = _check_out(out[0], m, "out[0]")
        l_off = _check_out(out[1], max(m - 1, 0), "out[1]")
    bad = _kernels.tri_chol(t.diag, t.off, l_diag, l_off)
    if bad >= 0:
        raise NotPositiveDefiniteError(
            f"pivot {bad} is <= {_kernels.PIVOT_FLOOR:g}; matrix is not positive definite"
        )
    if out is not None:
        l_diag, l_off = l_diag.view(), l_off.view()
    return CholFactor._adopt(l_diag, l_off)


def chol_solve(f: CholFactor, b, out=None) -> np.ndarray:
    """Solve ``L L^T d = b`` in O(m); ``out`` optionally receives ``d``."""
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if b.size != f.size:
        raise ShapeMismatchError(f"rhs has length {b.size}, factor has size {f.size}")
    out = np.empty(f.size) if out is None else _check_out(out, f.size, "out")
    _kernels.tri_chol_solve(f.l_diag, f.l_off, b, out)
    return out
