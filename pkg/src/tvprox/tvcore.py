"""Shared array types, parameter containers and error classes.

Signals, image planes and channel stacks are plain ``float64`` numpy arrays
of rank 1, 2 and 3. The helpers here convert raw input into such arrays and
check the invariants every solver relies on (finite entries, no empty axis).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

__all__ = [
    "TVError",
    "NonFiniteError",
    "EmptyShapeError",
    "ShapeMismatchError",
    "ShapeTooSmallError",
    "ShapeTooLargeError",
    "IndexOutOfBoundsError",
    "NotPositiveDefiniteError",
    "InfeasibleDualError",
    "TapeMismatchError",
    "SingularMatrixError",
    "BatchError",
    "validate",
    "as_signal",
    "as_plane",
    "as_stack",
    "as_active_set",
    "check_lambda",
    "LayerParams",
]


class TVError(ValueError):
    """Base class of every error raised by this package."""


class NonFiniteError(TVError):
    pass


class EmptyShapeError(TVError):
    pass


class ShapeMismatchError(TVError):
    pass


class ShapeTooSmallError(TVError):
    pass


class ShapeTooLargeError(TVError):
    pass


class IndexOutOfBoundsError(TVError, IndexError):
    pass


class NotPositiveDefiniteError(TVError, np.linalg.LinAlgError):
    pass


class InfeasibleDualError(TVError):
    pass


class TapeMismatchError(TVError):
    pass


class SingularMatrixError(TVError, np.linalg.LinAlgError):
    pass


class BatchError(TVError):
    """An error raised while solving one member of a batch.

    ``context`` holds the location of the failing problem, e.g.
    ``{"index": 3}`` or ``{"iteration": 2, "axis": "rows", "index": 5}``.
    """

    def __init__(self, message: str, cause: Exception | None = None, **context):
        self.context = context
        self.cause = cause
        where = ", ".join(f"{k}={v}" for k, v in context.items())
        super().__init__(f"{message} ({where})" if where else message)


_RANK_NAMES = {1: "signal", 2: "image plane", 3: "channel stack"}


def validate(a) -> TVError | None:
    """Check a signal, image plane or channel stack.

    Returns ``None`` when ``a`` is a finite real array of rank 1 to 3 with no
    empty axis, otherwise the error describing the first violated invariant.
    Never raises.
    """
    try:
        arr = np.asarray(a, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        return TVError(f"cannot interpret input as a real array: {exc}")
    if arr.ndim not in _RANK_NAMES:
        return ShapeMismatchError(f"expected rank 1, 2 or 3, got rank {arr.ndim}")
    if any(d == 0 for d in arr.shape):
        return EmptyShapeError(f"{_RANK_NAMES[arr.ndim]} has an empty axis: shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        return NonFiniteError(f"{_RANK_NAMES[arr.ndim]} contains NaN or Inf")
    return None


def _as_rank(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ShapeMismatchError(
            f"expected a {_RANK_NAMES[ndim]} (rank {ndim}), got shape {arr.shape}"
        )
    err = validate(arr)
    if err is not None:
        raise err
    return arr


def as_signal(a) -> np.ndarray:
    """Validated float64 copy of a 1D signal."""
    return _as_rank(a, 1)


def as_plane(a) -> np.ndarray:
    """Validated float64 copy of an M x N image plane."""
    return _as_rank(a, 2)


def as_stack(a) -> np.ndarray:
    """Validated float64 copy of a C x H x W channel stack."""
    return _as_rank(a, 3)


def as_active_set(indices, size: int) -> np.ndarray:
    """Sorted unique index array, every entry within ``[0, size)``."""
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= size):
        raise IndexOutOfBoundsError(f"active set index outside [0, {size})")
    if idx.size > 1 and np.any(np.diff(idx) <= 0):
        raise TVError("active set indices must be strictly increasing")
    return idx


def check_lambda(lam) -> float:
    lam = float(lam)
    if not np.isfinite(lam):
        raise NonFiniteError("lambda must be finite")
    if lam < 0:
        raise TVError(f"lambda must be non-negative, got {lam}")
    return lam


@dataclass(frozen=True)
class LayerParams:
    """Parameters of a TV layer.

    ``lambda_raw`` holds one unconstrained value per channel; the effective
    regularization weight of channel ``c`` is ``softplus(lambda_raw[c])``.
    With ``shared_lambda`` a single raw value is broadcast to every channel.
    """

    lambda_raw: np.ndarray
    mode: Literal["smooth", "sharpen"] = "smooth"
    spatial: Literal["2d", "rows", "cols"] = "2d"
    dykstra_iters: int = 4
    shared_lambda: bool = False
    solver: Literal["newton", "tautstring"] = "newton"

    def __post_init__(self):
        raw = np.atleast_1d(np.asarray(self.lambda_raw, dtype=np.float64)).copy()
        if raw.ndim != 1 or raw.size == 0:
            raise ShapeMismatchError("lambda_raw must be a non-empty vector")
        if not np.all(np.isfinite(raw)):
            raise NonFiniteError("lambda_raw must be finite")
        if self.shared_lambda and raw.size != 1:
            raise ShapeMismatchError("shared_lambda expects a single raw value")
        if self.mode not in ("smooth", "sharpen"):
            raise TVError(f"unknown mode {self.mode!r}")
        if self.spatial not in ("2d", "rows", "cols"):
            raise TVError(f"unknown spatial mode {self.spatial!r}")
        if self.solver not in ("newton", "tautstring"):
            raise TVError(f"unknown solver {self.solver!r}")
        if int(self.dykstra_iters) < 1:
            raise TVError("dykstra_iters must be >= 1")
        raw.setflags(write=False)
        object.__setattr__(self, "lambda_raw", raw)
        object.__setattr__(self, "dykstra_iters", int(self.dykstra_iters))

    def channel_raw(self, n_channels: int) -> np.ndarray:
        """Raw lambda per channel, broadcasting a shared value."""
        if self.shared_lambda:
            return np.full(n_channels, self.lambda_raw[0])
        if self.lambda_raw.size != n_channels:
            raise ShapeMismatchError(
                f"{self.lambda_raw.size} raw lambdas for {n_channels} channels"
            )
        return self.lambda_raw.copy()
