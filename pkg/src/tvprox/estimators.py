"""scikit-learn transformers wrapping the TV prox.

Both transformers are stateless apart from input-shape bookkeeping, so
``fit`` only validates; they can sit in a ``Pipeline`` and be cloned or
grid-searched over ``lam`` like any other estimator.
"""
from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_array, check_is_fitted

from .layer import layer_forward
from .prox1d import NewtonOptions, prox_tv1d_batch
from .tvcore import LayerParams

__all__ = ["TVDenoiser1D", "TVImageFilter"]


def _check_common(lam, solver):
    if not np.isfinite(lam) or lam < 0:
        raise ValueError(f"lam must be finite and non-negative, got {lam!r}")
    if solver not in ("newton", "tautstring"):
        raise ValueError(f"unknown solver {solver!r}")


class TVDenoiser1D(TransformerMixin, BaseEstimator):
    """Apply the 1D TV prox to every row of ``X``.

    Parameters
    ----------
    lam : float, default=1.0
        Weight of the total-variation term.
    solver : {"newton", "tautstring"}, default="newton"
    max_iter : int, default=100
        Newton iteration budget per row.
    tol : float, default=1e-10
        Duality-gap tolerance, scaled by ``1 + ||x||^2``.
    """

    def __init__(self, lam=1.0, solver="newton", max_iter=100, tol=1e-10):
        self.lam = lam
        self.solver = solver
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        _check_common(self.lam, self.solver)
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but {type(self).__name__} "
                f"was fitted with {self.n_features_in_}"
            )
        opts = NewtonOptions(max_iters=self.max_iter, gap_tol=self.tol)
        Y, info = prox_tv1d_batch(X, self.lam, opts, solver=self.solver, return_info=True)
        if not info["converged"].all():
            warnings.warn(
                f"{int((~info['converged']).sum())} rows did not reach the duality-gap "
                "tolerance; increase max_iter",
                ConvergenceWarning,
            )
        return Y


class TVImageFilter(TransformerMixin, BaseEstimator):
    """TV smoothing or sharpening of a batch of images.

    ``X`` has shape (n_images, H, W) or (n_images, C, H, W); the output has the
    same shape. Every channel uses the same effective weight ``lam``.

    Parameters
    ----------
    lam : float, default=0.1
    mode : {"smooth", "sharpen"}, default="smooth"
    spatial : {"2d", "rows", "cols"}, default="2d"
    n_iter : int, default=4
        Proximal Dykstra iterations in 2D mode.
    solver : {"newton", "tautstring"}, default="newton"
    """

    def __init__(self, lam=0.1, mode="smooth", spatial="2d", n_iter=4, solver="newton"):
        self.lam = lam
        self.mode = mode
        self.spatial = spatial
        self.n_iter = n_iter
        self.solver = solver

    def _params(self):
        _check_common(self.lam, self.solver)
        return LayerParams(np.zeros(1), self.mode, self.spatial, self.n_iter,
                           shared_lambda=True, solver=self.solver)

    def fit(self, X, y=None):
        self._params()
        X = check_array(X, dtype=np.float64, allow_nd=True, ensure_2d=False)
        if X.ndim not in (3, 4):
            raise ValueError(f"expected (n, H, W) or (n, C, H, W) input, got shape {X.shape}")
        self.image_shape_ = X.shape[1:]
        return self

    def transform(self, X):
        check_is_fitted(self, "image_shape_")
        params = self._params()
        X = check_array(X, dtype=np.float64, allow_nd=True, ensure_2d=False)
        if X.shape[1:] != self.image_shape_:
            raise ValueError(f"image shape {X.shape[1:]} differs from fitted {self.image_shape_}")
        out = np.empty_like(X)
        for i, img in enumerate(X):
            stack = img[None] if img.ndim == 2 else img
            y, _ = layer_forward(stack, params, lambdas=self.lam)
            out[i] = y[0] if img.ndim == 2 else y
        return out
