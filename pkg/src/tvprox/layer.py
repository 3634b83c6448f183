"""Differentiable TV layer over a C x H x W channel stack.

Channel ``c`` is smoothed with weight ``softplus(lambda_raw[c])``. In
sharpening mode the smoothing residual is added back: ``y = 2 x - prox(x)``.
The spatial mode picks the 2D anisotropic prox (Dykstra), or independent 1D
problems along every row or every column.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grad1d import vjp_lambda_batch, vjp_x_batch
from .prox1d import NewtonOptions, prox_tv1d_batch
from .prox2d import DykstraTape, prox_tv2d_dykstra, prox_tv2d_vjp
from .tvcore import (
    BatchError,
    LayerParams,
    ShapeMismatchError,
    TapeMismatchError,
    TVError,
    as_stack,
)

__all__ = [
    "softplus",
    "softplus_inv",
    "sigmoid",
    "DEFAULT_LAMBDA",
    "default_params",
    "LayerSaved",
    "layer_forward",
    "layer_backward",
    "TVLayer",
]

DEFAULT_LAMBDA = 0.05


def softplus(v: float) -> float:
    v = float(v)
    if v > 30.0:
        return v
    if v < -30.0:
        return math.exp(v)
    return math.log1p(math.exp(v))


def softplus_inv(lam: float) -> float:
    """Raw value whose softplus is ``lam`` (> 0)."""
    lam = float(lam)
    if lam <= 0:
        raise TVError("softplus_inv needs a positive argument")
    if lam > 30.0:
        return lam
    return math.log(math.expm1(lam))


def sigmoid(v: float) -> float:
    v = float(v)
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


def default_params(n_channels: int, **kwargs) -> LayerParams:
    """Layer parameters with every channel starting at lambda = 0.05."""
    raw = np.full(1 if kwargs.get("shared_lambda") else n_channels, softplus_inv(DEFAULT_LAMBDA))
    return LayerParams(raw, **kwargs)


@dataclass(frozen=True)
class LayerSaved:
    """Everything the backward pass needs from a forward call.

    ``tapes[c]`` is a :class:`DykstraTape` in 2D mode, or the (B, L) array of
    1D solutions (one signal per row) in rows/cols mode.
    """

    params: LayerParams
    lambdas: np.ndarray
    lambda_raw: np.ndarray | None
    tapes: tuple
    x: np.ndarray
    diagnostics: tuple


def _channel_prox(xc, lam, params, opts):
    """Smoothed channel and its tape."""
    if params.spatial == "2d":
        s, tape = prox_tv2d_dykstra(xc, lam, params.dykstra_iters, opts, params.solver)
        return s, tape, {"max_gap": tape.max_gap, "converged": tape.converged}
    rows = xc if params.spatial == "rows" else np.ascontiguousarray(xc.T)
    if lam == 0.0:
        sol = rows.copy()
        info = {"gap": np.zeros(1), "converged": np.ones(1, dtype=bool)}
    else:
        sol, info = prox_tv1d_batch(rows, lam, opts, solver=params.solver, return_info=True)
    s = sol if params.spatial == "rows" else sol.T.copy()
    return s, sol, {"max_gap": float(info["gap"].max(initial=0.0)),
                    "converged": bool(info["converged"].all())}


def layer_forward(x, params: LayerParams, *, lambdas=None,
                  opts: NewtonOptions | None = None):
    """Apply the TV layer to a channel stack.

    Parameters
    ----------
    x : array of shape (C, H, W)
    params : LayerParams
    lambdas : array of shape (C,), optional
        Effective weights to use instead of ``softplus(params.lambda_raw)``.
        Zero is allowed and gives the exact identity in both modes.

    Returns
    -------
    y : array of shape (C, H, W)
    saved : LayerSaved
    """
    x = as_stack(x)
    c = x.shape[0]
    if lambdas is None:
        raw = params.channel_raw(c)
        lams = np.array([softplus(v) for v in raw])
    else:
        raw = None
        lams = np.broadcast_to(np.asarray(lambdas, dtype=np.float64), (c,)).copy()
        if np.any(~np.isfinite(lams)) or np.any(lams < 0):
            raise TVError("effective lambdas must be finite and non-negative")
    y = np.empty_like(x)
    tapes = []
    diags = []
    for ch in range(c):
        try:
            s, tape, diag = _channel_prox(x[ch], lams[ch], params, opts)
        except BatchError as exc:
            raise BatchError("TV layer forward failed", exc.cause or exc,
                             channel=ch, **exc.context) from exc
        y[ch] = s if params.mode == "smooth" else 2.0 * x[ch] - s
        tapes.append(tape)
        diags.append(diag)
    saved = LayerSaved(params, lams, raw, tuple(tapes), x, tuple(diags))
    return y, saved


def layer_backward(saved: LayerSaved, gy):
    """Gradients of the layer output.

    Returns ``(gx, glambda_raw)``. ``glambda_raw`` has one entry per channel
    (a single entry with ``shared_lambda``). If the forward pass was given
    explicit ``lambdas``, the second output is the gradient with respect to
    those effective weights instead.
    """
    gy = np.asarray(gy, dtype=np.float64)
    if gy.shape != saved.x.shape:
        raise TapeMismatchError(f"cotangent shape {gy.shape} does not match input {saved.x.shape}")
    params = saved.params
    c = gy.shape[0]
    if len(saved.tapes) != c:
        raise TapeMismatchError("saved state has a different channel count")
    gx = np.empty_like(gy)
    glam = np.zeros(c)
    for ch in range(c):
        tape = saved.tapes[ch]
        g = gy[ch]
        if params.spatial == "2d":
            if not isinstance(tape, DykstraTape):
                raise TapeMismatchError("expected a Dykstra tape in 2d mode")
            gs, gl = prox_tv2d_vjp(tape, g)
        else:
            gr = g if params.spatial == "rows" else np.ascontiguousarray(g.T)
            if tape.shape != gr.shape:
                raise TapeMismatchError("1D tape does not match the cotangent")
            if saved.lambdas[ch] == 0.0:
                gs_r, gl = gr.copy(), 0.0
            else:
                gs_r = vjp_x_batch(tape, gr)
                gl = float(vjp_lambda_batch(tape, gr).sum())
            gs = gs_r if params.spatial == "rows" else gs_r.T
        if params.mode == "smooth":
            gx[ch] = gs
            glam[ch] = gl
        else:
            gx[ch] = 2.0 * g - gs
            glam[ch] = -gl
    if saved.lambda_raw is not None:
        glam = glam * np.array([sigmoid(v) for v in saved.lambda_raw])
        if params.shared_lambda:
            glam = np.array([glam.sum()])
    return gx, glam


class TVLayer:
    """Stateful wrapper holding the trainable raw lambdas.

    >>> layer = TVLayer(3, mode="sharpen")
    >>> y = layer.forward(x)              # doctest: +SKIP
    >>> gx = layer.backward(gy)           # doctest: +SKIP
    >>> layer.lambda_raw -= 0.1 * layer.grad_lambda_raw   # doctest: +SKIP
    """

    def __init__(self, num_chan: int, mode: str = "smooth", spatial: str = "2d",
                 dykstra_iters: int = 4, shared_lambda: bool = False,
                 init_lambda: float | None = DEFAULT_LAMBDA, solver: str = "newton"):
        n = 1 if shared_lambda else num_chan
        raw = 0.0 if init_lambda is None else softplus_inv(init_lambda)
        self.num_chan = num_chan
        self.mode = mode
        self.spatial = spatial
        self.dykstra_iters = dykstra_iters
        self.shared_lambda = shared_lambda
        self.solver = solver
        self.lambda_raw = np.full(n, raw)
        self.grad_lambda_raw = np.zeros(n)
        self._saved = None

    @property
    def params(self) -> LayerParams:
        return LayerParams(self.lambda_raw, self.mode, self.spatial, self.dykstra_iters,
                           self.shared_lambda, self.solver)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([softplus(v) for v in self.params.channel_raw(self.num_chan)])

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[0] != self.num_chan:
            raise ShapeMismatchError(f"expected ({self.num_chan}, H, W), got {x.shape}")
        y, self._saved = layer_forward(x, self.params)
        return y

    def backward(self, gy):
        if self._saved is None:
            raise TapeMismatchError("backward called before forward")
        gx, self.grad_lambda_raw = layer_backward(self._saved, gy)
        return gx
