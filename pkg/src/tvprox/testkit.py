"""Independent oracles and seeded instance generators.

Nothing here shares code with the production solvers it checks:

* projected gradient ascent on the TV dual (1D and full 2D) versus projected
  Newton, taut string and Dykstra;
* dense Gaussian elimination with partial pivoting versus banded Cholesky;
* central finite differences versus the analytic backward passes.

Random instances come from a counter-based SplitMix64 generator so that a
given seed produces bit-identical data on every platform.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .layer import layer_backward, layer_forward, softplus
from .tridiag import TridiagSPD
from .tvcore import (
    LayerParams,
    ShapeMismatchError,
    ShapeTooLargeError,
    SingularMatrixError,
    TVError,
    as_plane,
    as_signal,
    check_lambda,
)

__all__ = [
    "SplitMix64",
    "InstanceSpec",
    "gen_piecewise_constant",
    "unit_step",
    "pgd_dual_oracle_1d",
    "pgd_dual_oracle_2d",
    "finite_diff_grad",
    "dense_solve_baseline",
    "rel_err",
    "solution_margin",
    "tape_margin",
    "train_lambda_raw",
]

# SplitMix64 constants (Steele, Lea & Flood): Weyl increment and finalizer multipliers.
GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
MIX_MUL_1 = np.uint64(0xBF58476D1CE4E5B9)
MIX_MUL_2 = np.uint64(0x94D049BB133111EB)
_TWO_POW_53 = float(2**53)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * MIX_MUL_1
    z = (z ^ (z >> np.uint64(27))) * MIX_MUL_2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Counter-based SplitMix64 stream.

    Output ``i`` is ``mix(seed + (i + 1) * GOLDEN_GAMMA)`` computed modulo
    2**64, so any block of the stream can be produced without iterating.
    Uniforms take the top 53 bits and are centred in their bin, so they lie
    strictly inside (0, 1). Normals use the Box-Muller transform on pairs of
    uniforms.
    """

    def __init__(self, seed: int, stream: int = 0):
        seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        if stream:
            seed = int(_mix64(np.array([seed ^ (int(stream) * 0xD1B54A32D192ED03
                                                & 0xFFFFFFFFFFFFFFFF)],
                                       dtype=np.uint64))[0])
        self.seed = np.uint64(seed)
        self.counter = 0

    def next_u64(self, k: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + 1 + k, dtype=np.uint64)
        self.counter += k
        with np.errstate(over="ignore"):
            return _mix64(self.seed + idx * GOLDEN_GAMMA)

    def uniform(self, k: int) -> np.ndarray:
        bits = self.next_u64(k) >> np.uint64(11)
        return (bits.astype(np.float64) + 0.5) / _TWO_POW_53

    def normal(self, k: int) -> np.ndarray:
        pairs = (k + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log(u[:, 0]))
        theta = 2.0 * np.pi * u[:, 1]
        z = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1).reshape(-1)
        return z[:k]


@dataclass(frozen=True)
class InstanceSpec:
    seed: int
    shape: tuple
    num_segments: int = 1
    jump_scale: float = 1.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        shape = (int(self.shape),) if np.isscalar(self.shape) else tuple(int(s) for s in self.shape)
        if len(shape) not in (1, 2) or min(shape) < 1:
            raise TVError(f"shape must be (n,) or (m, n) with positive sizes, got {shape}")
        if self.num_segments < 1:
            raise TVError("num_segments must be >= 1")
        if len(shape) == 1 and self.num_segments > shape[0]:
            raise TVError("more segments than samples")
        if self.noise_sigma < 0:
            raise TVError("noise_sigma must be >= 0")
        object.__setattr__(self, "shape", shape)


def gen_piecewise_constant(spec: InstanceSpec) -> np.ndarray:
    """Seeded piecewise-constant signal or image plus Gaussian noise.

    1D: ``num_segments`` runs with random breakpoints; each level differs from
    the previous one by ``jump_scale * (0.5 + U)`` with a random sign.
    2D: a zero background overlaid with ``num_segments - 1`` random
    axis-aligned rectangles of level ``jump_scale * U``.
    """
    rng = SplitMix64(spec.seed, stream=1)
    if len(spec.shape) == 1:
        (n,) = spec.shape
        k = spec.num_segments
        order = np.argsort(rng.uniform(n - 1), kind="stable")
        cuts = np.sort(order[: k - 1] + 1)
        steps = spec.jump_scale * (0.5 + rng.uniform(k - 1))
        signs = np.where(rng.uniform(k - 1) < 0.5, -1.0, 1.0)
        levels = np.concatenate(([0.0], np.cumsum(signs * steps)))
        clean = np.repeat(levels, np.diff(np.concatenate(([0], cuts, [n]))))
    else:
        m, n = spec.shape
        clean = np.zeros((m, n))
        for _ in range(spec.num_segments - 1):
            r = rng.uniform(5)
            r0, r1 = sorted((int(r[0] * m), int(r[1] * m)))
            c0, c1 = sorted((int(r[2] * n), int(r[3] * n)))
            clean[r0:r1 + 1, c0:c1 + 1] = spec.jump_scale * r[4]
    if spec.noise_sigma > 0:
        noise = SplitMix64(spec.seed, stream=2).normal(clean.size).reshape(clean.shape)
        clean = clean + spec.noise_sigma * noise
    return clean


def unit_step(n: int, batch: int = 1, noise_sigma: float = 0.1, seed: int = 0) -> np.ndarray:
    """``batch`` copies of a unit step of length ``n`` with additive Gaussian noise."""
    step = np.zeros(n)
    step[n // 2:] = 1.0
    noise = SplitMix64(seed, stream=3).normal(batch * n).reshape(batch, n)
    return step[None, :] + noise_sigma * noise


@njit(cache=True)
def _pgd_1d(x, lam, iters, step, u):
    n = x.shape[0]
    m = n - 1
    y = x.copy()
    for _ in range(iters):
        for i in range(m):
            v = u[i] + step * (y[i + 1] - y[i])
            u[i] = min(max(v, -lam), lam)
        y[0] = x[0] + u[0]
        for i in range(1, m):
            y[i] = x[i] - u[i - 1] + u[i]
        y[m] = x[m] - u[m - 1]
    return y


def pgd_dual_oracle_1d(x, lam, iters: int = 100_000, step: float = 0.25,
                       return_dual: bool = False):
    """1D TV prox by projected gradient ascent on the dual.

    ``u <- clip(u + step * D (x - D^T u), -lam, lam)`` from ``u = 0``;
    ``step = 0.25`` is safe because ``||D D^T||_2 < 4``.
    """
    x = as_signal(x)
    lam = check_lambda(lam)
    u = np.zeros(x.size - 1)
    if lam == 0.0 or x.size == 1:
        y = x.copy()
    else:
        y = _pgd_1d(x, lam, int(iters), float(step), u)
    return (y, u) if return_dual else y


@njit(cache=True)
def _pgd_2d(x, lam, iters, step, uh, uv):
    m, n = x.shape
    y = x.copy()
    for _ in range(iters):
        for i in range(m):
            for j in range(n - 1):
                uh[i, j] = min(max(uh[i, j] + step * (y[i, j + 1] - y[i, j]), -lam), lam)
        for i in range(m - 1):
            for j in range(n):
                uv[i, j] = min(max(uv[i, j] + step * (y[i + 1, j] - y[i, j]), -lam), lam)
        for i in range(m):
            for j in range(n):
                v = x[i, j]
                if j > 0:
                    v -= uh[i, j - 1]
                if j < n - 1:
                    v += uh[i, j]
                if i > 0:
                    v -= uv[i - 1, j]
                if i < m - 1:
                    v += uv[i, j]
                y[i, j] = v
    return y


def pgd_dual_oracle_2d(x, lam, iters: int = 100_000, step: float = 0.125) -> np.ndarray:
    """Anisotropic 2D TV prox by projected gradient ascent on its joint dual.

    One dual variable per horizontal and per vertical difference; the
    combined difference operator has squared norm below 8, hence the
    default step. Meant for planes up to 16 x 16.
    """
    x = as_plane(x)
    lam = check_lambda(lam)
    if max(x.shape) > 16:
        raise ShapeTooLargeError("2D oracle is limited to 16 x 16 planes")
    if lam == 0.0:
        return x.copy()
    m, n = x.shape
    return _pgd_2d(x, lam, int(iters), float(step), np.zeros((m, max(n - 1, 0))),
                   np.zeros((max(m - 1, 0), n)))


def finite_diff_grad(f, x, h: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function at ``x`` (any shape)."""
    x = np.array(x, dtype=np.float64, copy=True)
    flat = x.reshape(-1)
    grad = np.empty(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        grad[i] = (fp - fm) / (2 * h)
    return grad.reshape(x.shape)


@njit(cache=True)
def _gauss_pp(a, b):
    m = a.shape[0]
    for col in range(m):
        piv = col
        best = abs(a[col, col])
        for r in range(col + 1, m):
            if abs(a[r, col]) > best:
                best = abs(a[r, col])
                piv = r
        if best == 0.0:
            return False
        if piv != col:
            for c in range(m):
                a[col, c], a[piv, c] = a[piv, c], a[col, c]
            b[col], b[piv] = b[piv], b[col]
        for r in range(col + 1, m):
            f = a[r, col] / a[col, col]
            if f != 0.0:
                for c in range(col, m):
                    a[r, c] -= f * a[col, c]
                b[r] -= f * b[col]
    for r in range(m - 1, -1, -1):
        s = b[r]
        for c in range(r + 1, m):
            s -= a[r, c] * b[c]
        b[r] = s / a[r, r]
    return True


def dense_solve_baseline(t, b) -> np.ndarray:
    """Solve ``T d = b`` by dense Gaussian elimination with partial pivoting.

    ``t`` is a :class:`TridiagSPD` (expanded to a dense matrix) or a square
    array. O(m^3); limited to ``m <= 2048``.
    """
    a = t.to_dense() if isinstance(t, TridiagSPD) else np.array(t, dtype=np.float64)
    b = np.array(b, dtype=np.float64).reshape(-1)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] != b.size:
        raise ShapeMismatchError(f"matrix {a.shape} and rhs {b.shape} do not match")
    if a.shape[0] > 2048:
        raise ShapeTooLargeError("dense baseline limited to m <= 2048")
    if a.shape[0] == 0:
        return b
    a = np.ascontiguousarray(a)
    if not _gauss_pp(a, b):
        raise SingularMatrixError("zero pivot column")
    return b


def rel_err(a, b) -> float:
    """``max|a - b| / max(1, max|b|)``: relative for large values, absolute near zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b), initial=0.0) / max(1.0, float(np.max(np.abs(b), initial=0.0))))


def solution_margin(xs, ys, lam, seg_tol: float = 1e-9) -> float:
    """Distance of 1D solutions from a change of run structure.

    The smallest of: the magnitude of any nonzero jump of ``y``, and the dual
    slack ``lam - |u_i|`` at every fused position. Small values mean a tiny
    perturbation of the input could split or merge runs, where the prox is
    not differentiable. Works row-wise on (B, N) arrays.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    if xs.shape[1] < 2:
        return np.inf
    jumps = np.abs(np.diff(ys, axis=1))
    u = -np.cumsum(xs - ys, axis=1)[:, :-1]
    fused = jumps <= seg_tol
    slack = np.where(fused, lam - np.abs(u), np.inf)
    jump_mag = np.where(fused, np.inf, jumps)
    return float(min(slack.min(), jump_mag.min()))


def tape_margin(tape) -> float:
    """:func:`solution_margin` over every 1D solve recorded in a Dykstra tape."""
    if tape.lam == 0.0:
        return np.inf
    pairs = list(zip(tape.row_in, tape.row_out)) + list(zip(tape.col_in, tape.col_out))
    return min(solution_margin(a, b, tape.lam) for a, b in pairs)


def train_lambda_raw(noisy, clean, lambda_raw: float, steps: int = 200, lr: float = 0.1,
                     mode: str = "smooth", spatial: str = "2d", dykstra_iters: int = 4):
    """Gradient descent on a single shared raw lambda for a denoising loss.

    The loss is the squared error ``||layer(noisy) - clean||^2`` summed over
    all samples (both C x H x W). Returns a dict with the loss and lambda
    histories (length ``steps + 1``).
    """
    noisy = np.asarray(noisy, dtype=np.float64)
    clean = np.asarray(clean, dtype=np.float64)
    raw = float(lambda_raw)
    losses, lams = [], []
    for step in range(steps + 1):
        params = LayerParams(np.array([raw]), mode, spatial, dykstra_iters, shared_lambda=True)
        y, saved = layer_forward(noisy, params)
        r = y - clean
        losses.append(float(np.sum(r * r)))
        lams.append(softplus(raw))
        if step == steps:
            break
        _, g_raw = layer_backward(saved, 2.0 * r)
        raw -= lr * float(g_raw[0])
    return {"loss": np.array(losses), "lambda": np.array(lams), "lambda_raw": raw}
