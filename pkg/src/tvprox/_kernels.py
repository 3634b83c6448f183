"""Compiled inner loops.

Everything here works on preallocated float64 buffers and returns integer
status codes instead of raising, so the kernels can run with the GIL
released and be fanned out over threads by the Python wrappers.
"""
import numpy as np
from numba import njit

PIVOT_FLOOR = 1e-14

# Solver status codes.
OK = 0
NOT_CONVERGED = 1
NOT_PD = 2

_LS_MAX = 50
_PG_STEP = 0.25  # 1 / ||D D^T||_2 upper bound


@njit(cache=True, nogil=True)
def tri_chol(diag, off, l_diag, l_off):
    """Factor the symmetric tridiagonal (diag, off) into a lower bidiagonal L.

    Returns the index of the first pivot <= PIVOT_FLOOR, or -1 on success.
    The recurrence runs on the squared pivots so that only one division sits
    on the loop-carried dependency; the square roots are off the chain.
    """
    m = diag.shape[0]
    q = 0.0
    for i in range(m):
        p = diag[i]
        if i > 0:
            p -= off[i - 1] * off[i - 1] / q
        if p <= PIVOT_FLOOR:
            return i
        q = p
        l_diag[i] = np.sqrt(p)
        if i > 0:
            l_off[i - 1] = off[i - 1] / l_diag[i - 1]
    return -1


@njit(cache=True, nogil=True)
def tri_chol_solve(l_diag, l_off, b, out):
    """Solve L L^T out = b by forward then backward substitution."""
    m = l_diag.shape[0]
    if m == 0:
        return
    # Multiplying by reciprocals keeps the divisions off the dependency chain.
    out[0] = b[0] / l_diag[0]
    for i in range(1, m):
        r = 1.0 / l_diag[i]
        out[i] = b[i] * r - (l_off[i - 1] * r) * out[i - 1]
    out[m - 1] = out[m - 1] / l_diag[m - 1]
    for i in range(m - 2, -1, -1):
        r = 1.0 / l_diag[i]
        out[i] = out[i] * r - (l_off[i] * r) * out[i + 1]


@njit(cache=True, nogil=True)
def tri_submatrix(diag, off, idx, k, sub_diag, sub_off):
    """Principal submatrix on the first k entries of the sorted index array idx."""
    for j in range(k):
        sub_diag[j] = diag[idx[j]]
        if j > 0:
            if idx[j] == idx[j - 1] + 1:
                sub_off[j - 1] = off[idx[j - 1]]
            else:
                sub_off[j - 1] = 0.0


@njit(cache=True, nogil=True)
def _primal_and_grad(x, u, y, g):
    """y = x - D^T u and g = D y (the dual gradient)."""
    n = x.shape[0]
    m = n - 1
    y[0] = x[0] + u[0]
    for i in range(1, m):
        y[i] = x[i] - u[i - 1] + u[i]
    y[m] = x[m] - u[m - 1]
    for i in range(m):
        g[i] = y[i + 1] - y[i]


@njit(cache=True, nogil=True)
def dual_value(x, u):
    """phi(u) = -0.5 ||D^T u||^2 + u^T D x."""
    n = x.shape[0]
    m = n - 1
    if m == 0:
        return 0.0
    quad = u[0] * u[0] + u[m - 1] * u[m - 1]
    for i in range(1, m):
        v = u[i - 1] - u[i]
        quad += v * v
    lin = 0.0
    for i in range(m):
        lin += u[i] * (x[i + 1] - x[i])
    return -0.5 * quad + lin


@njit(cache=True, nogil=True)
def _gap(u, g, lam):
    s = 0.0
    for i in range(g.shape[0]):
        s += lam * abs(g[i]) - u[i] * g[i]
    return s


@njit(cache=True, nogil=True)
def newton_tv1d(x, lam, max_iters, gap_tol, armijo_c, step_floor, active_tol,
                dense, y, u, stats):
    """Projected Newton on the box-constrained dual of the 1D TV prox.

    Writes the primal solution to y and the dual iterate to u. stats receives
    (iterations, final gap). Returns a status code.
    """
    n = x.shape[0]
    m = n - 1
    for i in range(m):
        u[i] = 0.0
    if m == 0 or lam == 0.0:
        for i in range(n):
            y[i] = x[i]
        stats[0] = 0.0
        stats[1] = 0.0
        return OK

    g = np.empty(m)
    d = np.empty(m)
    u_try = np.empty(m)
    y_try = np.empty(n)
    free = np.empty(m, dtype=np.int64)
    h_diag = np.empty(m)
    h_off = np.empty(m)
    f_diag = np.empty(m)
    f_off = np.empty(m)
    l_diag = np.empty(m)
    l_off = np.empty(m)
    rhs = np.empty(m)
    sol = np.empty(m)
    for i in range(m):
        h_diag[i] = 2.0
        h_off[i] = -1.0

    scale = 1.0
    for i in range(n):
        scale += x[i] * x[i]
    tol = gap_tol * scale

    status = NOT_CONVERGED
    it = 0
    gap = 0.0
    while True:
        _primal_and_grad(x, u, y, g)
        gap = _gap(u, g, lam)
        if gap <= tol:
            status = OK
            break
        if it >= max_iters:
            break
        it += 1

        # Binding set: at the bound with the gradient pushing outward.
        k = 0
        for i in range(m):
            if abs(u[i]) >= lam - active_tol and u[i] * g[i] > 0.0:
                d[i] = 0.0
            else:
                free[k] = i
                k += 1

        if k > 0:
            for j in range(k):
                rhs[j] = g[free[j]]
            if dense:
                hd = np.zeros((k, k))
                for j in range(k):
                    hd[j, j] = 2.0
                    if j > 0 and free[j] == free[j - 1] + 1:
                        hd[j, j - 1] = -1.0
                        hd[j - 1, j] = -1.0
                sd = np.linalg.solve(hd, rhs[:k])
                for j in range(k):
                    sol[j] = sd[j]
            else:
                tri_submatrix(h_diag, h_off, free, k, f_diag, f_off)
                if tri_chol(f_diag[:k], f_off[:k], l_diag[:k], l_off[:k]) >= 0:
                    status = NOT_PD
                    break
                tri_chol_solve(l_diag[:k], l_off[:k], rhs[:k], sol[:k])
            for j in range(k):
                d[free[j]] = sol[j]

        # Backtracking along the projected arc with quadratic interpolation.
        phi0 = dual_value(x, u)
        slope = 0.0
        for i in range(m):
            slope += g[i] * d[i]
        alpha = 1.0
        accepted = False
        if k > 0 and slope > 0.0:
            for _ in range(_LS_MAX):
                ascent = 0.0
                for i in range(m):
                    v = u[i] + alpha * d[i]
                    if v > lam:
                        v = lam
                    elif v < -lam:
                        v = -lam
                    u_try[i] = v
                    ascent += g[i] * (v - u[i])
                phi = dual_value(x, u_try)
                if phi >= phi0 + armijo_c * ascent and ascent > 0.0:
                    accepted = True
                    break
                curv = 2.0 * (phi0 + slope * alpha - phi)
                if curv > 0.0:
                    a_new = slope * alpha * alpha / curv
                else:
                    a_new = 0.5 * alpha
                if a_new < 0.1 * alpha:
                    a_new = 0.1 * alpha
                elif a_new > 0.5 * alpha:
                    a_new = 0.5 * alpha
                alpha = a_new
                if alpha < step_floor:
                    break
        if not accepted:
            # Projected gradient step; monotone for phi since its curvature is <= 4.
            for i in range(m):
                v = u[i] + _PG_STEP * g[i]
                if v > lam:
                    v = lam
                elif v < -lam:
                    v = -lam
                u_try[i] = v
            phi = dual_value(x, u_try)
            if phi < phi0:
                break
        for i in range(m):
            u[i] = u_try[i]

    if status == NOT_CONVERGED:
        _primal_and_grad(x, u, y, g)
        gap = _gap(u, g, lam)
    stats[0] = it
    stats[1] = gap
    return status


@njit(cache=True, nogil=True)
def newton_tv1d_batch(xs, lams, max_iters, gap_tol, armijo_c, step_floor,
                      active_tol, dense, ys, us, stats, codes):
    for b in range(xs.shape[0]):
        codes[b] = newton_tv1d(xs[b], lams[b], max_iters, gap_tol, armijo_c,
                               step_floor, active_tol, dense, ys[b], us[b],
                               stats[b])


@njit(cache=True, nogil=True)
def taut_string_tv1d(x, lam, y):
    """Direct 1D TV denoising by Condat's taut-string scan.

    Maintains the admissible range [vmin, vmax] of the current segment value
    together with the running dual values umin/umax, emitting a segment as
    soon as the string must bend down (negative jump) or up (positive jump).
    """
    n = x.shape[0]
    if n == 0:
        return
    if lam == 0.0 or n == 1:
        for i in range(n):
            y[i] = x[i]
        return
    k = 0
    k0 = 0
    umin = lam
    umax = -lam
    vmin = x[0] - lam
    vmax = x[0] + lam
    kplus = 0
    kminus = 0
    twolam = 2.0 * lam
    minlam = -lam
    while True:
        while k == n - 1:
            if umin < 0.0:
                while True:
                    y[k0] = vmin
                    k0 += 1
                    if k0 > kminus:
                        break
                k = k0
                kminus = k0
                vmin = x[k0]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                while True:
                    y[k0] = vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = k0
                kplus = k0
                vmax = x[k0]
                umax = minlam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                while True:
                    y[k0] = vmin
                    k0 += 1
                    if k0 > k:
                        break
                return
        umin += x[k + 1] - vmin
        if umin < minlam:
            while True:
                y[k0] = vmin
                k0 += 1
                if k0 > kminus:
                    break
            k = k0
            kplus = k0
            kminus = k0
            vmin = x[k0]
            vmax = vmin + twolam
            umin = lam
            umax = minlam
        else:
            umax += x[k + 1] - vmax
            if umax > lam:
                while True:
                    y[k0] = vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = k0
                kplus = k0
                kminus = k0
                vmax = x[k0]
                vmin = vmax - twolam
                umin = lam
                umax = minlam
            else:
                k += 1
                if umin >= lam:
                    kminus = k
                    vmin += (umin - lam) / (kminus - k0 + 1)
                    umin = lam
                if umax <= minlam:
                    kplus = k
                    vmax += (umax + lam) / (kplus - k0 + 1)
                    umax = minlam


@njit(cache=True, nogil=True)
def taut_string_batch(xs, lams, ys):
    for b in range(xs.shape[0]):
        taut_string_tv1d(xs[b], lams[b], ys[b])
