"""Compiled inner loop for per-measurement SGD.

Mirrors ``gradients.backprop_gradients`` followed by a plain gradient step;
``tests/test_trainer.py`` checks the two paths agree.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _act(z, code):
    if code == 0:
        if z >= 0.0:
            return 1.0 / (1.0 + math.exp(-z))
        e = math.exp(z)
        return e / (1.0 + e)
    return z if z > 0.0 else 0.0


@njit(cache=True)
def _dact(z, code):
    if code == 0:
        s = _act(z, 0)
        return s * (1.0 - s)
    return 1.0 if z > 0.0 else 0.0


@njit(cache=True)
def sgd_epoch_kernel(W, B, X, order, target, dt, xi, code):
    """One pass over ``X[order]``; updates ``W`` (L, N, N) and ``B`` (L, N) in place.

    Returns the mean pre-update loss and a finiteness flag.
    """
    L, n, _ = W.shape
    inv_n = 1.0 / n
    states = np.empty((L + 1, n))
    pre = np.empty((L, n))
    lam = np.empty(n)
    g = np.empty(n)
    total = 0.0
    for idx in range(order.shape[0]):
        i = order[idx]
        for c in range(n):
            states[0, c] = X[i, c]
        for k in range(L):
            for r in range(n):
                z = B[k, r]
                for c in range(n):
                    z += W[k, r, c] * states[k, c] * inv_n
                pre[k, r] = z
                states[k + 1, r] = states[k, r] + dt * _act(z, code)
        ell = 0.0
        for c in range(n):
            diff = states[L, c] - target[c]
            ell += diff * diff
            lam[c] = 2.0 * diff
        if not math.isfinite(ell):
            return total / (idx + 1), False
        total += ell
        for k in range(L - 1, -1, -1):
            for r in range(n):
                g[r] = dt * _dact(pre[k, r], code) * lam[r]
            # propagate the adjoint with the pre-update weights
            for c in range(n):
                acc = 0.0
                for r in range(n):
                    acc += W[k, r, c] * g[r]
                lam[c] += acc * inv_n
            for r in range(n):
                B[k, r] -= xi * g[r]
                for c in range(n):
                    W[k, r, c] -= xi * g[r] * states[k, c] * inv_n
    for k in range(L):
        for r in range(n):
            if not math.isfinite(B[k, r]):
                return total / order.shape[0], False
            for c in range(n):
                if not math.isfinite(W[k, r, c]):
                    return total / order.shape[0], False
    return total / order.shape[0], True


@njit(cache=True)
def project_ellipsoid_point(u, radius, q, vecs, out):
    """Project ``u`` onto {v : v Q v <= radius^2}; Q = vecs diag(q) vecs^T."""
    y0 = vecs[0, 0] * u[0] + vecs[1, 0] * u[1] + vecs[2, 0] * u[2]
    y1 = vecs[0, 1] * u[0] + vecs[1, 1] * u[1] + vecs[2, 1] * u[2]
    y2 = vecs[0, 2] * u[0] + vecs[1, 2] * u[1] + vecs[2, 2] * u[2]
    s0 = q[0] * y0 * y0 + q[1] * y1 * y1 + q[2] * y2 * y2
    r2 = radius * radius
    if s0 <= r2:
        out[0] = u[0]
        out[1] = u[1]
        out[2] = u[2]
        return
    qmin = min(q[0], min(q[1], q[2]))
    lo = 0.0
    hi = math.sqrt((y0 * y0 + y1 * y1 + y2 * y2) / qmin) / radius
    mu = 0.0
    for _ in range(200):
        d0 = 1.0 + mu * q[0]
        d1 = 1.0 + mu * q[1]
        d2 = 1.0 + mu * q[2]
        s = q[0] * y0 * y0 / (d0 * d0) + q[1] * y1 * y1 / (d1 * d1) + q[2] * y2 * y2 / (d2 * d2)
        ds = -2.0 * (
            q[0] * q[0] * y0 * y0 / (d0 * d0 * d0)
            + q[1] * q[1] * y1 * y1 / (d1 * d1 * d1)
            + q[2] * q[2] * y2 * y2 / (d2 * d2 * d2)
        )
        g = 1.0 / math.sqrt(s) - 1.0 / radius
        if g < 0.0:
            lo = mu
        else:
            hi = mu
        dg = -0.5 * ds / (s * math.sqrt(s))
        step = mu - g / dg if dg != 0.0 else -1.0
        if not (step > lo and step < hi):
            step = 0.5 * (lo + hi)
        if abs(step - mu) <= 1e-15 * (1.0 + mu):
            mu = step
            break
        mu = step
    y0 /= 1.0 + mu * q[0]
    y1 /= 1.0 + mu * q[1]
    y2 /= 1.0 + mu * q[2]
    for c in range(3):
        out[c] = vecs[c, 0] * y0 + vecs[c, 1] * y1 + vecs[c, 2] * y2


@njit(cache=True)
def _violation(shifts, sigma_y, rho, cmat, tol):
    ng, nv, _ = shifts.shape
    for r in range(cmat.shape[0]):
        acc = 0.0
        for j in range(cmat.shape[1]):
            acc += cmat[r, j] * rho[j // 3, j % 3]
        if abs(acc) > tol:
            return True
    for i in range(ng):
        for k in range(nv):
            a = shifts[i, k, 0] + rho[i, 0]
            b = shifts[i, k, 1] + rho[i, 1]
            t = shifts[i, k, 2] + rho[i, 2]
            if math.sqrt(a * a - a * b + b * b + 3.0 * t * t) > sigma_y[i] + tol:
                return True
    return False


@njit(cache=True)
def cyclic_projections(shifts, sigma_y, radius, proj, use_proj, cmat, rho, tol, max_iter, q, vecs):
    """Cyclic projections onto vertex ellipsoids and the equilibrium null space.

    ``shifts`` is alpha * sigma_E with shape (NG, NV, 3); projections use
    ``radius`` while acceptance uses ``sigma_y``; ``rho`` (NG, 3) is updated
    in place. Returns True once every constraint holds within tol.
    """
    ng, nv, _ = shifts.shape
    u = np.empty(3)
    v = np.empty(3)
    flat = np.empty(3 * ng)
    prev = np.empty((ng, 3))
    for _ in range(max_iter):
        if not _violation(shifts, sigma_y, rho, cmat, tol):
            return True
        for i in range(ng):
            for c in range(3):
                prev[i, c] = rho[i, c]
        for k in range(nv):
            for i in range(ng):
                for c in range(3):
                    u[c] = rho[i, c] + shifts[i, k, c]
                project_ellipsoid_point(u, radius[i], q, vecs, v)
                for c in range(3):
                    rho[i, c] = v[c] - shifts[i, k, c]
        if use_proj:
            for j in range(3 * ng):
                acc = 0.0
                for l in range(3 * ng):
                    acc += proj[j, l] * rho[l // 3, l % 3]
                flat[j] = acc
            for j in range(3 * ng):
                rho[j // 3, j % 3] = flat[j]
        moved = 0.0
        for i in range(ng):
            for c in range(3):
                moved = max(moved, abs(rho[i, c] - prev[i, c]))
        if moved < 1e-3 * tol:
            break
    return not _violation(shifts, sigma_y, rho, cmat, tol)
