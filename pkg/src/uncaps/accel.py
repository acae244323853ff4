"""Hot numeric kernels with optional numba JIT.

Every kernel has two implementations: a loop-oriented one compiled with
``numba.njit`` and a vectorised pure-numpy twin.  The active path is chosen
once at import time from the ``UNCAPS_NUMBA`` environment variable
("0"/"false"/"off" selects the numpy path; anything else, or unset, selects
numba when it is importable).  ``benchmarks/bench_accel.py`` times the two
paths against each other.

All kernels are deterministic and avoid fastmath so both paths agree to
floating-point noise regardless of the flag.
"""

from __future__ import annotations

import math
import os

import numpy as np
import scipy.linalg as sla
from scipy.special import ndtr

_flag = os.environ.get("UNCAPS_NUMBA", "1").strip().lower()
NUMBA_ENABLED = _flag not in ("0", "false", "off")

if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_EI_SD_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _rbf_matrix_np(x, z, lengthscale, signal_variance):
    sq = np.sum((x[:, None, :] - z[None, :, :]) ** 2, axis=2)
    return signal_variance * np.exp(-sq / (2.0 * lengthscale * lengthscale))


def _chol_posterior_np(x_train, chol, alpha, queries, lengthscale, signal_variance):
    k_star = _rbf_matrix_np(x_train, queries, lengthscale, signal_variance)
    mean = k_star.T @ alpha
    v = sla.solve_triangular(chol, k_star, lower=True)
    var = signal_variance - np.sum(v * v, axis=0)
    return mean, np.maximum(var, 0.0)


def _ei_np(mean, sd, y_best):
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    impr = mean - y_best
    out = np.maximum(impr, 0.0)
    ok = sd >= _EI_SD_FLOOR
    if np.any(ok):
        z = impr[ok] / sd[ok]
        pdf = np.exp(-0.5 * z * z) / _SQRT_2PI
        out[ok] = np.maximum(impr[ok] * ndtr(z) + sd[ok] * pdf, 0.0)
    return out


def _uei_value_np(x, sigma2, k_ut, x_train, chol, alpha, lengthscale,
                  signal_variance, y_best):
    d = x.shape[0]
    if sigma2 <= 0.0:
        mu, var = _chol_posterior_np(x_train, chol, alpha, x[None, :],
                                     lengthscale, signal_variance)
        return float(_ei_np(mu, np.sqrt(var), y_best)[0])
    spread = math.sqrt((d + k_ut) * sigma2)
    pts = np.empty((2 * d + 1, d))
    pts[:] = x
    for i in range(d):
        pts[1 + i, i] = min(x[i] + spread, 1.0)
        pts[1 + d + i, i] = max(x[i] - spread, 0.0)
    mu, var = _chol_posterior_np(x_train, chol, alpha, pts, lengthscale,
                                 signal_variance)
    ei = _ei_np(mu, np.sqrt(var), y_best)
    w_side = 1.0 / (2.0 * (d + k_ut))
    w0 = k_ut / (d + k_ut)
    return float(w0 * ei[0] + w_side * np.sum(ei[1:]))


def _rff_features_np(thetas, omegas, phases):
    m = omegas.shape[0]
    return math.sqrt(2.0 / m) * np.cos(thetas @ omegas.T + phases)


def _rff_value_grad_np(theta, omegas, phases, weights, amp):
    t = omegas @ theta + phases
    c = np.cos(t)
    s = np.sin(t)
    value = amp * float(weights @ c)
    grad = -amp * (omegas.T @ (weights * s))
    return value, grad


def _rollout_gain_np(a, b, gain, s_target, s0, q_r, r_r, noise):
    s = s0.copy()
    total = 0.0
    for t in range(noise.shape[0]):
        e = s - s_target
        u = -gain @ e
        s = a @ s + b @ u + noise[t]
        e2 = s - s_target
        total += -float(e2 @ q_r @ e2) - float(u @ r_r @ u)
    return total


def _dare_solve_np(a, b, q, r, tol, max_iter):
    p = q.copy()
    for it in range(max_iter):
        btp = b.T @ p
        gain = np.linalg.solve(r + btp @ b, btp @ a)
        p_next = q + a.T @ p @ a - (a.T @ p @ b) @ gain
        p_next = 0.5 * (p_next + p_next.T)
        diff = np.max(np.abs(p_next - p))
        p = p_next
        if diff <= tol:
            return p, it + 1
    return p, -1


# ---------------------------------------------------------------------------
# numba implementations (loop style, identical math)
# ---------------------------------------------------------------------------


def _rbf_matrix_loop(x, z, lengthscale, signal_variance):
    n, d = x.shape
    m = z.shape[0]
    inv = 1.0 / (2.0 * lengthscale * lengthscale)
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            sq = 0.0
            for l in range(d):
                diff = x[i, l] - z[j, l]
                sq += diff * diff
            out[i, j] = signal_variance * math.exp(-sq * inv)
    return out


def _chol_posterior_loop(x_train, chol, alpha, queries, lengthscale,
                         signal_variance):
    n, d = x_train.shape
    q = queries.shape[0]
    inv = 1.0 / (2.0 * lengthscale * lengthscale)
    mean = np.empty(q)
    var = np.empty(q)
    k_star = np.empty(n)
    v = np.empty(n)
    for j in range(q):
        for i in range(n):
            sq = 0.0
            for l in range(d):
                diff = x_train[i, l] - queries[j, l]
                sq += diff * diff
            k_star[i] = signal_variance * math.exp(-sq * inv)
        mu = 0.0
        for i in range(n):
            mu += k_star[i] * alpha[i]
        # forward substitution: chol @ v = k_star
        ss = 0.0
        for i in range(n):
            acc = k_star[i]
            for l in range(i):
                acc -= chol[i, l] * v[l]
            v[i] = acc / chol[i, i]
            ss += v[i] * v[i]
        mean[j] = mu
        res = signal_variance - ss
        var[j] = res if res > 0.0 else 0.0
    return mean, var


def _ei_scalar(mu, sd, y_best):
    impr = mu - y_best
    if sd < _EI_SD_FLOOR:
        return impr if impr > 0.0 else 0.0
    z = impr / sd
    cdf = 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))
    pdf = math.exp(-0.5 * z * z) / _SQRT_2PI
    ei = impr * cdf + sd * pdf
    return ei if ei > 0.0 else 0.0


def _uei_value_loop(x, sigma2, k_ut, x_train, chol, alpha, lengthscale,
                    signal_variance, y_best):
    d = x.shape[0]
    if sigma2 <= 0.0:
        pts = x.reshape(1, d)
        mu, var = _chol_posterior_loop(x_train, chol, alpha, pts, lengthscale,
                                       signal_variance)
        return _ei_scalar(mu[0], math.sqrt(var[0]), y_best)
    spread = math.sqrt((d + k_ut) * sigma2)
    pts = np.empty((2 * d + 1, d))
    for j in range(2 * d + 1):
        for l in range(d):
            pts[j, l] = x[l]
    for i in range(d):
        hi = x[i] + spread
        lo = x[i] - spread
        pts[1 + i, i] = hi if hi < 1.0 else 1.0
        pts[1 + d + i, i] = lo if lo > 0.0 else 0.0
    mu, var = _chol_posterior_loop(x_train, chol, alpha, pts, lengthscale,
                                   signal_variance)
    w0 = k_ut / (d + k_ut)
    w_side = 1.0 / (2.0 * (d + k_ut))
    total = w0 * _ei_scalar(mu[0], math.sqrt(var[0]), y_best)
    for j in range(1, 2 * d + 1):
        total += w_side * _ei_scalar(mu[j], math.sqrt(var[j]), y_best)
    return total


def _rff_features_loop(thetas, omegas, phases):
    q, d = thetas.shape
    m = omegas.shape[0]
    amp = math.sqrt(2.0 / m)
    out = np.empty((q, m))
    for i in range(q):
        for j in range(m):
            t = phases[j]
            for l in range(d):
                t += omegas[j, l] * thetas[i, l]
            out[i, j] = amp * math.cos(t)
    return out


def _rff_value_grad_loop(theta, omegas, phases, weights, amp):
    m, d = omegas.shape
    value = 0.0
    grad = np.zeros(d)
    for j in range(m):
        t = phases[j]
        for l in range(d):
            t += omegas[j, l] * theta[l]
        c = math.cos(t)
        s = weights[j] * math.sin(t)
        value += weights[j] * c
        for l in range(d):
            grad[l] -= s * omegas[j, l]
    return amp * value, amp * grad


def _rollout_gain_loop(a, b, gain, s_target, s0, q_r, r_r, noise):
    horizon = noise.shape[0]
    n_s = a.shape[0]
    n_a = b.shape[1]
    s = s0.copy()
    e = np.empty(n_s)
    u = np.empty(n_a)
    s_next = np.empty(n_s)
    total = 0.0
    for t in range(horizon):
        for i in range(n_s):
            e[i] = s[i] - s_target[i]
        for i in range(n_a):
            acc = 0.0
            for l in range(n_s):
                acc += gain[i, l] * e[l]
            u[i] = -acc
        for i in range(n_s):
            acc = noise[t, i]
            for l in range(n_s):
                acc += a[i, l] * s[l]
            for l in range(n_a):
                acc += b[i, l] * u[l]
            s_next[i] = acc
        cost = 0.0
        for i in range(n_s):
            row = 0.0
            for l in range(n_s):
                row += q_r[i, l] * (s_next[l] - s_target[l])
            cost += (s_next[i] - s_target[i]) * row
        for i in range(n_a):
            row = 0.0
            for l in range(n_a):
                row += r_r[i, l] * u[l]
            cost += u[i] * row
        total -= cost
        for i in range(n_s):
            s[i] = s_next[i]
    return total


if NUMBA_ENABLED:
    _chol_posterior_jit = njit(cache=True)(_chol_posterior_loop)
    _ei_scalar_jit = njit(cache=True)(_ei_scalar)

    rbf_matrix = njit(cache=True)(_rbf_matrix_loop)
    chol_posterior = _chol_posterior_jit

    @njit(cache=True)
    def uei_value(x, sigma2, k_ut, x_train, chol, alpha, lengthscale,
                  signal_variance, y_best):
        d = x.shape[0]
        if sigma2 <= 0.0:
            pts = x.reshape(1, d)
            mu, var = _chol_posterior_jit(x_train, chol, alpha, pts,
                                          lengthscale, signal_variance)
            return _ei_scalar_jit(mu[0], math.sqrt(var[0]), y_best)
        spread = math.sqrt((d + k_ut) * sigma2)
        pts = np.empty((2 * d + 1, d))
        for j in range(2 * d + 1):
            for l in range(d):
                pts[j, l] = x[l]
        for i in range(d):
            hi = x[i] + spread
            lo = x[i] - spread
            pts[1 + i, i] = hi if hi < 1.0 else 1.0
            pts[1 + d + i, i] = lo if lo > 0.0 else 0.0
        mu, var = _chol_posterior_jit(x_train, chol, alpha, pts, lengthscale,
                                      signal_variance)
        w0 = k_ut / (d + k_ut)
        w_side = 1.0 / (2.0 * (d + k_ut))
        total = w0 * _ei_scalar_jit(mu[0], math.sqrt(var[0]), y_best)
        for j in range(1, 2 * d + 1):
            total += w_side * _ei_scalar_jit(mu[j], math.sqrt(var[j]), y_best)
        return total

    rff_features = njit(cache=True)(_rff_features_loop)
    rff_value_grad = njit(cache=True)(_rff_value_grad_loop)
    rollout_gain = njit(cache=True)(_rollout_gain_loop)
    dare_solve = njit(cache=True)(_dare_solve_np)
else:
    rbf_matrix = _rbf_matrix_np
    chol_posterior = _chol_posterior_np
    uei_value = _uei_value_np
    rff_features = _rff_features_np
    rff_value_grad = _rff_value_grad_np
    rollout_gain = _rollout_gain_np
    dare_solve = _dare_solve_np


def warmup():
    """Trigger JIT compilation of every kernel on tiny inputs."""
    x = np.zeros((2, 2))
    z = np.full((1, 2), 0.5)
    rbf_matrix(x, z, 0.5, 1.0)
    chol = np.eye(2)
    alpha = np.zeros(2)
    chol_posterior(x, chol, alpha, z, 0.5, 1.0)
    uei_value(z[0], 0.01, 2.0, x, chol, alpha, 0.5, 1.0, 0.0)
    uei_value(z[0], 0.0, 2.0, x, chol, alpha, 0.5, 1.0, 0.0)
    omegas = np.ones((3, 2))
    phases = np.zeros(3)
    rff_features(z, omegas, phases)
    rff_value_grad(z[0], omegas, phases, np.ones(3), 1.0)
    rollout_gain(np.eye(2), np.ones((2, 1)), np.ones((1, 2)), np.zeros(2),
                 np.ones(2), np.eye(2), np.eye(1), np.zeros((3, 2)))
    dare_solve(0.5 * np.eye(2), np.ones((2, 1)), np.eye(2), np.eye(1),
               1e-12, 1000)
