"""Fused hot-path kernels (numba when available, numpy otherwise).

The numpy implementations are the reference semantics; the jitted kernels
must match them to float rounding and are cross-checked in the test suite.
Everything here is single-threaded and loop-ordered deterministically.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is generally present
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        if args and callable(args[0]):
            return args[0]
        return wrap


# -- quantile Huber regression (kappa = 1) ---------------------------------

def quantile_huber_numpy(current: np.ndarray, target: np.ndarray, taus: np.ndarray):
    """Reference pairwise quantile Huber loss and gradient w.r.t. `current`."""
    u = target[None, :, None, :] - current[..., None]
    clipped = np.clip(u, -1.0, 1.0)
    weight = np.abs(taus[None, None, :, None] - (u < 0.0).astype(current.dtype))
    n_e, n_b, _, n_m = u.shape
    scale = n_e * n_b * n_m
    huber = clipped * (u - 0.5 * clipped)
    loss = float((weight * huber).sum() / scale)
    d_current = -(weight * clipped).sum(axis=3) / scale
    return loss, d_current.astype(current.dtype)


@njit(cache=True)
def _quantile_huber_jit(current, target, taus, d_out):
    n_e, n_b, n_q = current.shape
    n_m = target.shape[1]
    total = 0.0
    for e in range(n_e):
        for b in range(n_b):
            for i in range(n_q):
                q = current[e, b, i]
                tau = taus[i]
                acc = 0.0
                grad = 0.0
                for j in range(n_m):
                    u = target[b, j] - q
                    c = min(max(u, -1.0), 1.0)
                    w = tau if u >= 0.0 else 1.0 - tau
                    acc += w * c * (u - 0.5 * c)
                    grad += w * c
                d_out[e, b, i] = -grad
                total += acc
    return total


def quantile_huber(current: np.ndarray, target: np.ndarray, taus: np.ndarray):
    if not HAVE_NUMBA:
        return quantile_huber_numpy(current, target, taus)
    n_e, n_b, _ = current.shape
    scale = n_e * n_b * target.shape[1]
    d_out = np.empty_like(current)
    total = _quantile_huber_jit(current, target, taus, d_out)
    d_out /= scale
    return total / scale, d_out


# -- batch renorm train-mode forward/backward ------------------------------

def brn_forward_numpy(x, gamma, beta, running_mean, running_var, eps, r_max, d_max):
    """Returns (y, xhat0, sigma, r, d, mean, var): batch stats + renorm factors."""
    mean = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    sigma = np.sqrt(var + eps)
    run_sigma = np.sqrt(running_var + eps)
    r = np.clip(sigma / run_sigma, 1.0 / r_max, r_max)
    d = np.clip((mean - running_mean) / run_sigma, -d_max, d_max)
    xhat0 = (x - mean) / sigma
    y = gamma * (xhat0 * r + d) + beta
    return y, xhat0, sigma, r, d, mean, var


@njit(cache=True)
def _brn_forward_jit(x, gamma, beta, running_mean, running_var, eps, r_max, d_max,
                     y, xhat0, sigma, r, d, mean, var):
    n_e, n_b, n_f = x.shape
    for e in range(n_e):
        s1 = np.zeros(n_f)
        s2 = np.zeros(n_f)
        for b in range(n_b):
            for f in range(n_f):
                v0 = x[e, b, f]
                s1[f] += v0
                s2[f] += v0 * v0
        for f in range(n_f):
            mu = s1[f] / n_b
            v = s2[f] / n_b - mu * mu
            if v < 0.0:
                v = 0.0
            sg = np.sqrt(v + eps)
            run_sg = np.sqrt(running_var[e, 0, f] + eps)
            mean[e, 0, f] = mu
            var[e, 0, f] = v
            sigma[e, 0, f] = sg
            r[e, 0, f] = min(max(sg / run_sg, 1.0 / r_max), r_max)
            d[e, 0, f] = min(max((mu - running_mean[e, 0, f]) / run_sg, -d_max), d_max)
        for b in range(n_b):
            for f in range(n_f):
                xh = (x[e, b, f] - mean[e, 0, f]) / sigma[e, 0, f]
                xhat0[e, b, f] = xh
                y[e, b, f] = gamma[e, 0, f] * (xh * r[e, 0, f] + d[e, 0, f]) + beta[e, 0, f]


def brn_forward(x, gamma, beta, running_mean, running_var, eps, r_max, d_max):
    if not HAVE_NUMBA:
        return brn_forward_numpy(x, gamma, beta, running_mean, running_var, eps, r_max, d_max)
    y = np.empty_like(x)
    xhat0 = np.empty_like(x)
    stat_shape = running_mean.shape
    sigma = np.empty(stat_shape, dtype=x.dtype)
    r = np.empty(stat_shape, dtype=x.dtype)
    d = np.empty(stat_shape, dtype=x.dtype)
    mean = np.empty(stat_shape, dtype=x.dtype)
    var = np.empty(stat_shape, dtype=x.dtype)
    _brn_forward_jit(x, gamma, beta, running_mean, running_var, eps, r_max, d_max,
                     y, xhat0, sigma, r, d, mean, var)
    return y, xhat0, sigma, r, d, mean, var


def brn_backward_numpy(dy, gamma, xhat0, sigma, r, d, param_grads, need_input_grad):
    """Reference train-mode backward; returns (dx, dgamma, dbeta)."""
    dgamma = dbeta = None
    if param_grads:
        dbeta = dy.sum(axis=1, keepdims=True)
        dgamma = (dy * (xhat0 * r + d)).sum(axis=1, keepdims=True)
    dx = None
    if need_input_grad:
        g = dy * (gamma * r)
        g_mean = g.mean(axis=1, keepdims=True)
        proj = (g * xhat0).mean(axis=1, keepdims=True)
        dx = (g - g_mean - xhat0 * proj) / sigma
    return dx, dgamma, dbeta


@njit(cache=True)
def _brn_backward_jit(dy, gamma, xhat0, sigma, r, d, dx, dgamma, dbeta,
                      param_grads, need_input_grad):
    n_e, n_b, n_f = dy.shape
    for e in range(n_e):
        s1 = np.zeros(n_f)
        s2 = np.zeros(n_f)
        for b in range(n_b):
            for f in range(n_f):
                s1[f] += dy[e, b, f]
                s2[f] += dy[e, b, f] * xhat0[e, b, f]
        if param_grads:
            for f in range(n_f):
                dbeta[e, 0, f] += s1[f]
                dgamma[e, 0, f] += r[e, 0, f] * s2[f] + d[e, 0, f] * s1[f]
        if need_input_grad:
            gr_v = np.empty(n_f)
            mean_g = np.empty(n_f)
            proj = np.empty(n_f)
            inv_sg = np.empty(n_f)
            for f in range(n_f):
                gr = gamma[e, 0, f] * r[e, 0, f]
                gr_v[f] = gr
                mean_g[f] = gr * s1[f] / n_b
                proj[f] = gr * s2[f] / n_b
                inv_sg[f] = 1.0 / sigma[e, 0, f]
            for b in range(n_b):
                for f in range(n_f):
                    dx[e, b, f] = (gr_v[f] * dy[e, b, f] - mean_g[f]
                                   - xhat0[e, b, f] * proj[f]) * inv_sg[f]


def brn_backward(dy, gamma, xhat0, sigma, r, d, dgamma, dbeta,
                 param_grads: bool, need_input_grad: bool):
    """Accumulates into dgamma/dbeta when param_grads; returns dx or None."""
    if not HAVE_NUMBA:
        dx, dg, db = brn_backward_numpy(dy, gamma, xhat0, sigma, r, d,
                                        param_grads, need_input_grad)
        if param_grads:
            dgamma += dg
            dbeta += db
        return dx
    dx = np.empty_like(dy) if need_input_grad else np.empty((1, 1, 1), dtype=dy.dtype)
    _brn_backward_jit(dy, gamma, xhat0, sigma, r, d, dx, dgamma, dbeta,
                      param_grads, need_input_grad)
    return dx if need_input_grad else None


# -- Adam inner update ------------------------------------------------------

@njit(cache=True)
def _adam_jit(p, g, m, v, beta1, beta2, eps, step_scale, inv_sqrt_c2):
    for i in range(p.size):
        mi = beta1 * m[i] + (1.0 - beta1) * g[i]
        vi = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        m[i] = mi
        v[i] = vi
        p[i] -= step_scale * mi / (np.sqrt(vi) * inv_sqrt_c2 + eps)


def adam_update(p, g, m, v, beta1, beta2, eps, step_scale, inv_sqrt_c2) -> bool:
    """Fused in-place Adam step over flat views; False if jit is unavailable."""
    if not HAVE_NUMBA:
        return False
    _adam_jit(p.reshape(-1), g.reshape(-1), m.reshape(-1), v.reshape(-1),
              beta1, beta2, eps, step_scale, inv_sqrt_c2)
    return True
