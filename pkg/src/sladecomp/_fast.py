"""Compiled training epoch.

Loop-level twin of the numpy engine in :mod:`sladecomp.mlp`: same parameter
layout, same batch-norm conventions, same loss terms. The numpy engine is the
reference; ``tests/test_fast.py`` holds the two to 1e-10.
"""

from __future__ import annotations

import math
import time

import numpy as np
from numba import njit, objmode

PLAIN, REG, MOL, DP = 0, 1, 2, 3
BN_EPS = 1e-5


@njit(cache=True)
def _layer_offsets(widths):
    n = widths.shape[0] - 1
    w_off = np.empty(n, np.int64)
    b_off = np.empty(n, np.int64)
    pos = 0
    for l in range(n):
        w_off[l] = pos
        pos += widths[l] * widths[l + 1]
        b_off[l] = pos
        pos += widths[l + 1]
    return w_off, b_off


@njit(cache=True)
def _hidden_offsets(widths):
    n = widths.shape[0] - 2
    off = np.empty(n, np.int64)
    pos = 0
    for l in range(n):
        off[l] = pos
        pos += widths[l + 1]
    return off


@njit(cache=True)
def _dp_point(weff, params, widths, w_off, b_off, h_off, rmean, rvar, z, gw):
    """Penalty at one point; adds d(penalty)/d(effective weights, biases) into gw."""
    L = widths.shape[0] - 1
    maxw = 0
    for l in range(L + 1):
        maxw = max(maxw, widths[l])
    H = np.zeros((L, maxw))
    T = np.zeros((L, maxw, 2))
    TA = np.zeros((L, maxw, 2))
    U = np.zeros((L, maxw))
    INV = np.zeros((L, maxw))
    H[0, 0] = z[0]
    H[0, 1] = z[1]
    T[0, 0, 0] = 1.0
    T[0, 1, 1] = 1.0
    for l in range(L - 1):
        fi, fo = widths[l], widths[l + 1]
        for o in range(fo):
            a = params[b_off[l] + o]
            t0 = 0.0
            t1 = 0.0
            for i in range(fi):
                w = weff[w_off[l] + o * fi + i]
                a += w * H[l, i]
                t0 += w * T[l, i, 0]
                t1 += w * T[l, i, 1]
            u = math.tanh(a)
            inv = 1.0 / math.sqrt(rvar[h_off[l] + o] + BN_EPS)
            U[l, o] = u
            INV[l, o] = inv
            TA[l, o, 0] = t0
            TA[l, o, 1] = t1
            s1 = 1.0 - u * u
            H[l + 1, o] = (u - rmean[h_off[l] + o]) * inv
            T[l + 1, o, 0] = s1 * inv * t0
            T[l + 1, o, 1] = s1 * inv * t1
    l = L - 1
    fi = widths[l]
    a = params[b_off[l]]
    ta0 = 0.0
    ta1 = 0.0
    for i in range(fi):
        w = weff[w_off[l] + i]
        a += w * H[l, i]
        ta0 += w * T[l, i, 0]
        ta1 += w * T[l, i, 1]
    F = 1.0 / (1.0 + math.exp(-a))
    sp = F * (1.0 - F)
    n0 = max(-sp * ta0, 0.0)
    n1 = max(-sp * ta1, 0.0)
    value = n0 * n0 + n1 * n1
    if value == 0.0:
        return 0.0
    dg0 = -2.0 * n0
    dg1 = -2.0 * n1
    spp = sp * (1.0 - 2.0 * F)
    da_out = spp * (dg0 * ta0 + dg1 * ta1)
    dta0 = dg0 * sp
    dta1 = dg1 * sp
    dH = np.zeros(maxw)
    dT = np.zeros((maxw, 2))
    for i in range(fi):
        gw[w_off[l] + i] += da_out * H[l, i] + dta0 * T[l, i, 0] + dta1 * T[l, i, 1]
        w = weff[w_off[l] + i]
        dH[i] = da_out * w
        dT[i, 0] = dta0 * w
        dT[i, 1] = dta1 * w
    gw[b_off[l]] += da_out
    for l in range(L - 2, -1, -1):
        fi, fo = widths[l], widths[l + 1]
        dHp = np.zeros(maxw)
        dTp = np.zeros((maxw, 2))
        for o in range(fo):
            u = U[l, o]
            inv = INV[l, o]
            s1 = 1.0 - u * u
            dTa0 = s1 * inv * dT[o, 0]
            dTa1 = s1 * inv * dT[o, 1]
            du = dH[o] * inv + inv * (dT[o, 0] * TA[l, o, 0] + dT[o, 1] * TA[l, o, 1]) * (-2.0 * u)
            da = du * s1
            for i in range(fi):
                gw[w_off[l] + o * fi + i] += da * H[l, i] + dTa0 * T[l, i, 0] + dTa1 * T[l, i, 1]
                w = weff[w_off[l] + o * fi + i]
                dHp[i] += da * w
                dTp[i, 0] += dTa0 * w
                dTp[i, 1] += dTa1 * w
            gw[b_off[l] + o] += da
        dH = dHp
        dT = dTp
    return value


@njit(cache=True)
def batch_loss_grad(params, widths, awet, rmean, rvar, momentum, Z, y, idx, eps_clip,
                    method, k, order, dp_pts, grad, update_stats):
    """Total loss of one mini-batch; writes the parameter gradient into ``grad``."""
    L = widths.shape[0] - 1
    w_off, b_off = _layer_offsets(widths)
    h_off = _hidden_offsets(widths)
    m = idx.shape[0]
    maxw = 0
    for l in range(L + 1):
        maxw = max(maxw, widths[l])

    weff = params.copy()
    if awet:
        for l in range(L):
            for j in range(widths[l] * widths[l + 1]):
                weff[w_off[l] + j] = abs(params[w_off[l] + j])

    H = np.zeros((L, m, maxw))
    U = np.zeros((L, m, maxw))
    INV = np.zeros((L, maxw))
    for s in range(m):
        for i in range(widths[0]):
            H[0, s, i] = Z[idx[s], i]
    for l in range(L - 1):
        fi, fo = widths[l], widths[l + 1]
        for o in range(fo):
            for s in range(m):
                a = params[b_off[l] + o]
                for i in range(fi):
                    a += weff[w_off[l] + o * fi + i] * H[l, s, i]
                U[l, s, o] = math.tanh(a)
            mu = 0.0
            for s in range(m):
                mu += U[l, s, o]
            mu /= m
            var = 0.0
            for s in range(m):
                c = U[l, s, o] - mu
                var += c * c
            var /= m
            inv = 1.0 / math.sqrt(var + BN_EPS)
            INV[l, o] = inv
            for s in range(m):
                H[l + 1, s, o] = (U[l, s, o] - mu) * inv
            if update_stats:
                j = h_off[l] + o
                rmean[j] = (1.0 - momentum) * rmean[j] + momentum * mu
                rvar[j] = (1.0 - momentum) * rvar[j] + momentum * var * m / (m - 1)

    l = L - 1
    fi = widths[l]
    p = np.empty(m)
    for s in range(m):
        a = params[b_off[l]]
        for i in range(fi):
            a += weff[w_off[l] + i] * H[l, s, i]
        p[s] = 1.0 / (1.0 + math.exp(-a))

    loss = 0.0
    dlogit = np.zeros(m)
    for s in range(m):
        q = min(max(p[s], eps_clip), 1.0 - eps_clip)
        loss -= y[idx[s]] * math.log(q) + (1.0 - y[idx[s]]) * math.log1p(-q)
        if p[s] > eps_clip and p[s] < 1.0 - eps_clip:
            dlogit[s] = (p[s] - y[idx[s]]) / m
    loss /= m

    if method == MOL:
        for i in range(m):
            for j in range(m):
                if i != j and order[idx[i], idx[j]] and p[i] > p[j]:
                    loss += k * (p[i] - p[j])
                    dlogit[i] += k * p[i] * (1.0 - p[i])
                    dlogit[j] -= k * p[j] * (1.0 - p[j])

    gw = np.zeros(params.shape[0])
    dH = np.zeros((m, maxw))
    for s in range(m):
        gw[b_off[l]] += dlogit[s]
        for i in range(fi):
            gw[w_off[l] + i] += dlogit[s] * H[l, s, i]
            dH[s, i] = dlogit[s] * weff[w_off[l] + i]
    for l in range(L - 2, -1, -1):
        fi, fo = widths[l], widths[l + 1]
        dA = np.zeros((m, maxw))
        for o in range(fo):
            sd = 0.0
            sdx = 0.0
            for s in range(m):
                sd += dH[s, o]
                sdx += dH[s, o] * H[l + 1, s, o]
            sd /= m
            sdx /= m
            for s in range(m):
                u = U[l, s, o]
                du = INV[l, o] * (dH[s, o] - sd - H[l + 1, s, o] * sdx)
                dA[s, o] = du * (1.0 - u * u)
        dHp = np.zeros((m, maxw))
        for o in range(fo):
            for s in range(m):
                da = dA[s, o]
                gw[b_off[l] + o] += da
                for i in range(fi):
                    gw[w_off[l] + o * fi + i] += da * H[l, s, i]
                    dHp[s, i] += da * weff[w_off[l] + o * fi + i]
        dH = dHp

    if method == DP:
        pen = 0.0
        gdp = np.zeros(params.shape[0])
        for s in range(dp_pts.shape[0]):
            pen += _dp_point(weff, params, widths, w_off, b_off, h_off, rmean, rvar, dp_pts[s], gdp)
        loss += k * pen
        for j in range(gw.shape[0]):
            gw[j] += k * gdp[j]

    for j in range(gw.shape[0]):
        grad[j] = gw[j]
    if awet:
        for l in range(L):
            for j in range(widths[l] * widths[l + 1]):
                q = w_off[l] + j
                if params[q] > 0:
                    pass
                elif params[q] < 0:
                    grad[q] = -grad[q]
                else:
                    grad[q] = 0.0
    if method == REG:
        for l in range(L):
            for j in range(widths[l] * widths[l + 1]):
                w = params[w_off[l] + j]
                if w < 0:
                    loss += k * w * w
                    grad[w_off[l] + j] += k * 2.0 * w
    return loss


@njit(cache=True)
def predict(params, widths, awet, rmean, rvar, Z):
    """Inference-mode forward pass (running batch-norm statistics)."""
    L = widths.shape[0] - 1
    w_off, b_off = _layer_offsets(widths)
    h_off = _hidden_offsets(widths)
    maxw = 0
    for l in range(L + 1):
        maxw = max(maxw, widths[l])
    n = Z.shape[0]
    out = np.empty(n)
    h = np.zeros(maxw)
    hn = np.zeros(maxw)
    for s in range(n):
        for i in range(widths[0]):
            h[i] = Z[s, i]
        for l in range(L):
            fi, fo = widths[l], widths[l + 1]
            for o in range(fo):
                a = params[b_off[l] + o]
                for i in range(fi):
                    w = params[w_off[l] + o * fi + i]
                    a += (abs(w) if awet else w) * h[i]
                if l < L - 1:
                    hn[o] = (math.tanh(a) - rmean[h_off[l] + o]) / math.sqrt(rvar[h_off[l] + o] + BN_EPS)
                else:
                    out[s] = 1.0 / (1.0 + math.exp(-a))
            for o in range(fo):
                h[o] = hn[o]
    return out


@njit(cache=True)
def _bce(p, y, eps_clip):
    total = 0.0
    for s in range(p.shape[0]):
        q = min(max(p[s], eps_clip), 1.0 - eps_clip)
        total -= y[s] * math.log(q) + (1.0 - y[s]) * math.log1p(-q)
    return total / p.shape[0]


@njit(cache=True)
def fit_chunk(params, widths, awet, rmean, rvar, momentum, Z, y, Z_val, y_val, perms, batch_size,
              eps_clip, method, k, order, dp_pts, adam_m, adam_v, adam_state, lr, beta1, beta2,
              adam_eps, best_params, best_mean, best_var, es_state, patience, max_epochs,
              train_losses, val_losses, stamps, record_time):
    """Run up to ``perms.shape[0]`` epochs with early stopping.

    ``es_state`` carries (best validation loss, best epoch, epochs since best,
    epochs done) and ``adam_state[0]`` the optimiser step count across calls.
    Per-epoch losses land in ``train_losses``/``val_losses`` (and wall-clock
    stamps in ``stamps`` when ``record_time``). Returns (epochs run, flag)
    with flag 0 = continue, 1 = patience exhausted or cap reached,
    2 = non-finite loss.
    """
    n = perms.shape[1]
    grad = np.zeros(params.shape[0])
    t = adam_state[0]
    for e in range(perms.shape[0]):
        total = 0.0
        steps = 0
        start = 0
        while start < n:
            stop = min(start + batch_size, n)
            if stop - start >= 2:
                idx = perms[e, start:stop]
                loss = batch_loss_grad(params, widths, awet, rmean, rvar, momentum, Z, y, idx,
                                       eps_clip, method, k, order, dp_pts[e, steps], grad, True)
                if not math.isfinite(loss):
                    adam_state[0] = t
                    return e, 2
                t += 1
                c2 = math.sqrt(1.0 - beta2 ** t)
                lr_t = lr * c2 / (1.0 - beta1 ** t)
                for j in range(params.shape[0]):
                    g = grad[j]
                    adam_m[j] = beta1 * adam_m[j] + (1.0 - beta1) * g
                    adam_v[j] = beta2 * adam_v[j] + (1.0 - beta2) * g * g
                    params[j] -= lr_t * adam_m[j] / (math.sqrt(adam_v[j]) + adam_eps * c2)
                total += loss
                steps += 1
            start = stop
        val = _bce(predict(params, widths, awet, rmean, rvar, Z_val), y_val, eps_clip)
        epoch = int(es_state[3]) + 1
        es_state[3] = epoch
        train_losses[e] = total / max(steps, 1)
        val_losses[e] = val
        if record_time:
            with objmode(now="float64"):
                now = time.perf_counter()
            stamps[e] = now
        if not math.isfinite(val):
            adam_state[0] = t
            return e + 1, 2
        if val < es_state[0]:
            es_state[0] = val
            es_state[1] = epoch
            es_state[2] = 0
            best_params[:] = params
            best_mean[:] = rmean
            best_var[:] = rvar
        else:
            es_state[2] += 1
            if es_state[2] >= patience:
                adam_state[0] = t
                return e + 1, 1
        if epoch >= max_epochs:
            adam_state[0] = t
            return e + 1, 1
    adam_state[0] = t
    return perms.shape[0], 0


def n_steps(n: int, batch_size: int) -> int:
    full, rest = divmod(n, batch_size)
    return full + (1 if rest >= 2 else 0)


def flat_stats(stats) -> np.ndarray:
    return np.concatenate(stats) if stats else np.zeros(0)
