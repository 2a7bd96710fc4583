"""Small fully connected network with hand-written backpropagation.

Hidden layers run linear -> tanh -> batch-norm (no learned affine); the output
layer is linear -> sigmoid. All parameters live in one flat float64 vector so
that the optimiser, snapshots and serialisation work on a single array.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

WIDTHS = (2, 8, 8, 8, 1)
BN_EPS = 1e-5


class BatchTooSmall(ValueError):
    pass


class Mlp:
    """Risk network ``F: R^2 -> (0, 1)``.

    With ``awet=True`` every forward pass uses ``|W|`` in place of the stored
    weights, which makes the network non-decreasing in each input.
    """

    def __init__(self, widths=WIDTHS, awet: bool = False, momentum: float = 0.1):
        self.widths = tuple(int(w) for w in widths)
        if len(self.widths) < 2 or self.widths[-1] != 1:
            raise ValueError("widths must end with a single output unit")
        self.awet = bool(awet)
        self.momentum = float(momentum)
        self.params = np.zeros(self.n_params)
        self.weights, self.biases = self.views(self.params)
        n_hidden = sum(self.widths[1:-1])
        self.bn_mean = np.zeros(n_hidden)
        self.bn_var = np.ones(n_hidden)
        self.running_mean = self._stat_views(self.bn_mean)
        self.running_var = self._stat_views(self.bn_var)

    @property
    def n_params(self) -> int:
        return sum(o * i + o for i, o in zip(self.widths[:-1], self.widths[1:]))

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    def views(self, flat: np.ndarray):
        """Split a flat vector laid out like ``params`` into (weights, biases)."""
        ws, bs, pos = [], [], 0
        for fi, fo in zip(self.widths[:-1], self.widths[1:]):
            ws.append(flat[pos:pos + fo * fi].reshape(fo, fi))
            pos += fo * fi
            bs.append(flat[pos:pos + fo])
            pos += fo
        return ws, bs

    def _stat_views(self, flat):
        out, pos = [], 0
        for w in self.widths[1:-1]:
            out.append(flat[pos:pos + w])
            pos += w
        return out

    def init_weights(self, rng: np.random.Generator) -> "Mlp":
        """Uniform(+-sqrt(6 / (fan_in + fan_out))) weights, zero biases."""
        for W, b in zip(self.weights, self.biases):
            fo, fi = W.shape
            bound = np.sqrt(6.0 / (fi + fo))
            W[...] = rng.uniform(-bound, bound, size=W.shape)
            b[...] = 0.0
        return self

    def effective_weights(self):
        if self.awet:
            return [np.abs(W) for W in self.weights]
        return self.weights

    def copy(self) -> "Mlp":
        other = Mlp(self.widths, self.awet, self.momentum)
        other.load_state(self.state())
        return other

    def state(self):
        return self.params.copy(), self.bn_mean.copy(), self.bn_var.copy()

    def load_state(self, state) -> None:
        params, means, variances = state
        self.params[...] = params
        self.bn_mean[...] = means
        self.bn_var[...] = variances

    # -- training mode -----------------------------------------------------

    def forward_train(self, Z: np.ndarray, update_stats: bool = True):
        """Batch-statistics forward pass. Returns ``(probabilities, cache)``."""
        n = Z.shape[0]
        if n < 2:
            raise BatchTooSmall("train-mode batch norm needs at least 2 samples")
        Ws = self.effective_weights()
        inv_n = 1.0 / n
        h = Z
        cache = []
        last = self.n_layers - 1
        for l in range(last):
            u = np.tanh(h @ Ws[l].T + self.biases[l])
            mu = u.sum(axis=0) * inv_n
            c = u - mu
            var = (c * c).sum(axis=0) * inv_n
            inv = 1.0 / np.sqrt(var + BN_EPS)
            xhat = c * inv
            if update_stats:
                m = self.momentum
                self.running_mean[l] *= 1.0 - m
                self.running_mean[l] += m * mu
                self.running_var[l] *= 1.0 - m
                self.running_var[l] += m * var * (n / (n - 1))
            cache.append((h, u, xhat, inv))
            h = xhat
        logit = (h @ Ws[last].T)[:, 0] + self.biases[last][0]
        cache.append((h,))
        return expit(logit), (Ws, cache)

    def backward(self, cache, dlogit: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Accumulate dL/dparams into ``grad`` given dL/dlogit per sample."""
        Ws, layers = cache
        gW, gb = self.views(grad)
        last = self.n_layers - 1
        inv_n = 1.0 / len(dlogit)
        g = dlogit[:, None]
        (h,) = layers[last]
        dW = g.T @ h
        gb[last] += g.sum(axis=0)
        dh = g @ Ws[last]
        self._add_weight_grad(gW, last, dW)
        for l in range(last - 1, -1, -1):
            h, u, xhat, inv = layers[l]
            du = inv * (dh - dh.sum(axis=0) * inv_n - xhat * ((dh * xhat).sum(axis=0) * inv_n))
            da = du * (1.0 - u * u)
            self._add_weight_grad(gW, l, da.T @ h)
            gb[l] += da.sum(axis=0)
            if l:
                dh = da @ Ws[l]
        return grad

    def _add_weight_grad(self, gW, l, dW):
        if self.awet:
            dW = dW * np.sign(self.weights[l])
        gW[l] += dW

    # -- inference mode ----------------------------------------------------

    def _forward_inference(self, Z):
        Ws = self.effective_weights()
        h = np.atleast_2d(np.asarray(Z, dtype=float))
        cache = []
        last = self.n_layers - 1
        for l in range(last):
            u = np.tanh(h @ Ws[l].T + self.biases[l])
            inv = 1.0 / np.sqrt(self.running_var[l] + BN_EPS)
            cache.append((u, inv))
            h = (u - self.running_mean[l]) * inv
        out = expit((h @ Ws[last].T)[:, 0] + self.biases[last][0])
        return out, Ws, cache

    def predict(self, Z) -> np.ndarray:
        """Probabilities using running batch-norm statistics only."""
        return self._forward_inference(Z)[0]

    def input_gradient(self, Z):
        """Return ``(F(Z), dF/dZ)`` in inference mode, via backpropagation."""
        out, Ws, cache = self._forward_inference(Z)
        last = self.n_layers - 1
        dh = (out * (1.0 - out))[:, None] * Ws[last]
        for l in range(last - 1, -1, -1):
            u, inv = cache[l]
            da = dh * inv * (1.0 - u * u)
            dh = da @ Ws[l]
        return out, dh

    def derivative_penalty(self, Z, grad: np.ndarray | None = None) -> float:
        """``sum_{points, dims} max(0, -dF/dz_d)^2`` in inference mode.

        When ``grad`` is given, the gradient of the penalty with respect to the
        parameters is added into it. Running statistics are constants here.
        """
        Ws = self.effective_weights()
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        n, d_in = Z.shape
        h = Z
        T = np.broadcast_to(np.eye(d_in), (n, d_in, d_in))
        cache = []
        last = self.n_layers - 1
        for l in range(last):
            W = Ws[l]
            Ta = np.einsum("oi,nid->nod", W, T)
            u = np.tanh(h @ W.T + self.biases[l])
            s1 = 1.0 - u * u
            inv = 1.0 / np.sqrt(self.running_var[l] + BN_EPS)
            cache.append((h, T, Ta, u, s1, inv))
            h = (u - self.running_mean[l]) * inv
            T = (s1 * inv)[:, :, None] * Ta
        W = Ws[last]
        Ta_out = np.einsum("oi,nid->nod", W, T)[:, 0, :]
        F = expit((h @ W.T)[:, 0] + self.biases[last][0])
        sp = F * (1.0 - F)
        g = sp[:, None] * Ta_out
        neg = np.maximum(-g, 0.0)
        value = float(np.sum(neg * neg))
        if grad is None:
            return value

        gW, gb = self.views(grad)
        dg = -2.0 * neg
        spp = sp * (1.0 - 2.0 * F)
        da = (np.sum(dg * Ta_out, axis=1) * spp)[:, None]
        dTa = (dg * sp[:, None])[:, None, :]
        self._add_weight_grad(gW, last, da.T @ h + np.einsum("nod,nid->oi", dTa, T))
        gb[last] += da.sum(axis=0)
        dh = da @ W
        dT = np.einsum("nod,oi->nid", dTa, W)
        for l in range(last - 1, -1, -1):
            h_prev, T_prev, Ta, u, s1, inv = cache[l]
            dTa = s1[:, :, None] * (dT * inv[None, :, None])
            du = dh * inv + np.sum(dT * inv[None, :, None] * Ta, axis=2) * (-2.0 * u)
            da = du * s1
            W = Ws[l]
            self._add_weight_grad(gW, l, da.T @ h_prev + np.einsum("nod,nid->oi", dTa, T_prev))
            gb[l] += da.sum(axis=0)
            if l:
                dh = da @ W
                dT = np.einsum("nod,oi->nid", dTa, W)
        return value

    def __eq__(self, other):
        if not isinstance(other, Mlp):
            return NotImplemented
        return (
            self.widths == other.widths
            and self.awet == other.awet
            and self.momentum == other.momentum
            and np.array_equal(self.params, other.params)
            and np.array_equal(self.bn_mean, other.bn_mean)
            and np.array_equal(self.bn_var, other.bn_var)
        )


class Adam:
    """First/second-moment gradient descent over one flat parameter vector."""

    def __init__(self, n: int, lr: float = 0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        self.m *= b1
        self.m += (1.0 - b1) * grad
        self.v *= b2
        self.v += (1.0 - b2) * grad * grad
        lr_t = self.lr * np.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        params -= lr_t * self.m / (np.sqrt(self.v) + self.eps * np.sqrt(1.0 - b2 ** self.t))
