"""Minimal numpy neural nets for 12 x 50 squat tensors.

Two architectures:

* ``Cnn1d``: conv(64 filters, ReLU) -> max-pool(2) -> conv(128 filters,
  ReLU) -> global average pool -> dense(512, sigmoid) -> output head.
* ``LstmNet``: two recurrent layers of 100 units -> dropout -> output head.

The output head is a single sigmoid unit for binary models and a softmax
layer for three-class models. Gradients are written out by hand so they can
be verified against central finite differences; everything is float64 and
deterministic given a seed.
"""

from __future__ import annotations

import numpy as np

from .errors import TrainingDiverged


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Adam:
    """Adaptive-moment optimizer over a dict of parameter arrays."""

    def __init__(self, params: dict, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k in params:
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / (1 - b1 ** self.t)
            vhat = self.v[k] / (1 - b2 ** self.t)
            params[k] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def head_loss_and_grad(z, y, weights):
    """Weighted cross-entropy loss and dL/dz for a sigmoid or softmax head.

    z: (B, 1) logits for binary heads or (B, K) for softmax heads.
    y: integer class vector. weights: per-example loss weights.
    """
    w = weights / weights.sum()
    if z.shape[1] == 1:
        p = sigmoid(z[:, 0])
        p = np.clip(p, 1e-12, 1.0 - 1e-12)
        yf = y.astype(float)
        loss = -(w * (yf * np.log(p) + (1 - yf) * np.log(1 - p))).sum()
        dz = (w * (p - yf))[:, None]
        probs = np.column_stack([1.0 - p, p])
    else:
        p = softmax(z)
        loss = -(w * np.log(np.clip(p[np.arange(len(y)), y], 1e-12, None))).sum()
        dz = p.copy()
        dz[np.arange(len(y)), y] -= 1.0
        dz *= w[:, None]
        probs = p
    if not np.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss {loss!r}")
    return loss, dz, probs


def _sliding_cols(x_padded, k):
    """(B, T, C*k) patch matrix from a channel-padded (B, C, T+k-1) array."""
    view = np.lib.stride_tricks.sliding_window_view(x_padded, k, axis=2)
    return np.ascontiguousarray(view.transpose(0, 2, 1, 3)).reshape(
        x_padded.shape[0], -1, x_padded.shape[1] * k)


class Cnn1d:
    """1-D CNN over a (channels, timesteps) input."""

    KERNEL = 3
    POOL = 2

    def __init__(self, in_channels: int, n_classes: int, seed: int,
                 filters1: int = 64, filters2: int = 128, dense_units: int = 512):
        rng = np.random.default_rng(seed)
        k = self.KERNEL
        out_dim = 1 if n_classes == 2 else n_classes
        self.in_channels = in_channels
        self.n_classes = n_classes
        self.params = {
            "W1": glorot(rng, (in_channels * k, filters1), in_channels * k, filters1),
            "b1": np.zeros(filters1),
            "W2": glorot(rng, (filters1 * k, filters2), filters1 * k, filters2),
            "b2": np.zeros(filters2),
            "W3": glorot(rng, (filters2, dense_units), filters2, dense_units),
            "b3": np.zeros(dense_units),
            "W4": glorot(rng, (dense_units, out_dim), dense_units, out_dim),
            "b4": np.zeros(out_dim),
        }

    def _forward(self, X):
        p = self.params
        k, pad = self.KERNEL, self.KERNEL // 2
        B, C, T = X.shape
        xp = np.pad(X, ((0, 0), (0, 0), (pad, pad)))
        cols1 = _sliding_cols(xp, k)                      # (B, T, C*k)
        z1 = cols1 @ p["W1"] + p["b1"]
        a1 = np.maximum(z1, 0.0)                          # (B, T, F1)

        T2 = T // self.POOL
        pooled_in = a1[:, :T2 * self.POOL].reshape(B, T2, self.POOL, -1)
        pool_idx = pooled_in.argmax(axis=2)
        a1p = pooled_in.max(axis=2)                       # (B, T2, F1)

        a1p_ct = a1p.transpose(0, 2, 1)                   # (B, F1, T2)
        xp2 = np.pad(a1p_ct, ((0, 0), (0, 0), (pad, pad)))
        cols2 = _sliding_cols(xp2, k)                     # (B, T2, F1*k)
        z2 = cols2 @ p["W2"] + p["b2"]
        a2 = np.maximum(z2, 0.0)                          # (B, T2, F2)

        gap = a2.mean(axis=1)                             # (B, F2)
        z3 = gap @ p["W3"] + p["b3"]
        a3 = sigmoid(z3)                                  # (B, D)
        z4 = a3 @ p["W4"] + p["b4"]
        cache = (X, cols1, z1, pool_idx, cols2, z2, a2, gap, z3, a3, T2)
        return z4, cache

    def predict_proba(self, X):
        z4, _ = self._forward(np.asarray(X, dtype=float))
        if z4.shape[1] == 1:
            pos = sigmoid(z4[:, 0])
            return np.column_stack([1.0 - pos, pos])
        return softmax(z4)

    def loss_and_grads(self, X, y, weights, train_rng=None):
        p = self.params
        z4, cache = self._forward(np.asarray(X, dtype=float))
        X, cols1, z1, pool_idx, cols2, z2, a2, gap, z3, a3, T2 = cache
        B, C, T = X.shape
        k, pad = self.KERNEL, self.KERNEL // 2
        loss, dz4, _ = head_loss_and_grad(z4, y, weights)

        grads = {}
        grads["W4"] = a3.T @ dz4
        grads["b4"] = dz4.sum(axis=0)
        da3 = dz4 @ p["W4"].T
        dz3 = da3 * a3 * (1.0 - a3)
        grads["W3"] = gap.T @ dz3
        grads["b3"] = dz3.sum(axis=0)
        dgap = dz3 @ p["W3"].T
        da2 = np.repeat(dgap[:, None, :], T2, axis=1) / T2
        dz2 = da2 * (z2 > 0)

        F1 = p["b1"].size
        grads["W2"] = dz2.reshape(-1, dz2.shape[2]).T @ cols2.reshape(-1, cols2.shape[2])
        grads["W2"] = grads["W2"].T
        grads["b2"] = dz2.sum(axis=(0, 1))
        dcols2 = dz2 @ p["W2"].T                          # (B, T2, F1*k)
        dcols2 = dcols2.reshape(B, T2, F1, k)
        da1p_ct = np.zeros((B, F1, T2 + 2 * pad))
        for j in range(k):
            da1p_ct[:, :, j:j + T2] += dcols2[:, :, :, j].transpose(0, 2, 1)
        da1p = da1p_ct[:, :, pad:pad + T2].transpose(0, 2, 1)  # (B, T2, F1)

        da1_pairs = np.zeros((B, T2, self.POOL, F1))
        np.put_along_axis(da1_pairs, pool_idx[:, :, None, :], da1p[:, :, None, :], axis=2)
        da1 = np.zeros((B, T, F1))
        da1[:, :T2 * self.POOL] = da1_pairs.reshape(B, T2 * self.POOL, F1)
        dz1 = da1 * (z1 > 0)

        grads["W1"] = (dz1.reshape(-1, F1).T @ cols1.reshape(-1, cols1.shape[2])).T
        grads["b1"] = dz1.sum(axis=(0, 1))
        return loss, grads


class LstmNet:
    """Two stacked recurrent layers, dropout on the final hidden state."""

    def __init__(self, in_channels: int, n_classes: int, seed: int,
                 units: int = 100, dropout: float = 0.5):
        rng = np.random.default_rng(seed)
        out_dim = 1 if n_classes == 2 else n_classes
        self.in_channels = in_channels
        self.n_classes = n_classes
        self.units = units
        self.dropout = dropout
        H = units

        def layer(in_dim):
            W = glorot(rng, (in_dim + H, 4 * H), in_dim + H, 4 * H)
            b = np.zeros(4 * H)
            b[H:2 * H] = 1.0  # forget-gate bias
            return W, b

        W1, b1 = layer(in_channels)
        W2, b2 = layer(H)
        self.params = {
            "Wl1": W1, "bl1": b1, "Wl2": W2, "bl2": b2,
            "Wout": glorot(rng, (H, out_dim), H, out_dim),
            "bout": np.zeros(out_dim),
        }

    def _run_layer(self, W, b, inputs, keep_cache):
        """inputs: (T, B, in). Returns hidden sequence and per-step caches."""
        T, B, _ = inputs.shape
        H = self.units
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        hs = np.empty((T, B, H))
        caches = [] if keep_cache else None
        for t in range(T):
            xh = np.concatenate([inputs[t], h], axis=1)
            z = xh @ W + b
            i = sigmoid(z[:, :H])
            f = sigmoid(z[:, H:2 * H])
            g = np.tanh(z[:, 2 * H:3 * H])
            o = sigmoid(z[:, 3 * H:])
            c_prev = c
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            hs[t] = h
            if keep_cache:
                caches.append((xh, i, f, g, o, c_prev, tc))
        return hs, caches

    def _backward_layer(self, W, caches, dh_seq, dh_last):
        """BPTT through one layer. dh_seq: (T, B, H) upstream per step (may be
        None), dh_last: extra gradient on the final hidden state."""
        T = len(caches)
        H = self.units
        B = caches[0][0].shape[0]
        in_dim = caches[0][0].shape[1] - H
        dW = np.zeros_like(W)
        db = np.zeros(4 * H)
        dx_seq = np.empty((T, B, in_dim))
        dh_rec = dh_last.copy()
        dc_rec = np.zeros((B, H))
        for t in reversed(range(T)):
            xh, i, f, g, o, c_prev, tc = caches[t]
            dh = dh_rec + (dh_seq[t] if dh_seq is not None else 0.0)
            do = dh * tc
            dc = dc_rec + dh * o * (1.0 - tc * tc)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dz = np.concatenate([
                di * i * (1 - i), df * f * (1 - f),
                dg * (1 - g * g), do * o * (1 - o),
            ], axis=1)
            dW += xh.T @ dz
            db += dz.sum(axis=0)
            dxh = dz @ W.T
            dx_seq[t] = dxh[:, :in_dim]
            dh_rec = dxh[:, in_dim:]
            dc_rec = dc * f
        return dW, db, dx_seq

    def _forward(self, X, train_rng=None, keep_cache=False):
        p = self.params
        seq = np.asarray(X, dtype=float).transpose(2, 0, 1)  # (T, B, C)
        hs1, cache1 = self._run_layer(p["Wl1"], p["bl1"], seq, keep_cache)
        hs2, cache2 = self._run_layer(p["Wl2"], p["bl2"], hs1, keep_cache)
        h_last = hs2[-1]
        if train_rng is not None and self.dropout > 0.0:
            mask = (train_rng.random(h_last.shape) >= self.dropout) / (1.0 - self.dropout)
        else:
            mask = None
        h_drop = h_last * mask if mask is not None else h_last
        z = h_drop @ p["Wout"] + p["bout"]
        cache = (cache1, cache2, hs1, h_drop, mask)
        return z, cache

    def predict_proba(self, X):
        z, _ = self._forward(X)
        if z.shape[1] == 1:
            pos = sigmoid(z[:, 0])
            return np.column_stack([1.0 - pos, pos])
        return softmax(z)

    def loss_and_grads(self, X, y, weights, train_rng=None):
        p = self.params
        z, cache = self._forward(X, train_rng=train_rng, keep_cache=True)
        cache1, cache2, hs1, h_drop, mask = cache
        loss, dz, _ = head_loss_and_grad(z, y, weights)

        grads = {}
        grads["Wout"] = h_drop.T @ dz
        grads["bout"] = dz.sum(axis=0)
        dh_last = dz @ p["Wout"].T
        if mask is not None:
            dh_last = dh_last * mask
        dW2, db2, dh1_seq = self._backward_layer(p["Wl2"], cache2, None, dh_last)
        zeros = np.zeros_like(dh1_seq[0][:, :self.units])
        dW1, db1, _ = self._backward_layer(p["Wl1"], cache1, dh1_seq, zeros)
        grads.update({"Wl1": dW1, "bl1": db1, "Wl2": dW2, "bl2": db2})
        return loss, grads
