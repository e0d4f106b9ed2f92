"""Hand-written neural scorers: MLP, 1D-CNN, and LSTM.

All three share one contract: forward() maps a batch (B, l, m) to scores in
(0, 1) via a final sigmoid, backward() returns analytic gradients of the
weighted squared loss, and parameters are plain numpy arrays so they can be
flattened for finite-difference checking and serialization.

Activations are tanh throughout: smooth everywhere, which keeps central
finite differences honest during gradient checks.
"""

from __future__ import annotations

import numpy as np


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def weighted_squared_loss(scores: np.ndarray, y: np.ndarray,
                          w: np.ndarray | None = None) -> float:
    """mean_i |w_i * (score_i - y_i)|^2; w_i = 1 when weights are absent."""
    r = scores - y
    if w is not None:
        r = w * r
    return float(np.mean(np.abs(r) ** 2))


def loss_gradient(scores: np.ndarray, y: np.ndarray,
                  w: np.ndarray | None = None) -> np.ndarray:
    n = len(y)
    if w is None:
        return 2.0 * (scores - y) / n
    return 2.0 * (w ** 2) * (scores - y) / n


def _dense_init(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_in, fan_out))


class Net:
    """Parameter-list interface shared by the three architectures."""

    params: list[np.ndarray]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        raise NotImplementedError

    def backward(self, cache: tuple, dscore: np.ndarray) -> list[np.ndarray]:
        raise NotImplementedError

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat_params(self, flat: np.ndarray) -> None:
        offset = 0
        for p in self.params:
            p[...] = flat[offset:offset + p.size].reshape(p.shape)
            offset += p.size

    def predict(self, x: np.ndarray, batch_size: int = 8192) -> np.ndarray:
        out = np.empty(len(x))
        for start in range(0, len(x), batch_size):
            scores, _ = self.forward(x[start:start + batch_size])
            out[start:start + batch_size] = scores
        return out


class MLP(Net):
    """Two hidden layers (64 -> 32 by default) on the flattened instance."""

    def __init__(self, l: int, m: int, hidden: tuple[int, int] = (64, 32),
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        d = l * m
        h1, h2 = hidden
        self.l, self.m = l, m
        # Output layer starts at zero: an untrained net scores every
        # instance identically (0.5).
        self.params = [
            _dense_init(rng, d, h1), np.zeros(h1),
            _dense_init(rng, h1, h2), np.zeros(h2),
            np.zeros((h2, 1)), np.zeros(1),
        ]

    def forward(self, x):
        w1, b1, w2, b2, w3, b3 = self.params
        x0 = x.reshape(len(x), -1)
        a1 = np.tanh(x0 @ w1 + b1)
        a2 = np.tanh(a1 @ w2 + b2)
        z = (a2 @ w3 + b3)[:, 0]
        p = sigmoid(z)
        return p, (x0, a1, a2, p)

    def backward(self, cache, dscore):
        w1, b1, w2, b2, w3, b3 = self.params
        x0, a1, a2, p = cache
        dz = dscore * p * (1.0 - p)
        dw3 = a2.T @ dz[:, None]
        db3 = np.array([dz.sum()])
        da2 = dz[:, None] @ w3.T
        dz2 = da2 * (1.0 - a2 ** 2)
        dw2 = a1.T @ dz2
        db2 = dz2.sum(axis=0)
        da1 = dz2 @ w2.T
        dz1 = da1 * (1.0 - a1 ** 2)
        dw1 = x0.T @ dz1
        db1 = dz1.sum(axis=0)
        return [dw1, db1, dw2, db2, dw3, db3]


def _im2col(x: np.ndarray, kernel: int) -> np.ndarray:
    """(B, L, C) -> (B, L-kernel+1, kernel*C), valid convolution layout."""
    lout = x.shape[1] - kernel + 1
    return np.concatenate([x[:, k:k + lout, :] for k in range(kernel)], axis=2)


class CNN1D(Net):
    """Four valid 1-D convolutions, temporal mean pooling, two dense layers."""

    KERNEL = 3

    def __init__(self, l: int, m: int, channels: tuple[int, ...] = (16, 16, 32, 32),
                 fc_hidden: int = 64, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        if l - len(channels) * (self.KERNEL - 1) < 1:
            raise ValueError(f"sequence length {l} too short for {len(channels)} "
                             f"convolutions with kernel {self.KERNEL}")
        self.l, self.m = l, m
        self.channels = channels
        self.params = []
        c_in = m
        for c_out in channels:
            self.params += [_dense_init(rng, self.KERNEL * c_in, c_out), np.zeros(c_out)]
            c_in = c_out
        self.params += [
            _dense_init(rng, c_in, fc_hidden), np.zeros(fc_hidden),
            np.zeros((fc_hidden, 1)), np.zeros(1),
        ]

    def forward(self, x):
        acts = [x]
        cols = []
        h = x
        for i in range(len(self.channels)):
            w, b = self.params[2 * i], self.params[2 * i + 1]
            col = _im2col(h, self.KERNEL)
            h = np.tanh(col @ w + b)
            cols.append(col)
            acts.append(h)
        pooled = h.mean(axis=1)
        wf, bf, wo, bo = self.params[-4:]
        a = np.tanh(pooled @ wf + bf)
        z = (a @ wo + bo)[:, 0]
        p = sigmoid(z)
        return p, (acts, cols, pooled, a, p)

    def backward(self, cache, dscore):
        acts, cols, pooled, a, p = cache
        wf, bf, wo, bo = self.params[-4:]
        dz = dscore * p * (1.0 - p)
        dwo = a.T @ dz[:, None]
        dbo = np.array([dz.sum()])
        da = dz[:, None] @ wo.T
        dzf = da * (1.0 - a ** 2)
        dwf = pooled.T @ dzf
        dbf = dzf.sum(axis=0)
        dpooled = dzf @ wf.T
        lout = acts[-1].shape[1]
        dh = np.repeat(dpooled[:, None, :], lout, axis=1) / lout
        grads = [dwf, dbf, dwo, dbo]
        conv_grads = []
        for i in reversed(range(len(self.channels))):
            w = self.params[2 * i]
            h = acts[i + 1]
            dzc = dh * (1.0 - h ** 2)
            col = cols[i]
            dw = col.reshape(-1, col.shape[2]).T @ dzc.reshape(-1, dzc.shape[2])
            db = dzc.sum(axis=(0, 1))
            dcol = dzc @ w.T
            prev = acts[i]
            dh = np.zeros_like(prev, dtype=np.float64)
            c_in = prev.shape[2]
            lo = col.shape[1]
            for k in range(self.KERNEL):
                dh[:, k:k + lo, :] += dcol[:, :, k * c_in:(k + 1) * c_in]
            conv_grads = [dw, db] + conv_grads
        return conv_grads + grads


class LSTM(Net):
    """Single-layer LSTM (hidden size 10 by default); last hidden state -> dense."""

    def __init__(self, l: int, m: int, hidden: int = 10,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.l, self.m, self.hidden = l, m, hidden
        self.params = [
            _dense_init(rng, m, 4 * hidden),       # input weights, gates [i f o g]
            _dense_init(rng, hidden, 4 * hidden),  # recurrent weights
            np.zeros(4 * hidden),
            np.zeros((hidden, 1)), np.zeros(1),
        ]
        # Forget-gate bias starts positive so early gradients flow through time.
        self.params[2][hidden:2 * hidden] = 1.0

    def forward(self, x):
        wx, wh, b, wo, bo = self.params
        bsz, steps, _ = x.shape
        hdim = self.hidden
        h = np.zeros((bsz, hdim))
        c = np.zeros((bsz, hdim))
        caches = []
        for t in range(steps):
            gates = x[:, t, :] @ wx + h @ wh + b
            i = sigmoid(gates[:, :hdim])
            f = sigmoid(gates[:, hdim:2 * hdim])
            o = sigmoid(gates[:, 2 * hdim:3 * hdim])
            g = np.tanh(gates[:, 3 * hdim:])
            c_next = f * c + i * g
            tanh_c = np.tanh(c_next)
            h_next = o * tanh_c
            caches.append((x[:, t, :], h, c, i, f, o, g, tanh_c))
            h, c = h_next, c_next
        z = (h @ wo + bo)[:, 0]
        p = sigmoid(z)
        return p, (caches, h, p)

    def backward(self, cache, dscore):
        wx, wh, b, wo, bo = self.params
        caches, h_last, p = cache
        hdim = self.hidden
        dz = dscore * p * (1.0 - p)
        dwo = h_last.T @ dz[:, None]
        dbo = np.array([dz.sum()])
        dh = dz[:, None] @ wo.T
        dc = np.zeros_like(dh)
        dwx = np.zeros_like(wx)
        dwh = np.zeros_like(wh)
        db = np.zeros_like(b)
        for t in reversed(range(len(caches))):
            xt, h_prev, c_prev, i, f, o, g, tanh_c = caches[t]
            do = dh * tanh_c
            dc = dc + dh * o * (1.0 - tanh_c ** 2)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dgates = np.concatenate([
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                do * o * (1.0 - o),
                dg * (1.0 - g ** 2),
            ], axis=1)
            dwx += xt.T @ dgates
            dwh += h_prev.T @ dgates
            db += dgates.sum(axis=0)
            dh = dgates @ wh.T
            dc = dc * f
        return [dwx, dwh, db, dwo, dbo]


def build_net(kind: str, l: int, m: int, hyperparameters: dict,
              rng: np.random.Generator) -> Net:
    hp = hyperparameters
    if kind == "MLP":
        return MLP(l, m, hidden=tuple(hp.get("hidden", (64, 32))), rng=rng)
    if kind == "CNN1D":
        return CNN1D(l, m, channels=tuple(hp.get("channels", (16, 16, 32, 32))),
                     fc_hidden=hp.get("fc_hidden", 64), rng=rng)
    if kind == "LSTM":
        return LSTM(l, m, hidden=hp.get("hidden", 10), rng=rng)
    raise ValueError(f"unknown neural model kind {kind!r}")


def sgd_train(net: Net, x: np.ndarray, y: np.ndarray, w: np.ndarray | None,
              *, epochs: int, batch_size: int, learning_rate: float,
              momentum: float, rng: np.random.Generator) -> list[float]:
    """Mini-batch gradient descent with momentum; returns the per-epoch loss curve."""
    n = len(y)
    velocity = [np.zeros_like(p) for p in net.params]
    curve = []
    for _ in range(epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            xb, yb = x[idx], y[idx]
            wb = w[idx] if w is not None else None
            scores, cache = net.forward(xb)
            epoch_loss += weighted_squared_loss(scores, yb, wb) * len(idx)
            grads = net.backward(cache, loss_gradient(scores, yb, wb))
            for p, v, g in zip(net.params, velocity, grads):
                v *= momentum
                v -= learning_rate * g
                p += v
        curve.append(epoch_loss / n)
    return curve


def gradient_check(net: Net, x: np.ndarray, y: np.ndarray,
                   w: np.ndarray | None = None, n_samples: int = 50,
                   step: float = 1e-5,
                   rng: np.random.Generator | None = None) -> float:
    """Max relative error of analytic vs central finite-difference gradients
    over a random subset of parameters."""
    rng = rng or np.random.default_rng(0)
    scores, cache = net.forward(x)
    grads = net.backward(cache, loss_gradient(scores, y, w))
    analytic = np.concatenate([g.ravel() for g in grads])
    flat = net.flat_params()
    idx = rng.choice(len(flat), size=min(n_samples, len(flat)), replace=False)
    worst = 0.0
    for i in idx:
        saved = flat[i]
        flat[i] = saved + step
        net.set_flat_params(flat)
        lo_plus = weighted_squared_loss(net.forward(x)[0], y, w)
        flat[i] = saved - step
        net.set_flat_params(flat)
        lo_minus = weighted_squared_loss(net.forward(x)[0], y, w)
        flat[i] = saved
        net.set_flat_params(flat)
        numeric = (lo_plus - lo_minus) / (2.0 * step)
        denom = max(abs(analytic[i]), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst
