"""Small numpy network: two ReLU dense layers, one recurrent layer, linear head.

Forward passes run over padded sequences ``[T, B, features]`` and keep a
cache for backpropagation through time; gradients are hand-derived.
"""
from __future__ import annotations

import numpy as np

Params = dict[str, np.ndarray]


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _orthogonal(rng: np.random.Generator, shape, gain=1.0):
    a = rng.standard_normal((max(shape), min(shape)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return gain * q[: shape[0], : shape[1]]


class RecurrentMLP:
    """``in -> dense(ReLU) -> dense(ReLU) -> GRU|RNN -> dense(out)``."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        hidden: int = 128,
        cell: str = "gru",
        rng: np.random.Generator | None = None,
        dtype=np.float32,
        out_gain: float = 0.01,
    ):
        if cell not in ("gru", "rnn"):
            raise ValueError(f"unknown recurrent cell {cell!r}")
        self.in_dim, self.out_dim, self.hidden, self.cell = in_dim, out_dim, hidden, cell
        self.dtype = dtype
        rng = rng if rng is not None else np.random.default_rng(0)
        H = hidden
        gain = np.sqrt(2.0)
        p: Params = {
            "w1": _orthogonal(rng, (in_dim, H), gain),
            "b1": np.zeros(H),
            "w2": _orthogonal(rng, (H, H), gain),
            "b2": np.zeros(H),
            "wo": _orthogonal(rng, (H, out_dim), out_gain),
            "bo": np.zeros(out_dim),
        }
        gates = ("z", "r", "h") if cell == "gru" else ("h",)
        for g in gates:
            p["wx" + g] = _orthogonal(rng, (H, H))
            p["wh" + g] = _orthogonal(rng, (H, H))
            p["b" + g] = np.zeros(H)
        self.params = {k: v.astype(dtype) for k, v in p.items()}

    # -- helpers

    def initial_state(self, batch: int) -> np.ndarray:
        return np.zeros((batch, self.hidden), dtype=self.dtype)

    def zeros_like_params(self) -> Params:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def set_params(self, params: Params) -> None:
        for k in self.params:
            self.params[k] = np.asarray(params[k], dtype=self.dtype).copy()

    def copy_params(self) -> Params:
        return {k: v.copy() for k, v in self.params.items()}

    def num_params(self) -> int:
        return sum(v.size for v in self.params.values())

    # -- forward

    def _encode(self, x):
        p = self.params
        a1 = x @ p["w1"] + p["b1"]
        h1 = np.maximum(a1, 0)
        a2 = h1 @ p["w2"] + p["b2"]
        h2 = np.maximum(a2, 0)
        return a1, h1, a2, h2

    def _cell(self, u, h):
        p = self.params
        if self.cell == "rnn":
            n = np.tanh(u @ p["wxh"] + h @ p["whh"] + p["bh"])
            return n, (u, h, n)
        z = _sigmoid(u @ p["wxz"] + h @ p["whz"] + p["bz"])
        r = _sigmoid(u @ p["wxr"] + h @ p["whr"] + p["br"])
        n = np.tanh(u @ p["wxh"] + (r * h) @ p["whh"] + p["bh"])
        h_new = (1.0 - z) * h + z * n
        return h_new, (u, h, z, r, n)

    def step(self, x: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One time step for a batch: ``x [B, in]``, ``h [B, H]`` -> ``(out [B, out], h')``."""
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"expected input dimension {self.in_dim}, got {x.shape[-1]}")
        _, _, _, u = self._encode(x)
        h_new, _ = self._cell(u, h)
        return h_new @ self.params["wo"] + self.params["bo"], h_new

    def forward(self, xs: np.ndarray, h0: np.ndarray | None = None):
        """Sequence forward ``xs [T, B, in]``; returns ``(out [T, B, out], cache)``."""
        xs = np.asarray(xs, dtype=self.dtype)
        if xs.shape[-1] != self.in_dim:
            raise ValueError(f"expected input dimension {self.in_dim}, got {xs.shape[-1]}")
        T, B, _ = xs.shape
        a1, h1, a2, u = self._encode(xs)
        h = self.initial_state(B) if h0 is None else h0
        hs, steps = [], []
        for t in range(T):
            h, c = self._cell(u[t], h)
            hs.append(h)
            steps.append(c)
        hs = np.stack(hs)
        out = hs @ self.params["wo"] + self.params["bo"]
        return out, (xs, a1, h1, a2, u, hs, steps)

    # -- backward

    def backward(self, dout: np.ndarray, cache) -> Params:
        """Gradients of a scalar loss given ``dout = dL/dout [T, B, out]``."""
        p = self.params
        xs, a1, h1, a2, u, hs, steps = cache
        T = xs.shape[0]
        g = self.zeros_like_params()
        g["wo"] = np.einsum("tbh,tbo->ho", hs, dout)
        g["bo"] = dout.sum(axis=(0, 1))
        dhs = dout @ p["wo"].T
        du = np.zeros_like(u)
        dh_next = np.zeros_like(hs[0])
        for t in reversed(range(T)):
            dh = dhs[t] + dh_next
            if self.cell == "rnn":
                ut, hprev, n = steps[t]
                dan = dh * (1.0 - n * n)
                g["wxh"] += ut.T @ dan
                g["whh"] += hprev.T @ dan
                g["bh"] += dan.sum(0)
                du[t] = dan @ p["wxh"].T
                dh_next = dan @ p["whh"].T
                continue
            ut, hprev, z, r, n = steps[t]
            dn = dh * z
            dz = dh * (n - hprev)
            dhprev = dh * (1.0 - z)
            dan = dn * (1.0 - n * n)
            g["wxh"] += ut.T @ dan
            rh = r * hprev
            g["whh"] += rh.T @ dan
            g["bh"] += dan.sum(0)
            drh = dan @ p["whh"].T
            dr = drh * hprev
            dhprev += drh * r
            daz = dz * z * (1.0 - z)
            dar = dr * r * (1.0 - r)
            g["wxz"] += ut.T @ daz
            g["whz"] += hprev.T @ daz
            g["bz"] += daz.sum(0)
            g["wxr"] += ut.T @ dar
            g["whr"] += hprev.T @ dar
            g["br"] += dar.sum(0)
            du[t] = dan @ p["wxh"].T + daz @ p["wxz"].T + dar @ p["wxr"].T
            dhprev += daz @ p["whz"].T + dar @ p["whr"].T
            dh_next = dhprev
        da2 = du * (a2 > 0)
        g["w2"] = np.einsum("tbi,tbo->io", h1, da2)
        g["b2"] = da2.sum(axis=(0, 1))
        dh1 = da2 @ p["w2"].T
        da1 = dh1 * (a1 > 0)
        g["w1"] = np.einsum("tbi,tbo->io", xs, da1)
        g["b1"] = da1.sum(axis=(0, 1))
        return g


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Log-probabilities with masked-out entries at ``-inf``."""
    mask = mask.astype(bool)
    z = np.where(mask, logits, -np.inf)
    zmax = np.max(z, axis=-1, keepdims=True)
    shifted = z - zmax
    lse = np.log(np.sum(np.where(mask, np.exp(np.where(mask, shifted, 0.0)), 0.0), axis=-1, keepdims=True))
    return np.where(mask, shifted - lse, -np.inf)


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    logp = masked_log_softmax(logits, mask)
    return np.where(mask.astype(bool), np.exp(np.where(mask.astype(bool), logp, 0.0)), 0.0)


class RMSprop:
    """``v = a*v + (1-a)*g^2``; ``p -= lr * g / (sqrt(v) + eps)``."""

    def __init__(self, params: Params, lr: float = 1e-5, alpha: float = 0.99, eps: float = 1e-5):
        self.lr, self.alpha, self.eps = lr, alpha, eps
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: Params, grads: Params) -> None:
        for k, g in grads.items():
            v = self.v[k]
            v *= self.alpha
            v += (1.0 - self.alpha) * g * g
            params[k] -= (self.lr * g / (np.sqrt(v) + self.eps)).astype(params[k].dtype)

    def state(self) -> Params:
        return {k: v.copy() for k, v in self.v.items()}


def clip_grad_norm(grads: Params, max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values())))
    if max_norm and total > max_norm:
        scale = max_norm / (total + 1e-6)
        for k in grads:
            grads[k] *= scale
    return total
