"""GRU and fully connected layers with hand-written backward passes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .tensor import Tensor, _result, parameter


@dataclass
class GruLayerParams:
    """Gate blocks are stacked in the order (update, reset, candidate)."""

    w_ih: Tensor  # 3H x in_dim
    w_hh: Tensor  # 3H x H
    b_ih: Tensor  # 3H
    b_hh: Tensor  # 3H

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[1]

    @property
    def in_dim(self) -> int:
        return self.w_ih.shape[1]

    def parameters(self) -> list[Tensor]:
        return [self.w_ih, self.w_hh, self.b_ih, self.b_hh]

    @classmethod
    def init(cls, in_dim: int, hidden: int, rng: np.random.Generator, prefix: str = "gru") -> "GruLayerParams":
        k = 1.0 / np.sqrt(hidden)
        return cls(
            w_ih=parameter(rng.uniform(-k, k, (3 * hidden, in_dim)), f"{prefix}.w_ih"),
            w_hh=parameter(rng.uniform(-k, k, (3 * hidden, hidden)), f"{prefix}.w_hh"),
            b_ih=parameter(np.zeros(3 * hidden), f"{prefix}.b_ih"),
            b_hh=parameter(np.zeros(3 * hidden), f"{prefix}.b_hh"),
        )


@dataclass
class DenseParams:
    weight: Tensor  # out x in
    bias: Tensor  # out

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng: np.random.Generator, prefix: str = "dense") -> "DenseParams":
        k = 1.0 / np.sqrt(in_dim)
        return cls(weight=parameter(rng.uniform(-k, k, (out_dim, in_dim)), f"{prefix}.weight"),
                   bias=parameter(np.zeros(out_dim), f"{prefix}.bias"))


def gru_layer(p: GruLayerParams, x: Tensor) -> Tensor:
    """One GRU layer over a batch x seq x in_dim input, zero initial state.

    z = sigmoid(Wz x + bz + Uz h + cz)
    r = sigmoid(Wr x + br + Ur h + cr)
    n = tanh(Wn x + bn + r * (Un h + cn))
    h' = (1 - z) * n + z * h
    """
    if x.data.ndim != 3 or x.shape[2] != p.in_dim:
        raise ValueError(f"GRU expects batch x seq x {p.in_dim}, got {x.shape}")
    xs = x.data
    batch, seq, in_dim = xs.shape
    hdim = p.hidden
    w_hh = p.w_hh.data
    w_hh_t = np.ascontiguousarray(w_hh.T)
    b_hh = p.b_hh.data
    # time-major copies keep the per-step slices contiguous
    xt = np.ascontiguousarray(xs.transpose(1, 0, 2))
    gx = xt @ p.w_ih.data.T
    gx += p.b_ih.data
    hs = np.zeros((seq + 1, batch, hdim))
    zr = np.empty((seq, batch, 2 * hdim))
    ns = np.empty((seq, batch, hdim))
    ghn = np.empty((seq, batch, hdim))
    h = hs[0]
    for t in range(seq):
        gh = h @ w_hh_t
        gh += b_hh
        a = gx[t]
        g = zr[t]
        np.add(a[:, :2 * hdim], gh[:, :2 * hdim], out=g)
        expit(g, out=g)
        z, r = g[:, :hdim], g[:, hdim:]
        ghn[t] = gh[:, 2 * hdim:]
        n = ns[t]
        np.multiply(r, ghn[t], out=n)
        n += a[:, 2 * hdim:]
        np.tanh(n, out=n)
        # h = (1 - z) * n + z * h
        h_new = hs[t + 1]
        np.subtract(h, n, out=h_new)
        h_new *= z
        h_new += n
        h = h_new

    def backward(g_out):
        g_t = g_out.transpose(1, 0, 2)
        dgx = np.empty((seq, batch, 3 * hdim))
        dgh_all = np.empty((seq, batch, 3 * hdim))
        dh = np.zeros((batch, hdim))
        tmp = np.empty((batch, hdim))
        for t in range(seq - 1, -1, -1):
            dh += g_t[t]
            z, r = zr[t, :, :hdim], zr[t, :, hdim:]
            n = ns[t]
            d_x = dgx[t]
            d_h = dgh_all[t]
            dan = d_x[:, 2 * hdim:]
            # d tanh pre-activation: dh * (1 - z) * (1 - n^2)
            np.multiply(n, n, out=tmp)
            np.subtract(1.0, tmp, out=tmp)
            np.multiply(dh, tmp, out=dan)
            np.multiply(z, dan, out=tmp)
            dan -= tmp
            # update gate: dh * (h_prev - n) * z * (1 - z)
            daz = d_x[:, :hdim]
            np.subtract(hs[t], n, out=daz)
            daz *= dh
            np.subtract(1.0, z, out=tmp)
            tmp *= z
            daz *= tmp
            # reset gate: dan * ghn * r * (1 - r)
            dar = d_x[:, hdim:2 * hdim]
            np.multiply(dan, ghn[t], out=dar)
            np.subtract(1.0, r, out=tmp)
            tmp *= r
            dar *= tmp
            d_h[:, :2 * hdim] = d_x[:, :2 * hdim]
            np.multiply(dan, r, out=d_h[:, 2 * hdim:])
            dh *= z
            dh += d_h @ w_hh
        flat_gx = dgx.reshape(-1, 3 * hdim)
        flat_gh = dgh_all.reshape(-1, 3 * hdim)
        d_wih = flat_gx.T @ xt.reshape(-1, in_dim)
        d_whh = flat_gh.T @ hs[:-1].reshape(-1, hdim)
        d_x = (dgx @ p.w_ih.data).transpose(1, 0, 2)
        return (d_x, d_wih, d_whh, flat_gx.sum(axis=0), flat_gh.sum(axis=0))

    return _result(hs[1:].transpose(1, 0, 2).copy(), (x, p.w_ih, p.w_hh, p.b_ih, p.b_hh), backward)


def gru_forward(layers: list[GruLayerParams], x: Tensor) -> Tensor:
    """Stacked GRU; returns the full output sequence of the last layer."""
    if not isinstance(x, Tensor):
        x = Tensor(x)
    for layer in layers:
        x = gru_layer(layer, x)
    return x


def dense_forward(p: DenseParams, x: Tensor) -> Tensor:
    """``x @ W.T + b`` over the last axis."""
    if not isinstance(x, Tensor):
        x = Tensor(x)
    if x.shape[-1] != p.weight.shape[1]:
        raise ValueError(f"dense expects last dim {p.weight.shape[1]}, got {x.shape}")
    xs = x.data
    out = xs @ p.weight.data.T + p.bias.data

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        return (g @ p.weight.data, g2.T @ xs.reshape(-1, xs.shape[-1]), g2.sum(axis=0))

    return _result(out, (x, p.weight, p.bias), backward)


def gru_param_count(in_dim: int, hidden: int, num_layers: int) -> int:
    total = 0
    for layer in range(num_layers):
        d = in_dim if layer == 0 else hidden
        total += 3 * hidden * (d + hidden) + 6 * hidden
    return total
