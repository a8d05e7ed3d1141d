"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough ops for a transformer encoder-decoder: elementwise add/mul,
(batched) matmul, axis moves, relu, softmax, layer norm, embedding lookup and
a fused masked cross-entropy head. Every op records a backward closure; a
topological sweep accumulates gradients. Graph construction is skipped
entirely when no input requires gradients, so inference pays almost nothing.

All math runs in the dtype of the inputs (float64 by default upstream).
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() expects a scalar loss tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    def accumulate(self, g, owned=False):
        # copy on first write unless the caller hands over a fresh buffer;
        # pass-through gradients may alias another node's grad
        if self.grad is None:
            self.grad = g if owned else np.array(g)
        else:
            self.grad += g


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum out broadcast axes so grad matches the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _as_data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _needs_grad(*xs):
    return any(isinstance(x, Tensor) and x.requires_grad for x in xs)


def _parents(*xs):
    return tuple(x for x in xs if isinstance(x, Tensor) and x.requires_grad)


def add(a, b) -> Tensor:
    out = _as_data(a) + _as_data(b)
    if not _needs_grad(a, b):
        return Tensor(out)

    def backward(g):
        if isinstance(a, Tensor) and a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if isinstance(b, Tensor) and b.requires_grad:
            b.accumulate(_unbroadcast(g, b.data.shape))

    return Tensor(out, True, _parents(a, b), backward)


def mul(a, b) -> Tensor:
    ad, bd = _as_data(a), _as_data(b)
    out = ad * bd
    if not _needs_grad(a, b):
        return Tensor(out)

    def backward(g):
        if isinstance(a, Tensor) and a.requires_grad:
            a.accumulate(_unbroadcast(g * bd, a.data.shape), owned=True)
        if isinstance(b, Tensor) and b.requires_grad:
            b.accumulate(_unbroadcast(g * ad, b.data.shape), owned=True)

    return Tensor(out, True, _parents(a, b), backward)


def scale(a, s: float) -> Tensor:
    out = _as_data(a) * s
    if not _needs_grad(a):
        return Tensor(out)

    def backward(g):
        a.accumulate(g * s, owned=True)

    return Tensor(out, True, _parents(a), backward)


def matmul(a, b) -> Tensor:
    ad, bd = _as_data(a), _as_data(b)
    out = np.matmul(ad, bd)
    if not _needs_grad(a, b):
        return Tensor(out)

    def backward(g):
        if isinstance(a, Tensor) and a.requires_grad:
            ga = np.matmul(g, bd.swapaxes(-1, -2))
            a.accumulate(_unbroadcast(ga, a.data.shape), owned=True)
        if isinstance(b, Tensor) and b.requires_grad:
            if bd.ndim == 2 and g.ndim > 2:
                # weight shared across batch: one flat GEMM beats a batched
                # matmul followed by a reduction
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(ad.swapaxes(-1, -2), g), b.data.shape)
            b.accumulate(gb, owned=True)

    return Tensor(out, True, _parents(a, b), backward)


def linear(x, w, b) -> Tensor:
    """x @ w + b with grads computed as single flat GEMMs."""
    xd, wd, bd = _as_data(x), _as_data(w), _as_data(b)
    out = xd @ wd + bd
    if not _needs_grad(x, w, b):
        return Tensor(out)

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        if isinstance(x, Tensor) and x.requires_grad:
            x.accumulate((g2 @ wd.T).reshape(xd.shape), owned=True)
        if isinstance(w, Tensor) and w.requires_grad:
            w.accumulate(xd.reshape(-1, xd.shape[-1]).T @ g2, owned=True)
        if isinstance(b, Tensor) and b.requires_grad:
            b.accumulate(g2.sum(axis=0), owned=True)

    return Tensor(out, True, _parents(x, w, b), backward)


def tied_logits(h, embed) -> Tensor:
    """h @ embed.T: the shared-matrix output projection."""
    hd, ed = _as_data(h), _as_data(embed)
    out = hd @ ed.T
    if not _needs_grad(h, embed):
        return Tensor(out)

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        if isinstance(h, Tensor) and h.requires_grad:
            h.accumulate((g2 @ ed).reshape(hd.shape), owned=True)
        if isinstance(embed, Tensor) and embed.requires_grad:
            embed.accumulate(g2.T @ hd.reshape(-1, hd.shape[-1]), owned=True)

    return Tensor(out, True, _parents(h, embed), backward)


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    out = _as_data(a).swapaxes(ax1, ax2)
    if not _needs_grad(a):
        return Tensor(out)

    def backward(g):
        a.accumulate(g.swapaxes(ax1, ax2))

    return Tensor(out, True, _parents(a), backward)


def reshape(a, shape) -> Tensor:
    old = _as_data(a).shape
    out = _as_data(a).reshape(shape)
    if not _needs_grad(a):
        return Tensor(out)

    def backward(g):
        a.accumulate(g.reshape(old))

    return Tensor(out, True, _parents(a), backward)


def relu(a) -> Tensor:
    ad = _as_data(a)
    out = np.maximum(ad, 0.0)
    if not _needs_grad(a):
        return Tensor(out)

    def backward(g):
        a.accumulate(g * (ad > 0), owned=True)

    return Tensor(out, True, _parents(a), backward)


def softmax(a, axis: int = -1) -> Tensor:
    ad = _as_data(a)
    shifted = ad - ad.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    if not _needs_grad(a):
        return Tensor(out)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        a.accumulate(out * (g - dot), owned=True)

    return Tensor(out, True, _parents(a), backward)


def layer_norm(x, gain, bias, eps: float = 1e-6) -> Tensor:
    xd = _as_data(x)
    gd, bd = _as_data(gain), _as_data(bias)
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gd + bd
    if not _needs_grad(x, gain, bias):
        return Tensor(out)

    n = xd.shape[-1]

    def backward(g):
        if isinstance(gain, Tensor) and gain.requires_grad:
            gain.accumulate((g * xhat).reshape(-1, n).sum(axis=0), owned=True)
        if isinstance(bias, Tensor) and bias.requires_grad:
            bias.accumulate(g.reshape(-1, n).sum(axis=0), owned=True)
        if isinstance(x, Tensor) and x.requires_grad:
            dxhat = g * gd
            # standard layer-norm backward, all reductions over the last axis
            s1 = dxhat.sum(axis=-1, keepdims=True)
            s2 = (dxhat * xhat).sum(axis=-1, keepdims=True)
            x.accumulate(inv * (dxhat - s1 / n - xhat * s2 / n), owned=True)

    return Tensor(out, True, _parents(x, gain, bias), backward)


def embedding(table, ids: np.ndarray) -> Tensor:
    td = _as_data(table)
    out = td[ids]
    if not _needs_grad(table):
        return Tensor(out)

    def backward(g):
        gt = np.zeros_like(td)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, td.shape[-1]))
        table.accumulate(gt, owned=True)

    return Tensor(out, True, _parents(table), backward)


def cross_entropy(logits, targets: np.ndarray, mask: np.ndarray):
    """Mean token-level NLL of `targets` under `logits` at positions where
    `mask` is true. Returns (scalar Tensor, token count). Raises when the
    mask is empty or the loss is non-finite.
    """
    ld = _as_data(logits)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("cross_entropy: no unmasked target positions")
    m = ld.max(axis=-1, keepdims=True)
    e = np.exp(ld - m)
    z = e.sum(axis=-1, keepdims=True)
    logz = np.log(z) + m
    picked = np.take_along_axis(ld, targets[..., None], axis=-1)[..., 0]
    nll = (logz[..., 0] - picked) * mask
    value = nll.sum() / count
    if not np.isfinite(value):
        raise FloatingPointError("cross_entropy: non-finite loss")
    out_data = np.asarray(value)
    if not _needs_grad(logits):
        return Tensor(out_data), count

    probs = e / z

    def backward(g):
        gl = probs.copy()
        flat = gl.reshape(-1, gl.shape[-1])
        idx = np.arange(flat.shape[0])
        flat[idx, targets.reshape(-1)] -= 1.0
        gl *= (mask[..., None] * (float(g) / count))
        logits.accumulate(gl, owned=True)

    return Tensor(out_data, True, _parents(logits), backward), count
