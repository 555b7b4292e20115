"""Differentiable layer ops and losses.

Image tensors are channels-last, ``[n, h, w, c]``; conv kernels are
``[kh, kw, c_in, c_out]``. Convolution is cross-correlation (no kernel
flip). Output spatial size per axis, for input size ``h``, kernel ``k``
and stride ``s``::

    valid: (h - k) // s + 1
    same:  (h - 1) // s + 1      (pads (k - 1) // 2 on each side)
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import (BatchTooSmall, InvalidRate, NonOneHotLabel, ShapeMismatch, UnsupportedPadding,
                      ZeroNormQuaternion)
from .tensor import Tensor, make_node

# ops whose backward is deliberately corrupted (x2), for exercising the gradient checker
_SABOTAGED: set[str] = set()


@contextmanager
def sabotage(*ops: str):
    _SABOTAGED.update(ops)
    try:
        yield
    finally:
        _SABOTAGED.difference_update(ops)


def _fault(op: str) -> float:
    return 2.0 if op in _SABOTAGED else 1.0


def dense(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    if x.ndim != 2 or W.ndim != 2 or b.ndim != 1 or x.shape[1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"dense: x{x.shape} W{W.shape} b{b.shape}")
    k = _fault("dense")

    def backward(g):
        return k * (g @ W.data.T), k * (x.data.T @ g), k * g.sum(axis=0)

    return make_node(x.data @ W.data + b.data, (x, W, b), backward)


def conv_output_size(size: int, kernel: int, stride: int, padding: str) -> int:
    if padding == "valid":
        return (size - kernel) // stride + 1
    if padding == "same":
        return (size - 1) // stride + 1
    raise UnsupportedPadding(padding)


def conv2d(x: Tensor, K: Tensor, b: Tensor, stride: int = 1, padding: str = "same") -> Tensor:
    if padding not in ("valid", "same"):
        raise UnsupportedPadding(f"padding must be 'valid' or 'same', got {padding!r}")
    if x.ndim != 4 or K.ndim != 4 or b.ndim != 1:
        raise ShapeMismatch(f"conv2d: x{x.shape} K{K.shape} b{b.shape}")
    n, h, w, c = x.shape
    kh, kw, kc, f = K.shape
    if kc != c or b.shape[0] != f:
        raise ShapeMismatch(f"conv2d: x{x.shape} K{K.shape} b{b.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeMismatch("conv2d kernels must have odd height and width")
    ph, pw = ((kh - 1) // 2, (kw - 1) // 2) if padding == "same" else (0, 0)
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeMismatch(f"conv2d: kernel {kh}x{kw} larger than input {h}x{w}")
    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0))) if ph or pw else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
    # win: [n, ho, wo, c, kh, kw] -> cols: [n*ho*wo, kh*kw*c]
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, kh * kw * c)
    kmat = K.data.reshape(kh * kw * c, f)
    out = (cols @ kmat + b.data).reshape(n, ho, wo, f)
    k = _fault("conv2d")

    def backward(g):
        g2 = g.reshape(-1, f)
        dK = (cols.T @ g2).reshape(K.shape)
        db = g2.sum(axis=0)
        dcols = (g2 @ kmat.T).reshape(n, ho, wo, kh, kw, c)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += dcols[:, :, :, i, j, :]
        dx = dxp[:, ph:ph + h, pw:pw + w, :]
        return k * dx, k * dK, k * db

    return make_node(out, (x, K, b), backward)


def max_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping ``size`` x ``size`` max pooling; trailing rows/cols that do not fill a window are dropped."""
    n, h, w, c = x.shape
    ho, wo = h // size, w // size
    xc = x.data[:, :ho * size, :wo * size, :]
    blocks = xc.reshape(n, ho, size, wo, size, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, size * size)
    idx = blocks.argmax(axis=-1)[..., None]
    out = np.take_along_axis(blocks, idx, axis=-1)[..., 0]
    k = _fault("max_pool")

    def backward(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, idx, k * g[..., None], axis=-1)
        gx = gb.reshape(n, ho, wo, c, size, size).transpose(0, 1, 4, 2, 5, 3).reshape(n, ho * size, wo * size, c)
        full = np.zeros_like(x.data)
        full[:, :ho * size, :wo * size, :] = gx
        return (full,)

    return make_node(out, (x,), backward)


def avg_pool2d(x: Tensor, size: int) -> Tensor:
    n, h, w, c = x.shape
    ho, wo = h // size, w // size
    xc = x.data[:, :ho * size, :wo * size, :]
    out = xc.reshape(n, ho, size, wo, size, c).mean(axis=(2, 4))

    def backward(g):
        full = np.zeros_like(x.data)
        full[:, :ho * size, :wo * size, :] = np.repeat(np.repeat(g, size, axis=1), size, axis=2) / (size * size)
        return (full,)

    return make_node(out, (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    n, h, w, c = x.shape
    return make_node(x.data.mean(axis=(1, 2)), (x,),
                     lambda g: (np.broadcast_to(g[:, None, None, :] / (h * w), x.shape).copy(),))


def flatten(x: Tensor) -> Tensor:
    return x.reshape(x.shape[0], -1)


@dataclass
class RunningStats:
    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def create(cls, features: int, dtype=np.float64) -> "RunningStats":
        return cls(np.zeros(features, dtype=dtype), np.ones(features, dtype=dtype))


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, train: bool, running: RunningStats,
              momentum: float = 0.9, eps: float = 1e-5) -> Tensor:
    """Normalize over every axis but the last.

    Train mode uses the (biased) batch statistics and folds them into
    ``running`` as ``running = momentum * running + (1 - momentum) * batch``.
    """
    feat = x.shape[-1]
    if gamma.shape != (feat,) or beta.shape != (feat,):
        raise ShapeMismatch(f"batchnorm: x{x.shape} gamma{gamma.shape} beta{beta.shape}")
    x2 = x.data.reshape(-1, feat)
    m = x2.shape[0]
    if train:
        if m < 2:
            raise BatchTooSmall("batch-norm in train mode needs at least two rows")
        mu = x2.mean(axis=0)
        var = x2.var(axis=0)
        running.mean[...] = momentum * running.mean + (1.0 - momentum) * mu
        running.var[...] = momentum * running.var + (1.0 - momentum) * var
    else:
        mu, var = running.mean, running.var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x2 - mu) * inv
    out = (xhat * gamma.data + beta.data).reshape(x.shape)
    k = _fault("batchnorm")

    def backward(g):
        g2 = g.reshape(-1, feat)
        dgamma = (g2 * xhat).sum(axis=0)
        dbeta = g2.sum(axis=0)
        dxhat = g2 * gamma.data
        if train:
            dx = inv / m * (m * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        else:
            dx = dxhat * inv
        return k * dx.reshape(x.shape), k * dgamma, k * dbeta

    return make_node(out, (x, gamma, beta), backward)


def _check_rate(rate: float) -> None:
    if not 0.0 <= rate < 1.0:
        raise InvalidRate(f"drop rate must lie in [0, 1), got {rate}")


def dropout(x: Tensor, rate: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout on activations; the identity outside training."""
    _check_rate(rate)
    if not train or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    k = _fault("dropout")
    return make_node(x.data * keep, (x,), lambda g: (k * g * keep,))


def dropconnect(W: Tensor, rate: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted drop-connect: the same masking as :func:`dropout`, applied to a weight tensor."""
    return dropout(W, rate, train, rng)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    k = _fault("relu")
    return make_node(np.where(mask, x.data, 0.0), (x,), lambda g: (k * g * mask,))


def sigmoid_np(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def swish(x: Tensor) -> Tensor:
    s = sigmoid_np(x.data)
    k = _fault("swish")
    return make_node(x.data * s, (x,), lambda g: (k * g * (s + x.data * s * (1.0 - s)),))


def softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def softmax_cross_entropy(logits: Tensor, onehot) -> Tensor:
    """Mean categorical cross-entropy of softmax(logits) against one-hot rows."""
    y = np.asarray(onehot.data if isinstance(onehot, Tensor) else onehot, dtype=logits.data.dtype)
    if logits.ndim != 2 or y.shape != logits.shape:
        raise ShapeMismatch(f"logits {logits.shape} vs labels {y.shape}")
    if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1)):
        raise NonOneHotLabel("label rows must contain exactly one 1 and zeros elsewhere")
    n = logits.shape[0]
    logp = log_softmax_np(logits.data)
    loss = -(y * logp).sum() / n
    k = _fault("softmax_xent")
    return make_node(np.asarray(loss), (logits,), lambda g: (k * g * (np.exp(logp) - y) / n,))


def pose_loss(P_hat: Tensor, Q_hat: Tensor, P, Q, beta: float = 1.0) -> Tensor:
    """Batch mean of ``||P - P_hat|| + beta * ||Q_hat - Q/||Q||||``.

    Only the ground-truth quaternion is normalized; ``Q_hat`` is compared raw.
    """
    P = np.asarray(P.data if isinstance(P, Tensor) else P, dtype=P_hat.data.dtype)
    Q = np.asarray(Q.data if isinstance(Q, Tensor) else Q, dtype=Q_hat.data.dtype)
    if P_hat.shape != P.shape or Q_hat.shape != Q.shape or P.shape[-1] != 3 or Q.shape[-1] != 4 \
            or P.shape[0] != Q.shape[0]:
        raise ShapeMismatch(f"pose_loss: P_hat{P_hat.shape} Q_hat{Q_hat.shape} P{P.shape} Q{Q.shape}")
    qn = np.linalg.norm(Q, axis=1, keepdims=True)
    if np.any(qn <= 1e-12):
        raise ZeroNormQuaternion("ground-truth quaternion with zero norm")
    n = P.shape[0]
    dp = P_hat.data - P
    dq = Q_hat.data - Q / qn
    lp = np.linalg.norm(dp, axis=1, keepdims=True)
    lq = np.linalg.norm(dq, axis=1, keepdims=True)
    loss = (lp.sum() + beta * lq.sum()) / n
    k = _fault("pose_loss")

    def backward(g):
        # subgradient 0 where a residual is exactly zero
        gp = np.divide(dp, lp, out=np.zeros_like(dp), where=lp > 0)
        gq = np.divide(dq, lq, out=np.zeros_like(dq), where=lq > 0)
        return k * g * gp / n, k * g * beta * gq / n

    return make_node(np.asarray(loss), (P_hat, Q_hat), backward)


def activity_penalty(activations: Sequence[Tensor], lam: float) -> Tensor:
    """``lam * sum(a**2) / N`` with N the total element count over all tensors."""
    if lam < 0:
        raise ValueError("activity penalty weight must be >= 0")
    total = sum(a.size for a in activations)
    value = lam * sum(float((a.data ** 2).sum()) for a in activations) / total if total else 0.0
    k = _fault("activity_penalty")
    return make_node(np.asarray(value), tuple(activations),
                     lambda g: tuple(k * g * 2.0 * lam * a.data / total for a in activations))
