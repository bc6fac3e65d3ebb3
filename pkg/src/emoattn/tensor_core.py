"""Forward/backward kernels for the attention + CNN classifier.

Tensors are float64 numpy arrays. Every forward kernel returns ``(out, cache)``
and has a ``*_backward(dout, cache)`` partner returning input gradients in
argument order. Leading batch axes are allowed everywhere; the kernels act on
the trailing one or two axes. Inputs are never modified in place.
"""
from __future__ import annotations

import math

import numpy as np


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def as_tensor(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def check_finite(x: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{what}: non-finite values")
    return x


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _T(x):
    return np.swapaxes(x, -1, -2)


# -- matmul ----------------------------------------------------------------

def matmul(A, B):
    if A.ndim < 2 or B.ndim < 2 or A.shape[-1] != B.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {A.shape} by {B.shape}")
    return check_finite(A @ B, "matmul"), (A, B)


def matmul_backward(dC, cache):
    A, B = cache
    dA = _unbroadcast(dC @ _T(B), A.shape)
    dB = _unbroadcast(_T(A) @ dC, B.shape)
    return dA, dB


# -- softmax ---------------------------------------------------------------

def softmax_rows(S, mask):
    """Row softmax over the last axis; columns with ``mask == 0`` get exactly 0."""
    keep = np.broadcast_to(np.asarray(mask, dtype=bool), S.shape)
    if not np.all(keep.any(axis=-1)):
        raise ValueError("softmax_rows: a row has every column masked")
    shifted = np.where(keep, S, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.where(keep, np.exp(shifted), 0.0)
    P = e / e.sum(axis=-1, keepdims=True)
    return check_finite(P, "softmax_rows"), P


def softmax_rows_backward(dP, cache):
    P = cache
    return P * (dP - (dP * P).sum(axis=-1, keepdims=True))


# -- dropout ---------------------------------------------------------------

def dropout(X, p: float, rng: np.random.Generator | None, training: bool):
    """Inverted dropout; identity when not training or ``p == 0``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return X, None
    keep = rng.random(X.shape) >= p
    scale = keep / (1.0 - p)
    return X * scale, scale


def dropout_backward(dout, cache):
    return dout if cache is None else dout * cache


# -- attention -------------------------------------------------------------

def scaled_dot_attention(Q, K, V, mask, scale_dim: int | None = None,
                         p_drop: float = 0.0, rng=None, training: bool = False):
    """softmax(Q K^T / sqrt(scale_dim)) V with masked keys.

    ``scale_dim`` defaults to the last axis of Q; the multi-head block passes
    the full model width instead of the per-head width.
    """
    if not (Q.shape == K.shape == V.shape):
        raise ShapeError(f"attention: Q {Q.shape}, K {K.shape}, V {V.shape} differ")
    scale = 1.0 / math.sqrt(scale_dim or Q.shape[-1])
    S = (Q @ _T(K)) * scale
    P, sm_cache = softmax_rows(S, mask)
    Pd, dr_cache = dropout(P, p_drop, rng, training)
    out = check_finite(Pd @ V, "attention")
    return out, (Q, K, V, scale, Pd, sm_cache, dr_cache)


def scaled_dot_attention_backward(dout, cache):
    Q, K, V, scale, Pd, sm_cache, dr_cache = cache
    dV = _T(Pd) @ dout
    dP = dropout_backward(dout @ _T(V), dr_cache)
    dS = softmax_rows_backward(dP, sm_cache) * scale
    return dS @ K, _T(dS) @ Q, dV


# -- layer norm ------------------------------------------------------------

def layer_norm(X, gain, bias, eps: float = 1e-6):
    d = X.shape[-1]
    if d < 2:
        raise ShapeError("layer_norm needs at least 2 features")
    mu = X.mean(axis=-1, keepdims=True)
    xc = X - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * rstd
    return check_finite(xhat * gain + bias, "layer_norm"), (xhat, rstd, gain)


def layer_norm_backward(dout, cache):
    xhat, rstd, gain = cache
    dxhat = dout * gain
    dX = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                 - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    lead = tuple(range(dout.ndim - 1))
    return dX, (dout * xhat).sum(axis=lead), dout.sum(axis=lead)


# -- position-wise feed-forward ---------------------------------------------

def ffn(X, W1, b1, W2, b2):
    """max(0, X W1 + b1) W2 + b2 at every position."""
    if X.shape[-1] != W1.shape[0] or W1.shape[1] != W2.shape[0] or W2.shape[1] != X.shape[-1]:
        raise ShapeError(f"ffn: X {X.shape}, W1 {W1.shape}, W2 {W2.shape} do not chain")
    H = X @ W1 + b1
    R = np.maximum(H, 0.0)
    out = check_finite(R @ W2 + b2, "ffn")
    return out, (X, W1, W2, H, R)


def ffn_backward(dout, cache):
    X, W1, W2, H, R = cache
    lead = tuple(range(dout.ndim - 1))
    dW2 = _unbroadcast(_T(R) @ dout, W2.shape)
    db2 = dout.sum(axis=lead)
    dH = (dout @ W2.T) * (H > 0)
    dW1 = _unbroadcast(_T(X) @ dH, W1.shape)
    db1 = dH.sum(axis=lead)
    return dH @ W1.T, dW1, db1, dW2, db2


# -- convolution and pooling -----------------------------------------------

def conv1d_valid(X, F, b):
    """ReLU(valid cross-correlation over time). X [..., n, d], F [k, d, f]."""
    k, d, f = F.shape
    n = X.shape[-2]
    if X.shape[-1] != d:
        raise ShapeError(f"conv1d: input width {X.shape[-1]} but filters expect {d}")
    if n < k:
        raise ShapeError(f"conv1d: sequence length {n} shorter than filter width {k}")
    win = np.lib.stride_tricks.sliding_window_view(X, k, axis=-2)  # [..., L, d, k]
    cols = np.swapaxes(win, -1, -2).reshape(*X.shape[:-2], n - k + 1, k * d)
    Z = cols @ F.reshape(k * d, f) + b
    out = check_finite(np.maximum(Z, 0.0), "conv1d")
    return out, (X.shape, cols, F, Z)


def conv1d_valid_backward(dout, cache):
    xshape, cols, F, Z = cache
    k, d, f = F.shape
    dZ = dout * (Z > 0)
    lead = tuple(range(dZ.ndim - 1))
    dF = np.tensordot(cols, dZ, axes=(lead, lead)).reshape(k, d, f)
    db = dZ.sum(axis=lead)
    dcols = (dZ @ F.reshape(k * d, f).T).reshape(*dZ.shape[:-1], k, d)
    dX = np.zeros(xshape)
    L = dZ.shape[-2]
    for j in range(k):
        dX[..., j:j + L, :] += dcols[..., j, :]
    return dX, dF, db


def max_over_time(X, valid=None):
    """Column max over axis -2. ``valid`` [..., m] excludes rows from the max.

    Backward routes each column's gradient to its first maximal row.
    """
    if X.shape[-2] == 0:
        raise ShapeError("max_over_time over an empty sequence")
    src = X
    if valid is not None:
        valid = np.asarray(valid, dtype=bool)
        if not np.all(valid.any(axis=-1)):
            raise ValueError("max_over_time: no valid rows")
        src = np.where(valid[..., :, None], X, -np.inf)
    idx = np.argmax(src, axis=-2)
    out = np.take_along_axis(X, idx[..., None, :], axis=-2)[..., 0, :]
    return out, (X.shape, idx)


def max_over_time_backward(dout, cache):
    shape, idx = cache
    dX = np.zeros(shape)
    np.put_along_axis(dX, idx[..., None, :], dout[..., None, :], axis=-2)
    return dX


# -- output layer ----------------------------------------------------------

def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def bce_sum_loss(logits, labels):
    """Batch mean of the per-class sigmoid cross-entropies summed over classes.

    Returns ``(loss, dlogits)``.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if z.shape != y.shape:
        raise ShapeError(f"bce: logits {z.shape} vs labels {y.shape}")
    B = z.shape[0]
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    loss = float(per.sum() / B)
    return loss, (sigmoid(z) - y) / B
