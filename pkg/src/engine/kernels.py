"""Float32 reference kernels.

Every reduction accumulates in a fixed order: products are added one input
index at a time, left to right, so results do not depend on BLAS threading.
Leading dimensions of the input are treated as batch dimensions.
"""
from typing import Callable, Optional

import numpy as np

LAYERNORM_EPS = np.float32(1e-5)
_GELU_C = np.float32(np.sqrt(2.0 / np.pi))
_GELU_K = np.float32(0.044715)


def linear(x: np.ndarray, weight: np.ndarray, bias: Optional[np.ndarray] = None) -> np.ndarray:
    """y = W x + b over the last axis, W laid out [out, in]"""
    out = np.zeros(x.shape[:-1] + (weight.shape[0],), dtype=np.float32)
    for j in range(weight.shape[1]):
        out += x[..., j:j + 1] * weight[:, j]
    if bias is not None:
        out += bias
    return out


def conv2d(x: np.ndarray, weight: np.ndarray, bias: Optional[np.ndarray] = None,
           stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation of [..., C, H, W] with an [O, C, kh, kw] kernel"""
    if padding:
        pad = [(0, 0)] * (x.ndim - 2) + [(padding, padding), (padding, padding)]
        x = np.pad(x, pad)
    out_channels, in_channels, kh, kw = weight.shape
    height = (x.shape[-2] - kh) // stride + 1
    width = (x.shape[-1] - kw) // stride + 1
    out = np.zeros(x.shape[:-3] + (out_channels, height, width), dtype=np.float32)
    for c in range(in_channels):
        for i in range(kh):
            for j in range(kw):
                patch = x[..., c,
                          i:i + stride * (height - 1) + 1:stride,
                          j:j + stride * (width - 1) + 1:stride]
                out += patch[..., None, :, :] * weight[:, c, i, j][:, None, None]
    if bias is not None:
        out += bias[:, None, None]
    return out


def embedding(ids: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Row lookup; ids must be integral and inside the table"""
    if not np.all(ids == np.floor(ids)):
        raise ValueError("embedding ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ValueError(f"embedding ids outside [0, {table.shape[0]})")
    return table[ids.astype(np.int64)]


def layernorm(x: np.ndarray, gamma: np.ndarray, beta: Optional[np.ndarray] = None) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True, dtype=np.float32)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True, dtype=np.float32)
    out = centered / np.sqrt(var + LAYERNORM_EPS) * gamma
    if beta is not None:
        out = out + beta
    return out.astype(np.float32)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, np.float32(0))


def gelu(x: np.ndarray) -> np.ndarray:
    # tanh approximation
    inner = _GELU_C * (x + _GELU_K * x * x * x)
    return (np.float32(0.5) * x * (np.float32(1) + np.tanh(inner))).astype(np.float32)


def softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=-1, keepdims=True)).astype(np.float32)


def attention(x: np.ndarray, project: Callable[[int, np.ndarray], np.ndarray],
              head_dim: int, causal: bool = False) -> np.ndarray:
    """Single-head scaled dot-product attention over [..., seq, d_model].

    ``project(i, x)`` applies projection i (0=q, 1=k, 2=v, 3=o).
    """
    q = project(0, x)
    k = project(1, x)
    v = project(2, x)
    seq = x.shape[-2]

    scores = np.zeros(q.shape[:-1] + (seq,), dtype=np.float32)
    for j in range(q.shape[-1]):
        scores += q[..., :, j:j + 1] * k[..., None, :, j]
    scores *= np.float32(1.0 / np.sqrt(head_dim))
    if causal:
        scores = np.where(np.triu(np.ones((seq, seq), dtype=bool), k=1), -np.inf, scores)
    weights = softmax(scores)

    context = np.zeros(v.shape, dtype=np.float32)
    for t in range(seq):
        context += weights[..., :, t:t + 1] * v[..., None, t, :]
    return project(3, context)
