"""Pure-numpy implementation of the training kernels.

This is the fallback backend, used when the compiled extension is not
available (or when selected explicitly). Both backends implement the same
function set over C-contiguous float32 arrays:

    dense_fwd(x, W, b) -> y                    y = x @ W + b
    dense_bwd(x, W, g, gW, gb) -> gx           gW += x.T @ g; gb += sum(g); gx = g @ W.T
    relu_fwd(x) -> y
    relu_bwd(x, g) -> gx                       mask taken from the pre-activation x
    res_fwd(x, W, b) -> y                      y = x + relu(x @ W + b)
    res_bwd(x, W, b, g, gW, gb) -> gx          recomputes the pre-activation internally
    meanpool_fwd(x, group) -> y
    meanpool_bwd(g, group) -> gx
    softmax(logits) -> probs
    softmax_xent(logits, labels) -> (losses, glogits)   glogits = softmax - onehot
    sgd_step(param, grad, lr)                  param -= lr * grad; grad zeroed

Gradient outputs accumulate (+=) into the provided buffers so several heads
can backprop into a shared trunk.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def dense_fwd(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ W + b


def dense_bwd(x: np.ndarray, W: np.ndarray, g: np.ndarray,
              gW: np.ndarray, gb: np.ndarray) -> np.ndarray:
    gW += x.T @ g
    gb += g.sum(axis=0)
    return g @ W.T


def relu_fwd(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, np.float32(0.0))


def relu_bwd(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    return np.where(x > 0, g, np.float32(0.0))


def res_fwd(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    z = x @ W + b
    np.maximum(z, np.float32(0.0), out=z)
    z += x
    return z


def res_bwd(x: np.ndarray, W: np.ndarray, b: np.ndarray, g: np.ndarray,
            gW: np.ndarray, gb: np.ndarray) -> np.ndarray:
    z = x @ W + b
    gh = np.where(z > 0, g, np.float32(0.0))
    gW += x.T @ gh
    gb += gh.sum(axis=0)
    return g + gh @ W.T


def meanpool_fwd(x: np.ndarray, group: int) -> np.ndarray:
    n, w = x.shape
    return x.reshape(n, w // group, group).mean(axis=2, dtype=np.float32)


def meanpool_bwd(g: np.ndarray, group: int) -> np.ndarray:
    return np.repeat(g / np.float32(group), group, axis=1)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True, dtype=np.float32)


def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e.sum(axis=1, keepdims=True, dtype=np.float32)
    probs = e / s
    rows = np.arange(n)
    losses = (np.log(s[:, 0]) - shifted[rows, labels]).astype(np.float32)
    glogits = probs
    glogits[rows, labels] -= np.float32(1.0)
    return losses, glogits


def sgd_step(param: np.ndarray, grad: np.ndarray, lr: float) -> None:
    param -= np.float32(lr) * grad
    grad[...] = np.float32(0.0)
