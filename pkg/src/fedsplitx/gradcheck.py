"""Finite-difference verification of the engine's analytic gradients.

The reference path evaluates the same losses in float64 numpy, reading the
model's parameters but never touching the compiled kernels, so disagreement
localizes to the engine's backward implementations.
"""

from __future__ import annotations

import numpy as np

from . import nn, zoo
from .nn import ClassifierHead, Dense, MeanPool, Relu, ResidualBlock
from .split import client_collaborative_loss, server_loss, split
from .federation import get_smashed_data


def _ref_block(layer, a: np.ndarray, overrides: dict[int, np.ndarray],
               signs: list[bytes]) -> np.ndarray:
    def p(arr):
        return overrides.get(id(arr), arr.astype(np.float64))

    if isinstance(layer, Dense):
        return a @ p(layer.W) + p(layer.b)
    if isinstance(layer, Relu):
        signs.append((a > 0).tobytes())
        return np.maximum(a, 0.0)
    if isinstance(layer, ResidualBlock):
        z = a @ p(layer.W) + p(layer.b)
        signs.append((z > 0).tobytes())
        return a + np.maximum(z, 0.0)
    if isinstance(layer, MeanPool):
        n, w = a.shape
        return a.reshape(n, w // layer.group, layer.group).mean(axis=2)
    raise TypeError(f"no reference for {type(layer).__name__}")


def _ref_head_loss(head: ClassifierHead, a: np.ndarray, labels: np.ndarray,
                   overrides: dict[int, np.ndarray], signs: list[bytes]) -> float:
    for layer in head.layers():
        a = _ref_block(layer, a, overrides, signs)
    shifted = a - a.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(len(labels)), labels]
    return float(np.mean(logz - picked))


def _ref_multi_head(blocks, heads_at, x: np.ndarray, labels: np.ndarray,
                    overrides: dict[int, np.ndarray]) -> tuple[float, bytes]:
    """Float64 reference loss plus the relu on/off pattern it saw."""
    signs: list[bytes] = []
    acts = [x.astype(np.float64)]
    for layer in blocks:
        acts.append(_ref_block(layer, acts[-1], overrides, signs))
    total = sum(_ref_head_loss(h, acts[idx], labels, overrides, signs)
                for idx, h in heads_at)
    return total, b"".join(signs)


def _fd_against(loss_fn, params: list[np.ndarray], grads: list[np.ndarray],
                h: float = 1e-3) -> float:
    """Max scale-relative error between analytic grads and central FD.

    loss_fn(overrides) evaluates the float64 reference with some parameter
    arrays replaced and reports which side of zero every relu input fell on;
    coordinates whose +-h bracket flips a relu are skipped, since the loss
    is not differentiable across the kink and the quotient is meaningless
    there.
    """
    worst = 0.0
    flat_scale = max(max(abs(float(g.max(initial=0.0))), abs(float(g.min(initial=0.0))))
                     for g in grads)
    denom = max(flat_scale, 1e-6)
    for p, g in zip(params, grads):
        base = p.astype(np.float64)
        it = np.nditer(base, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            bumped = base.copy()
            bumped[idx] = base[idx] + h
            hi, hi_signs = loss_fn({id(p): bumped})
            bumped[idx] = base[idx] - h
            lo, lo_signs = loss_fn({id(p): bumped})
            if hi_signs != lo_signs:
                continue
            fd = (hi - lo) / (2 * h)
            err = abs(fd - float(g[idx])) / max(abs(fd), denom)
            worst = max(worst, err)
    return worst


def _trainable_arrays(layers) -> tuple[list[np.ndarray], list[np.ndarray]]:
    ps, gs = [], []
    for layer in layers:
        ps.extend(layer.params())
        gs.extend(layer.grads())
    return ps, gs


def check_layer_kind(kind: str, seed: int) -> float:
    """FD-check one layer kind inside a small head-terminated stack."""
    rng = np.random.default_rng([seed, 31])
    width = 6
    x = rng.normal(size=(4, width)).astype(np.float32)
    labels = rng.integers(0, 3, size=4).astype(np.int64)
    if kind == "dense":
        blocks = [Dense(width, 5, rng)]
    elif kind == "relu":
        blocks = [Dense(width, 5, rng), Relu()]
    elif kind == "residual-block":
        blocks = [ResidualBlock(width, rng)]
    elif kind == "mean-pool":
        blocks = [MeanPool(2)]
    elif kind == "softmax-cross-entropy-head":
        blocks = []
    else:
        raise ValueError(f"unknown layer kind {kind!r}")
    head_in = {"dense": 5, "relu": 5, "mean-pool": width // 2}.get(kind, width)
    head = ClassifierHead(head_in, 3, rng)

    acts = nn.forward(blocks, x)
    scale = 1.0 / len(labels)
    _, _, gx = head.loss_grads(acts[-1], labels, scale)
    nn.backward(blocks, acts, gx)

    heads_at = [(len(blocks), head)]
    params, grads = _trainable_arrays(blocks + head.layers())

    def loss_fn(overrides):
        return _ref_multi_head(blocks, heads_at, x, labels, overrides)

    return _fd_against(loss_fn, params, grads)


def check_collaborative(level: int, seed: int) -> float:
    """FD-check the client-side summed-heads loss at a given depth level."""
    rng = np.random.default_rng([seed, 37])
    model, plan = zoo.build("toy-mlp-s", classes=3, seed=seed, input_dim=4)
    sm = split(model, level)
    x = rng.normal(size=(5, 4)).astype(np.float32)
    labels = rng.integers(0, 3, size=5).astype(np.int64)

    client_collaborative_loss(sm, x, labels)
    heads_at = [(plan.cut_points[i], sm.client_heads[i])
                for i in range(level)]
    layers = sm.client_layers()
    params, grads = _trainable_arrays(layers)

    def loss_fn(overrides):
        return _ref_multi_head(sm.client_blocks, heads_at, x, labels, overrides)

    return _fd_against(loss_fn, params, grads)


def check_server(level: int, seed: int) -> float:
    """FD-check the server-side loss (aux heads past the cut plus final)."""
    rng = np.random.default_rng([seed, 41])
    model, plan = zoo.build("toy-mlp-s", classes=3, seed=seed, input_dim=4)
    sm = split(model, level)
    x = rng.normal(size=(5, 4)).astype(np.float32)
    labels = rng.integers(0, 3, size=5).astype(np.int64)
    smashed = get_smashed_data(sm, x, labels, client_id=0, round_index=0)

    server_loss(sm, smashed)
    cut = sm.cut
    heads_at = [(plan.cut_points[level + j] - cut, h)
                for j, h in enumerate(sm.server_heads)]
    heads_at.append((len(sm.server_blocks), sm.final_head))
    layers = sm.server_layers()
    params, grads = _trainable_arrays(layers)

    def loss_fn(overrides):
        return _ref_multi_head(sm.server_blocks, heads_at,
                               smashed.activations, labels, overrides)

    return _fd_against(loss_fn, params, grads)


LAYER_KINDS = ("dense", "relu", "residual-block", "mean-pool",
               "softmax-cross-entropy-head")


def run_all(seed: int = 0) -> list[tuple[str, float]]:
    results = [(f"layer:{kind}", check_layer_kind(kind, seed))
               for kind in LAYER_KINDS]
    results += [(f"collaborative:d={lv}", check_collaborative(lv, seed))
                for lv in (1, 2, 3)]
    results += [(f"server:d={lv}", check_server(lv, seed)) for lv in (1, 3)]
    return results
