"""Minimal deterministic differentiable-network engine.

Float32 tensors (numpy arrays, row-major), explicit forward/backward over an
ordered layer list, plain SGD. Gradients accumulate additively so several
classifier heads can backprop into one shared trunk. All randomness comes
from caller-supplied numpy Generators, so identical seeds give bit-identical
parameter trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels


class ShapeError(ValueError):
    """Raised when an input does not match a layer's expected shape."""

    def __init__(self, layer_index: int, expected, got):
        self.layer_index = layer_index
        self.expected = expected
        self.got = got
        super().__init__(
            f"layer {layer_index}: expected input width {expected}, got {got}"
        )


class NonFiniteError(ValueError):
    """Raised when NaN/Inf values cross a layer boundary."""


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float
    batch_size: int = 32
    local_epochs: int = 1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.local_epochs < 1:
            raise ValueError(f"local_epochs must be >= 1, got {self.local_epochs}")


def as_batch(x) -> np.ndarray:
    """Coerce to a C-contiguous float32 (n, width) array."""
    arr = np.ascontiguousarray(x, dtype=np.float32)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"expected a 1-D or 2-D array, got ndim={arr.ndim}")
    return arr


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Layer:
    """Base layer: params/grads lists plus forward/backward over batches."""

    kind: str = ""

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def in_width(self) -> int | None:
        """Expected input width, or None if any width is accepted."""
        return None

    def out_width(self, in_width: int) -> int:
        return in_width

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Accumulate param grads for input x and output grad g; return input grad."""
        raise NotImplementedError

    def copy(self):
        raise NotImplementedError


class Dense(Layer):
    kind = "dense"

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator | None = None):
        if rng is None:
            self.W = np.zeros((fan_in, fan_out), dtype=np.float32)
            self.b = np.zeros(fan_out, dtype=np.float32)
        else:
            self.W = uniform_init(rng, fan_in, (fan_in, fan_out))
            self.b = uniform_init(rng, fan_in, fan_out)
        self.gW = np.zeros_like(self.W)
        self.gb = np.zeros_like(self.b)

    def params(self):
        return [self.W, self.b]

    def grads(self):
        return [self.gW, self.gb]

    def in_width(self):
        return self.W.shape[0]

    def out_width(self, in_width):
        return self.W.shape[1]

    def forward(self, x):
        return _kernels.active().dense_fwd(x, self.W, self.b)

    def backward(self, x, g):
        return _kernels.active().dense_bwd(x, self.W, g, self.gW, self.gb)

    def copy(self):
        out = Dense(self.W.shape[0], self.W.shape[1])
        out.W = self.W.copy()
        out.b = self.b.copy()
        return out


class Relu(Layer):
    kind = "relu"

    def forward(self, x):
        return _kernels.active().relu_fwd(x)

    def backward(self, x, g):
        return _kernels.active().relu_bwd(x, g)

    def copy(self):
        return Relu()


class ResidualBlock(Layer):
    """dense -> relu -> add skip; output shape equals input shape."""

    kind = "residual-block"

    def __init__(self, width: int, rng: np.random.Generator | None = None):
        self.width = width
        if rng is None:
            self.W = np.zeros((width, width), dtype=np.float32)
            self.b = np.zeros(width, dtype=np.float32)
        else:
            self.W = uniform_init(rng, width, (width, width))
            self.b = uniform_init(rng, width, width)
        self.gW = np.zeros_like(self.W)
        self.gb = np.zeros_like(self.b)

    def params(self):
        return [self.W, self.b]

    def grads(self):
        return [self.gW, self.gb]

    def in_width(self):
        return self.width

    def forward(self, x):
        return _kernels.active().res_fwd(x, self.W, self.b)

    def backward(self, x, g):
        return _kernels.active().res_bwd(x, self.W, self.b, g, self.gW, self.gb)

    def copy(self):
        out = ResidualBlock(self.width)
        out.W = self.W.copy()
        out.b = self.b.copy()
        return out


class MeanPool(Layer):
    """Average non-overlapping feature groups of a fixed size."""

    kind = "mean-pool"

    def __init__(self, group: int):
        if group < 1:
            raise ValueError(f"group must be >= 1, got {group}")
        self.group = group

    def out_width(self, in_width):
        if in_width % self.group != 0:
            raise ValueError(
                f"mean-pool group {self.group} does not divide width {in_width}"
            )
        return in_width // self.group

    def forward(self, x):
        self.out_width(x.shape[1])
        return _kernels.active().meanpool_fwd(x, self.group)

    def backward(self, x, g):
        return _kernels.active().meanpool_bwd(g, self.group)

    def copy(self):
        return MeanPool(self.group)


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite values at {where}")


def forward(layers: list[Layer], x) -> list[np.ndarray]:
    """Run the batch through every layer; returns [input, out_1, ..., out_n]."""
    a = as_batch(x)
    _check_finite(a, "input")
    acts = [a]
    for i, layer in enumerate(layers):
        want = layer.in_width()
        if want is not None and a.shape[1] != want:
            raise ShapeError(i, want, a.shape[1])
        a = layer.forward(a)
        _check_finite(a, f"output of layer {i} ({layer.kind})")
        acts.append(a)
    return acts


def backward(layers: list[Layer], acts: list[np.ndarray], out_grad: np.ndarray) -> np.ndarray:
    """Backprop out_grad through the stack, accumulating into layer grads."""
    return backward_multi(layers, acts, {len(layers): out_grad})


def backward_multi(layers: list[Layer], acts: list[np.ndarray],
                   injected: dict[int, np.ndarray]) -> np.ndarray:
    """Backprop with extra gradients injected at activation indices.

    injected[i] is added to the gradient flowing into activation i (the
    output of layer i-1); index len(layers) is the final output. Used for
    stacks with classifier heads hanging off interior activations.
    """
    if len(acts) != len(layers) + 1:
        raise ValueError(
            f"activation list of length {len(acts)} does not match "
            f"{len(layers)} layers (missing activations?)"
        )
    for idx in injected:
        if not 0 <= idx <= len(layers):
            raise ValueError(f"injection index {idx} out of range")
    g = injected.get(len(layers))
    if g is None:
        g = np.zeros_like(acts[-1])
    for i in range(len(layers) - 1, -1, -1):
        g = layers[i].backward(acts[i], g)
        if i in injected:
            g = g + injected[i]
    return g


def sgd_step(layers: list[Layer], config: SgdConfig) -> None:
    """params <- params - lr * grads; grads zeroed."""
    k = _kernels.active()
    for layer in layers:
        for p, g in zip(layer.params(), layer.grads()):
            k.sgd_step(p.reshape(-1), g.reshape(-1), config.learning_rate)


def softmax(logits) -> np.ndarray:
    return _kernels.active().softmax(as_batch(logits))


def cross_entropy(logits, label: int) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy of one logit vector against a class index."""
    row = as_batch(logits)
    n_classes = row.shape[1]
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} out of range for {n_classes} classes")
    losses, grad = _kernels.active().softmax_xent(row, np.array([label], dtype=np.int64))
    return float(losses[0]), grad[0]


def cross_entropy_batch(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample losses and logit grads (softmax - onehot, unscaled)."""
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError("label out of range")
    return _kernels.active().softmax_xent(logits, labels)


class ClassifierHead:
    """Optional mean-pool followed by a dense map to class logits.

    Pairs with softmax cross-entropy; used both for auxiliary heads at
    partition points and for the final output head.
    """

    kind = "softmax-cross-entropy-head"

    def __init__(self, input_width: int, num_classes: int,
                 rng: np.random.Generator | None = None, pool_group: int = 1):
        self.input_width = input_width
        self.num_classes = num_classes
        self.pool = MeanPool(pool_group) if pool_group > 1 else None
        if pool_group > 1 and input_width % pool_group != 0:
            raise ValueError(
                f"pool group {pool_group} does not divide head input width {input_width}"
            )
        proj_in = input_width // pool_group if pool_group > 1 else input_width
        self.proj = Dense(proj_in, num_classes, rng)

    def layers(self) -> list[Layer]:
        stack: list[Layer] = []
        if self.pool is not None:
            stack.append(self.pool)
        stack.append(self.proj)
        return stack

    def params(self):
        return self.proj.params()

    def grads(self):
        return self.proj.grads()

    def logits(self, x: np.ndarray) -> np.ndarray:
        return forward(self.layers(), x)[-1]

    def loss_grads(self, x: np.ndarray, labels: np.ndarray,
                   grad_scale: float) -> tuple[float, np.ndarray, np.ndarray]:
        """Mean CE loss over the batch; accumulates head grads.

        Returns (loss, logits, grad wrt x). The logit gradient is scaled by
        grad_scale (typically 1/batch) before backprop.
        """
        stack = self.layers()
        acts = forward(stack, x)
        logits = acts[-1]
        losses, glogits = cross_entropy_batch(logits, labels)
        gx = backward(stack, acts, glogits * np.float32(grad_scale))
        return float(losses.mean(dtype=np.float64)), logits, gx

    def copy(self):
        out = ClassifierHead(self.input_width, self.num_classes,
                             pool_group=self.pool.group if self.pool else 1)
        out.proj = self.proj.copy()
        return out
