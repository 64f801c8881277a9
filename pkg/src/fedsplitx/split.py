"""Model partitioning at depth-level cut points, auxiliary heads, and the
client-side/server-side losses.

A full model is an ordered block list with M interior cut points. Splitting
at level m hands blocks [0:p_m) plus aux heads 1..m to the client and the
remaining blocks plus heads m+1..M and the final output head to the server.
The client trains on the sum of cross-entropies over its heads (one loss
term per head, averaged over samples); the server does the same over its
heads plus the final output, driven by the transmitted cut activations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .nn import ClassifierHead, Layer


@dataclass(frozen=True)
class PartitionPlan:
    num_levels: int
    cut_points: tuple[int, ...]
    total_blocks: int

    def __post_init__(self):
        m = self.num_levels
        cuts = self.cut_points
        if m < 1:
            raise ValueError(f"need at least one level, got {m}")
        if len(cuts) != m:
            raise ValueError(f"expected {m} cut points, got {len(cuts)}")
        prev = 0
        for p in cuts:
            if not prev < p:
                raise ValueError(f"cut points must be strictly increasing: {cuts}")
            prev = p
        if not cuts[-1] < self.total_blocks:
            raise ValueError(
                f"cut points must be interior to {self.total_blocks} blocks: {cuts}"
            )

    def shell_block_range(self, shell: int) -> tuple[int, int]:
        """Half-open block range [lo, hi) owned by shell 1..M+1."""
        if not 1 <= shell <= self.num_levels + 1:
            raise ValueError(f"shell {shell} out of range 1..{self.num_levels + 1}")
        lo = 0 if shell == 1 else self.cut_points[shell - 2]
        hi = self.total_blocks if shell == self.num_levels + 1 else self.cut_points[shell - 1]
        return lo, hi


@dataclass
class FullModel:
    blocks: list[Layer]
    aux_heads: list[ClassifierHead]
    final_head: ClassifierHead
    plan: PartitionPlan
    num_classes: int

    def __post_init__(self):
        if len(self.blocks) != self.plan.total_blocks:
            raise ValueError("block count does not match plan")
        if len(self.aux_heads) != self.plan.num_levels:
            raise ValueError("need exactly one aux head per cut point")

    def shell_parts(self, shell: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Live parameter arrays of one shell: (block params, head params).

        The head of shell 1..M is its aux head; shell M+1 carries the final
        output head.
        """
        lo, hi = self.plan.shell_block_range(shell)
        blocks: list[np.ndarray] = []
        for blk in self.blocks[lo:hi]:
            blocks.extend(blk.params())
        head = self.final_head if shell == self.plan.num_levels + 1 else self.aux_heads[shell - 1]
        return blocks, list(head.params())

    def shell_arrays(self, shell: int) -> list[np.ndarray]:
        """Live parameter arrays of one shell, blocks then head."""
        blocks, head = self.shell_parts(shell)
        return blocks + head

    def all_layers(self) -> list[Layer]:
        stack = list(self.blocks)
        for h in self.aux_heads:
            stack.extend(h.layers())
        stack.extend(self.final_head.layers())
        return stack


@dataclass
class SplitModel:
    """One (client-side, server-side) pair cut at a depth level."""

    level: int
    plan: PartitionPlan
    client_blocks: list[Layer]
    client_heads: list[ClassifierHead]
    server_blocks: list[Layer]
    server_heads: list[ClassifierHead]
    final_head: ClassifierHead

    @property
    def cut(self) -> int:
        return self.plan.cut_points[self.level - 1]

    def client_layers(self) -> list[Layer]:
        stack = list(self.client_blocks)
        for h in self.client_heads:
            stack.extend(h.layers())
        return stack

    def server_layers(self) -> list[Layer]:
        stack = list(self.server_blocks)
        for h in self.server_heads:
            stack.extend(h.layers())
        stack.extend(self.final_head.layers())
        return stack

    def client_shell_parts(self, shell: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
        if not 1 <= shell <= self.level:
            raise ValueError(f"client side at level {self.level} has no shell {shell}")
        lo, hi = self.plan.shell_block_range(shell)
        blocks: list[np.ndarray] = []
        for blk in self.client_blocks[lo:hi]:
            blocks.extend(blk.params())
        return blocks, list(self.client_heads[shell - 1].params())

    def server_shell_parts(self, shell: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
        m1 = self.plan.num_levels + 1
        if not self.level < shell <= m1:
            raise ValueError(f"server side at level {self.level} has no shell {shell}")
        lo, hi = self.plan.shell_block_range(shell)
        off = self.cut
        blocks: list[np.ndarray] = []
        for blk in self.server_blocks[lo - off:hi - off]:
            blocks.extend(blk.params())
        head = self.final_head if shell == m1 else self.server_heads[shell - self.level - 1]
        return blocks, list(head.params())


@dataclass
class SmashedBatch:
    """Cut activations plus labels as transmitted client -> main server."""

    activations: np.ndarray
    labels: np.ndarray
    client_id: int
    level: int
    round_index: int = 0

    def __post_init__(self):
        if self.activations.shape[0] != len(self.labels):
            raise ValueError("one activation row per label required")

    @property
    def width(self) -> int:
        return self.activations.shape[1]


def split(model: FullModel, level: int, copy: bool = True) -> SplitModel:
    """Cut the full model at its level-m partition point.

    With copy=True (the default) the halves own deep copies, so training
    them never touches the full model's values.
    """
    m = model.plan.num_levels
    if not 1 <= level <= m:
        raise ValueError(f"level {level} out of range 1..{m}")
    cut = model.plan.cut_points[level - 1]

    def dup(obj):
        return obj.copy() if copy else obj

    return SplitModel(
        level=level,
        plan=model.plan,
        client_blocks=[dup(b) for b in model.blocks[:cut]],
        client_heads=[dup(h) for h in model.aux_heads[:level]],
        server_blocks=[dup(b) for b in model.blocks[cut:]],
        server_heads=[dup(h) for h in model.aux_heads[level:]],
        final_head=dup(model.final_head),
    )


def _multi_head_loss(blocks: list[Layer], heads_at: list[tuple[int, ClassifierHead]],
                     x: np.ndarray, labels: np.ndarray) -> tuple[float, list[np.ndarray], np.ndarray]:
    """Sum of per-head mean cross-entropies with one shared trunk backprop.

    heads_at pairs each head with the activation index it reads (the number
    of blocks before it). Returns (loss, per-head logits, input grad).
    """
    batch = nn.as_batch(x)
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    acts = nn.forward(blocks, batch)
    scale = 1.0 / batch.shape[0]

    total = 0.0
    all_logits: list[np.ndarray] = []
    injected: dict[int, np.ndarray] = {}
    for act_idx, head in heads_at:
        loss, logits, gx = head.loss_grads(acts[act_idx], labels, scale)
        total += loss
        all_logits.append(logits)
        if act_idx in injected:
            injected[act_idx] = injected[act_idx] + gx
        else:
            injected[act_idx] = gx
    input_grad = nn.backward_multi(blocks, acts, injected)
    return total, all_logits, input_grad


def client_collaborative_loss(sm: SplitModel, x, labels,
                              head_indices: list[int] | None = None
                              ) -> tuple[float, list[np.ndarray]]:
    """Mean over samples of the summed cross-entropy at every client head.

    Populates gradients of all client-side blocks and heads. head_indices
    restricts the sum to a subset of heads (0-based into the client's head
    list); the default uses all of them.
    """
    if not sm.client_heads:
        raise ValueError("client side has no heads")
    indices = list(range(len(sm.client_heads))) if head_indices is None else head_indices
    heads_at = [(sm.plan.cut_points[i], sm.client_heads[i]) for i in indices]
    loss, logits, _ = _multi_head_loss(sm.client_blocks, heads_at, x, labels)
    return loss, logits


def server_loss(sm: SplitModel, smashed: SmashedBatch,
                include_aux: bool = True) -> tuple[float, list[np.ndarray], np.ndarray]:
    """Summed cross-entropy over server-side aux heads plus the final head.

    Populates server-side gradients and returns the gradient with respect to
    the smashed activations (consumed only by the gradient-returning
    split-learning baseline).
    """
    if smashed.level != sm.level:
        raise ValueError(
            f"smashed data cut at level {smashed.level} does not match "
            f"server side cut at level {sm.level}"
        )
    cut = sm.cut
    heads_at: list[tuple[int, ClassifierHead]] = []
    if include_aux:
        for j, head in enumerate(sm.server_heads):
            heads_at.append((sm.plan.cut_points[sm.level + j] - cut, head))
    heads_at.append((len(sm.server_blocks), sm.final_head))
    loss, logits, smashed_grad = _multi_head_loss(
        sm.server_blocks, heads_at, smashed.activations, smashed.labels)
    return loss, logits, smashed_grad


def ensemble_predict(heads_logits: list[np.ndarray]) -> int:
    """Argmax of the mean per-head softmax; ties go to the lowest class."""
    if not heads_logits:
        raise ValueError("need at least one logit vector")
    first = nn.as_batch(heads_logits[0])
    mean = nn.softmax(first)
    for lo in heads_logits[1:]:
        row = nn.as_batch(lo)
        if row.shape != first.shape:
            raise ValueError("logit vectors must have equal lengths")
        mean = mean + nn.softmax(row)
    return int(np.argmax(mean[0]))


def ensemble_predict_batch(heads_logits: list[np.ndarray]) -> np.ndarray:
    """Batched ensemble prediction: one class index per row."""
    if not heads_logits:
        raise ValueError("need at least one logit batch")
    mean = nn.softmax(heads_logits[0])
    for lo in heads_logits[1:]:
        mean = mean + nn.softmax(lo)
    return np.argmax(mean, axis=1)
