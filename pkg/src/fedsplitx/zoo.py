"""Named constructors for trainable toy models and static architecture
descriptors.

Trainable entries are stacks of dense residual blocks behind a linear input
projection, with three interior cut points and one classifier head per cut.
The ResNet family is descriptor-only: it exists for cost accounting and is
never instantiated as a trainable network.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from . import accounting
from .accounting import ArchDescriptor, LayerRec, Unit
from .nn import ClassifierHead, Dense, Relu, ResidualBlock
from .split import FullModel, PartitionPlan


@dataclass(frozen=True)
class ZooEntry:
    name: str
    trainable: bool
    summary: str
    blocks: int = 0
    width: int = 0
    pool_group: int = 1


_TOYS = {
    "toy-mlp-s": ZooEntry("toy-mlp-s", True, "4 blocks, width 32, 3 cuts", 4, 32, 1),
    "toy-mlp-m": ZooEntry("toy-mlp-m", True, "6 blocks, width 64, 3 cuts, pooled heads", 6, 64, 2),
}

_STATIC = {
    name: ZooEntry(name, False, "static descriptor (accounting only)")
    for name in ("resnet18", "resnet34", "resnet50", "resnet101")
}

NUM_LEVELS = 3


def names() -> list[str]:
    return sorted(_TOYS) + sorted(_STATIC)


def entry(name: str) -> ZooEntry:
    reg = {**_TOYS, **_STATIC}
    if name not in reg:
        raise ValueError(f"unknown model {name!r}; registered: {names()}")
    return reg[name]


def evenly_spaced_cuts(total_blocks: int, levels: int) -> tuple[int, ...]:
    cuts = tuple(round(i * total_blocks / (levels + 1)) for i in range(1, levels + 1))
    prev = 0
    for c in cuts:
        if not prev < c < total_blocks:
            raise ValueError(
                f"cannot place {levels} interior cuts in {total_blocks} blocks"
            )
        prev = c
    return cuts


def build(name: str, classes: int, seed: int, input_dim: int = 2
          ) -> tuple[FullModel, PartitionPlan]:
    """Deterministically construct a trainable model and its partition plan.

    Toy models stack an input-projection block (dense + relu) and
    width-preserving residual blocks; cut points sit at the block
    boundaries. The stem spans two layers, so cut indices into the flat
    layer list are block boundaries shifted by one.
    """
    e = entry(name)
    if not e.trainable:
        raise ValueError(f"{name!r} is static-only: descriptors exist for "
                         "accounting, but no trainable instance")
    rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
    width = e.width
    layers = [Dense(input_dim, width, rng), Relu()]
    layers += [ResidualBlock(width, rng) for _ in range(e.blocks - 1)]
    cuts = tuple(c + 1 for c in evenly_spaced_cuts(e.blocks, NUM_LEVELS))
    plan = PartitionPlan(NUM_LEVELS, cuts, len(layers))
    heads = [ClassifierHead(width, classes, rng, pool_group=e.pool_group)
             for _ in cuts]
    final = ClassifierHead(width, classes, rng, pool_group=e.pool_group)
    model = FullModel(blocks=layers, aux_heads=heads, final_head=final,
                      plan=plan, num_classes=classes)
    return model, plan


def _toy_head_recs(width: int, pool_group: int, classes: int) -> tuple[LayerRec, ...]:
    recs = []
    w = width
    if pool_group > 1:
        recs.append(LayerRec("meanpool", "head.pool", elem_ops=w))
        w //= pool_group
    recs.append(LayerRec("dense", "head.fc", params=(w + 1) * classes,
                         macs=w * classes))
    return tuple(recs)


def descriptor(name: str, classes: int = 10, input_dim: int = 2) -> ArchDescriptor:
    """Static accounting descriptor for any registered model."""
    e = entry(name)
    if not e.trainable:
        return accounting.resnet_descriptor(name, classes=classes)

    width = e.width
    # one unit per engine layer so descriptor cut indices match the plan's
    units = [
        Unit("stem.fc", (LayerRec("dense", "stem.fc",
                                  params=(input_dim + 1) * width,
                                  macs=input_dim * width),),
             out_channels=width),
        Unit("stem.relu", (LayerRec("relu", "stem.relu", elem_ops=width),),
             out_channels=width),
    ]
    for i in range(1, e.blocks):
        units.append(Unit(
            f"res{i}",
            (
                LayerRec("dense", f"res{i}.fc", params=(width + 1) * width,
                         macs=width * width),
                LayerRec("relu", f"res{i}.relu", elem_ops=width),
                LayerRec("add", f"res{i}.add", elem_ops=width),
            ),
            out_channels=width,
        ))
    units.append(Unit("tail", _toy_head_recs(width, e.pool_group, classes),
                      out_channels=classes))
    cuts = tuple(c + 1 for c in evenly_spaced_cuts(e.blocks, NUM_LEVELS))
    heads = tuple(_toy_head_recs(width, e.pool_group, classes) for _ in cuts)
    return ArchDescriptor(
        name=name,
        input_shape=(input_dim,),
        units=tuple(units),
        cut_points=cuts,
        aux_heads=heads,
        classes=classes,
    )
