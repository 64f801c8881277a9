"""Static compute/parameter accounting and the per-round cost ledger.

Architecture descriptors are ordered lists of indivisible units (a stem,
each residual block, the classifier tail) with named cut points between
them. The calculator is purely descriptor-driven; networks are never
executed here.

Counting convention (printed in every report): one multiply-accumulate in a
conv or dense layer counts as one FLOP; batchnorm, relu, pooling and
residual adds count one op per output element; forward FLOPs exclude the
auxiliary heads, while client-side parameter counts include the heads the
client holds. The asymmetry mirrors how the reference cost tables for the
ResNet family were evidently produced, and is what the tolerance checks in
the acceptance suite are calibrated against.
"""

from __future__ import annotations

from dataclasses import dataclass

CONVENTION = (
    "1 MAC = 1 FLOP for conv/dense; batchnorm/relu/pool/add at 1 op per "
    "element; FLOPs exclude aux heads; client-side params include them"
)

BYTES_PER_VALUE = 4  # float32 wire format


@dataclass(frozen=True)
class LayerRec:
    kind: str
    name: str
    params: int = 0
    macs: int = 0
    elem_ops: int = 0


@dataclass(frozen=True)
class Unit:
    """Indivisible layer group; cut points fall only between units."""

    name: str
    layers: tuple[LayerRec, ...]
    out_channels: int
    out_hw: int = 1

    @property
    def params(self) -> int:
        return sum(l.params for l in self.layers)

    @property
    def flops(self) -> int:
        return sum(l.macs + l.elem_ops for l in self.layers)


@dataclass(frozen=True)
class ArchDescriptor:
    name: str
    input_shape: tuple[int, ...]
    units: tuple[Unit, ...]
    cut_points: tuple[int, ...]
    aux_heads: tuple[tuple[LayerRec, ...], ...]  # one layer list per cut
    classes: int

    def __post_init__(self):
        prev = 0
        for p in self.cut_points:
            if not prev < p:
                raise ValueError(f"cut points must be strictly increasing: {self.cut_points}")
            prev = p
        if self.cut_points and self.cut_points[-1] >= len(self.units):
            raise ValueError("cut points must be interior to the unit list")
        if len(self.aux_heads) != len(self.cut_points):
            raise ValueError("need one aux head per cut point")

    @property
    def num_levels(self) -> int:
        return len(self.cut_points)


def _resolve_prefix(desc: ArchDescriptor, up_to: int | None) -> int:
    """Translate a level (1..M) or None (= whole model) to a unit count."""
    if up_to is None:
        return len(desc.units)
    if not 1 <= up_to <= desc.num_levels:
        raise ValueError(f"level {up_to} out of range 1..{desc.num_levels}")
    return desc.cut_points[up_to - 1]


def _check_kinds(layers) -> None:
    known = {"conv", "bn", "relu", "maxpool", "avgpool", "dense", "add", "meanpool"}
    for l in layers:
        if l.kind not in known:
            raise ValueError(f"unknown layer kind {l.kind!r} in {l.name}")


def segment_params(desc: ArchDescriptor, lo: int, hi: int) -> int:
    """Trainable parameters of units [lo, hi), blocks only."""
    total = 0
    for u in desc.units[lo:hi]:
        _check_kinds(u.layers)
        total += u.params
    return total


def segment_flops(desc: ArchDescriptor, lo: int, hi: int) -> int:
    """Forward FLOPs per sample of units [lo, hi), blocks only."""
    total = 0
    for u in desc.units[lo:hi]:
        _check_kinds(u.layers)
        total += u.flops
    return total


def _head_params(head: tuple[LayerRec, ...]) -> int:
    _check_kinds(head)
    return sum(l.params for l in head)


def _head_flops(head: tuple[LayerRec, ...]) -> int:
    _check_kinds(head)
    return sum(l.macs + l.elem_ops for l in head)


def count_params(desc: ArchDescriptor, up_to: int | None = None,
                 include_aux_heads: bool = True) -> int:
    """Parameters of the prefix up to a partition point (or the whole model).

    By default a level-m prefix includes the m aux heads the client-side
    model carries; the full model (up_to=None) counts blocks plus the final
    classifier only.
    """
    units = _resolve_prefix(desc, up_to)
    total = segment_params(desc, 0, units)
    if include_aux_heads and up_to is not None:
        for head in desc.aux_heads[:up_to]:
            total += _head_params(head)
    return total


def count_flops(desc: ArchDescriptor, up_to: int | None = None,
                include_aux_heads: bool = False) -> int:
    """Forward FLOPs per sample of the prefix up to a partition point."""
    units = _resolve_prefix(desc, up_to)
    total = segment_flops(desc, 0, units)
    if include_aux_heads and up_to is not None:
        for head in desc.aux_heads[:up_to]:
            total += _head_flops(head)
    return total


def param_share(desc: ArchDescriptor, level: int) -> float:
    """Client-side parameter share of the full model, in percent."""
    return 100.0 * count_params(desc, level) / count_params(desc, None)


def server_compute_report(desc: ArchDescriptor,
                          fleet_levels: list[int] | None = None) -> dict:
    """Per-sample server-side forward FLOPs for the two split protocols.

    The fixed-cut protocol pins every participant to the level-1 cut, so the
    server always runs everything past it. The multi-cut protocol runs only
    the part past each client's own cut; its cost is the mean over
    fleet_levels (default: one client per level).
    """
    full = count_flops(desc, None)
    levels = list(fleet_levels) if fleet_levels else list(range(1, desc.num_levels + 1))
    accsfl = full - count_flops(desc, 1)
    per_level = [full - count_flops(desc, lv) for lv in levels]
    return {
        "model": desc.name,
        "convention": CONVENTION,
        "accsfl_level1": accsfl,
        "fedsplitx": sum(per_level) / len(per_level),
        "full": full,
    }


def params_report(desc: ArchDescriptor) -> dict:
    full = count_params(desc, None)
    rows = []
    for lv in range(1, desc.num_levels + 1):
        p = count_params(desc, lv)
        rows.append({"level": lv, "params": p, "share": 100.0 * p / full})
    return {"model": desc.name, "convention": CONVENTION, "total": full, "levels": rows}


def flops_report(desc: ArchDescriptor) -> dict:
    full = count_flops(desc, None)
    rows = []
    for lv in range(1, desc.num_levels + 1):
        f = count_flops(desc, lv)
        rows.append({"level": lv, "flops": f, "share": 100.0 * f / full})
    return {"model": desc.name, "convention": CONVENTION, "total": full, "levels": rows}


# ---------------------------------------------------------------------------
# Cost ledger


@dataclass
class LedgerRow:
    flops_forward: int = 0
    flops_backward: int = 0
    bytes_up: int = 0
    bytes_down: int = 0
    bytes_gradient_return: int = 0


@dataclass(frozen=True)
class TrafficEvent:
    round_index: int
    entity: str
    kind: str  # param_down | param_up | smashed_up | grad_return
    elements: int


_KIND_TO_FIELD = {
    "param_down": "bytes_down",
    "param_up": "bytes_up",
    "smashed_up": "bytes_up",
    "grad_return": "bytes_gradient_return",
}


class CostLedger:
    """Per-(round, entity) counters for compute and traffic.

    Entities are free-form names ("client 3", "main server", "fed server").
    Counters only ever grow.
    """

    def __init__(self):
        self.rows: dict[tuple[int, str], LedgerRow] = {}

    def _row(self, round_index: int, entity: str) -> LedgerRow:
        key = (round_index, entity)
        if key not in self.rows:
            self.rows[key] = LedgerRow()
        return self.rows[key]

    def add_compute(self, round_index: int, entity: str,
                    flops_forward: int = 0, flops_backward: int = 0) -> None:
        if flops_forward < 0 or flops_backward < 0:
            raise ValueError("compute counters only grow")
        row = self._row(round_index, entity)
        row.flops_forward += flops_forward
        row.flops_backward += flops_backward

    def totals(self) -> LedgerRow:
        out = LedgerRow()
        for row in self.rows.values():
            out.flops_forward += row.flops_forward
            out.flops_backward += row.flops_backward
            out.bytes_up += row.bytes_up
            out.bytes_down += row.bytes_down
            out.bytes_gradient_return += row.bytes_gradient_return
        return out

    def entity_rows(self, entity: str) -> dict[int, LedgerRow]:
        return {r: row for (r, e), row in self.rows.items() if e == entity}

    def round_row(self, round_index: int, entity: str) -> LedgerRow:
        return self.rows.get((round_index, entity), LedgerRow())


def record_traffic(ledger: CostLedger, event: TrafficEvent) -> None:
    """Add event.elements float32 values to the matching byte counter."""
    if event.elements < 0:
        raise ValueError("element count must be non-negative")
    if event.kind not in _KIND_TO_FIELD:
        raise ValueError(f"unknown traffic kind {event.kind!r}")
    row = ledger._row(event.round_index, event.entity)
    fld = _KIND_TO_FIELD[event.kind]
    setattr(row, fld, getattr(row, fld) + event.elements * BYTES_PER_VALUE)


# ---------------------------------------------------------------------------
# ResNet descriptors (static accounting targets; never trainable here)


def _conv(name: str, cin: int, cout: int, k: int, hw_out: int,
          bias: bool = False) -> LayerRec:
    params = k * k * cin * cout + (cout if bias else 0)
    macs = hw_out * hw_out * cout * k * k * cin
    return LayerRec("conv", name, params=params, macs=macs)


def _bn(name: str, c: int, hw: int) -> LayerRec:
    return LayerRec("bn", name, params=2 * c, elem_ops=hw * hw * c)


def _relu(name: str, c: int, hw: int) -> LayerRec:
    return LayerRec("relu", name, elem_ops=hw * hw * c)


def _add(name: str, c: int, hw: int) -> LayerRec:
    return LayerRec("add", name, elem_ops=hw * hw * c)


def _basic_block(name: str, cin: int, cout: int, stride: int, hw_in: int) -> Unit:
    hw = hw_in // stride
    layers = [
        _conv(f"{name}.conv1", cin, cout, 3, hw),
        _bn(f"{name}.bn1", cout, hw),
        _relu(f"{name}.relu1", cout, hw),
        _conv(f"{name}.conv2", cout, cout, 3, hw),
        _bn(f"{name}.bn2", cout, hw),
    ]
    if stride != 1 or cin != cout:
        layers.append(_conv(f"{name}.down", cin, cout, 1, hw))
        layers.append(_bn(f"{name}.bn_down", cout, hw))
    layers.append(_add(f"{name}.add", cout, hw))
    layers.append(_relu(f"{name}.relu2", cout, hw))
    return Unit(name, tuple(layers), out_channels=cout, out_hw=hw)


def _bottleneck_block(name: str, cin: int, mid: int, stride: int, hw_in: int) -> Unit:
    cout = 4 * mid
    hw = hw_in // stride
    layers = [
        _conv(f"{name}.conv1", cin, mid, 1, hw_in),
        _bn(f"{name}.bn1", mid, hw_in),
        _relu(f"{name}.relu1", mid, hw_in),
        _conv(f"{name}.conv2", mid, mid, 3, hw),  # stride sits on the 3x3
        _bn(f"{name}.bn2", mid, hw),
        _relu(f"{name}.relu2", mid, hw),
        _conv(f"{name}.conv3", mid, cout, 1, hw),
        _bn(f"{name}.bn3", cout, hw),
    ]
    if stride != 1 or cin != cout:
        layers.append(_conv(f"{name}.down", cin, cout, 1, hw))
        layers.append(_bn(f"{name}.bn_down", cout, hw))
    layers.append(_add(f"{name}.add", cout, hw))
    layers.append(_relu(f"{name}.relu3", cout, hw))
    return Unit(name, tuple(layers), out_channels=cout, out_hw=hw)


def _reduction_head(ch: int, hw: int, classes: int) -> tuple[LayerRec, ...]:
    """Aux classifier: 1x1 channel-halving conv, bn, global pool, fc."""
    half = ch // 2
    return (
        _conv("aux.reduce", ch, half, 1, hw),
        _bn("aux.bn", half, hw),
        LayerRec("avgpool", "aux.pool", elem_ops=hw * hw * half),
        LayerRec("dense", "aux.fc", params=(half + 1) * classes, macs=half * classes),
    )


_RESNET_SPECS = {
    # block kind, per-stage block counts, level-2/3 cuts as (stage, blocks into it)
    "resnet18": ("basic", (2, 2, 2, 2), (1, 2), (2, 2)),
    "resnet34": ("basic", (3, 4, 6, 3), (2, 2), (3, 2)),
    "resnet50": ("bottleneck", (3, 4, 6, 3), (2, 2), (3, 2)),
    "resnet101": ("bottleneck", (3, 4, 23, 3), (3, 1), (3, 11)),
}


def resnet_descriptor(name: str, classes: int = 10, input_hw: int = 32) -> ArchDescriptor:
    """ResNet descriptor with a 32x32-style stem and the three depth-level
    cuts used by the split protocols.

    The stem is a 3x3 stride-1 conv into batchnorm, relu, and a 3x3 stride-2
    maxpool; the first cut sits after the maxpool, the others inside the
    stage stack (cut placement per _RESNET_SPECS).
    """
    if name not in _RESNET_SPECS:
        raise ValueError(f"unknown resnet {name!r}; choices: {sorted(_RESNET_SPECS)}")
    kind, stage_blocks, cut2, cut3 = _RESNET_SPECS[name]

    hw = input_hw
    stem_layers = (
        _conv("stem.conv", 3, 64, 3, hw),
        _bn("stem.bn", 64, hw),
        _relu("stem.relu", 64, hw),
        LayerRec("maxpool", "stem.maxpool", elem_ops=(hw // 2) * (hw // 2) * 64),
    )
    units = [Unit("stem", stem_layers, out_channels=64, out_hw=hw // 2)]
    hw //= 2

    widths = (64, 128, 256, 512)
    cin = 64
    stage_start_unit = {}
    for s, (blocks, width) in enumerate(zip(stage_blocks, widths), start=1):
        stage_start_unit[s] = len(units)
        for b in range(blocks):
            stride = 2 if (s > 1 and b == 0) else 1
            if kind == "basic":
                unit = _basic_block(f"stage{s}.block{b + 1}", cin, width, stride, hw)
                cin = width
            else:
                unit = _bottleneck_block(f"stage{s}.block{b + 1}", cin, width, stride, hw)
                cin = 4 * width
            hw = unit.out_hw
            units.append(unit)

    tail = Unit(
        "tail",
        (
            LayerRec("avgpool", "tail.avgpool", elem_ops=hw * hw * cin),
            LayerRec("dense", "tail.fc", params=(cin + 1) * classes, macs=cin * classes),
        ),
        out_channels=classes,
        out_hw=1,
    )
    units.append(tail)

    cuts = (
        1,
        stage_start_unit[cut2[0]] + cut2[1],
        stage_start_unit[cut3[0]] + cut3[1],
    )
    heads = tuple(
        _reduction_head(units[p - 1].out_channels, units[p - 1].out_hw, classes)
        for p in cuts
    )
    return ArchDescriptor(
        name=name,
        input_shape=(3, input_hw, input_hw),
        units=tuple(units),
        cut_points=cuts,
        aux_heads=heads,
        classes=classes,
    )
