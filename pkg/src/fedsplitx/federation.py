"""Round orchestration: client sampling, parameter distribution, decoupled
client/server training, shell-wise aggregation, and the baseline protocols.

The global model is kept as M+1 parameter shells delimited by the partition
points (shell m holds the blocks between cuts m-1 and m plus aux head m;
shell M+1 holds the tail blocks plus the final head). Every round
participant holds each shell exactly once, on whichever side of its cut the
shell falls. Client-side copies are merged at the fed server, server-side
copies at the main server, and the two pools combine per shell into the new
global; shells nobody held keep their previous values.

Aggregation treats a shell's block parameters and its head as separate
contributor pools because ablation modes ship blocks without the head.

Traffic is logged once per transfer, on the client entity (clients are an
endpoint of every transfer in this topology); the server entities carry
compute counters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .accounting import CostLedger, TrafficEvent, record_traffic
from .data import DatasetShard
from .nn import SgdConfig
from .split import (FullModel, SmashedBatch, SplitModel,
                    client_collaborative_loss, server_loss, split)

# rng stream tags so sampling, client and server draws never collide
_TAG_SAMPLE, _TAG_CLIENT, _TAG_SERVER = 1, 2, 3

MAIN_SERVER = "main server"
FED_SERVER = "fed server"


def client_entity(client_id: int) -> str:
    return f"client {client_id}"


@dataclass(frozen=True)
class ClientProfile:
    client_id: int
    level: int
    num_samples: int

    def __post_init__(self):
        if self.level < 1:
            raise ValueError(f"depth level must be >= 1, got {self.level}")
        if self.num_samples < 1:
            raise ValueError(f"client {self.client_id} has no samples")


@dataclass(frozen=True)
class RoundPlan:
    round_index: int
    selected: tuple[int, ...]


def sample_clients(round_index: int, num_clients: int, fraction: float,
                   seed: int, eligible: list[int] | None = None) -> RoundPlan:
    """Uniform sample without replacement, deterministic in (seed, round)."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    pool = sorted(range(num_clients) if eligible is None else eligible)
    if not pool:
        raise ValueError("no eligible clients")
    count = min(max(1, round(fraction * num_clients)), len(pool))
    rng = np.random.default_rng([seed, round_index, _TAG_SAMPLE])
    picks = rng.choice(len(pool), size=count, replace=False)
    return RoundPlan(round_index, tuple(sorted(pool[i] for i in picks)))


@dataclass(frozen=True)
class ModeSpec:
    """Per-protocol knobs for the round loop.

    client_heads: which aux heads enter the client's local loss and its
    uploaded update ("all", "cut" = only the head at its cut, "none").
    """

    name: str
    min_level: int | None = None
    forced_level: int | None = None
    client_heads: str = "all"
    server_training: bool = True
    server_aux_heads: bool = True
    gradient_return: bool = False


_LEVELED_MODES = {"exc", "accsfl", "vanilla-sfl"}


def parse_mode(text: str) -> ModeSpec:
    """Parse a mode string like "fedsplitx", "exc:1", "vanilla-sfl:2"."""
    name, _, lvl_text = text.strip().partition(":")
    name = name.lower()
    if name == "fedsplitx-no-auxnet":
        name = "no-auxnet"
    level = None
    if lvl_text:
        level = int(lvl_text)
        if level < 1:
            raise ValueError(f"mode level must be >= 1: {text!r}")
    if name in _LEVELED_MODES:
        if level is None:
            raise ValueError(f"mode {name!r} needs a level, e.g. {name}:1")
    elif level is not None:
        raise ValueError(f"mode {name!r} does not take a level")
    if name == "fedsplitx":
        return ModeSpec("fedsplitx")
    if name == "no-auxnet":
        return ModeSpec("no-auxnet", client_heads="cut", server_aux_heads=False)
    if name == "depthfl":
        return ModeSpec("depthfl", server_training=False, server_aux_heads=False)
    if name == "exc":
        return ModeSpec("exc", min_level=level, forced_level=level,
                        client_heads="cut", server_training=False,
                        server_aux_heads=False)
    if name == "accsfl":
        return ModeSpec("accsfl", min_level=level, forced_level=level,
                        client_heads="cut", server_aux_heads=False)
    if name == "vanilla-sfl":
        return ModeSpec("vanilla-sfl", min_level=level, forced_level=level,
                        client_heads="none", server_aux_heads=False,
                        gradient_return=True)
    raise ValueError(f"unknown mode {text!r}")


# ---------------------------------------------------------------------------
# Parameter shells


class ParamSegments:
    """Shell-indexed view over a full model's parameters."""

    def __init__(self, model: FullModel):
        self.model = model
        self.num_shells = model.plan.num_levels + 1

    def parts(self, shell: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
        return self.model.shell_parts(shell)

    def load(self, pooled: dict[tuple[int, str], list[np.ndarray]]) -> None:
        """Copy merged values into the live global arrays."""
        for (shell, part), arrays in pooled.items():
            blocks, head = self.parts(shell)
            target = blocks if part == "blocks" else head
            if len(target) != len(arrays):
                raise ValueError(f"shell {shell} {part}: array count mismatch")
            for dst, src in zip(target, arrays):
                if dst.shape != src.shape:
                    raise ValueError(f"shell {shell} {part}: shape mismatch "
                                     f"{dst.shape} vs {src.shape}")
                np.copyto(dst, src)

    def snapshot(self) -> dict[int, list[np.ndarray]]:
        out = {}
        for m in range(1, self.num_shells + 1):
            blocks, head = self.parts(m)
            out[m] = [a.copy() for a in blocks + head]
        return out


@dataclass
class ShellPayload:
    blocks: list[np.ndarray]
    head: list[np.ndarray] | None = None


@dataclass
class ShellUpdate:
    client_id: int
    level: int
    side: str  # "client" | "server"
    shells: dict[int, ShellPayload]

    def expected_shells(self, num_levels: int) -> set[int]:
        if self.side == "client":
            return set(range(1, self.level + 1))
        return set(range(self.level + 1, num_levels + 2))


@dataclass(frozen=True)
class AggregationWeights:
    """Contributor bookkeeping for one round's participants."""

    num_levels: int
    levels: tuple[int, ...]

    @property
    def participants(self) -> int:
        return len(self.levels)

    def client_count(self, shell: int) -> int:
        """Participants whose client side holds the shell (d_i >= m)."""
        return sum(1 for d in self.levels if d >= shell)

    def server_count(self, shell: int) -> int:
        """Participants whose server-side copy holds the shell."""
        if shell == self.num_levels + 1:
            return self.participants
        return sum(1 for d in self.levels if d < shell)

    def below(self, shell: int) -> int:
        """K_{1:m}: participants whose level is below the shell index."""
        return sum(1 for d in self.levels if d < shell)


@dataclass
class ShellAverage:
    mean: list[np.ndarray]        # float32
    total: list[np.ndarray]       # float64 running sums (exact pooling)
    count: int


def heteroavg(updates: list[ShellUpdate], num_levels: int,
              weights: AggregationWeights | None = None
              ) -> dict[tuple[int, str], ShellAverage]:
    """Average each shell over the participants that submitted it.

    Every update must contain exactly the shells its level and side imply.
    Block parameters and heads average over their own contributor pools.
    The result is independent of update order.
    """
    sums: dict[tuple[int, str], ShellAverage] = {}
    for up in sorted(updates, key=lambda u: u.client_id):
        want = up.expected_shells(num_levels)
        got = set(up.shells)
        if got != want:
            raise ValueError(
                f"update from client {up.client_id} (level {up.level}, "
                f"{up.side} side) has shells {sorted(got)}, expected {sorted(want)}"
            )
        for shell in sorted(up.shells):
            payload = up.shells[shell]
            for part, arrays in (("blocks", payload.blocks), ("head", payload.head)):
                if arrays is None:
                    continue
                key = (shell, part)
                if key not in sums:
                    sums[key] = ShellAverage(
                        mean=[], total=[a.astype(np.float64) for a in arrays], count=1)
                else:
                    acc = sums[key]
                    if len(acc.total) != len(arrays):
                        raise ValueError(f"shell {shell} {part}: array count mismatch")
                    for t, a in zip(acc.total, arrays):
                        if t.shape != a.shape:
                            raise ValueError(
                                f"shell {shell} {part}: shape mismatch "
                                f"{t.shape} vs {a.shape}")
                        t += a
                    acc.count += 1
    for key, acc in sums.items():
        acc.mean = [(t / acc.count).astype(np.float32) for t in acc.total]
    if weights is not None and updates:
        side = updates[0].side
        for (shell, part), acc in sums.items():
            if part != "blocks":
                continue
            side_count = (weights.client_count(shell) if side == "client"
                          else weights.server_count(shell))
            if acc.count != side_count:
                raise ValueError(
                    f"shell {shell}: {acc.count} contributors, "
                    f"bookkeeping says {side_count}")
    return sums


def pool_sides(*merged: dict[tuple[int, str], ShellAverage]
               ) -> dict[tuple[int, str], list[np.ndarray]]:
    """Combine per-side shell averages into one pool per shell component."""
    keys = set()
    for m in merged:
        keys |= set(m)
    pooled: dict[tuple[int, str], list[np.ndarray]] = {}
    for key in keys:
        totals: list[np.ndarray] | None = None
        count = 0
        for side in merged:
            if key not in side:
                continue
            acc = side[key]
            count += acc.count
            if totals is None:
                totals = [t.copy() for t in acc.total]
            else:
                for t, a in zip(totals, acc.total):
                    t += a
        pooled[key] = [(t / count).astype(np.float32) for t in totals]
    return pooled


# ---------------------------------------------------------------------------
# Per-client work items


def distribute(segments: ParamSegments, profile: ClientProfile,
               forced_level: int | None = None) -> SplitModel:
    """Copy the level-d_k split out of the global model for one client."""
    level = forced_level if forced_level is not None else profile.level
    return split(segments.model, level, copy=True)


def get_smashed_data(sm: SplitModel, X: np.ndarray, y: np.ndarray,
                     client_id: int, round_index: int) -> SmashedBatch:
    """Cut activations of all local samples under the round-start weights."""
    acts = nn.forward(sm.client_blocks, X)
    return SmashedBatch(acts[-1], np.ascontiguousarray(y, dtype=np.int64),
                        client_id, sm.level, round_index)


def _epoch_order(n: int, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    # a full-batch step is order-canonical; shuffling would only perturb
    # float summation order
    return np.arange(n) if batch_size >= n else rng.permutation(n)


def client_update(sm: SplitModel, X: np.ndarray, y: np.ndarray,
                  cfg: SgdConfig, rng: np.random.Generator,
                  head_indices: list[int] | None = None) -> float:
    """Local epochs of minibatch SGD on the client-side collaborative loss.

    Consumes no server messages. Returns the mean step loss.
    """
    n = len(y)
    layers = sm.client_layers()
    losses = []
    for _ in range(cfg.local_epochs):
        perm = _epoch_order(n, cfg.batch_size, rng)
        for lo in range(0, n, cfg.batch_size):
            sel = perm[lo:lo + cfg.batch_size]
            loss, _ = client_collaborative_loss(sm, X[sel], y[sel], head_indices)
            nn.sgd_step(layers, cfg)
            losses.append(loss)
    return float(np.mean(losses))


def server_update(sm: SplitModel, smashed: SmashedBatch, cfg: SgdConfig,
                  rng: np.random.Generator, include_aux: bool = True) -> float:
    """Local epochs of minibatch SGD on the fixed smashed batch."""
    n = len(smashed.labels)
    layers = sm.server_layers()
    losses = []
    for _ in range(cfg.local_epochs):
        perm = _epoch_order(n, cfg.batch_size, rng)
        for lo in range(0, n, cfg.batch_size):
            sel = perm[lo:lo + cfg.batch_size]
            batch = SmashedBatch(smashed.activations[sel], smashed.labels[sel],
                                 smashed.client_id, smashed.level,
                                 smashed.round_index)
            loss, _, _ = server_loss(sm, batch, include_aux=include_aux)
            nn.sgd_step(layers, cfg)
            losses.append(loss)
    return float(np.mean(losses))


def vanilla_sfl_update(sm: SplitModel, X: np.ndarray, y: np.ndarray,
                       cfg: SgdConfig, rng: np.random.Generator,
                       ledger: CostLedger, round_index: int, client_id: int
                       ) -> float:
    """Gradient-returning split learning: every step ships the cut
    activations up and the cut gradient back, and the client backprops it."""
    n = len(y)
    entity = client_entity(client_id)
    client_layers = sm.client_blocks
    server_layers = sm.server_layers()
    losses = []
    for _ in range(cfg.local_epochs):
        perm = _epoch_order(n, cfg.batch_size, rng)
        for lo in range(0, n, cfg.batch_size):
            sel = perm[lo:lo + cfg.batch_size]
            acts = nn.forward(client_layers, X[sel])
            smashed = SmashedBatch(acts[-1], y[sel], client_id, sm.level,
                                   round_index)
            record_traffic(ledger, TrafficEvent(
                round_index, entity, "smashed_up",
                smashed.activations.size + len(sel)))
            loss, _, sgrad = server_loss(sm, smashed, include_aux=False)
            record_traffic(ledger, TrafficEvent(
                round_index, entity, "grad_return", sgrad.size))
            nn.backward(client_layers, acts, sgrad)
            nn.sgd_step(client_layers, cfg)
            nn.sgd_step(server_layers, cfg)
            losses.append(loss)
    return float(np.mean(losses))


# ---------------------------------------------------------------------------
# The round loop


@dataclass
class RoundStats:
    round_index: int
    selected: tuple[int, ...]
    weights: AggregationWeights
    # level -> {client_id: loss}; keyed so means do not depend on the order
    # clients were processed in
    client_losses: dict[int, dict[int, float]] = field(default_factory=dict)
    server_losses: dict[int, float] = field(default_factory=dict)

    @staticmethod
    def _ordered_mean(by_client: dict[int, float]) -> float | None:
        if not by_client:
            return None
        vals = [by_client[cid] for cid in sorted(by_client)]
        return float(np.mean(vals))

    def mean_client_loss(self, level: int) -> float | None:
        return self._ordered_mean(self.client_losses.get(level, {}))

    def mean_server_loss(self) -> float | None:
        return self._ordered_mean(self.server_losses)


@dataclass
class Federation:
    """Global training state driven round by round by the orchestrator."""

    model: FullModel
    profiles: list[ClientProfile]
    shards: dict[int, DatasetShard]
    mode: ModeSpec
    sgd: SgdConfig
    fraction: float
    seed: int
    ledger: CostLedger = field(default_factory=CostLedger)
    prefix_flops: dict[int, int] = field(default_factory=dict)
    full_flops: int = 0

    def __post_init__(self):
        self.segments = ParamSegments(self.model)
        self.plan = self.model.plan

    def eligible_ids(self) -> list[int]:
        lo = self.mode.min_level
        return [p.client_id for p in self.profiles
                if lo is None or p.level >= lo]

    def profile(self, client_id: int) -> ClientProfile:
        for p in self.profiles:
            if p.client_id == client_id:
                return p
        raise KeyError(client_id)


def _client_param_elements(sm: SplitModel, head_policy: str) -> int:
    total = 0
    for m in range(1, sm.level + 1):
        blocks, head = sm.client_shell_parts(m)
        total += sum(a.size for a in blocks)
        if head_policy == "all" or (head_policy == "cut" and m == sm.level):
            total += sum(a.size for a in head)
    return total


def _suffix_flops(fed: Federation, level: int) -> int:
    if not fed.full_flops:
        return 0
    return fed.full_flops - fed.prefix_flops.get(level, 0)


def run_round(fed: Federation, round_index: int,
              order: list[int] | None = None,
              capture: dict | None = None) -> RoundStats:
    """One communication round: sample, distribute, train both sides,
    aggregate shell-wise, install the merged global."""
    mode = fed.mode
    plan = sample_clients(round_index, len(fed.profiles), fed.fraction,
                          fed.seed, fed.eligible_ids())
    if order is None:
        order = list(plan.selected)
    elif sorted(order) != sorted(plan.selected):
        raise ValueError("order must permute the sampled participant set")

    num_levels = fed.plan.num_levels
    client_updates: list[ShellUpdate] = []
    server_updates: list[ShellUpdate] = []
    levels_by_id: dict[int, int] = {}
    stats_losses: dict[int, dict[int, float]] = {}
    server_losses: dict[int, float] = {}

    for cid in order:
        try:
            _participant_work(fed, round_index, cid, client_updates,
                              server_updates, levels_by_id, stats_losses,
                              server_losses)
        except Exception as exc:
            raise RuntimeError(
                f"round {round_index}, client {cid}: {exc}") from exc

    weights = AggregationWeights(
        num_levels, tuple(levels_by_id[cid] for cid in sorted(levels_by_id)))
    merged_client = heteroavg(client_updates, num_levels, weights)
    merged_server = heteroavg(server_updates, num_levels, weights) if server_updates else {}
    fed.segments.load(pool_sides(merged_client, merged_server))

    if capture is not None:
        capture["plan"] = plan
        capture["client_updates"] = client_updates
        capture["server_updates"] = server_updates
        capture["merged_client"] = merged_client
        capture["merged_server"] = merged_server

    return RoundStats(round_index, plan.selected, weights,
                      stats_losses, server_losses)


def _participant_work(fed: Federation, round_index: int, cid: int,
                      client_updates: list[ShellUpdate],
                      server_updates: list[ShellUpdate],
                      levels_by_id: dict[int, int],
                      stats_losses: dict[int, dict[int, float]],
                      server_losses: dict[int, float]) -> None:
    """Everything one participant does in a round; independent per client."""
    mode = fed.mode
    num_levels = fed.plan.num_levels
    profile = fed.profile(cid)
    shard = fed.shards[cid]
    eff_level = mode.forced_level if mode.forced_level is not None else profile.level
    levels_by_id[cid] = eff_level
    entity = client_entity(cid)
    n = len(shard)
    pf = fed.prefix_flops.get(eff_level, 0)
    sf = _suffix_flops(fed, eff_level)

    sm = distribute(fed.segments, profile, mode.forced_level)
    down = _client_param_elements(sm, mode.client_heads)
    record_traffic(fed.ledger, TrafficEvent(round_index, entity,
                                            "param_down", down))

    smashed = None
    if mode.server_training and not mode.gradient_return:
        smashed = get_smashed_data(sm, shard.X, shard.y, cid, round_index)
        fed.ledger.add_compute(round_index, entity, flops_forward=n * pf)
        record_traffic(fed.ledger, TrafficEvent(
            round_index, entity, "smashed_up",
            smashed.activations.size + n))

    if mode.client_heads != "none":
        head_indices = None if mode.client_heads == "all" else [eff_level - 1]
        rng_c = np.random.default_rng([fed.seed, round_index, _TAG_CLIENT, cid])
        loss = client_update(sm, shard.X, shard.y, fed.sgd, rng_c,
                             head_indices)
        stats_losses.setdefault(profile.level, {})[cid] = loss
        fed.ledger.add_compute(
            round_index, entity,
            flops_forward=fed.sgd.local_epochs * n * pf,
            flops_backward=2 * fed.sgd.local_epochs * n * pf)

    if mode.gradient_return:
        rng_s = np.random.default_rng([fed.seed, round_index, _TAG_SERVER, cid])
        sloss = vanilla_sfl_update(sm, shard.X, shard.y, fed.sgd, rng_s,
                                   fed.ledger, round_index, cid)
        server_losses[cid] = sloss
        fed.ledger.add_compute(
            round_index, entity,
            flops_forward=fed.sgd.local_epochs * n * pf,
            flops_backward=2 * fed.sgd.local_epochs * n * pf)
        fed.ledger.add_compute(
            round_index, MAIN_SERVER,
            flops_forward=fed.sgd.local_epochs * n * sf,
            flops_backward=2 * fed.sgd.local_epochs * n * sf)
    elif mode.server_training:
        rng_s = np.random.default_rng([fed.seed, round_index, _TAG_SERVER, cid])
        sloss = server_update(sm, smashed, fed.sgd, rng_s,
                              include_aux=mode.server_aux_heads)
        server_losses[cid] = sloss
        fed.ledger.add_compute(
            round_index, MAIN_SERVER,
            flops_forward=fed.sgd.local_epochs * n * sf,
            flops_backward=2 * fed.sgd.local_epochs * n * sf)

    record_traffic(fed.ledger, TrafficEvent(round_index, entity,
                                            "param_up", down))

    cshells: dict[int, ShellPayload] = {}
    for m in range(1, eff_level + 1):
        blocks, head = sm.client_shell_parts(m)
        with_head = (mode.client_heads == "all"
                     or (mode.client_heads == "cut" and m == eff_level))
        cshells[m] = ShellPayload(blocks, head if with_head else None)
    client_updates.append(ShellUpdate(cid, eff_level, "client", cshells))

    if mode.server_training:
        sshells: dict[int, ShellPayload] = {}
        for m in range(eff_level + 1, num_levels + 2):
            blocks, head = sm.server_shell_parts(m)
            with_head = mode.server_aux_heads or m == num_levels + 1
            sshells[m] = ShellPayload(blocks, head if with_head else None)
        server_updates.append(ShellUpdate(cid, eff_level, "server", sshells))
