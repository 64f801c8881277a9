"""Experiment harness: configuration, dataset assembly, the round loop with
periodic held-out evaluation, and metrics persistence (CSV + JSON summary).
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels, accounting, data, nn, zoo
from .federation import (Federation, ClientProfile, ModeSpec, parse_mode,
                         run_round, sample_clients)
from .split import FullModel, ensemble_predict_batch

SCHEMA_VERSION = 1

OUTDIR_ENV = "FEDSPLITX_OUTDIR"


@dataclass(frozen=True)
class ExperimentConfig:
    rounds: int = 200
    clients: int = 10
    fraction: float = 0.5
    epochs: int = 1
    batch: int = 32
    learning_rate: float = 0.1
    levels: int = 3
    level_counts: tuple[int, ...] = (3, 3, 4)
    model: str = "toy-mlp-s"
    dataset: str = "spirals"
    samples: int = 2000
    classes: int = 2
    noise: float = 0.08
    cifar_path: str = ""
    cifar_limit: int = 0
    seed: int = 0
    mode: str = "fedsplitx"
    eval_interval: int = 10
    test_fraction: float = 0.2

    def validate(self) -> None:
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if len(self.level_counts) != self.levels:
            raise ValueError(
                f"level_counts {self.level_counts} does not list {self.levels} levels")
        if sum(self.level_counts) != self.clients:
            raise ValueError(
                f"level_counts {self.level_counts} must sum to {self.clients} clients")
        if any(c < 0 for c in self.level_counts):
            raise ValueError("level counts must be non-negative")
        if not 0 < self.fraction <= 1:
            raise ValueError("fraction must be in (0, 1]")
        if self.eval_interval < 1:
            raise ValueError("eval_interval must be >= 1")
        # constructing SgdConfig checks lr/batch/epochs
        nn.SgdConfig(self.learning_rate, self.batch, self.epochs)
        parse_mode(self.mode)


_TUPLE_FIELDS = {"level_counts"}


def _coerce(name: str, text: str, target_type) -> object:
    text = text.strip()
    if name in _TUPLE_FIELDS:
        return tuple(int(v) for v in text.split(",") if v.strip())
    if target_type is int:
        return int(text)
    if target_type is float:
        return float(text)
    return text


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Flat key=value lines; '#' starts a comment; unknown keys are errors."""
    cfg = base or ExperimentConfig()
    types = {f: type(getattr(cfg, f)) for f in cfg.__dataclass_fields__}
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        updates[key] = _coerce(key, val, types[key])
    return replace(cfg, **updates)


def load_config(path: str | Path, overrides: dict[str, str] | None = None
                ) -> ExperimentConfig:
    cfg = parse_config_text(Path(path).read_text())
    if overrides:
        types = {f: type(getattr(cfg, f)) for f in cfg.__dataclass_fields__}
        coerced = {}
        for key, val in overrides.items():
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            coerced[key] = _coerce(key, str(val), types[key])
        cfg = replace(cfg, **coerced)
    cfg.validate()
    return cfg


def assign_levels(level_counts: tuple[int, ...]) -> list[int]:
    """Client levels in id order: the first counts[0] clients get level 1, ..."""
    levels = []
    for lvl, count in enumerate(level_counts, start=1):
        levels.extend([lvl] * count)
    return levels


@dataclass
class EvalResult:
    full_acc: float
    client_acc: dict[int, float] = field(default_factory=dict)


def _accuracy(pred: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(pred == y))


def evaluate(model: FullModel, mode: ModeSpec, X: np.ndarray, y: np.ndarray
             ) -> EvalResult:
    """Held-out accuracy under each protocol's own inference rule.

    Multi-head protocols ensemble per-head softmax outputs; single-head ones
    read their one classifier. Client-side accuracy at level m uses the
    blocks before the level-m cut plus whatever heads the protocol keeps
    there.
    """
    plan = model.plan
    acts = nn.forward(model.blocks, X)
    aux_logits = [model.aux_heads[i].logits(acts[plan.cut_points[i]])
                  for i in range(plan.num_levels)]
    final_logits = model.final_head.logits(acts[-1])

    name = mode.name
    client_acc: dict[int, float] = {}
    if name in ("fedsplitx", "depthfl"):
        for lv in range(1, plan.num_levels + 1):
            pred = ensemble_predict_batch(aux_logits[:lv])
            client_acc[lv] = _accuracy(pred, y)
        if name == "fedsplitx":
            full_pred = ensemble_predict_batch(aux_logits + [final_logits])
        else:
            full_pred = ensemble_predict_batch(aux_logits)
    elif name == "no-auxnet":
        # each cut head exists (trained by its level cohort) and ensembles
        # with the final head, mirroring the multi-head inference rule
        for lv in range(1, plan.num_levels + 1):
            pred = ensemble_predict_batch([aux_logits[lv - 1]])
            client_acc[lv] = _accuracy(pred, y)
        full_pred = ensemble_predict_batch(aux_logits + [final_logits])
    elif name == "exc":
        lv = mode.forced_level
        pred = ensemble_predict_batch([aux_logits[lv - 1]])
        client_acc[lv] = _accuracy(pred, y)
        full_pred = pred
    elif name == "accsfl":
        lv = mode.forced_level
        pred = ensemble_predict_batch([aux_logits[lv - 1]])
        client_acc[lv] = _accuracy(pred, y)
        full_pred = ensemble_predict_batch([final_logits])
    elif name == "vanilla-sfl":
        full_pred = ensemble_predict_batch([final_logits])
    else:
        raise ValueError(f"no evaluation rule for mode {name!r}")
    return EvalResult(_accuracy(full_pred, y), client_acc)


def csv_columns(num_levels: int) -> list[str]:
    cols = ["round", "full_acc"]
    cols += [f"client_acc_l{m}" for m in range(1, num_levels + 1)]
    cols += [f"client_loss_l{m}" for m in range(1, num_levels + 1)]
    cols += ["server_loss", "bytes_up", "bytes_down", "bytes_grad_return",
             "flops_forward", "flops_backward"]
    return cols


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_experiment(cfg: ExperimentConfig, outdir: str | Path,
                   order_seed: int | None = None) -> dict:
    """Run the configured protocol for cfg.rounds rounds.

    Writes metrics.csv (one row per evaluation) and summary.json under
    outdir and returns the summary. order_seed permutes the intra-round
    client processing order; results must not depend on it.
    """
    cfg.validate()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    if cfg.dataset in ("spirals", "blobs"):
        ds = data.make_synthetic(cfg.dataset, cfg.samples, cfg.classes,
                                 cfg.noise, cfg.seed)
    elif cfg.dataset == "cifar":
        ds = data.load_cifar_binary(cfg.cifar_path,
                                    cfg.cifar_limit or None)
    else:
        raise ValueError(f"unknown dataset {cfg.dataset!r}")

    train, test = data.stratified_split(ds, cfg.test_fraction, cfg.seed)
    shards = data.iid_partition(train, cfg.clients, cfg.seed)
    levels = assign_levels(cfg.level_counts)
    profiles = [ClientProfile(s.owner, levels[s.owner], len(s))
                for s in shards]

    input_dim = ds.X.shape[1]
    model, plan = zoo.build(cfg.model, ds.classes, cfg.seed, input_dim)
    desc = zoo.descriptor(cfg.model, ds.classes, input_dim)
    prefix_flops = {lv: accounting.count_flops(desc, lv)
                    for lv in range(1, plan.num_levels + 1)}
    mode = parse_mode(cfg.mode)
    if mode.forced_level is not None and mode.forced_level > plan.num_levels:
        raise ValueError(f"mode level {mode.forced_level} exceeds "
                         f"{plan.num_levels} partition points")
    if cfg.levels != plan.num_levels:
        raise ValueError(f"config asks for {cfg.levels} levels but model "
                         f"{cfg.model!r} has {plan.num_levels} cut points")

    fed = Federation(model=model, profiles=profiles,
                     shards={s.owner: s for s in shards}, mode=mode,
                     sgd=nn.SgdConfig(cfg.learning_rate, cfg.batch, cfg.epochs),
                     fraction=cfg.fraction, seed=cfg.seed,
                     prefix_flops=prefix_flops,
                     full_flops=accounting.count_flops(desc, None))

    num_levels = plan.num_levels
    rows: list[dict] = []

    def snapshot(round_count: int, stats=None) -> dict:
        ev = evaluate(model, mode, test.X, test.y)
        totals = fed.ledger.totals()
        row = {"round": round_count, "full_acc": ev.full_acc}
        for m in range(1, num_levels + 1):
            row[f"client_acc_l{m}"] = ev.client_acc.get(m)
            row[f"client_loss_l{m}"] = (stats.mean_client_loss(m)
                                        if stats is not None else None)
        row["server_loss"] = stats.mean_server_loss() if stats is not None else None
        row["bytes_up"] = totals.bytes_up
        row["bytes_down"] = totals.bytes_down
        row["bytes_grad_return"] = totals.bytes_gradient_return
        row["flops_forward"] = totals.flops_forward
        row["flops_backward"] = totals.flops_backward
        return row

    rows.append(snapshot(0))
    for t in range(cfg.rounds):
        order = None
        if order_seed is not None:
            shuffler = np.random.default_rng([order_seed, t, 99])
            sel = sample_clients(t, cfg.clients, cfg.fraction, cfg.seed,
                                 fed.eligible_ids()).selected
            order = [int(c) for c in shuffler.permutation(list(sel))]
        stats = run_round(fed, t, order=order)
        if (t + 1) % cfg.eval_interval == 0 or t == cfg.rounds - 1:
            rows.append(snapshot(t + 1, stats))

    cols = csv_columns(num_levels)
    csv_path = outdir / "metrics.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in cols])

    final = rows[-1]
    summary = {
        "schema_version": SCHEMA_VERSION,
        "backend": _kernels.active_name(),
        "config": {**asdict(cfg), "level_counts": list(cfg.level_counts)},
        "mode": mode.name,
        "rounds_run": cfg.rounds,
        "final": {k: final[k] for k in cols},
        "metrics_csv": csv_path.name,
        "accounting_convention": accounting.CONVENTION,
    }
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def run_baseline(cfg: ExperimentConfig, mode: str, outdir: str | Path,
                 order_seed: int | None = None) -> dict:
    """Run a baseline protocol (e.g. "exc:1", "depthfl", "accsfl:2",
    "no-auxnet", "vanilla-sfl:1") under an otherwise identical config."""
    return run_experiment(replace(cfg, mode=mode), outdir, order_seed)


def resolve_outdir(flag_value: str | None, default_name: str) -> Path:
    """Output directory priority: CLI flag, then $FEDSPLITX_OUTDIR, then ./runs."""
    if flag_value:
        return Path(flag_value)
    env = os.environ.get(OUTDIR_ENV, "").strip()
    base = Path(env) if env else Path("runs")
    return base / default_name


def comparison_table(results: list[tuple[str, dict]]) -> str:
    """Plain-text table of final metrics for several finished runs."""
    header = f"{'run':<28} {'mode':<14} {'seed':>4} {'full_acc':>9} " \
             f"{'client_accs':<24} {'MB_up':>8} {'MB_down':>8}"
    lines = [header, "-" * len(header)]
    for name, summary in results:
        final = summary["final"]
        accs = []
        for key in sorted(k for k in final if k.startswith("client_acc_l")):
            v = final[key]
            accs.append("-" if v is None else f"{v:.3f}")
        lines.append(
            f"{name:<28} {summary['mode']:<14} {summary['config']['seed']:>4} "
            f"{final['full_acc']:>9.4f} {'/'.join(accs):<24} "
            f"{final['bytes_up'] / 1e6:>8.2f} {final['bytes_down'] / 1e6:>8.2f}"
        )
    return "\n".join(lines)
