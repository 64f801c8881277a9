"""Command-line interface: experiment runs, paired comparisons, static
cost reports, model listing, and gradient checks."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import _kernels, accounting, gradcheck, zoo
from .harness import (ExperimentConfig, comparison_table, load_config,
                      resolve_outdir, run_experiment)

GRAD_TOL = 1e-3


def _config_from_args(args) -> ExperimentConfig:
    overrides: dict[str, str] = {}
    for item in args.set or []:
        if "=" not in item:
            raise SystemExit(f"--set expects KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        overrides[key.strip()] = val.strip()
    if args.mode:
        overrides["mode"] = args.mode
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.config:
        return load_config(args.config, overrides)
    cfg = ExperimentConfig()
    if overrides:
        from dataclasses import replace
        from .harness import _coerce
        types = {f: type(getattr(cfg, f)) for f in cfg.__dataclass_fields__}
        cfg = replace(cfg, **{k: _coerce(k, v, types[k]) for k, v in overrides.items()})
    cfg.validate()
    return cfg


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    stem = Path(args.config).stem if args.config else "default"
    outdir = resolve_outdir(args.out, f"{stem}-{cfg.mode.replace(':', '')}-s{cfg.seed}")
    summary = run_experiment(cfg, outdir)
    final = summary["final"]
    print(f"wrote {outdir / 'metrics.csv'} and {outdir / 'summary.json'}")
    print(f"mode={summary['mode']} backend={summary['backend']} "
          f"rounds={summary['rounds_run']} full_acc={final['full_acc']:.4f}")
    return 0


def _cmd_compare(args) -> int:
    results = []
    for path in args.configs:
        cfg = load_config(path)
        stem = Path(path).stem
        outdir = resolve_outdir(args.out and str(Path(args.out) / stem),
                                f"compare-{stem}")
        summary = run_experiment(cfg, outdir)
        results.append((stem, summary))
    print(comparison_table(results))
    return 0


def _report_rows(name: str):
    desc = zoo.descriptor(name)
    p_rep = accounting.params_report(desc)
    f_rep = accounting.flops_report(desc)
    rows = []
    for pr, fr in zip(p_rep["levels"], f_rep["levels"]):
        rows.append({"model": name, "level": pr["level"], "flops": fr["flops"],
                     "params": pr["params"], "param_share": pr["share"],
                     "flops_share": fr["share"]})
    return desc, rows, p_rep["total"], f_rep["total"]


def _emit_report(args, share_key: str, kind: str) -> int:
    desc, rows, p_total, f_total = _report_rows(args.model)
    print(f"model: {args.model}")
    print(f"convention: {accounting.CONVENTION}")
    print(f"{'level':>5} {'flops':>14} {'params':>12} {'share %':>9}")
    for r in rows:
        print(f"{r['level']:>5} {r['flops']:>14,} {r['params']:>12,} "
              f"{r[share_key]:>9.3f}")
    print(f"full model: {f_total:,} flops / {p_total:,} params")
    if kind == "flops":
        rep = accounting.server_compute_report(desc)
        print(f"server-side per sample: fixed level-1 cut {rep['accsfl_level1']:,} "
              f"vs multi-cut mean {rep['fedsplitx']:,.0f}")
    if args.json:
        payload = {
            "model": args.model,
            "convention": accounting.CONVENTION,
            "levels": [{"model": r["model"], "level": r["level"],
                        "flops": r["flops"], "params": r["params"],
                        "share": r[share_key]} for r in rows],
            "total_flops": f_total,
            "total_params": p_total,
        }
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        if args.json == "-":
            sys.stdout.write(text)
        else:
            Path(args.json).write_text(text)
            print(f"json report written to {args.json}")
    return 0


def _cmd_flops(args) -> int:
    return _emit_report(args, "flops_share", "flops")


def _cmd_params(args) -> int:
    return _emit_report(args, "param_share", "params")


def _cmd_models(args) -> int:
    for name in zoo.names():
        e = zoo.entry(name)
        tag = "trainable" if e.trainable else "static"
        print(f"{name:<12} {tag:<10} {e.summary}")
    return 0


def _cmd_gradcheck(args) -> int:
    failed = False
    for name, err in gradcheck.run_all(args.seed):
        ok = err < GRAD_TOL
        failed |= not ok
        print(f"{name:<24} max rel err {err:.3e}  {'PASS' if ok else 'FAIL'}")
    print(f"tolerance {GRAD_TOL:g}; backend {_kernels.active_name()}")
    return 1 if failed else 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fedsplitx",
        description="Federated split learning simulator and cost accountant")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--mode", help="override the protocol, e.g. exc:1")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (else $FEDSPLITX_OUTDIR or ./runs)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="run several configs and tabulate")
    p.add_argument("--configs", nargs="+", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_compare)

    for name, fn in (("flops", _cmd_flops), ("params", _cmd_params)):
        p = sub.add_parser(name, help=f"static {name} report per depth level")
        p.add_argument("--model", required=True)
        p.add_argument("--json", metavar="PATH",
                       help="also write the JSON report ('-' for stdout)")
        p.set_defaults(func=fn)

    p = sub.add_parser("models", help="list registered models")
    p.add_argument("action", nargs="?", default="list", choices=["list"])
    p.set_defaults(func=_cmd_models)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
