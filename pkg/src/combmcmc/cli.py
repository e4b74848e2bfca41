"""Command-line runner: ``combmcmc {gradconv,fit-uncond,fit-cond,routing-verify}``.

Curves go to CSV, per-step metrics to JSON lines, reports to JSON.  Each file
carries a manifest (config, its hash, seed and library versions) so a run can
be reproduced exactly; nothing time-dependent is written.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__, experiments
from .pcvrp import load_fixture, load_instance
from .pcvrp.instance import FIXTURES
from .pcvrp.moves import Move
from .pcvrp.verify import verify_instance

# flag name -> (config key, parser)
OVERRIDES = {
    "space": ("space", str),
    "d": ("d", int),
    "kappa": ("kappa", int),
    "system": ("system", str),
    "radii": ("radii", lambda s: [int(v) for v in s.split(",")]),
    "t": ("t", float),
    "K": ("K", int),
    "K0": ("K0", int),
    "C": ("C", int),
    "M": ("M", int),
    "N": ("N", int),
    "n_max": ("n_max", int),
    "init": ("init", str),
    "lr": ("lr", float),
}


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, default=_jsonable)


def manifest(command: str, preset: str | None, configs: dict, seed: int) -> dict:
    return {
        "command": command,
        "preset": preset,
        "seed": seed,
        "config": configs,
        "config_hash": hashlib.sha256(_dumps(configs).encode()).hexdigest(),
        "versions": {
            "combmcmc": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def _configs(args, base: dict, presets: dict) -> dict:
    """Label -> full config, from a preset (or a single default run) plus flag overrides."""
    runs = presets[args.preset] if args.preset else {"run": {}}
    overrides = {}
    for flag, (key, _) in OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None and key in base:
            overrides[key] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
    return {label: experiments.merged(base, {**run, **overrides}) for label, run in runs.items()}


def _write(out: str | None, text: str) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_gradconv(args) -> int:
    configs = _configs(args, experiments.BASE_GRADCONV, experiments.GRADCONV_PRESETS)
    buf = io.StringIO()
    buf.write("# manifest: " + _dumps(manifest("gradconv", args.preset, configs, args.seed)) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", "T", "mse"])
    for label, cfg in configs.items():
        res = experiments.gradient_convergence(cfg)
        for T, mse in zip(res["T"], res["mse"]):
            writer.writerow([label, int(T), repr(float(mse))])
    _write(args.out, buf.getvalue())
    return 0


def _jsonl(command, args, configs, driver) -> str:
    lines = [_dumps({"manifest": manifest(command, args.preset, configs, args.seed)})]
    summary = {}
    for label, cfg in configs.items():
        res = driver(cfg)
        for rec in res["records"]:
            lines.append(_dumps({"label": label, **rec}))
        if "final_by_seed" in res:
            summary[label] = {
                "final_distance_sq": float(np.mean(res["final_by_seed"])),
                "initial_distance_sq": float(np.mean(res["initial_by_seed"])),
                "final_by_seed": res["final_by_seed"],
                "dataset_redraws": res["redraws"],
            }
    if summary:
        lines.append(_dumps({"summary": summary}))
    return "\n".join(lines) + "\n"


def cmd_fit_uncond(args) -> int:
    configs = _configs(args, experiments.BASE_UNCOND, experiments.UNCOND_PRESETS)
    _write(args.out, _jsonl("fit-uncond", args, configs, experiments.unconditional))
    return 0


def cmd_fit_cond(args) -> int:
    configs = _configs(args, experiments.BASE_COND, experiments.COND_PRESETS)
    _write(args.out, _jsonl("fit-cond", args, configs, experiments.conditional))
    return 0


def cmd_routing_verify(args) -> int:
    if args.instance in FIXTURES:
        inst = load_fixture(args.instance)
    else:
        inst = load_instance(args.instance)
    moves = [Move(m) for m in args.moves.split(",")] if args.moves else list(Move)
    seed = 0 if args.seed is None else args.seed
    config = {
        "instance": args.instance, "t": args.t if args.t is not None else 1.0, "beta": args.beta,
        "moves": [m.value for m in moves], "chain_steps": args.steps, "n_draws": args.draws, "seed": seed,
    }
    report = verify_instance(
        inst, t=config["t"], moves=moves, beta=args.beta, chain_steps=args.steps, n_draws=args.draws, seed=seed,
        checks=args.checks.split(",") if args.checks else None,
    )
    report["manifest"] = manifest("routing-verify", None, {"run": config}, seed)
    _write(args.out, json.dumps(report, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return 0 if report["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="combmcmc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, presets):
        p.add_argument("--preset", choices=sorted(presets) if presets else None, help="named experiment")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output file (stdout if omitted)")
        for flag, (_, parse) in OVERRIDES.items():
            p.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=parse, default=None)

    p = sub.add_parser("gradconv", help="error of chain averages against exact marginals (CSV)")
    common(p, experiments.GRADCONV_PRESETS)
    p.set_defaults(func=cmd_gradconv)

    p = sub.add_parser("fit-uncond", help="unconditional parameter recovery (JSON lines)")
    common(p, experiments.UNCOND_PRESETS)
    p.set_defaults(func=cmd_fit_uncond)

    p = sub.add_parser("fit-cond", help="linear conditional model training (JSON lines)")
    common(p, experiments.COND_PRESETS)
    p.set_defaults(func=cmd_fit_cond)

    p = sub.add_parser("routing-verify", help="routing sampler invariant checks (JSON report)")
    p.add_argument("instance", help=f"instance JSON path or bundled fixture ({', '.join(FIXTURES)})")
    p.add_argument("--moves", default=None, help="comma-separated move names (default: all)")
    p.add_argument("--checks", default=None, help="comma-separated subset of checks to run")
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=10**6, help="chain length for the empirical check")
    p.add_argument("--draws", type=int, default=10**5, help="draws per move for the frequency check")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_routing_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
