"""Command-line front end: instance generation, training, solving, benching.

Data goes to stdout or to files; diagnostics go to stderr as a single line
and every failure exits nonzero.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import bench as bench_mod
from .dqn import TrainConfig, save_curve, train
from .env import RewardScheme
from .network import NetConfig, ParameterSet
from .problems import (
    SIZE_PRESETS,
    InstanceSampler,
    ProblemKind,
    build_model,
    generate_ba,
    load_instance_kind,
    save_instance,
)


class _Parser(argparse.ArgumentParser):
    """argparse with single-line errors instead of usage dumps."""

    def error(self, message):
        print(f"error: {message}", file=sys.stderr)
        sys.exit(2)


def _from_fields(cls, data: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ValueError(f"unknown {where} field: {unknown[0]}")
    return cls(**data)


def load_train_config(path: str) -> TrainConfig:
    """JSON file with TrainConfig fields; ``episodes`` is mandatory, a ``net``
    sub-object maps onto the network configuration."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    if "episodes" not in data:
        raise ValueError("config missing required field: episodes")
    data = dict(data)
    net = data.pop("net", None)
    if net is not None:
        data["net"] = _from_fields(NetConfig, net, "net config")
    if "reward_scheme" in data:
        data["reward_scheme"] = RewardScheme(data["reward_scheme"])
    return _from_fields(TrainConfig, data, "config")


def cmd_gen(args) -> int:
    kind = ProblemKind(args.problem)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        instance = generate_ba(args.n, args.m, args.seed + i)
        save_instance(instance, out / f"{kind.value}-{i:03d}.txt", kind)
    return 0


def cmd_train(args) -> int:
    kind = ProblemKind(args.problem)
    config = load_train_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.size_preset not in SIZE_PRESETS:
        raise ValueError(f"unknown size preset {args.size_preset!r}")
    sampler = InstanceSampler.from_preset(kind, args.size_preset, config.seed + 1)
    result = train(config, sampler)
    result.best_params.save(args.out_checkpoint)
    if args.curve:
        save_curve(result.curve, args.curve)
    return 0


def cmd_solve(args) -> int:
    instance, kind = load_instance_kind(args.instance)
    if kind is None:
        raise ValueError(f"{args.instance}: instance file does not name a problem kind")
    method = bench_mod.canonical_method(args.method)
    params = None
    if args.checkpoint:
        params = ParameterSet.load(args.checkpoint)
    elif bench_mod.needs_checkpoint(method):
        raise ValueError(f"{method} needs --checkpoint")
    built = build_model(instance, kind)
    row = bench_mod.solve_instance(built, method, params, args.budget, args.seed, args.opt)
    fields = [str(row.objective)]
    if args.opt is not None:
        fields.append(f"{row.gap:.6f}")
    fields.extend([str(row.nodes), str(row.time_to_best)])
    print("\t".join(fields))
    return 0


def _parse_budgets(spec: str | None, methods: list[str]) -> list[int | None]:
    if spec is None:
        return [None] * len(methods)
    parts = [p.strip() for p in spec.split(",")]
    if len(parts) == 1 and len(methods) > 1:
        parts = parts * len(methods)
    if len(parts) != len(methods):
        raise ValueError("need one --budgets entry per method (or a single shared one)")
    out: list[int | None] = []
    for p in parts:
        if p in ("-", ""):
            out.append(None)
        else:
            budget = int(p)
            if budget < 1:
                raise ValueError("budgets must be >= 1")
            out.append(budget)
    return out


def cmd_bench(args) -> int:
    paths = sorted(Path(args.instances_dir).glob("*.txt"))
    if not paths:
        raise ValueError(f"no instance files in {args.instances_dir}")
    methods = [bench_mod.canonical_method(s) for s in args.methods.split(",")]
    budgets = _parse_budgets(args.budgets, methods)
    rows, kind = bench_mod.run_bench(paths, methods, budgets, args.checkpoint, args.seed)
    Path(args.out).write_text(bench_mod.format_report(rows))
    taus = bench_mod.tau_grid(args.tau_max, args.tau_step)
    profile_path = args.out_profile or args.out + ".profile"
    Path(profile_path).write_text(bench_mod.format_profile(rows, kind, taus))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="cplearn", description="Learned value ordering for CP search.")
    sub = parser.add_subparsers(dest="command", required=True)
    kinds = [k.value for k in ProblemKind]

    g = sub.add_parser("gen", help="generate instance files")
    g.add_argument("--problem", required=True, choices=kinds)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--count", type=int, default=20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a value-ordering network")
    t.add_argument("--problem", required=True, choices=kinds)
    t.add_argument("--size-preset", default="small", choices=sorted(SIZE_PRESETS))
    t.add_argument("--config", help="JSON training configuration")
    t.add_argument("--seed", type=int, help="overrides the config seed")
    t.add_argument("--out-checkpoint", required=True)
    t.add_argument("--curve", help="write the training curve here")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("solve", help="solve one instance with one method")
    s.add_argument("--instance", required=True)
    s.add_argument("--method", required=True)
    s.add_argument("--checkpoint")
    s.add_argument("--budget", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--opt", type=int, help="known optimum, enables the gap column")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run the full method comparison")
    b.add_argument("--instances-dir", required=True)
    b.add_argument("--methods", default=",".join(bench_mod.METHODS))
    b.add_argument("--budgets")
    b.add_argument("--checkpoint")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.add_argument("--out-profile")
    b.add_argument("--tau-max", type=float, default=2.0)
    b.add_argument("--tau-step", type=float, default=0.05)
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
