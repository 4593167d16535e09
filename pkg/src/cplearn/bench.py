"""Benchmark harness: per-instance method runs, reports, performance profiles.

Methods mirror the evaluation table: OPT (unlimited proving DFS), DFS-Random
(budgeted DFS with random value order), Dive-Learned (one greedy dive, no
budget), ILDS-Learned (budgeted iterative limited-discrepancy search driven
by the learned ranking).  All objectives in reports are on the external scale
(colors used / set size / cut size); gaps are measured against the OPT row of
the same instance.  Wall-clock times are floored to whole seconds so repeated
runs of the same seeds produce byte-identical files.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

from .network import ParameterSet, QPolicy
from .problems import BuiltProblem, ProblemKind, build_model, load_instance_kind
from .search import (
    MinValueHeuristic,
    RandomValueHeuristic,
    SearchConfig,
    greedy_dive,
    optimality_gap,
    search,
)

METHODS = ("OPT", "DFS-Random", "Dive-Learned", "ILDS-Learned")
_CANONICAL = {m.lower(): m for m in METHODS}


def canonical_method(name: str) -> str:
    try:
        return _CANONICAL[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown method {name!r}; choose from {', '.join(METHODS)}") from None


def needs_checkpoint(method: str) -> bool:
    return method in ("Dive-Learned", "ILDS-Learned")


@dataclass
class SolveRow:
    instance: str
    method: str
    objective: int  # external scale; pessimal fallback when nothing was found
    gap: float | None  # None when no reference optimum was available
    nodes: int  # nodes explored up to the best solution
    time_to_best: int  # whole seconds
    budget: int | None


def solve_instance(
    built: BuiltProblem,
    method: str,
    params: ParameterSet | None = None,
    budget: int | None = None,
    seed: int = 0,
    opt_external: int | None = None,
) -> SolveRow:
    """Run one method on a fresh copy of the instance's model."""
    method = canonical_method(method)
    if needs_checkpoint(method) and params is None:
        raise ValueError(f"{method} needs a trained checkpoint")
    fresh = built.fresh()
    model = fresh.model

    if method == "OPT":
        result = search(model, SearchConfig("dfs", None, MinValueHeuristic()))
        if not result.proved_optimal:
            raise AssertionError("unbudgeted DFS must prove optimality")
        budget = None
    elif method == "DFS-Random":
        result = search(model, SearchConfig("dfs", budget, RandomValueHeuristic(seed)))
    elif method == "Dive-Learned":
        result = greedy_dive(model, QPolicy(params))
        budget = None  # a dive is bounded by the variable count, not a budget
    else:
        result = search(model, SearchConfig("ilds", budget, QPolicy(params)))

    if result.best_objective is not None:
        internal = result.best_objective
    else:
        internal = model.objective.domain.initial_values()[-1]
    external = built.external_objective(internal)
    gap = None
    if opt_external is not None:
        gap = optimality_gap(external, opt_external)
    return SolveRow(
        instance="",
        method=method,
        objective=external,
        gap=gap,
        nodes=result.nodes_at_best,
        time_to_best=int(result.time_to_best),
        budget=budget,
    )


def profile_ratio(objective: int, opt: int, maximize: bool) -> float:
    """Performance ratio against the optimum, oriented so 1.0 is optimal and
    ratios grow as solutions get worse."""
    if maximize:
        if objective <= 0:
            return math.inf
        return opt / objective
    if opt == 0:
        return 1.0 if objective == 0 else math.inf
    return objective / opt


def performance_profile(
    ratios_by_method: dict[str, list[float]], taus: list[float]
) -> dict[str, list[float]]:
    """Fraction of instances with ratio <= tau, per method, per tau."""
    out: dict[str, list[float]] = {}
    for method, ratios in ratios_by_method.items():
        n = len(ratios)
        out[method] = [
            sum(1 for r in ratios if r <= tau + 1e-9) / n if n else 0.0 for tau in taus
        ]
    return out


def tau_grid(tau_max: float = 2.0, step: float = 0.05) -> list[float]:
    if tau_max < 1.0 or step <= 0.0:
        raise ValueError("need tau_max >= 1 and step > 0")
    count = int(round((tau_max - 1.0) / step))
    return [round(1.0 + i * step, 6) for i in range(count + 1)]


def _bench_one(args: tuple) -> list[SolveRow]:
    """All requested methods on one instance; OPT (always run) comes first so
    gaps have their reference."""
    path, methods, budgets, checkpoint, seed = args
    instance, kind = load_instance_kind(path)
    if kind is None:
        raise ValueError(f"{path}: instance file does not name a problem kind")
    built = build_model(instance, kind)
    params = ParameterSet.load(checkpoint) if checkpoint else None
    name = Path(path).stem

    opt_row = solve_instance(built, "OPT", seed=seed)
    opt_row.instance = name
    opt_row.gap = 0.0
    rows = [opt_row]
    for method, budget in zip(methods, budgets):
        if method == "OPT":
            continue
        row = solve_instance(built, method, params, budget, seed, opt_row.objective)
        row.instance = name
        rows.append(row)
    return rows


def run_bench(
    instance_paths: list[str | Path],
    methods: list[str],
    budgets: list[int | None],
    checkpoint: str | None,
    seed: int = 0,
) -> tuple[list[SolveRow], ProblemKind]:
    """Solve every instance with every method; deterministic per-instance
    seeding keeps results independent of the worker count."""
    methods = [canonical_method(m) for m in methods]
    if len(budgets) != len(methods):
        raise ValueError("need one budget entry per method")
    if any(needs_checkpoint(m) for m in methods) and checkpoint is None:
        raise ValueError("learned methods need --checkpoint")

    kinds = set()
    for path in instance_paths:
        _, kind = load_instance_kind(path)
        if kind is None:
            raise ValueError(f"{path}: instance file does not name a problem kind")
        kinds.add(kind)
    if len(kinds) != 1:
        raise ValueError("bench needs instances of a single problem kind")

    jobs = [
        (str(path), methods, budgets, checkpoint, seed + i)
        for i, path in enumerate(instance_paths)
    ]
    workers = int(os.environ.get("CPLEARN_WORKERS", "1") or "1")
    if workers > 1 and len(jobs) > 1:
        import multiprocessing

        with multiprocessing.Pool(min(workers, len(jobs))) as pool:
            per_instance = pool.map(_bench_one, jobs)
    else:
        per_instance = [_bench_one(job) for job in jobs]
    rows = [row for group in per_instance for row in group]
    return rows, kinds.pop()


def format_report(rows: list[SolveRow]) -> str:
    """Headered TSV: per-instance rows then one MEAN row per method."""
    lines = ["instance\tmethod\tobjective\tgap\tnodes\ttime_to_best\tbudget"]
    for r in rows:
        budget = "-" if r.budget is None else str(r.budget)
        gap = "-" if r.gap is None else f"{r.gap:.6f}"
        lines.append(
            f"{r.instance}\t{r.method}\t{r.objective}\t{gap}\t{r.nodes}\t{r.time_to_best}\t{budget}"
        )
    by_method: dict[str, list[SolveRow]] = {}
    for r in rows:
        by_method.setdefault(r.method, []).append(r)
    for method, group in by_method.items():
        n = len(group)
        mean_obj = sum(r.objective for r in group) / n
        gaps = [r.gap for r in group if r.gap is not None]
        mean_gap = f"{sum(gaps) / len(gaps):.6f}" if gaps else "-"
        mean_nodes = sum(r.nodes for r in group) / n
        mean_time = sum(r.time_to_best for r in group) / n
        lines.append(
            f"MEAN\t{method}\t{mean_obj:.6f}\t{mean_gap}\t{mean_nodes:.6f}\t{mean_time:.6f}\t-"
        )
    return "\n".join(lines) + "\n"


def format_profile(rows: list[SolveRow], kind: ProblemKind, taus: list[float]) -> str:
    """Plot-ready profile table: one tau column, one column per method."""
    maximize = kind != ProblemKind.COL
    opts = {r.instance: r.objective for r in rows if r.method == "OPT"}
    methods = sorted({r.method for r in rows}, key=METHODS.index)
    ratios: dict[str, list[float]] = {m: [] for m in methods}
    for r in rows:
        ratios[r.method].append(profile_ratio(r.objective, opts[r.instance], maximize))
    profile = performance_profile(ratios, taus)
    lines = ["tau\t" + "\t".join(methods)]
    for i, tau in enumerate(taus):
        vals = "\t".join(f"{profile[m][i]:.6f}" for m in methods)
        lines.append(f"{tau:.6f}\t{vals}")
    return "\n".join(lines) + "\n"
