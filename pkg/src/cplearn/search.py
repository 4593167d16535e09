"""Tree search over a Model: DFS branch-and-bound and iterative LDS.

Both strategies branch with first-fail variable selection, take value order
from a pluggable heuristic, count a node per applied branching decision and
prune with an exclusive incumbent cut on the (internal, minimized) objective.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

from .cp import Model

# on_leaf callbacks receive (assignment tuple over all variables, iteration)
LeafCallback = Callable[[tuple[int, ...], int], None]


class ValueHeuristic(Protocol):
    def rank_values(self, model: Model, vid: int) -> list[int]:
        """Candidate values of ``vid``, best first; must cover the domain."""
        ...


class RandomValueHeuristic:
    """Fresh random value order at every node, deterministic per seed."""

    def __init__(self, seed: int):
        self._rng = random.Random(seed)

    def rank_values(self, model: Model, vid: int) -> list[int]:
        values = model.variables[vid].domain.values()
        self._rng.shuffle(values)
        return values


class MinValueHeuristic:
    """Ascending value order; handy as a deterministic baseline."""

    def rank_values(self, model: Model, vid: int) -> list[int]:
        return model.variables[vid].domain.values()


@dataclass
class SearchConfig:
    strategy: str = "dfs"  # "dfs" | "ilds"
    node_budget: int | None = None
    value_heuristic: ValueHeuristic = field(default_factory=lambda: RandomValueHeuristic(0))
    incumbent_cuts: bool = True

    def __post_init__(self) -> None:
        if self.strategy not in ("dfs", "ilds"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.node_budget is not None and self.node_budget < 1:
            raise ValueError("node budget must be >= 1 when finite")


@dataclass
class SearchResult:
    best_objective: int | None
    nodes_visited: int
    nodes_at_best: int
    time_to_best: float
    proved_optimal: bool


def first_fail(model: Model) -> int:
    """Unassigned variable of minimum domain size, ties to the lowest id."""
    best = -1
    best_size = -1
    for var in model.variables:
        size = var.domain.size
        if size > 1 and (best < 0 or size < best_size):
            best = var.id
            best_size = size
    if best < 0:
        raise ValueError("first_fail called with all variables assigned")
    return best


class _Walk:
    """Shared mutable state for one search run."""

    def __init__(self, config: SearchConfig, on_leaf: LeafCallback | None):
        self.heuristic = config.value_heuristic
        self.budget = config.node_budget
        self.cuts = config.incumbent_cuts
        self.on_leaf = on_leaf
        self.nodes = 0
        self.best: int | None = None
        self.nodes_at_best = 0
        self.time_at_best = 0.0
        self.exhausted = False
        self.t0 = time.perf_counter()

    def out_of_budget(self) -> bool:
        if self.budget is not None and self.nodes >= self.budget:
            self.exhausted = True
        return self.exhausted

    def leaf(self, model: Model, iteration: int) -> None:
        obj = model.objective.domain.value()
        if self.best is None or obj < self.best:
            self.best = obj
            self.nodes_at_best = self.nodes
            self.time_at_best = time.perf_counter() - self.t0
            if self.cuts:
                model.post_objective_cut(obj)
        if self.on_leaf is not None:
            self.on_leaf(tuple(v.domain.value() for v in model.variables), iteration)

    def result(self, proved: bool) -> SearchResult:
        return SearchResult(self.best, self.nodes, self.nodes_at_best, self.time_at_best, proved)


def _root(model: Model, walk: _Walk) -> str:
    """Run the root fix-point; returns 'failed', 'leaf' or 'open'."""
    model.enqueue_all()
    if not model.fix_point():
        return "failed"
    if model.all_assigned():
        walk.leaf(model, 0)
        return "leaf"
    return "open"


def _dfs(model: Model, walk: _Walk) -> None:
    if model.all_assigned():
        walk.leaf(model, 0)
        return
    vid = first_fail(model)
    for value in walk.heuristic.rank_values(model, vid):
        if walk.out_of_budget():
            return
        marker = model.push_checkpoint()
        model.assign(vid, value)
        walk.nodes += 1
        if model.fix_point():
            _dfs(model, walk)
        model.restore(marker)
        if walk.exhausted:
            return


def dfs_branch_and_bound(
    model: Model, config: SearchConfig, on_leaf: LeafCallback | None = None
) -> SearchResult:
    """Depth-first branch-and-bound; proves optimality when the budget allows."""
    walk = _Walk(config, on_leaf)
    status = _root(model, walk)
    if status == "open":
        _dfs(model, walk)
    return walk.result(not walk.exhausted)


def _ilds_walk(model: Model, walk: _Walk, remaining: int, iteration: int) -> None:
    if model.all_assigned():
        walk.leaf(model, iteration)
        return
    vid = first_fail(model)
    ranked = walk.heuristic.rank_values(model, vid)
    # Any branch other than the top-ranked value costs one discrepancy.
    candidates = ranked if remaining > 0 else ranked[:1]
    for i, value in enumerate(candidates):
        if walk.out_of_budget():
            return
        marker = model.push_checkpoint()
        model.assign(vid, value)
        walk.nodes += 1
        if model.fix_point():
            _ilds_walk(model, walk, remaining if i == 0 else remaining - 1, iteration)
        model.restore(marker)
        if walk.exhausted:
            return


def ilds(model: Model, config: SearchConfig, on_leaf: LeafCallback | None = None) -> SearchResult:
    """Iterative limited discrepancy search.

    Iteration k re-explores from the root every path that deviates from the
    value heuristic's first choice at most k times; k grows until the budget
    runs out or k exceeds the number of branchable variables at the root.
    """
    walk = _Walk(config, on_leaf)
    status = _root(model, walk)
    if status != "open":
        return walk.result(True)
    max_depth = len(model.unassigned_ids())
    completed = False
    for k in range(max_depth + 1):
        _ilds_walk(model, walk, k, k)
        if walk.exhausted:
            break
        if k == max_depth:
            completed = True
    return walk.result(completed)


def search(model: Model, config: SearchConfig, on_leaf: LeafCallback | None = None) -> SearchResult:
    if config.strategy == "dfs":
        return dfs_branch_and_bound(model, config, on_leaf)
    return ilds(model, config, on_leaf)


def greedy_dive(model: Model, heuristic: ValueHeuristic) -> SearchResult:
    """Single heuristic descent without backtracking.

    Visits at most one node per variable; ``best_objective`` is None when the
    dive hits a failure.  ``proved_optimal`` is never claimed.
    """
    walk = _Walk(SearchConfig(incumbent_cuts=False), None)
    model.enqueue_all()
    if not model.fix_point():
        return walk.result(False)
    while not model.all_assigned():
        vid = first_fail(model)
        value = heuristic.rank_values(model, vid)[0]
        model.assign(vid, value)
        walk.nodes += 1
        if not model.fix_point():
            return walk.result(False)
    walk.leaf(model, 0)
    return walk.result(False)


def optimality_gap(best: float, opt: float) -> float:
    """|best - opt| / |opt|, with an opt = 0 guard."""
    if opt == 0:
        return 0.0 if best == 0 else math.inf
    return abs(best - opt) / abs(opt)
