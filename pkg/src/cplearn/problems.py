"""Barabasi-Albert instances and CP models for COL, MIS and MAXCUT.

Internally every model minimizes its objective variable; maximization
problems (MIS, MAXCUT) are negated at build time and converted back exactly
once at the reporting boundary through ``BuiltProblem.external_objective``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .cp import ConstraintKind, Model

_INSTANCE_MAGIC = "bagraph"
_INSTANCE_VERSION = 1


class ProblemKind(str, Enum):
    COL = "col"
    MIS = "mis"
    MAXCUT = "maxcut"


@dataclass(frozen=True)
class GraphInstance:
    node_count: int
    m: int
    seed: int
    edges: tuple[tuple[int, int], ...]  # u < v, sorted, no duplicates


@dataclass(frozen=True)
class SizePreset:
    name: str
    n_lo: int
    n_hi: int
    m: int


SIZE_PRESETS = {
    "small": SizePreset("small", 20, 30, 4),
    "medium": SizePreset("medium", 40, 50, 7),
    "large": SizePreset("large", 80, 100, 15),
}


def generate_ba(n: int, m: int, seed: int) -> GraphInstance:
    """Preferential attachment starting from an m-clique, deterministic per seed.

    Each node >= m attaches to m distinct earlier nodes picked with
    probability proportional to their degree.
    """
    if not 1 <= m < n:
        raise ValueError(f"need 1 <= m < n, got m={m}, n={n}")
    rng = random.Random(seed)
    edges: set[tuple[int, int]] = set()
    # repeated[i] appears once per unit of degree of node i
    repeated: list[int] = []
    for u in range(m):
        for v in range(u + 1, m):
            edges.add((u, v))
            repeated.extend((u, v))
    for source in range(m, n):
        targets: set[int] = set()
        while len(targets) < m:
            if repeated:
                targets.add(rng.choice(repeated))
            else:
                targets.add(rng.randrange(source))  # degenerate m=1 start
        for t in sorted(targets):
            edges.add((t, source))
            repeated.extend((t, source))
    return GraphInstance(n, m, seed, tuple(sorted(edges)))


def save_instance(instance: GraphInstance, path: str | Path, kind: ProblemKind | None = None) -> None:
    """Write the graph; an optional ``problem`` line tags the intended kind so
    solve/bench commands need no extra flag."""
    lines = [
        f"{_INSTANCE_MAGIC} {_INSTANCE_VERSION}",
        f"nodes {instance.node_count}",
        f"m {instance.m}",
        f"seed {instance.seed}",
    ]
    if kind is not None:
        lines.append(f"problem {ProblemKind(kind).value}")
    lines.append(f"edges {len(instance.edges)}")
    lines.extend(f"{u} {v}" for u, v in instance.edges)
    Path(path).write_text("\n".join(lines) + "\n")


def load_instance_kind(path: str | Path) -> tuple[GraphInstance, ProblemKind | None]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].split() != [_INSTANCE_MAGIC, str(_INSTANCE_VERSION)]:
        raise ValueError(f"{path}: not a {_INSTANCE_MAGIC} v{_INSTANCE_VERSION} file")
    fields = {}
    row = 1
    for key in ("nodes", "m", "seed"):
        name, value = lines[row].split()
        if name != key:
            raise ValueError(f"{path}: expected '{key}' on line {row + 1}")
        fields[key] = int(value)
        row += 1
    kind = None
    if lines[row].startswith("problem "):
        kind = ProblemKind(lines[row].split()[1])
        row += 1
    name, value = lines[row].split()
    if name != "edges":
        raise ValueError(f"{path}: expected 'edges' on line {row + 1}")
    count = int(value)
    row += 1
    edges = []
    for line in lines[row : row + count]:
        u, v = map(int, line.split())
        edges.append((u, v))
    if len(edges) != count:
        raise ValueError(f"{path}: edge count mismatch")
    return GraphInstance(fields["nodes"], fields["m"], fields["seed"], tuple(edges)), kind


def load_instance(path: str | Path) -> GraphInstance:
    return load_instance_kind(path)[0]


@dataclass
class BuiltProblem:
    """A Model plus the bookkeeping to report objectives in natural units."""

    model: Model
    kind: ProblemKind
    instance: GraphInstance
    maximize: bool

    def external_objective(self, internal: int) -> int:
        """Internal minimized objective -> colors used / set size / cut size."""
        if self.kind == ProblemKind.COL:
            return internal + 1
        return -internal

    def fresh(self) -> "BuiltProblem":
        """Rebuild an identical unsolved model for this instance."""
        return build_model(self.instance, self.kind)


def build_model(instance: GraphInstance, kind: ProblemKind) -> BuiltProblem:
    kind = ProblemKind(kind)
    n = instance.node_count
    edges = instance.edges
    model = Model()
    if kind == ProblemKind.COL:
        # Minimize the largest color index; colors used = objective + 1.
        for _ in range(n):
            model.add_variable(range(n))
        obj = model.add_variable(range(n), objective=True)
        for u, v in edges:
            model.add_constraint(ConstraintKind.NOT_EQUAL, (u, v))
        for i in range(n):
            model.add_constraint(ConstraintKind.LESS_OR_EQUAL, (i, obj.id))
        witness = {i: i for i in range(n)}
        witness[obj.id] = n - 1
    elif kind == ProblemKind.MIS:
        # x_u + x_v + s_e = 1 per edge forbids adjacent picks; obj = -sum(x).
        for _ in range(n):
            model.add_variable((0, 1))
        slack = {e: model.add_variable((0, 1)).id for e in edges}
        obj = model.add_variable(range(-n, 1), objective=True)
        for u, v in edges:
            model.add_constraint(
                ConstraintKind.SUM_EQUALS, (u, v, slack[(u, v)]), (1, 1, 1, 1)
            )
        model.add_constraint(
            ConstraintKind.SUM_EQUALS,
            tuple(range(n)) + (obj.id,),
            (1,) * n + (1, 0),
        )
        witness = {i: 0 for i in range(n)}
        witness.update({s: 1 for s in slack.values()})
        witness[obj.id] = 0
    else:
        # b_e = 1 iff the edge is cut; obj = -sum(b).
        for _ in range(n):
            model.add_variable((0, 1))
        cut = {e: model.add_variable((0, 1)).id for e in edges}
        obj = model.add_variable(range(-len(edges), 1), objective=True)
        for u, v in edges:
            model.add_constraint(ConstraintKind.REIFIED_NOT_EQUAL, (cut[(u, v)], u, v))
        model.add_constraint(
            ConstraintKind.SUM_EQUALS,
            tuple(cut[e] for e in edges) + (obj.id,),
            (1,) * len(edges) + (1, 0),
        )
        witness = {i: 0 for i in range(n)}
        witness.update({b: 0 for b in cut.values()})
        witness[obj.id] = 0
    _verify_witness(model, witness)
    return BuiltProblem(model, kind, instance, maximize=kind != ProblemKind.COL)


def _verify_witness(model: Model, witness: dict[int, int]) -> None:
    """Cheap feasibility guarantee: the known trivial assignment must satisfy
    every constraint.  A failure here is a modeling bug, not user error."""
    for con in model.constraints:
        values = [witness[vid] for vid in con.scope]
        if not con.check(values):
            raise AssertionError(f"infeasible witness for {con.kind.name} on {con.scope}")
    for vid, value in witness.items():
        if value not in model.variables[vid].domain:
            raise AssertionError(f"witness value {value} outside domain of {vid}")


class InstanceSampler:
    """Deterministic stream of BA instances of one problem kind."""

    def __init__(self, kind: ProblemKind, n_lo: int, n_hi: int, m: int, seed: int):
        if n_hi < n_lo:
            raise ValueError("n_hi must be >= n_lo")
        self.kind = ProblemKind(kind)
        self.n_lo = n_lo
        self.n_hi = n_hi
        self.m = m
        self._rng = random.Random(seed)

    @classmethod
    def from_preset(cls, kind: ProblemKind, preset: str, seed: int) -> "InstanceSampler":
        p = SIZE_PRESETS[preset]
        return cls(kind, p.n_lo, p.n_hi, p.m, seed)

    def sample(self) -> GraphInstance:
        n = self._rng.randint(self.n_lo, self.n_hi)
        return generate_ba(n, self.m, self._rng.randrange(2**31))

    def sample_built(self) -> BuiltProblem:
        return build_model(self.sample(), self.kind)
