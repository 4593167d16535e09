"""Finite-domain constraint store with trailing and a propagation fix-point.

Domains are sparse sets over the integers they were created with: removal,
membership and restoration are O(1), min/max are O(size).  A ``Model`` owns
variables, constraints, the undo trail and the propagation queue.  Search code
interacts with it through ``assign``, ``fix_point``, ``push_checkpoint`` and
``restore``.
"""

from __future__ import annotations

from collections import deque
from enum import IntEnum
from typing import Iterable, Sequence


class ConstraintKind(IntEnum):
    """Fixed constraint vocabulary; the order also fixes the one-hot layout."""

    NOT_EQUAL = 0
    LESS_OR_EQUAL = 1
    SUM_EQUALS = 2
    REIFIED_NOT_EQUAL = 3


class Domain:
    """Sparse-set domain over a fixed initial set of integers.

    The dense array always holds every initial value; the first ``size``
    entries are the current members.  Removing a value swaps it to the end of
    the live prefix, so undoing removals in LIFO order is a size increment.
    """

    __slots__ = ("_dense", "_pos", "_offset", "size", "initial_size")

    def __init__(self, values: Iterable[int]):
        vals = sorted(set(values))
        if not vals:
            raise ValueError("domain must contain at least one value")
        self._offset = vals[0]
        span = vals[-1] - vals[0] + 1
        self._pos = [-1] * span
        self._dense = list(vals)
        for i, v in enumerate(vals):
            self._pos[v - self._offset] = i
        self.size = len(vals)
        self.initial_size = len(vals)

    def __contains__(self, value: int) -> bool:
        idx = value - self._offset
        if idx < 0 or idx >= len(self._pos):
            return False
        p = self._pos[idx]
        return 0 <= p < self.size

    def __len__(self) -> int:
        return self.size

    @property
    def is_fixed(self) -> bool:
        return self.size == 1

    def value(self) -> int:
        if self.size != 1:
            raise ValueError("domain is not a singleton")
        return self._dense[0]

    def min(self) -> int:
        if self.size == 0:
            raise ValueError("empty domain has no min")
        return min(self._dense[: self.size])

    def max(self) -> int:
        if self.size == 0:
            raise ValueError("empty domain has no max")
        return max(self._dense[: self.size])

    def values(self) -> list[int]:
        """Current members in ascending order."""
        return sorted(self._dense[: self.size])

    def initial_values(self) -> list[int]:
        """The members the domain was created with, ascending."""
        return sorted(self._dense)

    def remove(self, value: int) -> None:
        """Drop ``value``; caller is responsible for trailing the removal."""
        p = self._pos[value - self._offset]
        last = self.size - 1
        other = self._dense[last]
        self._dense[p], self._dense[last] = other, value
        self._pos[other - self._offset] = p
        self._pos[value - self._offset] = last
        self.size = last

    def unremove(self, value: int) -> None:
        """Undo the most recent un-undone removal, which must be ``value``."""
        assert self._dense[self.size] == value, "trail replayed out of order"
        self.size += 1


class Variable:
    __slots__ = ("id", "domain", "is_objective")

    def __init__(self, vid: int, domain: Domain, is_objective: bool = False):
        self.id = vid
        self.domain = domain
        self.is_objective = is_objective


class Constraint:
    """A constraint of one of the four fixed kinds.

    scope/params conventions:
      NOT_EQUAL          scope=[x, y], params=()
      LESS_OR_EQUAL      scope=[x, y] meaning x <= y, params=()
      SUM_EQUALS         scope=[x1..xk], params=(c1..ck, K) meaning sum ci*xi = K
      REIFIED_NOT_EQUAL  scope=[b, x, y] meaning b=1 <=> x != y, params=()
    """

    __slots__ = ("kind", "scope", "params")

    def __init__(self, kind: ConstraintKind, scope: Sequence[int], params: Sequence[int] = ()):
        self.kind = ConstraintKind(kind)
        self.scope = tuple(scope)
        self.params = tuple(params)

    def check(self, values: Sequence[int]) -> bool:
        """Satisfaction test; ``values[i]`` is the value of variable ``scope[i]``."""
        k = self.kind
        if k == ConstraintKind.NOT_EQUAL:
            return values[0] != values[1]
        if k == ConstraintKind.LESS_OR_EQUAL:
            return values[0] <= values[1]
        if k == ConstraintKind.SUM_EQUALS:
            coeffs, const = self.params[:-1], self.params[-1]
            return sum(c * v for c, v in zip(coeffs, values)) == const
        if k == ConstraintKind.REIFIED_NOT_EQUAL:
            return values[0] == (1 if values[1] != values[2] else 0)
        raise AssertionError(f"unknown kind {k!r}")


class _Checkpoint:
    __slots__ = ("trail_len", "flags", "assigned_count")

    def __init__(self, trail_len: int, flags: tuple[bool, ...], assigned_count: int):
        self.trail_len = trail_len
        self.flags = flags
        self.assigned_count = assigned_count


class Model:
    """A finite-domain store: variables, constraints, trail, propagation queue.

    Single-threaded; distinct instances are fully independent.  The objective
    sense is always internal minimization (builders negate maximization
    objectives), and ``objective_cut`` is an exclusive upper bound on the
    objective that survives ``restore`` on purpose: branch-and-bound only ever
    tightens it.
    """

    def __init__(self) -> None:
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective_id: int | None = None
        self.trail: list[tuple[int, int]] = []
        self.reduced_flags: list[bool] = []
        self.objective_cut: int | None = None
        self._watchers: list[list[int]] = []
        self._queue: deque[int] = deque()
        self._queued: list[bool] = []
        self._checkpoints: list[_Checkpoint] = []
        self._wiped = False
        self._assigned_count = 0

    # -- construction ------------------------------------------------------

    def add_variable(self, values: Iterable[int], objective: bool = False) -> Variable:
        if objective and self.objective_id is not None:
            raise ValueError("model already has an objective variable")
        var = Variable(len(self.variables), Domain(values), objective)
        self.variables.append(var)
        self._watchers.append([])
        if objective:
            self.objective_id = var.id
        if var.domain.size == 1:
            self._assigned_count += 1
        return var

    def add_constraint(self, kind: ConstraintKind, scope: Sequence[int], params: Sequence[int] = ()) -> int:
        if not scope:
            raise ValueError("constraint scope must be nonempty")
        for vid in scope:
            if not 0 <= vid < len(self.variables):
                raise ValueError(f"constraint references unknown variable {vid}")
        kind = ConstraintKind(kind)
        if kind in (ConstraintKind.NOT_EQUAL, ConstraintKind.LESS_OR_EQUAL) and len(scope) != 2:
            raise ValueError(f"{kind.name} takes exactly two variables")
        if kind == ConstraintKind.REIFIED_NOT_EQUAL:
            if len(scope) != 3:
                raise ValueError("REIFIED_NOT_EQUAL takes [b, x, y]")
            bdom = self.variables[scope[0]].domain
            if not set(bdom.initial_values()) <= {0, 1}:
                raise ValueError("reification variable must be 0/1")
        if kind == ConstraintKind.SUM_EQUALS and len(params) != len(scope) + 1:
            raise ValueError("SUM_EQUALS params must be (c1..ck, K)")
        cid = len(self.constraints)
        self.constraints.append(Constraint(kind, scope, params))
        self.reduced_flags.append(False)
        self._queued.append(False)
        for vid in set(scope):
            self._watchers[vid].append(cid)
        return cid

    @property
    def objective(self) -> Variable:
        if self.objective_id is None:
            raise ValueError("model has no objective variable")
        return self.variables[self.objective_id]

    # -- queries -----------------------------------------------------------

    def all_assigned(self) -> bool:
        return self._assigned_count == len(self.variables)

    def unassigned_ids(self) -> list[int]:
        return [v.id for v in self.variables if v.domain.size > 1]

    def objective_values(self) -> tuple[int, ...]:
        return tuple(self.objective.domain.values())

    # -- mutation ----------------------------------------------------------

    def remove_value(self, vid: int, value: int) -> None:
        """Remove one value, recording it on the trail and waking watchers."""
        dom = self.variables[vid].domain
        old = dom.size
        dom.remove(value)
        self.trail.append((vid, value))
        if old == 2:
            self._assigned_count += 1
        elif old == 1:
            self._assigned_count -= 1
            self._wiped = True
        for cid in self._watchers[vid]:
            if not self._queued[cid]:
                self._queued[cid] = True
                self._queue.append(cid)

    def assign(self, vid: int, value: int) -> None:
        """Reduce a domain to ``{value}`` and enqueue the affected constraints."""
        dom = self.variables[vid].domain
        if value not in dom:
            raise ValueError(f"value {value} not in domain of variable {vid}")
        for other in dom.values():
            if other != value:
                self.remove_value(vid, other)
        for cid in self._watchers[vid]:
            if not self._queued[cid]:
                self._queued[cid] = True
                self._queue.append(cid)

    def enqueue_all(self) -> None:
        for cid in range(len(self.constraints)):
            if not self._queued[cid]:
                self._queued[cid] = True
                self._queue.append(cid)

    def post_objective_cut(self, exclusive_upper: int) -> None:
        """Tighten the incumbent bound; applied inside every later fix_point."""
        if self.objective_cut is None or exclusive_upper < self.objective_cut:
            self.objective_cut = exclusive_upper

    # -- propagation -------------------------------------------------------

    def fix_point(self, order_rng=None) -> bool:
        """Run propagators until quiescence; False iff some domain wiped out.

        Clears and recomputes the per-constraint reduced-domains flags, so the
        flags afterwards mean "this constraint pruned during this call".
        ``order_rng`` (test hook) randomizes which queued constraint runs next.
        """
        for i in range(len(self.reduced_flags)):
            self.reduced_flags[i] = False
        if self.objective_cut is not None and self.objective_id is not None:
            dom = self.objective.domain
            for v in dom.values():
                if v >= self.objective_cut:
                    self.remove_value(self.objective_id, v)
        while self._queue:
            if self._wiped:
                self._queue.clear()
                for i in range(len(self._queued)):
                    self._queued[i] = False
                self._wiped = False
                return False
            if order_rng is None:
                cid = self._queue.popleft()
            else:
                k = order_rng.randrange(len(self._queue))
                self._queue.rotate(-k)
                cid = self._queue.popleft()
                self._queue.rotate(k)
            self._queued[cid] = False
            changed = _PROPAGATORS[self.constraints[cid].kind](self, self.constraints[cid])
            if changed:
                self.reduced_flags[cid] = True
        if self._wiped:
            self._wiped = False
            return False
        return True

    # -- trailing ----------------------------------------------------------

    def push_checkpoint(self) -> int:
        self._checkpoints.append(
            _Checkpoint(len(self.trail), tuple(self.reduced_flags), self._assigned_count)
        )
        return len(self._checkpoints) - 1

    def restore(self, marker: int) -> None:
        """Rewind domains and flags to the state captured by ``marker``."""
        if marker < 0 or marker >= len(self._checkpoints):
            raise ValueError(f"checkpoint marker {marker} is not active")
        cp = self._checkpoints[marker]
        while len(self.trail) > cp.trail_len:
            vid, value = self.trail.pop()
            self.variables[vid].domain.unremove(value)
        self.reduced_flags = list(cp.flags)
        self._assigned_count = cp.assigned_count
        del self._checkpoints[marker:]
        self._queue.clear()
        for i in range(len(self._queued)):
            self._queued[i] = False
        self._wiped = False


# -- propagators -----------------------------------------------------------
#
# Propagators only remove values; wipeout is detected by fix_point through the
# model's wiped flag, so each loop bails out as soon as a domain empties.


def propagate_not_equal(model: Model, con: Constraint) -> bool:
    x, y = con.scope
    return _prune_not_equal(model, x, y)


def _prune_not_equal(model: Model, x: int, y: int) -> bool:
    changed = False
    dx = model.variables[x].domain
    dy = model.variables[y].domain
    if dx.size == 1 and dx.value() in dy:
        model.remove_value(y, dx.value())
        changed = True
    if not model._wiped and dy.size == 1 and dy.value() in dx:
        model.remove_value(x, dy.value())
        changed = True
    return changed


def propagate_less_or_equal(model: Model, con: Constraint) -> bool:
    x, y = con.scope
    dx = model.variables[x].domain
    dy = model.variables[y].domain
    if dx.size == 0 or dy.size == 0:
        return False
    changed = False
    ymax = dy.max()
    for v in dx.values():
        if v > ymax:
            model.remove_value(x, v)
            changed = True
    if model._wiped:
        return changed
    xmin = dx.min()
    for v in dy.values():
        if v < xmin:
            model.remove_value(y, v)
            changed = True
    return changed


def propagate_sum_equals(model: Model, con: Constraint) -> bool:
    """Bounds-consistent filtering of sum ci*xi = K."""
    coeffs, const = con.params[:-1], con.params[-1]
    doms = [model.variables[vid].domain for vid in con.scope]
    if any(d.size == 0 for d in doms):
        return False
    lo = [0] * len(doms)
    hi = [0] * len(doms)
    for i, (c, d) in enumerate(zip(coeffs, doms)):
        a, b = c * d.min(), c * d.max()
        lo[i], hi[i] = (a, b) if a <= b else (b, a)
    total_lo = sum(lo)
    total_hi = sum(hi)
    changed = False
    for i, (c, d, vid) in enumerate(zip(coeffs, doms, con.scope)):
        if c == 0:
            continue
        # c*x must lie in [K - (total_hi - hi[i]), K - (total_lo - lo[i])]
        term_lo = const - (total_hi - hi[i])
        term_hi = const - (total_lo - lo[i])
        if c > 0:
            lb = -((-term_lo) // c)
            ub = term_hi // c
        else:
            lb = -((-term_hi) // c)
            ub = term_lo // c
        for v in d.values():
            if v < lb or v > ub:
                model.remove_value(vid, v)
                changed = True
        if model._wiped:
            return changed
    return changed


def propagate_reified_not_equal(model: Model, con: Constraint) -> bool:
    b, x, y = con.scope
    db = model.variables[b].domain
    dx = model.variables[x].domain
    dy = model.variables[y].domain
    if db.size == 0 or dx.size == 0 or dy.size == 0:
        return False
    changed = False
    if db.size == 1:
        if db.value() == 1:
            return _prune_not_equal(model, x, y)
        # b = 0 forces x = y: arc consistency on equality.
        for v in dx.values():
            if v not in dy:
                model.remove_value(x, v)
                changed = True
        if model._wiped:
            return changed
        for v in dy.values():
            if v not in dx:
                model.remove_value(y, v)
                changed = True
        return changed
    small, large = (dx, dy) if dx.size <= dy.size else (dy, dx)
    disjoint = all(v not in large for v in small.values())
    if disjoint:
        if 0 in db:
            model.remove_value(b, 0)
            changed = True
    elif dx.size == 1 and dy.size == 1 and dx.value() == dy.value():
        if 1 in db:
            model.remove_value(b, 1)
            changed = True
    return changed


_PROPAGATORS = {
    ConstraintKind.NOT_EQUAL: propagate_not_equal,
    ConstraintKind.LESS_OR_EQUAL: propagate_less_or_equal,
    ConstraintKind.SUM_EQUALS: propagate_sum_equals,
    ConstraintKind.REIFIED_NOT_EQUAL: propagate_reified_not_equal,
}
