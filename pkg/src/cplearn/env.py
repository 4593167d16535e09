"""The solver wrapped as an MDP for restart-based dive episodes.

A state is the partially solved model plus the first-fail branching variable.
Stepping assigns the chosen value, runs the fix-point and picks the next
variable; no backtracking ever happens inside an episode.  Rewards follow the
objective-domain pruning scheme, with a sparse score-only baseline for
ablations.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .cp import Model
from .search import first_fail


class TerminalKind(Enum):
    NONE = "none"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"


class RewardScheme(str, Enum):
    PROPAGATION = "propagation"
    SCORE_ONLY = "score"


@dataclass
class EnvState:
    model: Model
    branch_var: int | None
    step_index: int
    terminal: TerminalKind

    @property
    def is_terminal(self) -> bool:
        return self.terminal != TerminalKind.NONE


@dataclass
class StepOutcome:
    reward: float
    next_state: EnvState
    terminal: TerminalKind


def intermediate_reward(
    prev_obj_domain: Sequence[int], new_obj_domain: Sequence[int], initial_obj_size: int
) -> float:
    """Pruning reward on the objective domain for one assign + fix-point.

    Removals above the new maximum count for, removals below the new minimum
    count against, scaled by the objective's root domain size.  An emptied
    domain contributes 0 here; the terminal penalty carries the failure
    signal.
    """
    if initial_obj_size < 1:
        raise ValueError("initial objective domain size must be >= 1")
    prev = set(prev_obj_domain)
    new = set(new_obj_domain)
    if not new <= prev:
        raise ValueError("objective domain may only shrink")
    if not new:
        return 0.0
    lo, hi = min(new), max(new)
    pruned = prev - new
    r_ub = sum(1 for v in pruned if v > hi)
    r_lb = sum(1 for v in pruned if v < lo)
    return (r_ub - r_lb) / initial_obj_size


def terminal_reward(kind: TerminalKind) -> float:
    """-1 on an infeasible leaf, 0 on a feasible one."""
    if kind == TerminalKind.NONE:
        raise ValueError("terminal reward undefined for non-terminal states")
    return -1.0 if kind == TerminalKind.INFEASIBLE else 0.0


def score_terminal_reward(kind: TerminalKind, objective: int | None, d1_min: int, d1_max: int) -> float:
    """Sparse baseline: solution quality at feasible leaves, -1 at failures."""
    if kind == TerminalKind.NONE:
        raise ValueError("terminal reward undefined for non-terminal states")
    if kind == TerminalKind.INFEASIBLE:
        return -1.0
    if d1_max == d1_min:
        return 1.0
    return (d1_max - objective) / (d1_max - d1_min)


def accumulated_reward(rewards: Sequence[float]) -> float:
    """Undiscounted episode return."""
    return float(sum(rewards))


class DiveEnv:
    """Restart-based episode environment over fresh models.

    ``reset`` takes ownership of an unsolved Model; each episode needs a new
    one.  D1 statistics (the objective domain right after the root fix-point)
    are kept for reward normalization.
    """

    def __init__(self, scheme: RewardScheme = RewardScheme.PROPAGATION):
        self.scheme = RewardScheme(scheme)
        self.initial_obj_size = 0
        self.d1_min = 0
        self.d1_max = 0
        self.last_terminal = TerminalKind.NONE

    def reset(self, model: Model) -> EnvState:
        self.last_terminal = TerminalKind.NONE
        model.enqueue_all()
        if not model.fix_point():
            self.last_terminal = TerminalKind.INFEASIBLE
            return EnvState(model, None, 1, TerminalKind.INFEASIBLE)
        d1 = model.objective_values()
        self.initial_obj_size = len(d1)
        self.d1_min = d1[0]
        self.d1_max = d1[-1]
        if model.all_assigned():
            self.last_terminal = TerminalKind.FEASIBLE
            return EnvState(model, None, 1, TerminalKind.FEASIBLE)
        return EnvState(model, first_fail(model), 1, TerminalKind.NONE)

    def step(self, state: EnvState, value: int) -> StepOutcome:
        if state.is_terminal:
            raise ValueError("cannot step a terminal state")
        model = state.model
        prev_obj = model.objective_values()
        model.assign(state.branch_var, value)
        ok = model.fix_point()
        if not ok:
            self.last_terminal = TerminalKind.INFEASIBLE
            next_state = EnvState(model, None, state.step_index + 1, TerminalKind.INFEASIBLE)
            # zero intermediate term on wipeout, then the failure penalty
            return StepOutcome(-1.0, next_state, TerminalKind.INFEASIBLE)
        if self.scheme == RewardScheme.PROPAGATION:
            reward = intermediate_reward(prev_obj, model.objective_values(), self.initial_obj_size)
        else:
            reward = 0.0
        if model.all_assigned():
            kind = TerminalKind.FEASIBLE
            self.last_terminal = kind
            if self.scheme == RewardScheme.PROPAGATION:
                reward += terminal_reward(kind)
            else:
                reward += score_terminal_reward(
                    kind, model.objective.domain.value(), self.d1_min, self.d1_max
                )
            next_state = EnvState(model, None, state.step_index + 1, kind)
            return StepOutcome(reward, next_state, kind)
        next_state = EnvState(model, first_fail(model), state.step_index + 1, TerminalKind.NONE)
        return StepOutcome(reward, next_state, TerminalKind.NONE)
