"""Dive-episode environment and reward definitions."""

import random

import pytest

from helpers import build_csp, random_csp
from cplearn.env import (
    DiveEnv,
    RewardScheme,
    TerminalKind,
    accumulated_reward,
    intermediate_reward,
    score_terminal_reward,
    terminal_reward,
)

TOL = 1e-12


def sum_model():
    """obj = x + y with x, y binary; root fix-point leaves D(obj) = {0,1,2}."""
    return build_csp(
        [[0, 1], [0, 1], list(range(6))],
        [("SUM_EQUALS", (0, 1, 2), (1, 1, -1, 0))],
        2,
    )


class TestIntermediateReward:
    def test_upper_prunings_reward(self):
        got = intermediate_reward(list(range(10)), list(range(6)), 10)
        assert abs(got - 0.4) < TOL

    def test_lower_prunings_penalty(self):
        got = intermediate_reward([3, 4, 5, 6, 7], [5, 6, 7], 10)
        assert abs(got - (-0.2)) < TOL

    def test_no_change_is_zero(self):
        assert intermediate_reward([3, 4, 5], [3, 4, 5], 10) == 0.0

    def test_interior_prunings_count_zero(self):
        assert intermediate_reward([0, 2, 4, 6], [0, 6], 10) == 0.0

    def test_mixed_prunings(self):
        # prev {0..5}, new {2,3}: two below, two above.
        assert abs(intermediate_reward(range(6), [2, 3], 6)) < TOL

    def test_wiped_domain_contributes_zero(self):
        assert intermediate_reward([1, 2, 3], [], 5) == 0.0

    def test_non_subset_rejected(self):
        with pytest.raises(ValueError):
            intermediate_reward([1, 2], [1, 3], 5)

    def test_bad_normalizer_rejected(self):
        with pytest.raises(ValueError):
            intermediate_reward([1], [1], 0)

    def test_bounded_on_random_shrinks(self):
        rng = random.Random(3)
        for _ in range(200):
            size = rng.randint(1, 12)
            prev = sorted(rng.sample(range(-10, 30), size))
            keep = rng.randint(0, size)
            new = sorted(rng.sample(prev, keep))
            r = intermediate_reward(prev, new, size)
            assert -1.0 <= r <= 1.0


class TestTerminalRewards:
    def test_infeasible_is_minus_one(self):
        assert terminal_reward(TerminalKind.INFEASIBLE) == -1.0

    def test_feasible_is_zero(self):
        assert terminal_reward(TerminalKind.FEASIBLE) == 0.0

    def test_non_terminal_rejected(self):
        with pytest.raises(ValueError):
            terminal_reward(TerminalKind.NONE)
        with pytest.raises(ValueError):
            score_terminal_reward(TerminalKind.NONE, 0, 0, 1)

    def test_score_scale(self):
        assert score_terminal_reward(TerminalKind.FEASIBLE, 2, 2, 8) == 1.0
        assert score_terminal_reward(TerminalKind.FEASIBLE, 8, 2, 8) == 0.0
        assert score_terminal_reward(TerminalKind.FEASIBLE, 5, 2, 8) == 0.5

    def test_score_degenerate_domain_guard(self):
        assert score_terminal_reward(TerminalKind.FEASIBLE, 4, 4, 4) == 1.0

    def test_score_infeasible(self):
        assert score_terminal_reward(TerminalKind.INFEASIBLE, None, 0, 9) == -1.0

    def test_accumulated_is_plain_sum(self):
        assert accumulated_reward([0.4, -0.2, -1.0]) == pytest.approx(-0.8)
        assert accumulated_reward([]) == 0.0


class TestReset:
    def test_triangle_coloring_root(self):
        m = build_csp(
            [[0, 1, 2], [0, 1, 2], [0, 1, 2], [0, 1, 2]],
            [
                ("NOT_EQUAL", (0, 1), ()),
                ("NOT_EQUAL", (1, 2), ()),
                ("NOT_EQUAL", (0, 2), ()),
                ("LESS_OR_EQUAL", (0, 3), ()),
                ("LESS_OR_EQUAL", (1, 3), ()),
                ("LESS_OR_EQUAL", (2, 3), ()),
            ],
            3,
        )
        env = DiveEnv()
        state = env.reset(m)
        assert state.terminal == TerminalKind.NONE
        assert state.branch_var == 0
        assert env.initial_obj_size == 3
        assert (env.d1_min, env.d1_max) == (0, 2)

    def test_already_solved_model(self):
        env = DiveEnv()
        state = env.reset(build_csp([[4], [1]], [], 0))
        assert state.terminal == TerminalKind.FEASIBLE
        assert env.last_terminal == TerminalKind.FEASIBLE

    def test_contradictory_model(self):
        env = DiveEnv()
        m = build_csp([[1], [1]], [("NOT_EQUAL", (0, 1), ())], 0)
        state = env.reset(m)
        assert state.terminal == TerminalKind.INFEASIBLE
        assert env.last_terminal == TerminalKind.INFEASIBLE


class TestStep:
    def test_manual_dive_rewards(self):
        env = DiveEnv()
        state = env.reset(sum_model())
        assert state.branch_var == 0
        out = env.step(state, 1)
        # D(obj): {0,1,2} -> {1,2}; one value pruned below the new minimum.
        assert abs(out.reward - (-1.0 / 3.0)) < TOL
        assert out.terminal == TerminalKind.NONE
        out2 = env.step(out.next_state, 0)
        # D(obj): {1,2} -> {1}; one pruned above, feasible terminal adds 0.
        assert abs(out2.reward - (1.0 / 3.0)) < TOL
        assert out2.terminal == TerminalKind.FEASIBLE
        assert env.last_terminal == TerminalKind.FEASIBLE

    def test_wipeout_step_reward(self):
        m = build_csp(
            [[1, 2], [1, 2]],
            [("LESS_OR_EQUAL", (1, 0), ()), ("NOT_EQUAL", (0, 1), ())],
            0,
        )
        env = DiveEnv()
        state = env.reset(m)
        out = env.step(state, 1)  # forces y <= 1, y != 1: wiped out
        assert out.reward == -1.0
        assert out.terminal == TerminalKind.INFEASIBLE
        assert env.last_terminal == TerminalKind.INFEASIBLE

    def test_step_terminal_state_rejected(self):
        env = DiveEnv()
        state = env.reset(build_csp([[4]], [], 0))
        with pytest.raises(ValueError):
            env.step(state, 4)

    def test_no_domain_change_zero_reward(self):
        m = build_csp([[0, 1], [0, 1], [0, 1, 2, 3]], [], 2)
        env = DiveEnv()
        state = env.reset(m)
        out = env.step(state, 0)
        assert out.reward == 0.0
        assert out.terminal == TerminalKind.NONE

    def test_score_scheme_sparse(self):
        env = DiveEnv(RewardScheme.SCORE_ONLY)
        state = env.reset(sum_model())
        out = env.step(state, 1)
        assert out.reward == 0.0
        out2 = env.step(out.next_state, 0)
        # objective 1 on D1 bounds [0, 2]: (2 - 1) / 2.
        assert abs(out2.reward - 0.5) < TOL
        assert out2.terminal == TerminalKind.FEASIBLE

    def test_score_scheme_failure(self):
        m = build_csp(
            [[1, 2], [1, 2]],
            [("LESS_OR_EQUAL", (1, 0), ()), ("NOT_EQUAL", (0, 1), ())],
            0,
        )
        env = DiveEnv(RewardScheme.SCORE_ONLY)
        out = env.step(env.reset(m), 1)
        assert out.reward == -1.0


def run_random_dive(spec, seed, scheme=RewardScheme.PROPAGATION):
    """Dive with uniformly random in-domain choices; returns trace info."""
    rng = random.Random(seed)
    env = DiveEnv(scheme)
    model = build_csp(*spec)
    state = env.reset(model)
    rewards = []
    interval = True
    choices = []
    while not state.is_terminal:
        dom = list(model.objective_values())
        interval = interval and dom == list(range(dom[0], dom[-1] + 1))
        value = rng.choice(model.variables[state.branch_var].domain.values())
        choices.append((state.branch_var, value))
        out = env.step(state, value)
        rewards.append(out.reward)
        state = out.next_state
    if state.terminal == TerminalKind.FEASIBLE:
        dom = model.objective_values()
        interval = interval and len(dom) == 1
        objective = dom[0]
    else:
        objective = None
    return {
        "rewards": rewards,
        "terminal": state.terminal,
        "objective": objective,
        "interval": interval,
        "choices": choices,
        "d1": (env.d1_min, env.d1_max, env.initial_obj_size),
    }


class TestDiveProperties:
    def test_telescoping_identity_on_feasible_interval_dives(self):
        rng = random.Random(2024)
        checked = 0
        total = 0
        while total < 500:
            total += 1
            spec = random_csp(rng, max_vars=5, max_dom=6)
            trace = run_random_dive(spec, seed=total)
            for r in trace["rewards"]:
                assert -1.0 - TOL <= r <= 1.0 + TOL
            if trace["terminal"] != TerminalKind.FEASIBLE or not trace["interval"]:
                continue
            if not trace["rewards"]:
                continue
            d1_min, d1_max, d1_size = trace["d1"]
            z = trace["objective"]
            expected = (max(d1_max - z, 0) - max(z - d1_min, 0)) / d1_size
            assert abs(sum(trace["rewards"]) - expected) < TOL
            checked += 1
        assert checked >= 100, f"only {checked} qualifying dives"

    def test_infeasible_dive_return(self):
        rng = random.Random(9)
        seen = 0
        for trial in range(300):
            spec = random_csp(rng, max_vars=5, max_dom=6)
            trace = run_random_dive(spec, seed=trial)
            if trace["terminal"] != TerminalKind.INFEASIBLE or not trace["rewards"]:
                continue
            # Failing step contributes a flat -1.
            assert trace["rewards"][-1] == -1.0
            seen += 1
        assert seen >= 5

    def test_dive_determinism(self):
        rng = random.Random(31)
        for trial in range(30):
            spec = random_csp(rng, max_vars=5, max_dom=5)
            first = run_random_dive(spec, seed=trial)
            env = DiveEnv()
            model = build_csp(*spec)
            state = env.reset(model)
            replayed = []
            for vid, value in first["choices"]:
                assert state.branch_var == vid
                out = env.step(state, value)
                replayed.append(out.reward)
                state = out.next_state
            assert replayed == first["rewards"]
            assert state.terminal == first["terminal"]

    def test_schemes_rank_dominating_dives_alike(self):
        env_p = DiveEnv(RewardScheme.PROPAGATION)
        env_s = DiveEnv(RewardScheme.SCORE_ONLY)

        def dive(env, values):
            model = sum_model()
            state = env.reset(model)
            rewards = []
            for v in values:
                out = env.step(state, v)
                rewards.append(out.reward)
                state = out.next_state
            assert state.terminal == TerminalKind.FEASIBLE
            return sum(rewards), model.objective_values()[0]

        better_p, z_better = dive(env_p, [0, 0])
        worse_p, z_worse = dive(env_p, [1, 1])
        better_s, _ = dive(env_s, [0, 0])
        worse_s, _ = dive(env_s, [1, 1])
        assert z_better < z_worse
        assert better_p > worse_p
        assert better_s > worse_s
