"""Double deep Q-learning over restart-based dive episodes.

Each episode is one dive on a freshly sampled instance: no backtracking, one
transition per branching decision.  Transitions go to a uniform ring replay
buffer; after warmup one gradient step runs per environment step, with the
double-DQN target y = r + Q_target(s', argmax_a Q_online(s', a)) and no
discounting (dives are bounded by the variable count, so the undiscounted
return is finite).

Training periodically runs greedy dives on a fixed held-out validation set
and keeps the parameter snapshot with the best mean objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .autodiff import Adam, Tensor
from .cp import Model
from .encoder import TripartiteGraph, encode
from .env import DiveEnv, RewardScheme, TerminalKind, intermediate_reward, score_terminal_reward, terminal_reward
from .network import NetConfig, ParameterSet, QPolicy, q_forward, q_values
from .problems import InstanceSampler
from .search import first_fail, greedy_dive


@dataclass
class Transition:
    observation: TripartiteGraph
    action_value: int
    reward: float
    next_observation: TripartiteGraph | None
    terminal: bool

    def __post_init__(self):
        if self.terminal and self.next_observation is not None:
            raise ValueError("terminal transitions carry no next observation")


class ReplayBuffer:
    """Fixed-capacity ring with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, transition: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if batch_size > len(self._items):
            raise ValueError("not enough transitions to sample a batch")
        idx = rng.choice(len(self._items), size=batch_size, replace=False)
        return [self._items[i] for i in idx]


@dataclass
class TrainConfig:
    episodes: int = 1500
    capacity: int = 50_000
    warmup: int = 1_000
    batch_size: int = 32
    target_sync: int = 500
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 30_000
    lr: float = 1e-3
    seed: int = 0
    reward_scheme: RewardScheme = RewardScheme.PROPAGATION
    episode_style: str = "dive"  # "dive" | "dfs" (ablation)
    dfs_node_cap: int = 200
    validation_every: int = 1_000
    validation_size: int = 20
    net: NetConfig = field(default_factory=NetConfig)

    def __post_init__(self):
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise ValueError("need 0 <= eps_end <= eps_start <= 1")
        if self.episode_style not in ("dive", "dfs"):
            raise ValueError(f"unknown episode style {self.episode_style!r}")
        if self.warmup < self.batch_size:
            raise ValueError("warmup must cover at least one batch")
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")


def epsilon_at(config: TrainConfig, step: int) -> float:
    """Linear decay from eps_start to eps_end over eps_decay_steps, then flat."""
    if config.eps_decay_steps <= 0 or step >= config.eps_decay_steps:
        return config.eps_end
    frac = step / config.eps_decay_steps
    return config.eps_start + (config.eps_end - config.eps_start) * frac


@dataclass
class EpisodeStats:
    terminal: TerminalKind
    steps: int
    episode_return: float
    objective: int | None  # internal scale; None unless a feasible leaf was reached


def _pick(obs: TripartiteGraph, params: ParameterSet, eps: float, rng: np.random.Generator) -> int:
    values = obs.candidate_values()
    if eps > 0.0 and rng.random() < eps:
        return int(values[int(rng.integers(len(values)))])
    return int(values[int(np.argmax(q_values(params, obs)))])


def dive_transitions(
    model: Model,
    env: DiveEnv,
    params: ParameterSet,
    eps_fn: Callable[[int], float],
    rng: np.random.Generator,
    step_base: int = 0,
) -> Iterator[Transition]:
    """One epsilon-greedy dive, yielding transitions as they happen.

    Yielding lazily lets the trainer interleave a gradient step per
    environment step, so the policy the dive follows can change mid-episode.
    ``eps_fn`` maps the global environment-step counter to an exploration
    rate.
    """
    state = env.reset(model)
    if state.is_terminal:
        return
    obs = encode(model, state.branch_var)
    k = 0
    while True:
        action = _pick(obs, params, eps_fn(step_base + k), rng)
        outcome = env.step(state, action)
        state = outcome.next_state
        k += 1
        if state.is_terminal:
            yield Transition(obs, action, outcome.reward, None, True)
            return
        nxt = encode(model, state.branch_var)
        yield Transition(obs, action, outcome.reward, nxt, False)
        obs = nxt


def _dfs_transitions(
    model: Model,
    env: DiveEnv,
    params: ParameterSet,
    epsilon: float,
    rng: np.random.Generator,
    node_cap: int,
) -> list[Transition]:
    """Ablation episode style: harvest transitions along a capped DFS.

    Value order per node is the greedy Q ranking, or a random permutation
    with probability epsilon.  Rewards are computed exactly as in the dive
    environment; sibling subtrees each contribute their own transitions.
    """
    state = env.reset(model)
    if state.is_terminal:
        return []
    out: list[Transition] = []
    nodes = 0

    def walk() -> None:
        nonlocal nodes
        vid = first_fail(model)
        obs = encode(model, vid)
        values = obs.candidate_values()
        if epsilon > 0.0 and rng.random() < epsilon:
            order = rng.permutation(len(values))
        else:
            order = np.argsort(-q_values(params, obs), kind="stable")
        for i in order:
            if nodes >= node_cap:
                return
            value = int(values[i])
            marker = model.push_checkpoint()
            prev_obj = model.objective_values()
            model.assign(vid, value)
            nodes += 1
            if not model.fix_point():
                out.append(Transition(obs, value, -1.0, None, True))
            else:
                if env.scheme == RewardScheme.PROPAGATION:
                    r = intermediate_reward(prev_obj, model.objective_values(), env.initial_obj_size)
                else:
                    r = 0.0
                if model.all_assigned():
                    kind = TerminalKind.FEASIBLE
                    if env.scheme == RewardScheme.PROPAGATION:
                        r += terminal_reward(kind)
                    else:
                        r += score_terminal_reward(
                            kind, model.objective.domain.value(), env.d1_min, env.d1_max
                        )
                    out.append(Transition(obs, value, r, None, True))
                else:
                    out.append(Transition(obs, value, r, encode(model, first_fail(model)), False))
                    walk()
            model.restore(marker)
            if nodes >= node_cap:
                return

    walk()
    return out


def run_episode(
    built_model: Model,
    params: ParameterSet,
    env: DiveEnv,
    epsilon: float,
    rng: np.random.Generator,
    style: str = "dive",
    dfs_node_cap: int = 200,
) -> tuple[list[Transition], EpisodeStats]:
    """Collect one full episode (no learning)."""
    if style == "dive":
        transitions = list(dive_transitions(built_model, env, params, lambda _: epsilon, rng))
    else:
        transitions = _dfs_transitions(built_model, env, params, epsilon, rng, dfs_node_cap)
    objective = None
    if style == "dive" and env.last_terminal == TerminalKind.FEASIBLE:
        objective = built_model.objective.domain.value()
    stats = EpisodeStats(
        terminal=env.last_terminal,
        steps=len(transitions),
        episode_return=float(sum(t.reward for t in transitions)),
        objective=objective,
    )
    return transitions, stats


def double_dqn_target(transition: Transition, online: ParameterSet, target: ParameterSet) -> float:
    """y = r for terminals, else r + Q_target(s', argmax_a Q_online(s', a)).

    Undiscounted on purpose; the action set at s' is whatever was branchable
    in the stored next observation.
    """
    if transition.terminal:
        return transition.reward
    nxt = transition.next_observation
    best = int(np.argmax(q_values(online, nxt)))
    return transition.reward + float(q_values(target, nxt)[best])


def _action_index(obs: TripartiteGraph, action_value: int) -> int:
    values = obs.candidate_values()
    i = int(np.searchsorted(values, action_value))
    if i >= len(values) or values[i] != action_value:
        raise ValueError(f"action {action_value} was not a candidate")
    return i


def train_step(
    buffer: ReplayBuffer,
    online: ParameterSet,
    target: ParameterSet,
    optimizer: Adam,
    batch_size: int,
    rng: np.random.Generator,
) -> float:
    """One uniform batch, squared-error loss against double-DQN targets,
    one Adam step on the online net.  Returns the mean batch loss."""
    batch = buffer.sample(batch_size, rng)
    targets = [double_dqn_target(t, online, target) for t in batch]
    optimizer.zero_grad()
    total = None
    for t, y in zip(batch, targets):
        q = q_forward(online, t.observation)
        pred = q.take_rows([_action_index(t.observation, t.action_value)])
        err = (pred - Tensor([[y]])).square()
        total = err if total is None else total + err
    loss = total.scale(1.0 / batch_size)
    loss.backward()
    optimizer.step()
    return loss.item()


@dataclass
class CurveRow:
    step: int
    episode: int
    mean_validation_objective: float  # external (reported) scale
    loss: float
    epsilon: float


@dataclass
class TrainResult:
    params: ParameterSet  # online net at the end of training
    best_params: ParameterSet  # snapshot with the best validation mean
    curve: list[CurveRow]
    env_steps: int
    episodes: int


def _validation_dive(built, params: ParameterSet) -> int:
    """Internal objective of one greedy dive on a fresh copy; a failed dive
    scores the worst value of the objective's root domain."""
    fresh = built.fresh()
    pessimal = fresh.model.objective.domain.initial_values()[-1]
    result = greedy_dive(fresh.model, QPolicy(params))
    return result.best_objective if result.best_objective is not None else pessimal


def evaluate_validation(validation_set, params: ParameterSet) -> tuple[float, float]:
    """(mean external objective, mean internal objective) over the set."""
    internals = [_validation_dive(b, params) for b in validation_set]
    ext = [b.external_objective(i) for b, i in zip(validation_set, internals)]
    return float(np.mean(ext)), float(np.mean(internals))


def train(config: TrainConfig, sampler: InstanceSampler) -> TrainResult:
    """Full training loop; deterministic for a fixed config and sampler seed."""
    rng = np.random.default_rng(config.seed)
    online = ParameterSet.init(config.net, seed=config.seed)
    target = online.copy()
    optimizer = Adam(online.tensors, lr=config.lr)
    buffer = ReplayBuffer(config.capacity)
    env = DiveEnv(config.reward_scheme)

    # The first validation_size draws are held out; training never sees them.
    validation_set = [sampler.sample_built() for _ in range(config.validation_size)]

    curve: list[CurveRow] = []
    losses_since_row: list[float] = []
    env_steps = 0
    grad_steps = 0
    best_internal = None
    best_params = online.copy()
    next_validation = config.validation_every

    def record(episode: int) -> None:
        nonlocal best_internal, best_params
        mean_ext, mean_int = evaluate_validation(validation_set, online)
        loss = float(np.mean(losses_since_row)) if losses_since_row else 0.0
        losses_since_row.clear()
        curve.append(CurveRow(env_steps, episode, mean_ext, loss, epsilon_at(config, env_steps)))
        if best_internal is None or mean_int < best_internal:
            best_internal = mean_int
            best_params = online.copy()

    def learn(transition: Transition) -> None:
        nonlocal env_steps, grad_steps, next_validation
        buffer.push(transition)
        env_steps += 1
        if len(buffer) >= config.warmup:
            losses_since_row.append(
                train_step(buffer, online, target, optimizer, config.batch_size, rng)
            )
            grad_steps += 1
            if grad_steps % config.target_sync == 0:
                target.load_from(online)
        if env_steps >= next_validation:
            next_validation += config.validation_every
            record(episode)

    episode = 0
    for episode in range(1, config.episodes + 1):
        model = sampler.sample_built().model
        if config.episode_style == "dive":
            for t in dive_transitions(
                model, env, online, lambda s: epsilon_at(config, s), rng, step_base=env_steps
            ):
                learn(t)
        else:
            eps = epsilon_at(config, env_steps)
            for t in _dfs_transitions(model, env, online, eps, rng, config.dfs_node_cap):
                learn(t)
    # Close the curve with an end-of-training evaluation unless one just ran
    # at this exact step; a 0-episode run keeps the curve empty.
    if env_steps > 0 and (not curve or curve[-1].step != env_steps):
        record(episode)
    return TrainResult(online, best_params, curve, env_steps, episode)


def save_curve(curve: list[CurveRow], path) -> None:
    lines = ["step\tepisode\tmean_validation_objective\tloss\tepsilon"]
    for row in curve:
        lines.append(
            f"{row.step}\t{row.episode}\t{row.mean_validation_objective:.6f}"
            f"\t{row.loss:.6f}\t{row.epsilon:.6f}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_curve(path) -> list[CurveRow]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].split("\t")[0] != "step":
        raise ValueError(f"{path}: not a training curve file")
    rows = []
    for line in lines[1:]:
        step, episode, obj, loss, eps = line.split("\t")
        rows.append(CurveRow(int(step), int(episode), float(obj), float(loss), float(eps)))
    return rows
