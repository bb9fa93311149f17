"""Cooperative multi-agent environments with a shared reward.

All environments follow the same small protocol: ``reset(seed)`` returns an
:class:`EnvState`, ``step(actions)`` returns a :class:`StepResult`. Passing
``seed=None`` to ``reset`` starts a new episode from the running generator,
which keeps a whole training run reproducible from its first seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from coex.errors import ConfigError

P_OPT = 0.9

NOOP, NORTH, SOUTH, WEST, EAST, LOAD = range(6)
_MOVES = {NORTH: (-1, 0), SOUTH: (1, 0), WEST: (0, -1), EAST: (0, 1)}


@dataclass
class EnvState:
    state: np.ndarray
    obs: np.ndarray  # (n_agents, obs_dim)
    t: int = 0


@dataclass
class StepResult:
    reward: float
    next: EnvState
    done: bool
    truncated: bool = False

    @property
    def terminal(self):
        """True termination; time-limit cut-offs still bootstrap."""
        return self.done and not self.truncated


class Env:
    n_agents: int
    n_actions: int
    state_dim: int
    obs_dim: int

    def action_space(self):
        return [self.n_actions] * self.n_agents

    def _check_actions(self, actions):
        actions = np.asarray(actions)
        if actions.shape != (self.n_agents,):
            raise ConfigError(f"expected {self.n_agents} actions, got shape {actions.shape}")
        if np.any(actions < 0) or np.any(actions >= self.n_actions):
            raise ConfigError(f"action index out of range: {actions.tolist()}")
        return actions


class BernoulliGame(Env):
    """Repeated cooperative game: one hidden joint action pays B(0.9), all others B(p0).

    Each episode is a single step. ``reset(seed)`` draws a new hidden optimum;
    ``reset()`` only begins the next round of the same game.
    """

    def __init__(self, n_agents=8, n_actions=3, suboptimality=0.0):
        if not 0.0 <= suboptimality < P_OPT:
            raise ConfigError(f"suboptimality must lie in [0, {P_OPT}), got {suboptimality}")
        if n_agents < 1 or n_actions < 1:
            raise ConfigError("need at least one agent and one action")
        self.n_agents = n_agents
        self.n_actions = n_actions
        self.p0 = suboptimality
        self.state_dim = 1
        self.obs_dim = 1
        self.rng = np.random.default_rng(0)
        self.optimal = np.zeros(n_agents, dtype=np.int64)
        self.t = 0

    def reset(self, seed=None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)
            self.optimal = self.rng.integers(self.n_actions, size=self.n_agents)
        self.t = 0
        return self._state()

    def _state(self):
        return EnvState(self.global_state(), np.zeros((self.n_agents, 1)), self.t)

    def global_state(self):
        return np.zeros(1)

    def payoff_prob(self, actions):
        return P_OPT if np.array_equal(actions, self.optimal) else self.p0

    def step(self, actions):
        actions = self._check_actions(actions)
        reward = float(self.rng.random() < self.payoff_prob(actions))
        self.t += 1
        return StepResult(reward, self._state(), done=True)


@dataclass
class ForagingConfig:
    width: int = 10
    height: int = 10
    n_agents: int = 3
    n_foods: int = 3
    max_level: int = 2
    max_food_level: int | None = None  # None: sum of the agents' levels
    max_steps: int = 50

    def validate(self):
        if self.width < 3 or self.height < 3:
            raise ConfigError("foraging grid must be at least 3x3")
        interior = (self.width - 2) * (self.height - 2)
        if self.n_foods > interior:
            raise ConfigError(f"{self.n_foods} foods do not fit in {interior} interior cells")
        if self.n_agents + self.n_foods > self.width * self.height:
            raise ConfigError("more entities than cells")
        if self.n_agents < 1 or self.n_foods < 1 or self.max_level < 1 or self.max_steps < 1:
            raise ConfigError("agents, foods, levels and episode cap must be positive")


class Foraging(Env):
    """Sparse level-based foraging on a grid.

    A food item is collected when the agents that choose ``LOAD`` while
    orthogonally adjacent to it have a level sum at least the food's level.
    Collecting pays food level / total food level, so an episode returns at
    most 1. Moves into walls, foods, occupied cells, or a cell targeted by
    another agent are cancelled.
    """

    def __init__(self, config=None, **kwargs):
        self.config = config or ForagingConfig(**kwargs)
        self.config.validate()
        c = self.config
        self.n_agents = c.n_agents
        self.n_actions = 6
        self.state_dim = 2 * c.width * c.height
        self.obs_dim = 3 * (c.n_foods + c.n_agents)
        # row i: agent order as seen by agent i (itself first)
        self._views = np.array([[i] + [j for j in range(c.n_agents) if j != i] for i in range(c.n_agents)])
        self.rng = np.random.default_rng(0)
        self.t = 0

    def reset(self, seed=None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        c = self.config
        rng = self.rng
        interior = [(r, q) for r in range(1, c.height - 1) for q in range(1, c.width - 1)]
        food_idx = rng.choice(len(interior), size=c.n_foods, replace=False)
        self.food_pos = np.array([interior[i] for i in food_idx], dtype=np.int64)
        taken = {tuple(p) for p in self.food_pos}
        free = [(r, q) for r in range(c.height) for q in range(c.width) if (r, q) not in taken]
        agent_idx = rng.choice(len(free), size=c.n_agents, replace=False)
        self.agent_pos = np.array([free[i] for i in agent_idx], dtype=np.int64)
        self.agent_level = rng.integers(1, c.max_level + 1, size=c.n_agents)
        cap = int(self.agent_level.sum())
        if c.max_food_level is not None:
            cap = min(cap, c.max_food_level)
        self.food_level = rng.integers(1, cap + 1, size=c.n_foods)
        self.food_alive = np.ones(c.n_foods, dtype=bool)
        self.total_food_level = float(self.food_level.sum())
        self.t = 0
        return self._state()

    def set_layout(self, agent_pos, agent_level, food_pos, food_level):
        """Place entities by hand (all foods alive, clock at 0) and return the state."""
        c = self.config
        agent_pos = np.array(agent_pos, dtype=np.int64).reshape(-1, 2)
        food_pos = np.array(food_pos, dtype=np.int64).reshape(-1, 2)
        if len(agent_pos) != c.n_agents or len(food_pos) != c.n_foods:
            raise ConfigError("layout does not match the configured agent and food counts")
        cells = [tuple(p) for p in np.concatenate([agent_pos, food_pos])]
        if len(set(cells)) != len(cells):
            raise ConfigError("layout places two entities on one cell")
        if any(not (0 <= r < c.height and 0 <= q < c.width) for r, q in cells):
            raise ConfigError("layout places an entity off the grid")
        self.agent_pos = agent_pos
        self.agent_level = np.array(agent_level, dtype=np.int64)
        self.food_pos = food_pos
        self.food_level = np.array(food_level, dtype=np.int64)
        self.food_alive = np.ones(c.n_foods, dtype=bool)
        self.total_food_level = float(self.food_level.sum())
        self.t = 0
        return self._state()

    def global_state(self):
        c = self.config
        grid = np.zeros((2, c.height, c.width))
        grid[0, self.agent_pos[:, 0], self.agent_pos[:, 1]] = self.agent_level / c.max_level
        alive = self.food_pos[self.food_alive]
        grid[1, alive[:, 0], alive[:, 1]] = self.food_level[self.food_alive] / (c.max_level * c.n_agents)
        return grid.reshape(-1)

    def _state(self):
        """Grid state plus egocentric per-agent feature vectors.

        Observation ``i`` starts with agent ``i``'s own ``(row, col, level)``.
        Each food then contributes its offset from agent ``i`` and its level
        (a collected food reads ``(0, 0, 0)``), followed by the other agents'
        offsets and levels in identity order. Distances are scaled by the grid
        size. Own position plus offsets determine the grid state, so the task
        stays fully observable.
        """
        c = self.config
        scale = np.array([max(c.height - 1, 1), max(c.width - 1, 1)], dtype=np.float64)
        pos = self.agent_pos / scale
        own = np.column_stack([pos, self.agent_level / c.max_level])
        food_off = (self.food_pos / scale)[None, :, :] - pos[:, None, :]
        food_lvl = np.broadcast_to(self.food_level / (c.max_level * c.n_agents), food_off.shape[:2])
        food = np.concatenate([food_off, food_lvl[..., None]], axis=2)
        food[:, ~self.food_alive] = 0.0
        others = self._views[:, 1:]
        mate_off = pos[others] - pos[:, None, :]
        mates = np.concatenate([mate_off, (self.agent_level[others] / c.max_level)[..., None]], axis=2)
        obs = np.concatenate([own, food.reshape(c.n_agents, -1), mates.reshape(c.n_agents, -1)], axis=1)
        return EnvState(self.global_state(), obs, self.t)

    def step(self, actions):
        actions = self._check_actions(actions)
        c = self.config
        occupied = {tuple(p) for p in self.agent_pos}
        foods = {tuple(p) for p, a in zip(self.food_pos, self.food_alive) if a}
        targets = []
        for pos, act in zip(self.agent_pos, actions):
            target = tuple(pos)
            if act in _MOVES:
                dr, dq = _MOVES[act]
                cand = (pos[0] + dr, pos[1] + dq)
                inside = 0 <= cand[0] < c.height and 0 <= cand[1] < c.width
                if inside and cand not in foods and cand not in occupied:
                    target = cand
            targets.append(target)
        claims = {}
        for tgt in targets:
            claims[tgt] = claims.get(tgt, 0) + 1
        for i, tgt in enumerate(targets):
            if claims[tgt] == 1:
                self.agent_pos[i] = tgt

        reward = 0.0
        loaders = actions == LOAD
        for j in np.flatnonzero(self.food_alive):
            dist = np.abs(self.agent_pos - self.food_pos[j]).sum(axis=1)
            adjacent = loaders & (dist == 1)
            if adjacent.any() and self.agent_level[adjacent].sum() >= self.food_level[j]:
                self.food_alive[j] = False
                reward += self.food_level[j] / self.total_food_level

        self.t += 1
        cleared = not self.food_alive.any()
        timeout = self.t >= c.max_steps
        return StepResult(float(reward), self._state(), done=cleared or timeout, truncated=timeout and not cleared)


class TwoAgentChain(Env):
    """Deterministic two-agent ring of ``n_states`` cells with additive rewards.

    Agent 0 decides whether to advance around the ring; both agents earn a
    state- and action-dependent reward. The joint action value is a sum of
    per-agent terms, so a summing mixer can represent it exactly, which makes
    the task a clean target for a value-iteration oracle.
    """

    def __init__(self, n_states=4, max_steps=20, seed=0):
        if not 1 <= n_states <= 8:
            raise ConfigError("chain supports 1..8 states")
        self.n_agents = 2
        self.n_actions = 2
        self.n_states = n_states
        self.state_dim = n_states
        self.obs_dim = n_states
        self.max_steps = max_steps
        table_rng = np.random.default_rng(seed)
        self.rewards = np.round(table_rng.uniform(0.0, 1.0, (2, n_states, 2)), 2)
        self.rng = np.random.default_rng(0)
        self.s = 0
        self.t = 0

    def next_state(self, s, actions):
        return (s + int(actions[0])) % self.n_states

    def reward(self, s, actions):
        return float(self.rewards[0, s, actions[0]] + self.rewards[1, s, actions[1]])

    def joint_actions(self):
        return [np.array(a) for a in product(range(self.n_actions), repeat=self.n_agents)]

    def reset(self, seed=None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.s = int(self.rng.integers(self.n_states))
        self.t = 0
        return self._state()

    def global_state(self):
        onehot = np.zeros(self.n_states)
        onehot[self.s] = 1.0
        return onehot

    def _state(self):
        s = self.global_state()
        return EnvState(s, np.tile(s, (2, 1)), self.t)

    def step(self, actions):
        actions = self._check_actions(actions)
        r = self.reward(self.s, actions)
        self.s = self.next_state(self.s, actions)
        self.t += 1
        timeout = self.t >= self.max_steps
        return StepResult(r, self._state(), done=timeout, truncated=timeout)


def make_env(name, **params):
    """Build an environment from its id and keyword parameters."""
    builders = {
        "bernoulli": BernoulliGame,
        "foraging": lambda **kw: Foraging(ForagingConfig(**kw)),
        "chain": TwoAgentChain,
    }
    if name not in builders:
        raise ConfigError(f"unknown environment {name!r}; choose from {', '.join(builders)}")
    try:
        return builders[name](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for environment {name!r}: {exc}") from None


@dataclass
class TraceWriter:
    """Append episode transcripts as JSON lines."""

    path: str
    _fh: object = field(default=None, repr=False)

    def __enter__(self):
        self._fh = open(self.path, "a", encoding="utf-8")
        return self

    def __exit__(self, *exc):
        self._fh.close()

    def write(self, t, state, joint_action, reward, done):
        rec = {
            "t": int(t),
            "state": np.asarray(state).tolist(),
            "joint_action": [int(a) for a in joint_action],
            "reward": float(reward),
            "done": bool(done),
        }
        self._fh.write(json.dumps(rec) + "\n")
