"""Tabular UCB learners for the repeated multi-player Bernoulli game.

Four learners differ in whether the payoff estimate and the optimism term
depend on the actions already chosen by earlier agents:

``DepRewDepOpt``  UCT over the full action tree (estimates and counts per prefix)
``IndRewDepOpt``  per-agent payoff estimates, prefix-conditioned counts
``IndRewIndOpt``  independent UCB1 per agent
``UCBCen``        one UCB1 learner over all k**n joint arms

Every learner here runs a whole batch of seeds at once: tables carry a
leading seed axis and :meth:`select` returns one joint action per seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from coex.envs import P_OPT, BernoulliGame
from coex.errors import ConfigError

VARIANTS = ("DepRewDepOpt", "IndRewDepOpt", "IndRewIndOpt", "UCBCen")
WINDOW = 100


def _ucb_scores(c, means, parent, child):
    """Row-wise ``means + c sqrt(2 ln parent / child)`` with +inf for unvisited."""
    if c == 0:
        return means.copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        bonus = c * np.sqrt(2.0 * np.log(np.maximum(parent, 1.0))[:, None] / child)
    bonus[child == 0] = np.inf
    return means + bonus


class TabularLearner:
    tag = ""

    def __init__(self, n_agents, n_actions, n_seeds=1, c=1.0, random_ties=False, rng=None):
        if c < 0:
            raise ConfigError("exploration constant c must be nonnegative")
        self.n = n_agents
        self.k = n_actions
        self.S = n_seeds
        self.c = c
        self.random_ties = random_ties
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._rows = np.arange(n_seeds)
        # prefix of length l with mixed-radix code q lives at offsets[l] + q
        self.offsets = np.concatenate([[0], np.cumsum(n_actions ** np.arange(n_agents + 1))])

    def _argmax(self, scores):
        if not self.random_ties:
            return np.argmax(scores, axis=1)
        best = scores == scores.max(axis=1, keepdims=True)
        return np.argmax(best * self.rng.random(scores.shape), axis=1)

    def _path(self, actions):
        """Node ids of every prefix (lengths 0..n) of each seed's joint action."""
        ids = np.empty((self.S, self.n + 1), dtype=np.int64)
        code = np.zeros(self.S, dtype=np.int64)
        ids[:, 0] = 0
        for i in range(self.n):
            code = code * self.k + actions[:, i]
            ids[:, i + 1] = self.offsets[i + 1] + code
        return ids

    def _update_mean(self, X, N, rows, idx, payoff):
        N[rows, idx] += 1
        X[rows, idx] += (payoff - X[rows, idx]) / N[rows, idx]


class DepRewDepOpt(TabularLearner):
    tag = "DepRewDepOpt"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        nodes = int(self.offsets[-1])
        self.N = np.zeros((self.S, nodes))
        self.X = np.zeros((self.S, nodes))
        self._agent = 0

    def _child_scores(self, parent, children):
        return _ucb_scores(self.c, self.X[self._rows[:, None], children], self.N[self._rows, parent],
                           self.N[self._rows[:, None], children])

    def select(self, t=None):
        actions = np.zeros((self.S, self.n), dtype=np.int64)
        code = np.zeros(self.S, dtype=np.int64)
        arange_k = np.arange(self.k)
        for i in range(self.n):
            self._agent = i
            parent = self.offsets[i] + code
            children = self.offsets[i + 1] + code[:, None] * self.k + arange_k
            a = self._argmax(self._child_scores(parent, children))
            actions[:, i] = a
            code = code * self.k + a
        return actions

    def update(self, actions, payoff):
        ids = self._path(actions)
        payoff = np.asarray(payoff, dtype=np.float64)[:, None]
        self._update_mean(self.X, self.N, self._rows[:, None], ids, payoff)


class IndRewDepOpt(DepRewDepOpt):
    """Prefix-conditioned counts, but each agent's payoff mean ignores predecessors.

    ``X_i(a_i)`` is the empirical mean over every round in which agent ``i``
    played ``a_i``; its sample size ``M_i(a_i)`` equals the sum of the
    prefix counts ``N(a_<i, a_i)`` over all predecessor prefixes.
    """

    tag = "IndRewDepOpt"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.Xi = np.zeros((self.S, self.n, self.k))
        self.Mi = np.zeros((self.S, self.n, self.k))

    def _child_scores(self, parent, children):
        return _ucb_scores(self.c, self.Xi[:, self._agent, :], self.N[self._rows, parent],
                           self.N[self._rows[:, None], children])

    def update(self, actions, payoff):
        rows = self._rows[:, None]
        ids = self._path(actions)
        self.N[rows, ids] += 1
        payoff = np.asarray(payoff, dtype=np.float64)[:, None]
        agents = np.arange(self.n)[None, :]
        self.Mi[rows, agents, actions] += 1
        self.Xi[rows, agents, actions] += (payoff - self.Xi[rows, agents, actions]) / self.Mi[rows, agents, actions]


class IndRewIndOpt(TabularLearner):
    tag = "IndRewIndOpt"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.Xi = np.zeros((self.S, self.n, self.k))
        self.Ni = np.zeros((self.S, self.n, self.k))

    def select(self, t=None):
        actions = np.zeros((self.S, self.n), dtype=np.int64)
        for i in range(self.n):
            counts = self.Ni[:, i, :]
            actions[:, i] = self._argmax(_ucb_scores(self.c, self.Xi[:, i, :], counts.sum(axis=1), counts))
        return actions

    def update(self, actions, payoff):
        payoff = np.asarray(payoff, dtype=np.float64)[:, None]
        agents = np.arange(self.n)[None, :]
        rows = self._rows[:, None]
        self.Ni[rows, agents, actions] += 1
        self.Xi[rows, agents, actions] += (payoff - self.Xi[rows, agents, actions]) / self.Ni[rows, agents, actions]


class UCBCen(TabularLearner):
    tag = "UCBCen"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        arms = self.k**self.n
        self.N = np.zeros((self.S, arms))
        self.X = np.zeros((self.S, arms))
        self._pulls = np.zeros(self.S)
        self._radix = self.k ** np.arange(self.n - 1, -1, -1)

    def select(self, t=None):
        arm = self._argmax(_ucb_scores(self.c, self.X, self._pulls, self.N))
        return (arm[:, None] // self._radix) % self.k

    def update(self, actions, payoff):
        arm = actions @ self._radix
        self._pulls += 1
        self._update_mean(self.X, self.N, self._rows, arm, np.asarray(payoff, dtype=np.float64))


class Oracle(TabularLearner):
    """Always plays the hidden optimum; a zero-regret reference."""

    tag = "Oracle"

    def __init__(self, *args, optimal=None, **kwargs):
        super().__init__(*args, **kwargs)
        self.optimal = np.asarray(optimal)

    def select(self, t=None):
        return self.optimal.copy()

    def update(self, actions, payoff):
        pass


LEARNERS = {cls.tag: cls for cls in (DepRewDepOpt, IndRewDepOpt, IndRewIndOpt, UCBCen, Oracle)}


def make_learner(variant, n_agents, n_actions, n_seeds=1, c=1.0, random_ties=False, rng=None, **kwargs):
    try:
        cls = LEARNERS[variant]
    except KeyError:
        raise ConfigError(f"unknown bandit variant {variant!r}; choose from {', '.join(VARIANTS)}") from None
    return cls(n_agents, n_actions, n_seeds=n_seeds, c=c, random_ties=random_ties, rng=rng, **kwargs)


@dataclass
class RegretTrace:
    """Per-seed traces, shape (n_seeds, horizon)."""

    regret: np.ndarray
    optimal: np.ndarray

    @property
    def cum_regret(self):
        return np.cumsum(self.regret, axis=1)

    @property
    def window_rate(self):
        """Trailing-window optimal-selection rate (shorter window at the start)."""
        c = np.cumsum(self.optimal, axis=1, dtype=np.float64)
        lagged = np.zeros_like(c)
        lagged[:, WINDOW:] = c[:, :-WINDOW]
        width = np.minimum(np.arange(1, c.shape[1] + 1), WINDOW)
        return (c - lagged) / width

    @property
    def cum_rate(self):
        steps = np.arange(1, self.optimal.shape[1] + 1)
        return np.cumsum(self.optimal, axis=1, dtype=np.float64) / steps


def _mean_se(x):
    mean = x.mean(axis=0)
    if x.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, x.std(axis=0, ddof=1) / math.sqrt(x.shape[0])


@dataclass
class GameResult:
    variant: str
    p0: float
    trace: RegretTrace

    def summary(self):
        cr_m, cr_se = _mean_se(self.trace.cum_regret)
        wr_m, wr_se = _mean_se(self.trace.window_rate)
        cu_m, cu_se = _mean_se(self.trace.cum_rate)
        return {
            "mean_cum_regret": cr_m,
            "se_cum_regret": cr_se,
            "mean_opt_rate": wr_m,
            "se_opt_rate": wr_se,
            "mean_cum_opt_rate": cu_m,
            "se_cum_opt_rate": cu_se,
        }

    def write_csv(self, path):
        cols = self.summary()
        names = list(cols)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", *names])
            for t in range(self.trace.regret.shape[1]):
                w.writerow([t + 1, *(f"{cols[n][t]:.6g}" for n in names)])


def run_game(variant, n_agents, n_actions, p0, horizon, seeds, c=1.0, random_ties=False):
    """Play ``horizon`` rounds of a fresh game per seed and record expected regret.

    Seed ``s`` fixes both the hidden optimum and the payoff draws, so a seed's
    trace does not depend on which other seeds run alongside it.
    """
    if horizon < 1:
        raise ConfigError("horizon must be at least 1")
    seeds = list(seeds)
    if not seeds:
        raise ConfigError("need at least one seed")
    games = [BernoulliGame(n_agents, n_actions, p0) for _ in seeds]
    for g, s in zip(games, seeds):
        g.reset(s)
    optimal = np.stack([g.optimal for g in games])
    uniforms = np.stack([g.rng.random(horizon) for g in games])
    extra = {"optimal": optimal} if variant == "Oracle" else {}
    learner = make_learner(variant, n_agents, n_actions, n_seeds=len(seeds), c=c, random_ties=random_ties,
                           rng=np.random.default_rng(seeds[0]), **extra)
    hit = np.zeros((len(seeds), horizon), dtype=bool)
    for t in range(horizon):
        actions = learner.select(t)
        is_opt = np.all(actions == optimal, axis=1)
        payoff = (uniforms[:, t] < np.where(is_opt, P_OPT, p0)).astype(np.float64)
        learner.update(actions, payoff)
        hit[:, t] = is_opt
    regret = np.where(hit, 0.0, P_OPT - p0)
    return GameResult(variant, p0, RegretTrace(regret, hit))


def write_results(results, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in results:
        p = out / f"bandit_{r.variant}_p{r.p0:g}.csv"
        r.write_csv(p)
        paths.append(p)
    return paths
