"""Training loop, greedy evaluation and per-run metrics."""

from __future__ import annotations

import copy
import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from coex.envs import TraceWriter
from coex.marlcore.learner import Learner

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("step", "eval_mean_return", "eval_std_return", "train_loss", "epsilon", "buffer_size",
                  "distinct_count_keys")


@dataclass
class EvalPoint:
    step: int
    eval_mean_return: float
    eval_std_return: float
    train_loss: float
    epsilon: float
    buffer_size: int
    distinct_count_keys: int


@dataclass
class TrainingResult:
    metrics: list
    learner: Learner
    actions: list = field(default_factory=list)
    losses: list = field(default_factory=list)

    def returns(self):
        return np.array([m.eval_mean_return for m in self.metrics])


def evaluate(learner, env, episodes, trace=None):
    """Mean and std of episodic return under the deployed greedy policy.

    Bonuses are off and epsilon is zero; ``env`` keeps its own generator so
    evaluation never perturbs the training stream.
    """
    returns = []
    for _ in range(episodes):
        st = env.reset()
        total = 0.0
        while True:
            actions = learner.select_actions(st.obs, None, explore=False)
            res = env.step(actions)
            if trace is not None:
                trace.write(st.t, st.state, actions, res.reward, res.done)
            total += res.reward
            st = res.next
            if res.done:
                break
        returns.append(total)
    returns = np.asarray(returns)
    return float(returns.mean()), float(returns.std())


def make_eval_env(env, seed):
    """Independent copy of ``env`` (same game instance) with a separate generator."""
    eval_env = copy.deepcopy(env)
    eval_env.rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE7A1]))
    return eval_env


def run_training(env, cfg, seed, total_steps, eval_interval, eval_episodes, record=False, trace_path=None,
                 on_eval=None):
    """Collect, count and learn for ``total_steps`` environment steps.

    Evaluates at step 0 and after every ``eval_interval`` steps. With
    ``record`` the per-step joint actions and losses are kept for
    reproducibility checks.
    """
    learner = Learner(cfg, env.n_agents, env.n_actions, env.obs_dim, env.state_dim, seed)
    st = env.reset(seed)
    eval_env = make_eval_env(env, seed)
    learner.new_episode()
    key = learner.state_key(st.state)
    result = TrainingResult([], learner)
    window = []

    def checkpoint(step):
        final = trace_path is not None and step == total_steps
        if final:
            with TraceWriter(trace_path) as trace:
                mean, std = evaluate(learner, eval_env, eval_episodes, trace)
        else:
            mean, std = evaluate(learner, eval_env, eval_episodes)
        point = EvalPoint(step, mean, std, float(np.mean(window)) if window else float("nan"),
                          cfg.epsilon(step), len(learner.buffer), learner.counts.n_keys())
        window.clear()
        result.metrics.append(point)
        log.info("step %d return %.3f loss %.4g keys %d", step, mean, point.train_loss, point.distinct_count_keys)
        if on_eval is not None:
            on_eval(point)

    for step in range(total_steps):
        if step % eval_interval == 0:
            checkpoint(step)
        actions = learner.select_actions(st.obs, key, step)
        res = env.step(actions)
        nxt = res.next
        next_key = learner.state_key(nxt.state)
        learner.observe(st.obs, st.state, key, actions, res.reward, nxt.obs, nxt.state, next_key, res.terminal)
        loss = learner.train_step() if (step + 1) % cfg.train_interval == 0 else None
        if loss is not None:
            window.append(loss)
        if record:
            result.actions.append(actions.copy())
            result.losses.append(loss)
        if res.done:
            st = env.reset()
            learner.new_episode()
            key = learner.state_key(st.state)
        else:
            st, key = nxt, next_key
    checkpoint(total_steps)
    return result


def write_metrics(path, metrics):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        w.writeheader()
        for m in metrics:
            row = asdict(m)
            w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})


def read_metrics(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [EvalPoint(int(r["step"]), float(r["eval_mean_return"]), float(r["eval_std_return"]),
                      float(r["train_loss"]), float(r["epsilon"]), int(r["buffer_size"]),
                      int(r["distinct_count_keys"])) for r in rows]
