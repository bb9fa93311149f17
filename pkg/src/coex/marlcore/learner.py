"""Value-decomposition Q-learning with count-conditioned optimism.

Agents choose actions one after another in identity order. Agent ``i``
maximizes its utility plus a UCB term built from the visit count of the
hashed global state together with the actions already picked by agents
``0..i-1``. Training bootstraps from an optimistic target: a decaying
count bonus on the reward, and per-agent bonuses inside the mixed
next-state value.
"""

from __future__ import annotations

import numpy as np

from coex import ndgrad as nd
from coex.counting import CountStore, make_keyer, sqrt_bonus_array, ucb_bonus_array
from coex.errors import ConfigError, NumericalError
from coex.marlcore.buffer import ReplayBuffer, RewardScaler, Transition
from coex.marlcore.config import COEConfig
from coex.marlcore.nets import AgentNet, make_mixer


class Learner:
    def __init__(self, cfg: COEConfig, n_agents, n_actions, obs_dim, state_dim, seed=0):
        if cfg.random_order and cfg.dependent:
            raise ConfigError("random action order is not supported for dependent variants")
        self.cfg = cfg
        self.n = n_agents
        self.k = n_actions
        init_ss, act_ss, replay_ss, hash_ss = np.random.SeedSequence(seed).spawn(4)
        init_rng = np.random.default_rng(init_ss)
        self.act_rng = np.random.default_rng(act_ss)
        self.replay_rng = np.random.default_rng(replay_ss)

        self.params = nd.ParamSet()
        self.agent = AgentNet(self.params, n_agents, n_actions, obs_dim, cfg.hidden, init_rng, cfg.dependent)
        self.mixer = None
        if cfg.variant != "cond_iq":
            self.mixer = make_mixer(cfg.mixer, self.params, n_agents, state_dim, cfg.mixer_embed, init_rng)
        self.params.pack()
        self.target = self.params.copy()
        self.trainable = self.params
        if cfg.freeze_correction:
            self.trainable = nd.ParamSet()
            for name, t in self.params:
                if not name.startswith("corr."):
                    self.trainable.tensors[name] = t
        self.optimizer = nd.Adam(cfg.lr) if cfg.optimizer == "adam" else nd.SGD(cfg.lr)

        self.keyer = make_keyer(state_dim, k=cfg.k, seed=int(hash_ss.generate_state(1)[0]), exact=cfg.exact_counts)
        self.counts = CountStore(n_agents, track_local=cfg.variant == "ucb_ind", n_actions=n_actions)
        self.buffer = ReplayBuffer(cfg.buffer, n_agents, obs_dim, state_dim)
        self.scaler = RewardScaler(cfg.reward_standardization)
        self.order = np.arange(n_agents)
        self.last_indices = None
        self.last_losses = None

    # ------------------------------------------------------------------ acting

    def new_episode(self):
        if self.cfg.random_order:
            self.order = self.act_rng.permutation(self.n)

    def state_key(self, state):
        key = self.keyer.key(state)
        if self.cfg.random_order:
            key = key + bytes(self.order.astype(np.uint8))
        return key

    def _in_order(self, actions):
        return actions[..., self.order]

    def _orders(self, keys):
        """(B, n) computation orders; a shuffled order travels in the key's tail."""
        if not self.cfg.random_order:
            return np.tile(self.order, (len(keys), 1))
        return np.array([np.frombuffer(key[-self.n:], dtype=np.uint8) for key in keys], dtype=np.int64)

    def _act_bonus(self, c_act, key, position, prefix):
        if c_act == 0:
            return 0.0
        if self.cfg.variant == "ucb_ind":
            local = self.counts.local_counts(key, position, self.k)
            return ucb_bonus_array(c_act, local.sum(), local)
        return ucb_bonus_array(c_act, self.counts.count(key, prefix), self.counts.child_counts(key, prefix, self.k))

    def _pick(self, scores):
        """Argmax with lowest-index ties, or a seeded random tie when ``random_ties`` is set."""
        if not self.cfg.random_ties:
            return int(np.argmax(scores))
        best = np.flatnonzero(scores == scores.max())
        return int(best[0] if len(best) == 1 else self.act_rng.choice(best))

    def select_actions(self, obs, key, step=0, explore=True):
        """Joint action for one state.

        With ``explore=False`` agents act greedily on their independent
        utilities with no bonus and no epsilon, as at deployment.
        """
        q = self.agent.predict(self.params, obs)
        if not explore:
            return np.argmax(q, axis=-1)
        if self.cfg.variant == "eps_greedy":
            actions = np.argmax(q, axis=-1)
            eps = self.cfg.epsilon(step)
            if eps > 0:
                flip = self.act_rng.random(self.n) < eps
                random_actions = self.act_rng.integers(self.k, size=self.n)
                actions = np.where(flip, random_actions, actions)
            return actions
        c_act = self.cfg.effective_scales()[0]
        actions = np.zeros(self.n, dtype=np.int64)
        chosen = np.zeros(self.n, dtype=np.int64)
        prefix = ()
        for position, i in enumerate(self.order):
            qi = q[i]
            if self.cfg.dependent:
                code = self.agent.prefix_code(chosen, position)
                qi = qi + self.agent.correction_predict(self.params, obs[i], code, i)
            a = self._pick(qi + self._act_bonus(c_act, key, position, prefix))
            actions[i] = a
            chosen[position] = a
            prefix = prefix + (a,)
        return actions

    def observe(self, obs, state, key, actions, reward, next_obs, next_state, next_key, terminal):
        """Record one environment step: counts, reward statistics, replay."""
        self.counts.increment(key, self._in_order(np.asarray(actions)))
        self.scaler.observe(reward)
        self.buffer.add(Transition(obs, state, key, np.asarray(actions), reward, next_obs, next_state, next_key,
                                   terminal))

    # ---------------------------------------------------------------- targets

    def _boot_bonus(self, c_boot, keys, prefixes, position):
        """(B, k) bonuses ``c_boot / sqrt(N(s', a'_<i, a'_i))`` for each sample."""
        if self.cfg.variant == "ucb_ind":
            counts = np.stack([self.counts.local_counts(key, position, self.k) for key in keys])
        else:
            counts = np.stack([
                self.counts.child_counts(key, tuple(p.tolist()), self.k) for key, p in zip(keys, prefixes)
            ])
        return sqrt_bonus_array(c_boot, counts)

    def greedy_joint_with_bonus(self, q_next, next_keys, c_boot=None, next_obs=None, params=None, dependent=False):
        """Sequential maximizer of the optimistic next-state utilities.

        ``q_next`` holds (B, n, k) independent utilities. Returns the chosen
        actions and each agent's optimistic value at its choice, both (B, n).
        """
        if c_boot is None:
            c_boot = self.cfg.effective_scales()[2]
        q_next = np.asarray(q_next, dtype=np.float64)
        B = q_next.shape[0]
        if c_boot == 0 and not dependent:
            actions = np.argmax(q_next, axis=-1)
            return actions, np.take_along_axis(q_next, actions[..., None], -1)[..., 0]
        orders = self._orders(next_keys)
        actions = np.zeros((B, self.n), dtype=np.int64)
        chosen = np.zeros((B, self.n), dtype=np.int64)
        values = np.zeros((B, self.n))
        rows = np.arange(B)
        for position in range(self.n):
            i = orders[:, position]
            qi = q_next[rows, i, :]
            if dependent:
                code = self.agent.prefix_code(chosen, position)
                qi = qi + self.agent.correction_predict(params, next_obs[rows, i, :], code, i)
            if c_boot > 0:
                qi = qi + self._boot_bonus(c_boot, next_keys, chosen[:, :position], position)
            a = np.argmax(qi, axis=-1)
            actions[rows, i] = a
            chosen[:, position] = a
            values[rows, i] = qi[rows, a]
        return actions, values

    def _reward_part(self, batch, per_agent=False):
        r = self.scaler.scale(batch["reward"])
        c_rew = self.cfg.effective_scales()[1]
        orders = self._orders(batch["keys"])
        ordered = np.take_along_axis(batch["actions"], orders, axis=1)
        if per_agent:
            out = np.repeat(r[:, None], self.n, axis=1)
            if c_rew > 0:
                for b, key in enumerate(batch["keys"]):
                    for position, i in enumerate(orders[b]):
                        out[b, i] += c_rew / np.sqrt(max(self.counts.count(key, ordered[b, : position + 1]), 1))
            return out
        if c_rew == 0:
            return r
        if self.cfg.variant == "ucb_ind":
            bonus = np.array([
                np.mean([c_rew / np.sqrt(max(self.counts.local.get((key, p, int(a[p])), 0), 1))
                         for p in range(self.n)])
                for key, a in zip(batch["keys"], ordered)
            ])
        else:
            bonus = np.array([sqrt_bonus_array(c_rew, self.counts.count(key, a)) for key, a in
                              zip(batch["keys"], ordered)])
        return r + bonus

    def td_target(self, batch, q_next=None):
        """Optimistic bootstrapped target for the mixed joint value, shape (B,)."""
        if q_next is None:
            q_next = self.agent.predict(self.target, batch["next_obs"])
        _, values = self.greedy_joint_with_bonus(q_next, batch["next_keys"])
        boot = self.mixer.predict(self.target, values, batch["next_state"])
        return self._reward_part(batch) + self.cfg.gamma * (1.0 - batch["terminal"]) * boot

    def _dependent_targets(self, batch, per_agent):
        q_next = self.agent.predict(self.target, batch["next_obs"])
        common = dict(next_obs=batch["next_obs"], params=self.target)
        _, v_dep = self.greedy_joint_with_bonus(q_next, batch["next_keys"], dependent=True, **common)
        _, v_idp = self.greedy_joint_with_bonus(q_next, batch["next_keys"])
        reward = self._reward_part(batch, per_agent=per_agent)
        live = self.cfg.gamma * (1.0 - batch["terminal"])
        if per_agent:
            live = live[:, None]
        else:
            v_dep = self.mixer.predict(self.target, v_dep, batch["next_state"])
            v_idp = self.mixer.predict(self.target, v_idp, batch["next_state"])
        return reward + live * v_dep, reward + live * v_idp

    # --------------------------------------------------------------- training

    def _sample(self):
        if len(self.buffer) < self.cfg.batch:
            return None
        idx = self.buffer.sample_indices(self.replay_rng, self.cfg.batch)
        self.last_indices = idx
        return self.buffer.batch(idx)

    def _apply(self, loss):
        value = loss.item()
        if not np.isfinite(value):
            raise NumericalError(f"non-finite loss {value}")
        loss.backward()
        nd.clip_grad_norm(self.trainable, self.cfg.grad_clip)
        self.optimizer.step(self.trainable)
        nd.soft_update(self.target, self.params, self.cfg.tau)
        self.params.zero_grad()

    def joint_loss(self, batch, y):
        q = self.agent.forward(self.params, batch["obs"])
        q_taken = nd.gather(q, batch["actions"])
        return nd.mse(self.mixer.forward(self.params, q_taken, batch["state"]), y)

    def train_step(self):
        """One gradient step on a uniform mini-batch; None while the buffer is too small."""
        if self.cfg.dependent:
            losses = self.train_step_dependent()
            return None if losses is None else losses[0] + losses[1]
        batch = self._sample()
        if batch is None:
            return None
        loss = self.joint_loss(batch, self.td_target(batch))
        self._apply(loss)
        return loss.item()

    def dependent_losses(self, batch):
        """(loss_dep, loss_idp) tensors on one batch.

        The dependent loss sees the independent utilities as constants so each
        loss only moves its own network (plus the shared mixer for cond_cq).
        """
        per_agent = self.cfg.variant == "cond_iq"
        y_dep, y_idp = self._dependent_targets(batch, per_agent)
        obs, actions = batch["obs"], batch["actions"]
        q_idp = self.agent.forward(self.params, obs)
        corr = self.agent.correction_forward(self.params, obs, self.agent.prefix_codes(actions))
        q_dep = nd.add(q_idp.detach(), corr)
        dep_taken, idp_taken = nd.gather(q_dep, actions), nd.gather(q_idp, actions)
        if per_agent:
            return nd.mse(dep_taken, y_dep), nd.mse(idp_taken, y_idp)
        state = batch["state"]
        return (nd.mse(self.mixer.forward(self.params, dep_taken, state), y_dep),
                nd.mse(self.mixer.forward(self.params, idp_taken, state), y_idp))

    def train_step_dependent(self):
        batch = self._sample()
        if batch is None:
            return None
        loss_dep, loss_idp = self.dependent_losses(batch)
        self._apply(nd.add(loss_dep, loss_idp))
        self.last_losses = (loss_dep.item(), loss_idp.item())
        return self.last_losses
