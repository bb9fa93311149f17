"""Shared-parameter agent networks and joint-value mixers."""

from __future__ import annotations

import numpy as np

from coex import ndgrad as nd


class MLP:
    """Feedforward net with ReLU hidden layers; parameters live in a shared ParamSet."""

    def __init__(self, params, prefix, sizes, rng, zero_last=False):
        self.prefix = prefix
        self.names = []
        for j, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            W, b = nd.init_linear(rng, fan_in, fan_out, zero=zero_last and j == len(sizes) - 2)
            params.add(f"{prefix}.W{j}", W)
            params.add(f"{prefix}.b{j}", b)
            self.names.append((f"{prefix}.W{j}", f"{prefix}.b{j}"))

    def forward(self, params, x):
        h = x
        last = len(self.names) - 1
        for j, (w, b) in enumerate(self.names):
            h = nd.affine(h, params[w], params[b])
            if j < last:
                h = nd.relu(h)
        return h

    def predict(self, params, x):
        h = x
        last = len(self.names) - 1
        for j, (w, b) in enumerate(self.names):
            h = h @ params[w].data + params[b].data
            if j < last:
                h = np.maximum(h, 0.0)
        return h


class AgentNet:
    """Per-agent utilities from ``obs ++ onehot(id)``.

    Dependent variants add a correction head that also sees a multi-hot
    encoding of the predecessors' actions; its last layer starts at zero so
    the dependent values equal the independent ones at initialization.
    """

    def __init__(self, params, n_agents, n_actions, obs_dim, hidden, rng, dependent=False):
        self.n = n_agents
        self.k = n_actions
        self.obs_dim = obs_dim
        self.ids = np.eye(n_agents)
        self.q = MLP(params, "agent", [obs_dim + n_agents, hidden, hidden, n_actions], rng)
        self.correction = None
        if dependent:
            width = obs_dim + n_agents + (n_agents - 1) * n_actions
            self.correction = MLP(params, "corr", [width, hidden, hidden, n_actions], rng, zero_last=True)

    def inputs(self, obs):
        """(..., n, obs_dim) observations -> (..., n, obs_dim + n) with identities."""
        ids = np.broadcast_to(self.ids, obs.shape[:-1] + (self.n,))
        return np.concatenate([obs, ids], axis=-1)

    def prefix_code(self, actions, agent):
        """Multi-hot of ``actions[..., :agent]`` over (n - 1) slots of k actions."""
        lead = actions.shape[:-1]
        code = np.zeros(lead + ((self.n - 1) * self.k,))
        for j in range(agent):
            np.put_along_axis(code, (j * self.k + actions[..., j])[..., None], 1.0, axis=-1)
        return code

    def prefix_codes(self, actions):
        """Codes for every agent's predecessors: (..., n, (n - 1) k)."""
        return np.stack([self.prefix_code(actions, i) for i in range(self.n)], axis=-2)

    def forward(self, params, obs):
        return self.q.forward(params, self.inputs(obs))

    def predict(self, params, obs):
        return self.q.predict(params, self.inputs(obs))

    def correction_forward(self, params, obs, codes):
        return self.correction.forward(params, np.concatenate([self.inputs(obs), codes], axis=-1))

    def correction_predict(self, params, obs, codes, agent):
        """Correction for one agent slot; ``agent`` is an index or one index per row."""
        ids = np.broadcast_to(self.ids[agent], obs.shape[:-1] + (self.n,))
        return self.correction.predict(params, np.concatenate([obs, ids, codes], axis=-1))


class VDNMixer:
    kind = "vdn"

    def forward(self, params, q, state):
        return nd.sum_(q, axis=1)

    def predict(self, params, q, state):
        return q.sum(axis=1)


class MonotonicMixer:
    """State-conditioned mix with nonnegative weights.

    ``Q = sum_e |w2_e(s)| * elu(sum_i q_i |w1_ie(s)| + b1_e(s)) + v(s)``; the
    absolute values keep every partial derivative in ``q_i`` nonnegative.
    """

    kind = "monotonic"

    def __init__(self, params, n_agents, state_dim, embed, rng):
        self.n = n_agents
        self.embed = embed
        for name, fan_out in (("w1", n_agents * embed), ("b1", embed), ("w2", embed), ("v0", embed)):
            W, b = nd.init_linear(rng, state_dim, fan_out)
            params.add(f"mixer.{name}.W", W)
            params.add(f"mixer.{name}.b", b)
        W, b = nd.init_linear(rng, embed, 1)
        params.add("mixer.v1.W", W)
        params.add("mixer.v1.b", b)

    def _layer(self, params, name, x):
        return nd.affine(x, params[f"mixer.{name}.W"], params[f"mixer.{name}.b"])

    def weights(self, params, state):
        B = state.shape[0]
        w1 = nd.reshape(nd.abs_(self._layer(params, "w1", state)), (B, self.n, self.embed))
        b1 = self._layer(params, "b1", state)
        w2 = nd.abs_(self._layer(params, "w2", state))
        b2 = nd.reshape(self._layer(params, "v1", nd.relu(self._layer(params, "v0", state))), (B,))
        return w1, b1, w2, b2

    @staticmethod
    def mix_with(q, w1, b1, w2, b2):
        hidden = nd.elu(nd.add(nd.batched_mv(q, w1), b1))
        return nd.add(nd.sum_(nd.mul(hidden, w2), axis=1), b2)

    def forward(self, params, q, state):
        return self.mix_with(q, *self.weights(params, state))

    def predict(self, params, q, state):
        return self.forward(params, nd.Tensor(q), state).data


def make_mixer(kind, params, n_agents, state_dim, embed, rng):
    if kind == "vdn":
        return VDNMixer()
    return MonotonicMixer(params, n_agents, state_dim, embed, rng)
