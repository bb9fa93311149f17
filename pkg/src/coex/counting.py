"""SimHash state keys and visitation counts over joint-action prefixes.

Counts are stored for every prefix length 0..n at increment time, so a
query for ``N(s, a_<i, a_i)`` inside the per-step action loop is a single
dictionary lookup. The prefix tables obey

    count(key, p) == sum(count(key, p + (a,)) for a in actions)

for every stored prefix ``p`` shorter than the joint action.
"""

from __future__ import annotations

import json
import math

import numpy as np

from coex.errors import ConfigError


class Projector:
    """Frozen Gaussian projection ``sign(A g(s))`` with ``A`` of shape (k, D)."""

    def __init__(self, state_dim, k=8, seed=0, preprocess=None):
        if k < 1:
            raise ConfigError("feature dimension k must be positive")
        self.k = k
        self.state_dim = state_dim
        self.A = np.random.default_rng(seed).standard_normal((k, state_dim))
        self.A.setflags(write=False)
        self.preprocess = preprocess

    @classmethod
    def from_matrix(cls, A, preprocess=None):
        """Projector with a given matrix (tests and hand-built examples)."""
        A = np.array(A, dtype=np.float64)
        if A.ndim != 2:
            raise ConfigError("projection matrix must be 2-D")
        p = cls.__new__(cls)
        p.k, p.state_dim = A.shape
        A.setflags(write=False)
        p.A = A
        p.preprocess = preprocess
        return p

    def project(self, state):
        """Sign pattern in {-1, +1}^k; an exact zero maps to +1."""
        s = np.asarray(state, dtype=np.float64)
        if self.preprocess is not None:
            s = self.preprocess(s)
        if s.shape != (self.state_dim,):
            raise ConfigError(f"state has shape {s.shape}, projector expects ({self.state_dim},)")
        return np.where(self.A @ s >= 0.0, 1, -1).astype(np.int8)

    def key(self, state):
        """Hashable packed form of :meth:`project`."""
        return np.packbits(self.project(state) > 0).tobytes()

    def bits(self, key):
        bits = np.unpackbits(np.frombuffer(key, dtype=np.uint8))[: self.k].astype(np.int64)
        return (bits * 2 - 1).tolist()


class ExactKeyer:
    """Identity hashing for small discrete state spaces."""

    def __init__(self, state_dim):
        self.state_dim = state_dim

    def key(self, state):
        s = np.asarray(state, dtype=np.float64)
        if s.shape != (self.state_dim,):
            raise ConfigError(f"state has shape {s.shape}, expected ({self.state_dim},)")
        return s.tobytes()

    def bits(self, key):
        return np.frombuffer(key, dtype=np.float64).tolist()


def make_keyer(state_dim, k=8, seed=0, exact=False):
    return ExactKeyer(state_dim) if exact else Projector(state_dim, k=k, seed=seed)


class CountStore:
    """One table per prefix length mapping ``(key, prefix) -> visits``.

    With ``track_local`` the store also keeps unconditional per-agent counts
    ``(key, agent, action) -> visits`` for independent-optimism baselines.
    """

    def __init__(self, n_agents, track_local=False, n_actions=None):
        self.n_agents = n_agents
        self.n_actions = n_actions
        self.tables = [dict() for _ in range(n_agents + 1)]
        self.local = {} if track_local else None
        # (key, prefix) -> child-count vector; a lookup cache when k is known
        self.children = {} if n_actions else None

    def increment(self, key, actions):
        a = tuple(int(x) for x in actions)
        if len(a) != self.n_agents:
            raise ConfigError(f"joint action of length {len(a)} for {self.n_agents} agents")
        for length, table in enumerate(self.tables):
            entry = (key, a[:length])
            table[entry] = table.get(entry, 0) + 1
        if self.children is not None:
            for length in range(self.n_agents):
                entry = (key, a[:length])
                row = self.children.get(entry)
                if row is None:
                    row = self.children[entry] = np.zeros(self.n_actions)
                row[a[length]] += 1
        if self.local is not None:
            for i, ai in enumerate(a):
                entry = (key, i, ai)
                self.local[entry] = self.local.get(entry, 0) + 1

    def count(self, key, prefix=()):
        prefix = tuple(int(x) for x in prefix)
        return self.tables[len(prefix)].get((key, prefix), 0)

    def child_counts(self, key, prefix, n_actions):
        """Counts of ``prefix + (a,)`` for every next action ``a``."""
        if self.children is not None and n_actions == self.n_actions:
            row = self.children.get((key, prefix))
            return row.copy() if row is not None else np.zeros(n_actions)
        table = self.tables[len(prefix) + 1]
        return np.array([table.get((key, prefix + (a,)), 0) for a in range(n_actions)], dtype=np.float64)

    def local_counts(self, key, agent, n_actions):
        if self.local is None:
            raise ConfigError("store was built without local counts")
        return np.array([self.local.get((key, agent, a), 0) for a in range(n_actions)], dtype=np.float64)

    def local_total(self, key, agent, n_actions):
        return float(self.local_counts(key, agent, n_actions).sum())

    def total(self):
        """Sum of table-0 counts, i.e. the number of increments."""
        return sum(self.tables[0].values())

    def n_keys(self):
        return len(self.tables[0])

    def size(self):
        return sum(len(t) for t in self.tables)

    def entries(self):
        for table in self.tables:
            for (key, prefix), c in table.items():
                yield key, prefix, c

    def dump(self, path, keyer=None):
        """Write every entry as JSON ``{key_bits, prefix, count}``."""
        rows = []
        for key, prefix, c in self.entries():
            bits = keyer.bits(key) if keyer is not None else key.hex()
            rows.append({"key_bits": bits, "prefix": list(prefix), "count": c})
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(rows, fh)


def ucb_bonus(c, parent, child):
    """UCB1 term ``c * sqrt(2 ln(parent) / child)``; unvisited children get +inf."""
    if c == 0:
        return 0.0
    if child == 0:
        return math.inf
    return c * math.sqrt(2.0 * math.log(max(parent, 1)) / child)


def ucb_bonus_array(c, parent, children):
    children = np.asarray(children, dtype=np.float64)
    if c == 0:
        return np.zeros_like(children)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = c * np.sqrt(2.0 * math.log(max(parent, 1)) / children)
    out[children == 0] = np.inf
    return out


def sqrt_bonus(c, count):
    """Decaying optimism ``c / sqrt(count)`` with the count clamped at 1."""
    return c / math.sqrt(max(count, 1))


def sqrt_bonus_array(c, counts):
    return c / np.sqrt(np.maximum(np.asarray(counts, dtype=np.float64), 1.0))
