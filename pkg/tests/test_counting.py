import json
import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coex.counting import (
    CountStore,
    ExactKeyer,
    Projector,
    make_keyer,
    sqrt_bonus,
    sqrt_bonus_array,
    ucb_bonus,
    ucb_bonus_array,
)
from coex.errors import ConfigError


def test_identity_projection():
    p = Projector.from_matrix(np.eye(2))
    assert p.project([0.5, -2.0]).tolist() == [1, -1]


def test_sign_of_zero_is_positive():
    p = Projector(5, k=16, seed=3)
    assert (p.project(np.zeros(5)) == 1).all()


def test_projection_determinism():
    rng = np.random.default_rng(0)
    s = rng.standard_normal(20)
    a, b = Projector(20, k=12, seed=7), Projector(20, k=12, seed=7)
    assert a.key(s) == a.key(s) == b.key(s)
    assert a.bits(a.key(s)) == a.project(s).tolist()


def test_projection_dimension_mismatch():
    with pytest.raises(ConfigError):
        Projector(3, k=4).project(np.zeros(4))
    with pytest.raises(ConfigError):
        Projector(3, k=0)


def test_exact_keyer_distinguishes_states():
    keyer = make_keyer(3, exact=True)
    assert isinstance(keyer, ExactKeyer)
    assert keyer.key([1.0, 0.0, 0.0]) != keyer.key([1.0, 0.0, 1e-9])
    assert keyer.bits(keyer.key([1.0, 2.0, 3.0])) == [1.0, 2.0, 3.0]


def test_angular_locality():
    rng = np.random.default_rng(11)
    theta = np.pi / 4
    d, pairs = 8, 10_000
    p = Projector(d, k=1, seed=5)
    same = 0
    for _ in range(pairs):
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        w = rng.standard_normal(d)
        w -= (w @ u) * u
        w /= np.linalg.norm(w)
        v = np.cos(theta) * u + np.sin(theta) * w
        same += p.project(u)[0] == p.project(v)[0]
    assert abs(same / pairs - (1 - theta / np.pi)) < 0.03


def test_increment_examples():
    store = CountStore(2)
    assert store.count(b"s", (0, 1)) == 0
    store.increment(b"s", (0, 1))
    assert store.count(b"s", (0, 1)) == 1 and store.count(b"s") == 1
    store.increment(b"s", (0, 2))
    assert store.count(b"s", (0,)) == 2
    assert store.count(b"s", (0, 1)) == store.count(b"s", (0, 2)) == 1


def test_increment_rejects_wrong_length():
    with pytest.raises(ConfigError):
        CountStore(3).increment(b"s", (0, 1))


def _check_prefix_sums(store, n, k):
    for key in {key for key, _, _ in store.entries()}:
        for length in range(n):
            for prefix in product(range(k), repeat=length):
                children = sum(store.count(key, prefix + (a,)) for a in range(k))
                assert store.count(key, prefix) == children


def test_prefix_sum_identity_random_workload():
    rng = np.random.default_rng(1)
    n, k = 3, 3
    store = CountStore(n, n_actions=k)
    keys = [bytes([i]) for i in range(5)]
    for _ in range(1000):
        store.increment(keys[rng.integers(5)], rng.integers(k, size=n))
    _check_prefix_sums(store, n, k)
    assert store.total() == 1000


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.lists(st.integers(0, 2), min_size=3, max_size=3)), max_size=60))
def test_prefix_sum_identity_property(ops):
    store = CountStore(3, n_actions=3)
    for key, actions in ops:
        store.increment(bytes([key]), actions)
    _check_prefix_sums(store, 3, 3)
    assert store.total() == len(ops)
    pairs = {(key, tuple(a)) for key, a in ops}
    assert store.size() <= 4 * len(pairs)


def test_child_cache_matches_tables():
    rng = np.random.default_rng(2)
    cached, plain = CountStore(3, n_actions=4), CountStore(3)
    for _ in range(500):
        key, a = bytes([rng.integers(3)]), rng.integers(4, size=3)
        cached.increment(key, a)
        plain.increment(key, a)
    for key in (bytes([0]), bytes([1]), bytes([9])):
        for length in range(3):
            for prefix in product(range(4), repeat=length):
                assert np.array_equal(cached.child_counts(key, prefix, 4), plain.child_counts(key, prefix, 4))


def test_local_counts():
    store = CountStore(2, track_local=True)
    store.increment(b"s", (1, 0))
    store.increment(b"s", (1, 1))
    assert store.local_counts(b"s", 0, 2).tolist() == [0, 2]
    assert store.local_counts(b"s", 1, 2).tolist() == [1, 1]
    with pytest.raises(ConfigError):
        CountStore(2).local_counts(b"s", 0, 2)


def test_dump(tmp_path):
    keyer = Projector.from_matrix(np.eye(2))
    store = CountStore(1)
    store.increment(keyer.key([1.0, -1.0]), (2,))
    path = tmp_path / "counts.json"
    store.dump(path, keyer)
    rows = json.loads(path.read_text())
    assert {"key_bits": [1, -1], "prefix": [], "count": 1} in rows
    assert {"key_bits": [1, -1], "prefix": [2], "count": 1} in rows


def test_ucb_bonus_examples():
    assert ucb_bonus(1.0, 1, 1) == 0.0
    assert ucb_bonus(1.0, 10, 0) == math.inf
    assert ucb_bonus(1.0, math.e**2, 2) == pytest.approx(math.sqrt(2), abs=1e-6)
    assert ucb_bonus(0.0, 10, 0) == 0.0


def test_ucb_bonus_array_matches_scalar():
    children = np.array([0, 1, 3, 10])
    assert ucb_bonus_array(0.5, 14, children).tolist() == [ucb_bonus(0.5, 14, c) for c in children]
    assert not ucb_bonus_array(0.0, 14, children).any()


@given(st.floats(0.01, 10), st.integers(1, 10_000), st.integers(1, 10_000))
def test_ucb_bonus_monotone(c, parent, child):
    assert ucb_bonus(c, parent + 1, child) >= ucb_bonus(c, parent, child)
    if parent > 1:
        assert ucb_bonus(c, parent, child + 1) < ucb_bonus(c, parent, child)


def test_sqrt_bonus_examples():
    assert sqrt_bonus(0.05, 1) == 0.05
    assert sqrt_bonus(0.05, 4) == pytest.approx(0.025)
    assert sqrt_bonus(0.05, 0) == 0.05
    assert sqrt_bonus(0.0, 7) == 0.0
    assert sqrt_bonus_array(0.05, [0, 1, 4]).tolist() == pytest.approx([0.05, 0.05, 0.025])
