from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coex.banditlab import VARIANTS, DepRewDepOpt, IndRewDepOpt, IndRewIndOpt, UCBCen, make_learner, run_game
from coex.errors import ConfigError


def _play(learner, actions, payoff):
    learner.update(np.array([actions]), np.array([payoff], dtype=np.float64))


def test_ucbcen_visits_every_arm_once_first():
    n, k = 2, 3
    learner = UCBCen(n, k)
    seen = []
    for _ in range(k**n):
        a = learner.select()
        seen.append(tuple(a[0]))
        _play(learner, a[0], 0.0)
    assert sorted(seen) == list(product(range(k), repeat=n))
    assert seen == list(product(range(k), repeat=n))  # lowest index first


def test_less_visited_child_selected():
    learner = DepRewDepOpt(1, 3)
    for a, p in ((0, 1), (0, 0), (1, 1), (1, 0), (2, 1)):
        _play(learner, [a], p)
    # means: 0.5, 0.5, 1.0 with counts 2, 2, 1; lower the winner's mean to tie
    learner.X[0, learner.offsets[1] + 2] = 0.5
    assert learner.select()[0, 0] == 2


def test_zero_c_is_greedy():
    learner = DepRewDepOpt(1, 3, c=0.0)
    for a, p in ((0, 0), (1, 1), (2, 0)):
        _play(learner, [a], p)
    assert learner.select()[0, 0] == 1


def test_update_incremental_mean():
    learner = DepRewDepOpt(1, 2)
    _play(learner, [1], 1.0)
    leaf = learner.offsets[1] + 1
    assert learner.X[0, leaf] == 1.0 and learner.N[0, leaf] == 1
    _play(learner, [1], 0.0)
    assert learner.X[0, leaf] == 0.5 and learner.N[0, leaf] == 2


def test_ind_ind_touches_only_local_tables():
    learner = IndRewIndOpt(3, 2)
    _play(learner, [1, 0, 1], 1.0)
    assert learner.Ni[0].tolist() == [[0, 1], [1, 0], [0, 1]]
    assert learner.Xi[0].tolist() == [[0, 1], [1, 0], [0, 1]]
    assert not hasattr(learner, "N")


def test_ind_dep_means_ignore_predecessors():
    learner = IndRewDepOpt(2, 2)
    _play(learner, [0, 1], 1.0)
    _play(learner, [1, 1], 0.0)
    assert learner.Xi[0, 1].tolist() == [0.0, 0.5]
    assert learner.Mi[0, 1].tolist() == [0, 2]
    # prefix-conditioned counts still split by predecessor
    off = learner.offsets[2]
    assert learner.N[0, off + 1] == 1 and learner.N[0, off + 3] == 1


def test_unknown_variant_and_bad_c():
    with pytest.raises(ConfigError):
        make_learner("Thompson", 2, 2)
    with pytest.raises(ConfigError):
        DepRewDepOpt(2, 2, c=-1.0)


def test_oracle_has_zero_regret():
    res = run_game("Oracle", 3, 3, 0.4, 200, range(5))
    assert not res.trace.cum_regret.any()
    assert res.trace.optimal.all()


def test_small_dependent_game_converges():
    res = run_game("DepRewDepOpt", 2, 2, 0.0, 2000, range(50))
    assert res.summary()["mean_opt_rate"][-1] >= 0.95


def test_regret_bounds_and_monotone():
    for variant in VARIANTS:
        res = run_game(variant, 3, 2, 0.4, 300, range(4))
        per_step = res.trace.regret
        assert np.isin(per_step, [0.0, 0.9 - 0.4]).all()
        cum = res.trace.cum_regret
        assert (np.diff(cum, axis=1) >= 0).all()
        assert (cum[:, -1] <= 300 * 0.5 + 1e-9).all()


def test_dependent_counts_prefix_sum():
    rng = np.random.default_rng(0)
    n, k = 3, 3
    learner = DepRewDepOpt(n, k, n_seeds=2)
    for _ in range(400):
        a = rng.integers(k, size=(2, n))
        learner.update(a, rng.integers(2, size=2).astype(np.float64))
    off = learner.offsets
    for length in range(n):
        for code in range(k**length):
            parent = learner.N[:, off[length] + code]
            children = learner.N[:, off[length + 1] + code * k : off[length + 1] + code * k + k].sum(axis=1)
            assert np.array_equal(parent, children)
    assert (0 <= learner.X).all() and (learner.X <= 1).all()


def test_single_agent_variants_coincide():
    traces = [run_game(v, 1, 4, 0.3, 400, [3, 8]).trace.optimal for v in VARIANTS]
    for t in traces[1:]:
        assert np.array_equal(t, traces[0])


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.integers(0, 2**31 - 1))
def test_shifting_means_keeps_argmax(shift, seed):
    rng = np.random.default_rng(seed)
    learner = DepRewDepOpt(3, 2)
    for _ in range(30):
        learner.update(rng.integers(2, size=(1, 3)), rng.integers(2, size=1).astype(np.float64))
    before = learner.select()
    learner.X += shift
    assert np.array_equal(learner.select(), before)


def test_seed_traces_independent_of_batch():
    alone = run_game("IndRewIndOpt", 3, 3, 0.0, 200, [7]).trace.optimal
    batch = run_game("IndRewIndOpt", 3, 3, 0.0, 200, [1, 7, 4]).trace.optimal
    assert np.array_equal(alone[0], batch[1])
