import csv
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alf import rl
from alf.errors import InvalidArgumentError
from alf.rl import ChannelGame, QConfig, QTable


def test_q_update_examples():
    q = QTable.zeros(3, 2)
    rl.q_update(q, 0, 1, 5.0, 1, QConfig(alpha=0.0))
    assert np.all(q.values == 0)

    rl.q_update(q, 0, 1, 1.0, 1, QConfig(alpha=1.0, discount=0.0))
    assert q.values[0, 1] == 1.0

    q = QTable.zeros(3, 2)
    q.values[2] = [2.0, -1.0]
    before = q.values.copy()
    rl.q_update(q, 0, 0, 1.0, 2, QConfig(alpha=0.5, discount=0.9))
    assert q.values[0, 0] == pytest.approx(1.4, abs=1e-12)
    changed = np.argwhere(q.values != before)
    assert changed.tolist() == [[0, 0]]


def test_q_update_terminal_and_range():
    q = QTable.zeros(2, 2)
    q.values[1] = 10.0
    rl.q_update(q, 0, 0, 1.0, 1, QConfig(alpha=1.0, discount=0.9), terminal=True)
    assert q.values[0, 0] == 1.0
    with pytest.raises(IndexError):
        rl.q_update(q, 2, 0, 1.0, 0, QConfig())
    with pytest.raises(IndexError):
        rl.q_update(q, 0, 3, 1.0, 0, QConfig())


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.0, 0.95), st.integers(0, 10_000))
def test_q_stays_bounded(alpha, discount, seed):
    rng = np.random.default_rng(seed)
    r_max = 2.0
    cfg = QConfig(alpha=alpha, discount=discount)
    q = QTable.zeros(4, 3)
    for _ in range(300):
        rl.q_update(q, int(rng.integers(4)), int(rng.integers(3)), float(rng.uniform(0, r_max)),
                    int(rng.integers(4)), cfg)
    assert q.values.min() >= 0
    assert q.values.max() <= r_max / (1 - discount) + 1e-9


def test_qconfig_validation():
    for bad in ({"alpha": 1.5}, {"discount": 1.0}, {"epsilon": -0.1}, {"epsilon_decay": 0.0},
                {"episodes": -1}):
        with pytest.raises(InvalidArgumentError):
            QConfig(**bad)


def test_greedy_policy_ties_low_index():
    assert rl.greedy_policy(QTable.zeros(3, 4)).tolist() == [0, 0, 0]
    assert rl.greedy_policy(QTable(np.array([[1.0, 3.0, 2.0]]))).tolist() == [1]
    assert rl.greedy_policy(QTable(np.array([[2.0, 2.0]]))).tolist() == [0]


def test_epsilon_decay_floor():
    trace = []
    rl.train_q(rl.chain_mdp(3), QConfig(epsilon_decay=0.5, episodes=20), trace=trace)
    eps = [e for _, e, _ in trace]
    assert eps[0] == 1.0 and eps[1] == 0.5
    assert min(eps) == rl.EPSILON_FLOOR


# -- MDPs and oracles ----------------------------------------------------------

def test_value_iteration_single_state():
    env = rl.TabularMdp(np.ones((1, 1, 1)), np.array([[2.0]]))
    q = rl.value_iteration(env, 0.8)
    assert q.values[0, 0] == pytest.approx(2.0 / 0.2, abs=1e-8)


def test_value_iteration_zero_discount():
    env = rl.random_mdp(4, 3, seed=1)
    assert np.allclose(rl.value_iteration(env, 0.0).values, env.rewards)


def test_chain_policy_brute_force():
    env = rl.chain_mdp(5)
    q_star = rl.value_iteration(env, 0.9)
    best_value, best = -np.inf, None
    for pol in itertools.product([0, 1], repeat=5):
        v = rl.policy_value(env, list(pol) + [0], 0.9)[0]
        if v > best_value + 1e-12:
            best_value, best = v, pol
    assert best == (1, 1, 1, 1, 1)
    assert rl.greedy_policy(q_star)[:5].tolist() == list(best)
    assert q_star.values.max(axis=1)[0] == pytest.approx(best_value)


def test_train_q_zero_episodes():
    q = rl.train_q(rl.chain_mdp(5), QConfig(episodes=0))
    assert np.all(q.values == 0)


def test_train_q_chain_converges():
    env = rl.chain_mdp(5)
    q_star = rl.value_iteration(env, 0.9)
    q = rl.train_q(env, QConfig(episodes=10_000, seed=3))
    assert rl.greedy_policy(q)[:5].tolist() == [1] * 5
    assert np.abs(q.values - q_star.values).max() <= 0.05 * np.abs(q_star.values).max()


def test_train_q_deterministic():
    env = rl.chain_mdp(5, slip=0.2)
    a = rl.train_q(env, QConfig(episodes=300, seed=5))
    b = rl.train_q(env, QConfig(episodes=300, seed=5))
    assert np.array_equal(a.values, b.values)


def test_zero_discount_maximizes_immediate_reward():
    # single-step episodes: every state is a start state and every move terminates
    S, A = 4, 3
    rng = np.random.default_rng(2)
    R = rng.random((S, A))
    P = np.zeros((S + 1, A, S + 1))
    P[:, :, S] = 1.0
    terminal = np.zeros(S + 1, dtype=bool)
    terminal[S] = True
    Rfull = np.vstack([R, np.zeros((1, A))])
    for s in range(S):
        env = rl.TabularMdp(P, Rfull, terminal, initial_state=s, reward_noise=0.1)
        q = rl.train_q(env, QConfig(alpha=0.05, discount=0.0, epsilon=1.0, epsilon_decay=1.0,
                                    episodes=3000, seed=s))
        assert rl.greedy_policy(q)[s] == int(np.argmax(R[s]))


def test_chain_slip_rewards_are_expectations():
    env = rl.chain_mdp(5, slip=0.2)
    assert env.rewards[4].tolist() == pytest.approx([0.2, 0.8])
    assert np.allclose(env.transitions.sum(axis=2), 1.0)
    with pytest.raises(InvalidArgumentError):
        rl.chain_mdp(5, slip=0.6)


def test_mdp_validation():
    with pytest.raises(InvalidArgumentError):
        rl.TabularMdp(np.ones((2, 1, 2)), np.zeros((2, 1)))
    with pytest.raises(InvalidArgumentError):
        rl.TabularMdp(np.full((2, 1, 2), 0.5), np.zeros((3, 1)))


def test_step_returns_valid_states():
    env = rl.random_mdp(5, 2, seed=4)
    rng = np.random.default_rng(0)
    for _ in range(500):
        s2, r, done = env.step(int(rng.integers(5)), int(rng.integers(2)), rng)
        assert 0 <= s2 < 5 and not done


# -- channel game ----------------------------------------------------------------

def test_rewards_and_nash_examples():
    g2 = ChannelGame(2, 2)
    assert rl.is_nash(g2, [0, 1])
    assert not rl.is_nash(g2, [0, 0])
    assert rl.is_nash(ChannelGame(1, 3), [2])
    assert rl.cooperative_rewards(g2, [0, 1]).tolist() == [1.0, 1.0]
    assert rl.cooperative_rewards(g2, [1, 1]).tolist() == [0.5, 0.5]
    assert rl.cooperative_rewards(ChannelGame(3, 2), [0, 0, 1]) == pytest.approx([2 / 3] * 3)
    assert rl.congestion_rewards(ChannelGame(3, 2), [0, 0, 1]).tolist() == [0.5, 0.5, 1.0]


def test_nash_enumeration():
    assert sorted(rl.nash_equilibria(ChannelGame(2, 2))) == [(0, 1), (1, 0)]
    eq3 = rl.nash_equilibria(ChannelGame(3, 2))
    assert len(eq3) == 6
    assert all(sorted(np.bincount(j, minlength=2)) == [1, 2] for j in eq3)


def test_single_user_game():
    res = rl.simulate_game(ChannelGame(1, 3), QConfig(discount=0.0, episodes=50, seed=0))
    assert res.nash and np.all(res.rewards == 1.0)


def game_cfg(seed, rounds=500):
    return QConfig(alpha=0.1, discount=0.0, epsilon=1.0, epsilon_decay=0.99, episodes=rounds, seed=seed)


def test_two_user_game_separates():
    results = [rl.simulate_game(ChannelGame(2, 2), game_cfg(s)) for s in range(100)]
    distinct = sum(int(r.final_joint[0] != r.final_joint[1]) for r in results)
    assert distinct >= 95
    assert all(r.nash == rl.is_nash(ChannelGame(2, 2), r.final_joint) for r in results)


def test_three_user_game_splits():
    results = [rl.simulate_game(ChannelGame(3, 2), game_cfg(s)) for s in range(50)]
    assert all(sorted(np.bincount(r.final_joint, minlength=2)) == [1, 2] for r in results)


def test_game_result_fields():
    res = rl.simulate_game(ChannelGame(3, 2), game_cfg(1, rounds=200))
    assert res.trajectory.shape == (200, 3) and res.rewards.shape == (200, 3)
    assert res.convergence_round is not None and 0 <= res.convergence_round <= 200
    assert res.first_nash_round is not None
    assert rl.is_nash(ChannelGame(3, 2), res.trajectory[res.first_nash_round])


def test_cooperative_trajectory_reaches_nash_no_later():
    """Median first round whose played joint action is Nash, over 100 seeds."""
    for users in (2, 3):
        game = ChannelGame(users, 2)
        plain = [rl.simulate_game(game, game_cfg(s)).first_nash_round for s in range(100)]
        coop = [rl.simulate_game(game, game_cfg(s), cooperative=True).first_nash_round for s in range(100)]
        assert np.median(coop) <= np.median(plain)


# -- files -----------------------------------------------------------------------

def test_trace_files(tmp_path):
    trace = []
    rl.train_q(rl.chain_mdp(3), QConfig(episodes=5), trace=trace)
    rl.write_training_trace(trace, tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["episode", "epsilon", "return"] and len(rows) == 6
    res = rl.simulate_game(ChannelGame(2, 2), game_cfg(0, rounds=4))
    rl.write_game_trace(res, tmp_path / "g.csv")
    rows = list(csv.reader(open(tmp_path / "g.csv")))
    assert rows[0] == ["round", "user", "action", "reward"] and len(rows) == 1 + 4 * 2


def test_mean_training_return_sensitive_to_alpha():
    env = rl.chain_mdp(5, slip=0.2)
    assert rl.mean_training_return(env, 0.05) != rl.mean_training_return(env, 0.9)
