"""Tabular Q-learning, a value-iteration oracle and a channel-selection game.

The update rule is

    Q(s, a) <- Q(s, a) + alpha * (R + gamma * max_a' Q(s', a') - Q(s, a))

with epsilon-greedy action selection (explore with probability epsilon).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "QConfig",
    "QTable",
    "TabularMdp",
    "chain_mdp",
    "random_mdp",
    "q_update",
    "epsilon_greedy",
    "train_q",
    "greedy_policy",
    "mean_training_return",
    "value_iteration",
    "policy_value",
    "ChannelGame",
    "GameResult",
    "congestion_rewards",
    "cooperative_rewards",
    "is_nash",
    "nash_equilibria",
    "simulate_game",
    "write_training_trace",
    "write_game_trace",
]

EPSILON_FLOOR = 0.01


@dataclass(frozen=True)
class QConfig:
    alpha: float = 0.1
    discount: float = 0.9
    epsilon: float = 1.0
    epsilon_decay: float = 0.999
    episodes: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            # alpha=0 is accepted so a frozen table can be replayed
            raise InvalidArgumentError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0 <= self.discount < 1:
            raise InvalidArgumentError(f"discount must be in [0, 1), got {self.discount}")
        if not 0 <= self.epsilon <= 1:
            raise InvalidArgumentError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if not 0 < self.epsilon_decay <= 1:
            raise InvalidArgumentError(f"epsilon_decay must be in (0, 1], got {self.epsilon_decay}")
        if self.episodes < 0:
            raise InvalidArgumentError("episodes must be >= 0")


@dataclass
class QTable:
    values: np.ndarray

    @classmethod
    def zeros(cls, state_count: int, action_count: int) -> "QTable":
        return cls(np.zeros((state_count, action_count)))

    @property
    def state_count(self) -> int:
        return self.values.shape[0]

    @property
    def action_count(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "QTable":
        return QTable(self.values.copy())


@dataclass
class TabularMdp:
    """Finite MDP given by explicit tables.

    ``transitions[s, a, s2]`` is the transition probability, ``rewards[s, a]``
    the expected reward and ``terminal[s2]`` marks absorbing end states. When
    ``reward_noise`` is positive, sampled rewards get Gaussian noise added.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    terminal: np.ndarray | None = None
    initial_state: int = 0
    reward_noise: float = 0.0

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=float)
        self.rewards = np.asarray(self.rewards, dtype=float)
        S, A, S2 = self.transitions.shape
        if S != S2 or self.rewards.shape != (S, A):
            raise InvalidArgumentError("inconsistent MDP table shapes")
        if not np.allclose(self.transitions.sum(axis=2), 1.0):
            raise InvalidArgumentError("transition rows must sum to 1")
        if self.terminal is None:
            self.terminal = np.zeros(S, dtype=bool)
        self.terminal = np.asarray(self.terminal, dtype=bool)
        self._cdf = np.cumsum(self.transitions, axis=2)

    @property
    def state_count(self) -> int:
        return self.rewards.shape[0]

    @property
    def action_count(self) -> int:
        return self.rewards.shape[1]

    def reset(self, rng: np.random.Generator) -> int:
        return self.initial_state

    def step(self, s: int, a: int, rng: np.random.Generator) -> tuple[int, float, bool]:
        cdf = self._cdf[s, a]
        s2 = min(int(np.searchsorted(cdf, rng.random(), side="right")), self.state_count - 1)
        r = self.rewards[s, a]
        if self.reward_noise > 0:
            r = r + self.reward_noise * rng.standard_normal()
        return s2, float(r), bool(self.terminal[s2])


def chain_mdp(n_states: int = 5, goal_reward: float = 1.0, slip: float = 0.0,
              reward_noise: float = 0.0) -> TabularMdp:
    """Chain walk: action 0 moves left, action 1 moves right.

    States ``0..n_states-1`` are the chain; moving right from the last one
    pays ``goal_reward`` and enters an extra terminal state. With ``slip`` > 0
    the opposite move happens with that probability.
    """
    if not 0 <= slip < 0.5:
        raise InvalidArgumentError("slip must be in [0, 0.5)")
    S = n_states + 1
    P = np.zeros((S, 2, S))
    R = np.zeros((S, 2))
    for s in range(n_states):
        left, right = max(s - 1, 0), s + 1
        P[s, 0, left] += 1.0 - slip
        P[s, 0, right] += slip
        P[s, 1, right] += 1.0 - slip
        P[s, 1, left] += slip
    # expected reward of entering the terminal state from the last chain state
    R[n_states - 1, 0] = slip * goal_reward
    R[n_states - 1, 1] = (1.0 - slip) * goal_reward
    P[n_states, :, n_states] = 1.0
    terminal = np.zeros(S, dtype=bool)
    terminal[n_states] = True
    return TabularMdp(P, R, terminal, reward_noise=reward_noise)


def random_mdp(state_count: int, action_count: int, seed: int = 0,
               reward_noise: float = 0.0) -> TabularMdp:
    """Random dense MDP without terminal states."""
    rng = np.random.default_rng(seed)
    P = rng.random((state_count, action_count, state_count)) + 0.05
    P /= P.sum(axis=2, keepdims=True)
    R = rng.random((state_count, action_count))
    return TabularMdp(P, R, reward_noise=reward_noise)


def q_update(q: QTable, s: int, a: int, r: float, s_next: int, cfg: QConfig,
             terminal: bool = False) -> QTable:
    """Apply one Q-learning step to entry ``(s, a)`` in place and return ``q``.

    A terminal transition has no continuation value.
    """
    S, A = q.values.shape
    if not (0 <= s < S and 0 <= s_next < S and 0 <= a < A):
        raise IndexError(f"(s={s}, a={a}, s'={s_next}) out of range for a {S}x{A} table")
    future = 0.0 if terminal else q.values[s_next].max()
    q.values[s, a] += cfg.alpha * (r + cfg.discount * future - q.values[s, a])
    return q


def epsilon_greedy(row: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    if rng.random() < epsilon:
        return int(rng.integers(row.size))
    return int(np.argmax(row))


def _decay(epsilon: float, decay: float) -> float:
    # the floor only stops decay; it never raises a smaller starting epsilon
    return max(min(epsilon, EPSILON_FLOOR), epsilon * decay)


def train_q(env: TabularMdp, cfg: QConfig, max_steps: int = 100,
            trace: list | None = None, q: QTable | None = None) -> QTable:
    """Run ``cfg.episodes`` epsilon-greedy episodes of Q-learning.

    If ``trace`` is a list, one ``(episode, epsilon, return)`` tuple is
    appended per episode, with the discounted return from the start state.
    """
    rng = np.random.default_rng(cfg.seed)
    q = q if q is not None else QTable.zeros(env.state_count, env.action_count)
    eps = cfg.epsilon
    for ep in range(cfg.episodes):
        s = env.reset(rng)
        ret, disc = 0.0, 1.0
        for _ in range(max_steps):
            a = epsilon_greedy(q.values[s], eps, rng)
            s2, r, done = env.step(s, a, rng)
            q_update(q, s, a, r, s2, cfg, terminal=done)
            ret += disc * r
            disc *= cfg.discount
            s = s2
            if done:
                break
        if trace is not None:
            trace.append((ep, eps, ret))
        eps = _decay(eps, cfg.epsilon_decay)
    return q


def mean_training_return(env: TabularMdp, alpha: float, episodes: int = 50, seeds=range(5),
                         discount: float = 0.9, epsilon: float = 1.0, epsilon_decay: float = 0.95,
                         max_steps: int = 100) -> float:
    """Average discounted episode return during training, over ``seeds``.

    Rewards fast learning, which makes it a black-box objective for tuning
    ``alpha`` with few trials.
    """
    total = 0.0
    seeds = list(seeds)
    for seed in seeds:
        trace: list = []
        cfg = QConfig(alpha=float(np.clip(alpha, 0.0, 1.0)), discount=discount, epsilon=epsilon,
                      epsilon_decay=epsilon_decay, episodes=episodes, seed=seed)
        train_q(env, cfg, max_steps=max_steps, trace=trace)
        total += np.mean([r for _, _, r in trace])
    return float(total / len(seeds))


def greedy_policy(q: QTable) -> np.ndarray:
    """Argmax action per state; ties resolve to the lowest index."""
    return np.argmax(q.values, axis=1)


def value_iteration(env: TabularMdp, discount: float, tol: float = 1e-10,
                    max_iter: int = 100_000) -> QTable:
    """Optimal action values by Bellman iteration to sup-norm change ``< tol``."""
    if not tol > 0:
        raise InvalidArgumentError("tol must be > 0")
    P, R = env.transitions, env.rewards
    live = (~env.terminal).astype(float)
    Q = np.zeros_like(R)
    for _ in range(max_iter):
        V = Q.max(axis=1) * live
        Q_new = R + discount * P @ V
        delta = np.max(np.abs(Q_new - Q))
        Q = Q_new
        if delta < tol:
            break
    return QTable(Q)


def policy_value(env: TabularMdp, policy, discount: float) -> np.ndarray:
    """Exact state values of a stationary deterministic policy."""
    S = env.state_count
    idx = np.arange(S)
    P = env.transitions[idx, policy] * (~env.terminal).astype(float)[None, :]
    R = env.rewards[idx, policy]
    return np.linalg.solve(np.eye(S) - discount * P, R)


# -- channel selection game ---------------------------------------------------

@dataclass(frozen=True)
class ChannelGame:
    """``user_count`` users each pick one of ``channel_count`` channels.

    A user on channel ``c`` earns ``1 / (number of users on c)``.
    """

    user_count: int
    channel_count: int

    def __post_init__(self):
        if self.user_count < 1 or self.channel_count < 1:
            raise InvalidArgumentError("a game needs at least one user and one channel")


def congestion_rewards(game: ChannelGame, joint) -> np.ndarray:
    joint = np.asarray(joint, dtype=int)
    counts = np.bincount(joint, minlength=game.channel_count)
    return 1.0 / counts[joint]


def cooperative_rewards(game: ChannelGame, joint) -> np.ndarray:
    """Every user receives the mean of all users' congestion rewards."""
    r = congestion_rewards(game, joint)
    return np.full(r.size, r.mean())


def is_nash(game: ChannelGame, joint) -> bool:
    """True if no user gains by switching channel on its own."""
    joint = np.asarray(joint, dtype=int)
    base = congestion_rewards(game, joint)
    for u in range(game.user_count):
        for c in range(game.channel_count):
            if c == joint[u]:
                continue
            dev = joint.copy()
            dev[u] = c
            if congestion_rewards(game, dev)[u] > base[u]:
                return False
    return True


def nash_equilibria(game: ChannelGame) -> list[tuple[int, ...]]:
    """All pure Nash joint actions, by enumeration."""
    return [j for j in product(range(game.channel_count), repeat=game.user_count)
            if is_nash(game, j)]


@dataclass
class GameResult:
    trajectory: np.ndarray        # (rounds, users) joint actions played
    rewards: np.ndarray           # (rounds, users) rewards used for learning
    final_joint: np.ndarray       # greedy joint action after the last round
    nash: bool
    convergence_round: int | None  # first round from which the greedy joint action stays Nash
    first_nash_round: int | None   # first round whose played joint action is Nash
    tables: list[QTable] = field(repr=False, default_factory=list)


def simulate_game(game: ChannelGame, cfg: QConfig, cooperative: bool = False) -> GameResult:
    """Independent Q-learners repeatedly playing the channel game.

    Each user keeps a single-state table over channels. Every round all users
    act epsilon-greedily at once, collect rewards (congestion or cooperative)
    and apply ``q_update``; epsilon decays once per round. ``cfg.episodes``
    is the number of rounds.
    """
    rng = np.random.default_rng(cfg.seed)
    U, K = game.user_count, game.channel_count
    tables = [QTable.zeros(1, K) for _ in range(U)]
    reward_fn = cooperative_rewards if cooperative else congestion_rewards
    rounds = cfg.episodes
    traj = np.zeros((rounds, U), dtype=int)
    rew = np.zeros((rounds, U))
    greedy_nash = np.zeros(rounds, dtype=bool)
    eps = cfg.epsilon
    for t in range(rounds):
        joint = np.array([epsilon_greedy(q.values[0], eps, rng) for q in tables])
        r = reward_fn(game, joint)
        for u, q in enumerate(tables):
            q_update(q, 0, joint[u], r[u], 0, cfg)
        traj[t], rew[t] = joint, r
        greedy_nash[t] = is_nash(game, [int(np.argmax(q.values[0])) for q in tables])
        eps = _decay(eps, cfg.epsilon_decay)
    final = np.array([int(np.argmax(q.values[0])) for q in tables])
    nash = is_nash(game, final)
    conv = None
    if nash:
        unstable = np.nonzero(~greedy_nash)[0]
        conv = int(unstable[-1]) + 1 if unstable.size else 0
    played = [t for t in range(rounds) if is_nash(game, traj[t])]
    first = played[0] if played else None
    return GameResult(traj, rew, final, nash, conv, first, tables)


def write_training_trace(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "epsilon", "return"])
        w.writerows((ep, repr(float(e)), repr(float(r))) for ep, e, r in trace)


def write_game_trace(result: GameResult, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "user", "action", "reward"])
        for t, (joint, r) in enumerate(zip(result.trajectory, result.rewards)):
            for u in range(joint.size):
                w.writerow([t, u, int(joint[u]), repr(float(r[u]))])
