"""Q-learning on a chain, then users learning to share channels.

The chain has 5 states and pays 1 only at the far end, so the learner must
discover that walking right is worth it. The game has users picking among
channels with reward 1/(users on the same channel).
"""
import numpy as np

from alf import rl
from alf.rl import ChannelGame, QConfig

env = rl.chain_mdp(5)
q = rl.train_q(env, QConfig(episodes=10_000, seed=0))
q_star = rl.value_iteration(env, 0.9)
print("learned policy ", rl.greedy_policy(q)[:5], "(1 = right)")
print("optimal policy ", rl.greedy_policy(q_star)[:5])
print("max |Q - Q*|   ", f"{np.abs(q.values - q_star.values).max():.2e}")

cfg = QConfig(alpha=0.1, discount=0.0, epsilon=1.0, epsilon_decay=0.99, episodes=500, seed=4)
for users in (2, 3):
    game = ChannelGame(users, 2)
    for coop in (False, True):
        res = rl.simulate_game(game, cfg, cooperative=coop)
        label = "cooperative" if coop else "selfish    "
        print(f"U={users} {label} final channels {res.final_joint.tolist()}, Nash={res.nash}, "
              f"settled at round {res.convergence_round}")
print("Nash equilibria for U=3:", rl.nash_equilibria(ChannelGame(3, 2)))
