"""Bayesian optimization with expected improvement.

First a toy quadratic with its peak at 0.6, then tuning the Q-learning rate
on a slippery chain where every evaluation means training agents.
"""
from alf import rl
from alf.bayesopt import bayes_optimize, random_search

res = bayes_optimize(lambda x: -float((x[0] - 0.6) ** 2), [[0.0, 1.0]], budget=20, init=5, seed=0)
print("quadratic: best x", res.best_x.round(4), "after", len(res.history), "evaluations")
for i, x, y, best in res.history[-5:]:
    print(f"  round {i:2d}  x={x[0]:.4f}  y={y:.2e}  best {best:.2e}")

env = rl.chain_mdp(5, slip=0.2)


def score(x):
    return rl.mean_training_return(env, float(x[0]))


bo = bayes_optimize(score, [[0.01, 1.0]], budget=10, init=4, seed=1)
rs = random_search(score, [[0.01, 1.0]], budget=20, seed=1)
print(f"\nlearning rate by BO (10 trials):  alpha={bo.best_x[0]:.3f}, mean return {bo.best_y:.4f}")
print(f"random search (20 trials):        alpha={rs.best_x[0]:.3f}, mean return {rs.best_y:.4f}")
