"""Automatic model construction: fit a surrogate to samples, then anneal it.

The black box is a bumpy 2-D function we pretend not to know. 150 samples
are enough for a KELM surrogate whose maximum lands near the true one.
"""
import numpy as np

from alf.automodel import AnnealConfig, fit_objective_surrogate, grid_maximize, optimize_surrogate


def black_box(X):
    X = np.atleast_2d(X)
    return -((X[:, 0] - 0.35) ** 2) - 2 * (X[:, 1] - 0.7) ** 2 + 0.05 * np.sin(8 * X[:, 0])


rng = np.random.default_rng(0)
X = rng.random((150, 2))
s = fit_objective_surrogate(X, black_box(X), seed=0)
print(f"surrogate c={s.model.c:g}, gamma={s.model.gamma:g}")

res = optimize_surrogate(s, AnnealConfig(iterations=3000, seed=1))
print("annealing best x   ", res.best_x.round(3), "surrogate value", round(res.best_value, 4))

xg, _ = grid_maximize(black_box, [[0, 1], [0, 1]], step=2e-3)
print("true maximizer     ", np.round(xg, 3))
print("value there / ours ", round(float(black_box(xg)[0]), 4), round(float(black_box(res.best_x)[0]), 4))
