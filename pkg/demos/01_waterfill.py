"""Water-filling on a handful of Rayleigh channels.

Draw one channel realization, compute the optimal power split, and compare
it with a uniform split and with a brute-force grid search on 3 antennas.
"""
import numpy as np

from alf.mimo import grid_oracle, sample_channel, throughput, uniform_allocation, water_level, waterfill

ch = sample_channel(8, noise_power=1.0, budget=4.0, seed=3)
print("gains      ", np.round(ch.gains, 3))

opt = waterfill(ch)
mu, active = water_level(ch)
print("water level", round(mu, 4), "with", active, "active antennas")
print("powers     ", np.round(opt.powers, 3))

# weak antennas sit above the water and get nothing
print("sum rate   ", round(throughput(ch, opt), 4), "bit/s/Hz")
print("uniform    ", round(throughput(ch, uniform_allocation(ch)), 4), "bit/s/Hz")

small = sample_channel(3, 1.0, 2.0, seed=11)
step = 1e-3 * small.budget
grid = grid_oracle(small, step)
print("\n3 antennas, grid step", step)
print("closed form", np.round(waterfill(small).powers, 4))
print("grid search", np.round(grid.powers, 4))
