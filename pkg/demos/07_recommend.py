"""Similar-solution recommendation: reuse the allocations of the nearest past channels.

No model is trained. A kd-tree over stored channel gains returns the k
closest instances and their allocations are averaged.
"""
import numpy as np

from alf import recommend, replay
from alf.errors import NoReliableNeighborsError
from alf.mimo import sample_channel, throughput, uniform_allocation, waterfill
from alf.replay import EnvConfig

ds = replay.accumulate(3000, EnvConfig(20, 1.0, 10.0), master_seed=2)
idx = recommend.build_index(ds)
print(f"index of {len(ds)} channels, tree depth {idx.depth}")

radius = recommend.default_radius(idx)
ratios, uniform = [], []
for i in range(100):
    ch = sample_channel(20, 1.0, 10.0, seed=10_000 + i)
    best = throughput(ch, waterfill(ch))
    ratios.append(throughput(ch, recommend.recommend(idx, ch.gains, k=5)) / best)
    uniform.append(throughput(ch, uniform_allocation(ch)) / best)
print(f"recommended / optimal {np.mean(ratios):.4f}, uniform / optimal {np.mean(uniform):.4f}")

far = np.full(20, 40.0)
try:
    recommend.recommend(idx, far, k=5, radius=radius)
except NoReliableNeighborsError as exc:
    print("far-off query refused:", exc)
