"""Experience replay: learn the channel -> allocation map once, then reuse it.

A small desk run: 1500 solved instances on 50 antennas, cross-validated
KELM, and an evaluation on 200 held-out channels.
"""
from alf import replay
from alf.replay import EnvConfig

env = EnvConfig(n_antennas=50, noise_power=1.0, budget=20.0)
ds = replay.filter_dataset(replay.accumulate(1700, env, master_seed=1))
train, test = replay.split(ds, train_fraction=1500 / 1700, seed=0)
print(f"{len(train)} training rows, {len(test)} test rows")

model = replay.train_replay(train, "cv", seed=42)
print(f"selected c={model.c:g}, gamma={model.gamma:g}")

rep = replay.evaluate(model, test)
print(f"normalized MAE          {rep.mae:.4f}")
print(f"throughput vs optimum   {rep.mean_throughput_ratio:.4f} (worst {rep.min_throughput_ratio:.4f})")
print(f"uniform split baseline  {rep.baseline_uniform_ratio:.4f}")
print(f"predict {rep.predict_seconds_per_instance * 1e6:.0f} us/instance, "
      f"solver {rep.oracle_seconds_per_instance * 1e6:.0f} us/instance")

ch = test.channel(0)
print("\none held-out channel, first 5 antennas")
print("  optimal ", test.targets[0][:5].round(3))
print("  replayed", replay.deploy_predict(model, ch).powers[:5].round(3))
