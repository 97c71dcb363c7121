"""End-to-end benchmark behind ``alf bench-all``.

Every section returns plain JSON values. Wall-clock measurements go under
the section's ``timing`` key so two runs with the same seed can be compared
after dropping those keys.
"""

from __future__ import annotations

import time

import numpy as np

from . import bayesopt, hierarchy, recommend, replay, rl
from .errors import NoReliableNeighborsError
from .mimo import (ChannelRealization, grid_oracle, sample_channel, throughput, uniform_allocation,
                   water_level, waterfill)

GRID_STEP = 0.01
LATENCY_GRID_STEP = 1e-3

# train/test instance counts, plus the replay rows reused as the k-NN index
SCALES = {
    "desk": {"train_count": 3000, "test_count": 500},
    "paper": {"train_count": 9000, "test_count": 1000},
}


def kkt_residual(ch: ChannelRealization, powers) -> float:
    """Largest violation of the water-filling optimality conditions."""
    p = np.asarray(powers, dtype=float)
    f = ch.floors
    mu, _ = water_level(ch)
    active = p > 0
    res = [abs(p.sum() - ch.budget), max(0.0, -p.min())]
    if active.any():
        res.append(np.abs(p[active] + f[active] - mu).max())
    if (~active).any():
        res.append(max(0.0, float((mu - f[~active]).max())))
    return float(max(res))


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def bench_replay(train_count, test_count, seed, threads=1, n=50, budget=20.0):
    env = replay.EnvConfig(n, 1.0, budget)
    total = train_count + test_count
    ds, gen_s = _timed(lambda: replay.filter_dataset(
        replay.accumulate(total, env, master_seed=seed, threads=threads)))
    train, test = replay.split(ds, train_count / total, seed=seed)
    model = replay.train_replay(train, "cv", seed=seed)
    rep = replay.evaluate(model, test)
    section = {
        "n_antennas": n, "train_rows": len(train), "test_rows": len(test),
        "c": model.c, "gamma": model.gamma,
        "mae": rep.mae, "mean_throughput_ratio": rep.mean_throughput_ratio,
        "min_throughput_ratio": rep.min_throughput_ratio,
        "baseline_uniform_ratio": rep.baseline_uniform_ratio,
        "mae_histogram": rep.mae_histogram,
        "timing": {
            "generate_seconds": gen_s,
            "train_seconds": rep.train_seconds,
            "predict_seconds_per_instance": rep.predict_seconds_per_instance,
            "oracle_seconds_per_instance": rep.oracle_seconds_per_instance,
        },
    }
    return section, model, train


def bench_latency(seed, train_count=500, queries=20, budget=20.0):
    """Deployed model vs the grid oracle on 3 antennas.

    The reference grid uses step 1e-3 * budget, the resolution needed for
    roughly 1e-3 per-coordinate agreement; a coarse 1e-2 * budget grid is
    timed as well.
    """
    env = replay.EnvConfig(3, 1.0, budget)
    ds = replay.filter_dataset(replay.accumulate(train_count, env, master_seed=seed))
    model = replay.train_replay(ds, "cv", seed=seed)
    chans = [sample_channel(3, 1.0, budget, seed=seed + 500_000 + i) for i in range(queries)]
    _, t_model = _timed(lambda: [replay.deploy_predict(model, ch) for ch in chans])
    fine, coarse = LATENCY_GRID_STEP * budget, GRID_STEP * budget
    _, t_fine = _timed(lambda: [grid_oracle(ch, fine) for ch in chans])
    _, t_coarse = _timed(lambda: [grid_oracle(ch, coarse) for ch in chans])
    return {
        "n_antennas": 3, "queries": queries, "grid_step": fine, "coarse_grid_step": coarse,
        "timing": {
            "model_seconds_per_instance": t_model / queries,
            "grid_seconds_per_instance": t_fine / queries,
            "coarse_grid_seconds_per_instance": t_coarse / queries,
            "speedup": t_fine / t_model,
            "coarse_speedup": t_coarse / t_model,
        },
    }


def bench_waterfill(seed, kkt_instances=10_000, random_instances=100, random_allocs=1000):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(kkt_instances):
        n = int(rng.integers(1, 65))
        budget = float(rng.uniform(0.1, 50.0))
        noise = float(rng.uniform(0.1, 5.0))
        ch = sample_channel(n, noise, budget, seed=seed + i)
        worst = max(worst, kkt_residual(ch, waterfill(ch).powers))

    grid_cases, grid_worst = 0, 0.0
    for n in (1, 2, 3):
        for i in range(20):
            ch = sample_channel(n, 1.0, 1.0, seed=seed + 10_000 * n + i)
            step = GRID_STEP
            g = grid_oracle(ch, step).powers
            w = waterfill(ch).powers
            grid_worst = max(grid_worst, float(np.abs(g - w).max()) / step)
            grid_cases += 1

    beaten = 0
    for i in range(random_instances):
        ch = sample_channel(50, 1.0, 20.0, seed=seed + 100_000 + i)
        best = throughput(ch, waterfill(ch))
        r = np.random.default_rng([seed, i])
        alloc = r.dirichlet(np.ones(50), size=random_allocs) * ch.budget
        rates = np.log2(1.0 + alloc * ch.gains / ch.noise_power).sum(axis=1)
        beaten += int(best >= rates.max())
    return {
        "kkt_instances": kkt_instances, "kkt_max_residual": worst,
        "grid_cases": grid_cases, "grid_max_error_in_steps": grid_worst,
        "random_instances": random_instances, "random_allocations": random_allocs,
        "random_dominated_instances": beaten,
    }


def bench_qlearning(seed, seeds=10, episodes=10_000):
    env = rl.chain_mdp(5)
    q_star = rl.value_iteration(env, 0.9)
    opt = rl.greedy_policy(q_star)
    matches, errs = 0, []
    for s in range(seeds):
        q = rl.train_q(env, rl.QConfig(episodes=episodes, seed=seed + s))
        matches += int(np.array_equal(rl.greedy_policy(q)[:5], opt[:5]))
        errs.append(float(np.abs(q.values - q_star.values).max() / np.abs(q_star.values).max()))
    return {"seeds": seeds, "episodes": episodes, "policy_matches": matches,
            "max_relative_error": max(errs)}


def _game_cfg(seed, rounds=500):
    return rl.QConfig(alpha=0.1, discount=0.0, epsilon=1.0, epsilon_decay=0.99, episodes=rounds, seed=seed)


def _median_round(results, rounds):
    # runs that never settle count as the full horizon
    vals = [r.convergence_round if r.convergence_round is not None else rounds for r in results]
    return float(np.median(vals))


def bench_game(seed, seeds=100, rounds=500):
    out = {"seeds": seeds, "rounds": rounds}
    for U in (2, 3):
        game = rl.ChannelGame(U, 2)
        plain = [rl.simulate_game(game, _game_cfg(seed + s, rounds)) for s in range(seeds)]
        coop = [rl.simulate_game(game, _game_cfg(seed + s, rounds), cooperative=True) for s in range(seeds)]
        split = sum(int(sorted(np.bincount(r.final_joint, minlength=2).tolist()) == [1, 2]) for r in plain)
        out[f"u{U}_k2"] = {
            "nash_count": sum(r.nash for r in plain),
            "split_2_1_count": split if U == 3 else None,
            "median_convergence_round": _median_round(plain, rounds),
            "cooperative_nash_count": sum(r.nash for r in coop),
            "cooperative_median_convergence_round": _median_round(coop, rounds),
            "median_first_nash_round": float(np.median([r.first_nash_round for r in plain])),
            "cooperative_median_first_nash_round": float(np.median([r.first_nash_round for r in coop])),
        }
    return out


def _quadratic(x):
    return -float((x[0] - 0.6) ** 2)


def bench_bayesopt(seed, seeds=50, budget=20):
    hits, bo_regret, rs_regret = 0, [], []
    for s in range(seeds):
        bo = bayesopt.bayes_optimize(_quadratic, [[0.0, 1.0]], budget, 5, seed=seed + s)
        rs = bayesopt.random_search(_quadratic, [[0.0, 1.0]], budget, seed=seed + s)
        hits += int(abs(bo.best_x[0] - 0.6) <= 0.05)
        bo_regret.append(-bo.best_y)
        rs_regret.append(-rs.best_y)
    return {"seeds": seeds, "budget": budget, "hits_within_0_05": hits,
            "median_regret": float(np.median(bo_regret)),
            "random_search_median_regret": float(np.median(rs_regret))}


def bench_hierarchy(seed, n=50, seeds=100, ks=(1, 2, 5, 10, 50)):
    rows = hierarchy.loss_sweep(ks, n, range(seed, seed + seeds))
    # homogeneous clusters: k distinct gain levels, clustering recovers them exactly
    gains = np.repeat([0.25, 0.5, 1.0, 2.0, 4.0], n // 5)
    ch = ChannelRealization(gains, 1.0, 20.0)
    homo = hierarchy.performance_loss(ch, 5, seed=seed).ratio
    timing = [{"k": r["k"], "hier_seconds": r.pop("hier_seconds"), "flat_seconds": r.pop("flat_seconds")}
              for r in rows]
    return {"n_antennas": n, "seeds": seeds, "sweep": rows,
            "max_ratio": max(r["max_ratio"] for r in rows),
            "homogeneous_ratio": homo, "timing": {"sweep": timing}}


def bench_knn(seed, n=50, budget=20.0, index_count=5000, queries=1000, index_points=1000,
              ssr_queries=200, k=5):
    ds = replay.accumulate(index_count, replay.EnvConfig(n, 1.0, budget), master_seed=seed + 7_000_000)
    sub = ds.subset(np.arange(min(index_points, len(ds))))
    idx = recommend.build_index(sub)
    Q = np.random.default_rng(seed).exponential(1.0, (queries, n))
    identical = sum(int(recommend.knn_query(idx, q, k) == recommend.linear_scan(idx, q, k)) for q in Q)
    full = recommend.build_index(ds)
    ssr = ssr_quality(full, ds.meta, k, ssr_queries, seed + 1_000_003)
    return {"index_points": len(sub), "queries": queries, "identical": identical,
            "tree_depth": idx.depth, "ssr_index_points": len(full), "ssr": ssr}


def ssr_quality(idx, meta, k, queries, query_seed, radius=None) -> dict:
    """Throughput ratio of recommendations vs the optimum on fresh channels.

    With ``radius`` set, also reports how many queries pass the coverage
    guard and their mean ratio.
    """
    n = int(meta["n_antennas"])
    ratios, uniform, accepted = [], [], []
    for i in range(queries):
        ch = sample_channel(n, meta.get("noise_power", 1.0), meta["budget"], seed=query_seed + i)
        best = throughput(ch, waterfill(ch))
        ratios.append(throughput(ch, recommend.recommend(idx, ch.gains, k)) / best)
        uniform.append(throughput(ch, uniform_allocation(ch)) / best)
        if radius is not None:
            try:
                recommend.recommend(idx, ch.gains, k, radius=radius)
                accepted.append(ratios[-1])
            except NoReliableNeighborsError:
                pass
    doc = {"k": k, "queries": queries, "mean_ratio": float(np.mean(ratios)),
           "uniform_ratio": float(np.mean(uniform))}
    if radius is not None:
        doc["accepted"] = len(accepted)
        doc["accepted_mean_ratio"] = float(np.mean(accepted)) if accepted else None
    return doc


def run_bench(cfg) -> dict:
    """All benchmark sections at ``cfg.scale`` with master seed ``cfg.seed``."""
    sc = SCALES[cfg.scale]
    seed = cfg.seed
    t0 = time.perf_counter()
    rep, _, _ = bench_replay(sc["train_count"], sc["test_count"], seed, cfg.threads,
                                     cfg.n_antennas, cfg.budget)
    report = {
        "scale": cfg.scale, "seed": seed,
        "replay": rep,
        "latency": bench_latency(seed),
        "waterfill": bench_waterfill(seed),
        "qlearning": bench_qlearning(seed),
        "game": bench_game(seed),
        "bayesopt": bench_bayesopt(seed),
        "hierarchy": bench_hierarchy(seed, cfg.n_antennas),
        "knn": bench_knn(seed, cfg.n_antennas, cfg.budget),
    }
    report["timing"] = {"total_seconds": time.perf_counter() - t0}
    return report
