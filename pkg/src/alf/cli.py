"""Command line entry point.

Every subcommand takes ``--config FILE`` (``key = value`` lines) plus flag
overrides, validates the merged configuration before doing any work, and
writes only inside its output location. Exit status: 0 success, 2 usage or
configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import bayesopt, bench, hierarchy, kelm, recommend, replay, rl
from .automodel import AnnealConfig, fit_objective_surrogate, optimize_surrogate, read_samples, write_result
from .errors import AlfError, ConfigError

log = logging.getLogger("alf")

DEFAULT_SEED = 42

SCALES = bench.SCALES


@dataclass
class RunConfig:
    n_antennas: int = 50
    noise_power: float = 1.0
    budget: float = 20.0
    count: int = 10_000
    train_fraction: float = 0.9
    split_seed: int = 0
    c: float | None = None
    gamma: float | None = None
    folds: int = 5
    input_quantile: float = replay.DEFAULT_INPUT_QUANTILE
    seed: int = DEFAULT_SEED
    threads: int = 1
    # rl
    states: int = 5
    slip: float = 0.0
    episodes: int = 10_000
    alpha: float = 0.1
    discount: float = 0.9
    epsilon: float = 1.0
    epsilon_decay: float = 0.999
    # game
    users: int = 2
    channels: int = 2
    rounds: int = 500
    cooperative: bool = False
    # bayes-opt
    objective: str = "quadratic"
    trials: int = 20
    init: int = 5
    # auto-model
    samples: str | None = None
    iterations: int = 5000
    restarts: int = 4
    # hierarchy
    ks: str | None = None  # default: 1,2,5,10 below n, then n
    seeds: int = 100
    # recommend
    k: int = 5
    index_count: int = 5000
    queries: int = 200
    radius: float | None = None
    # replay files
    data: str | None = None
    model: str | None = None
    scale: str = "desk"

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.n_antennas >= 1, "n_antennas must be >= 1")
        need(self.noise_power > 0 and self.budget > 0, "noise_power and budget must be > 0")
        need(self.count >= 1, "count must be >= 1")
        need(0 < self.train_fraction < 1, "train_fraction must be in (0, 1)")
        need(self.c is None or self.c > 0, "c must be > 0")
        need(self.gamma is None or self.gamma > 0, "gamma must be > 0")
        need(self.folds >= 2, "folds must be >= 2")
        need(0 < self.input_quantile <= 100, "input_quantile must be in (0, 100]")
        need(self.threads >= 1, "threads must be >= 1")
        need(self.states >= 1 and 0 <= self.slip < 0.5, "states >= 1 and slip in [0, 0.5)")
        need(self.episodes >= 0 and self.rounds >= 1, "episodes >= 0 and rounds >= 1")
        need(0 <= self.alpha <= 1 and 0 <= self.discount < 1, "alpha in [0,1], discount in [0,1)")
        need(0 <= self.epsilon <= 1 and 0 < self.epsilon_decay <= 1, "epsilon in [0,1], decay in (0,1]")
        need(self.users >= 1 and self.channels >= 1, "users and channels must be >= 1")
        need(self.objective in ("quadratic", "q-alpha"), "objective must be quadratic or q-alpha")
        need(self.trials >= self.init >= 1, "need trials >= init >= 1")
        need(self.iterations >= 1 and self.restarts >= 1, "iterations and restarts must be >= 1")
        need(self.seeds >= 1 and self.k >= 1 and self.queries >= 1, "seeds, k, queries must be >= 1")
        need(self.index_count >= self.k, "index_count must be >= k")
        need(self.radius is None or self.radius > 0, "radius must be > 0")
        need(self.scale in SCALES, f"scale must be one of {sorted(SCALES)}")
        try:
            ks = self.k_list()
        except ValueError:
            raise ConfigError(f"ks must be a comma separated list of integers, got {self.ks!r}") from None
        need(all(1 <= k <= self.n_antennas for k in ks), "every k in ks must be in [1, n_antennas]")

    def k_list(self) -> list[int]:
        if self.ks is None:
            return [k for k in (1, 2, 5, 10) if k < self.n_antennas] + [self.n_antennas]
        return [int(v) for v in str(self.ks).split(",") if v.strip()]


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    text = raw.strip()
    if "None" in kind and text.lower() in ("", "none", "null"):
        return None
    try:
        if kind.startswith("bool"):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return text


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = {}
    for n, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        values[key] = _coerce(key, val)
    return values


def build_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    env_seed = os.environ.get("ALF_SEED")
    if env_seed is not None:
        values["seed"] = _coerce("seed", env_seed)
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for key in _FIELD_TYPES:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# -- subcommands ---------------------------------------------------------------

def _env(cfg: RunConfig) -> replay.EnvConfig:
    return replay.EnvConfig(cfg.n_antennas, cfg.noise_power, cfg.budget)


def _require_file(path, what):
    if not path:
        raise ConfigError(f"{what} path is required")
    if not Path(path).is_file():
        raise ConfigError(f"{what} not found: {path}")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _hyper(cfg):
    if cfg.c is not None and cfg.gamma is not None:
        return {"c": cfg.c, "gamma": cfg.gamma}
    return "cv"


def cmd_gen_data(cfg: RunConfig, args) -> None:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ds = replay.accumulate(cfg.count, _env(cfg), master_seed=cfg.seed, threads=cfg.threads)
    replay.save_dataset(ds, out)
    log.info("wrote %d instances to %s", len(ds), out)


def cmd_train_replay(cfg: RunConfig, args) -> None:
    _require_file(cfg.data, "dataset")
    out = _out_dir(args)
    ds = replay.filter_dataset(replay.load_dataset(cfg.data))
    train, _ = replay.split(ds, cfg.train_fraction, seed=cfg.split_seed)
    model = replay.train_replay(train, _hyper(cfg), input_quantile=cfg.input_quantile,
                                folds=cfg.folds, seed=cfg.seed)
    kelm.save_model(model, out / "model.json")
    _write_json(out / "train_info.json", {
        "c": model.c, "gamma": model.gamma, "train_rows": len(train),
        "timing": {"train_seconds": model.info["train_seconds"]},
    })


def cmd_eval_replay(cfg: RunConfig, args) -> None:
    _require_file(cfg.data, "dataset")
    _require_file(cfg.model, "model")
    out = _out_dir(args)
    ds = replay.filter_dataset(replay.load_dataset(cfg.data))
    _, test = replay.split(ds, cfg.train_fraction, seed=cfg.split_seed)
    model = kelm.load_model(cfg.model)
    report = replay.evaluate(model, test)
    replay.write_eval_outputs(report, out)


def cmd_auto_model(cfg: RunConfig, args) -> None:
    _require_file(cfg.samples, "samples")
    out = _out_dir(args)
    X, y = read_samples(cfg.samples)
    s = fit_objective_surrogate(X, y, cfg.c, cfg.gamma, folds=cfg.folds, seed=cfg.seed)
    res = optimize_surrogate(s, AnnealConfig(iterations=cfg.iterations, seed=cfg.seed,
                                             restarts=cfg.restarts))
    write_result(res, out)


def _qconfig(cfg: RunConfig, episodes: int, seed: int, **over) -> rl.QConfig:
    base = dict(alpha=cfg.alpha, discount=cfg.discount, epsilon=cfg.epsilon,
                epsilon_decay=cfg.epsilon_decay, episodes=episodes, seed=seed)
    base.update(over)
    return rl.QConfig(**base)


def cmd_rl_train(cfg: RunConfig, args) -> None:
    out = _out_dir(args)
    env = rl.chain_mdp(cfg.states, slip=cfg.slip)
    trace: list = []
    q = rl.train_q(env, _qconfig(cfg, cfg.episodes, cfg.seed), trace=trace)
    q_star = rl.value_iteration(env, cfg.discount)
    rl.write_training_trace(trace, out / "training_trace.csv")
    _write_json(out / "qtable.json", {
        "q": q.values.tolist(),
        "policy": rl.greedy_policy(q).tolist(),
        "optimal_policy": rl.greedy_policy(q_star).tolist(),
        "relative_error": float(np.abs(q.values - q_star.values).max() / np.abs(q_star.values).max()),
    })


def cmd_game_sim(cfg: RunConfig, args) -> None:
    out = _out_dir(args)
    game = rl.ChannelGame(cfg.users, cfg.channels)
    res = rl.simulate_game(game, _game_config(cfg, cfg.seed), cooperative=cfg.cooperative)
    rl.write_game_trace(res, out / "game_trace.csv")
    _write_json(out / "game_result.json", {
        "final_joint": res.final_joint.tolist(), "nash": res.nash,
        "convergence_round": res.convergence_round, "first_nash_round": res.first_nash_round,
    })


def _game_config(cfg: RunConfig, seed: int) -> rl.QConfig:
    # single-state game: no bootstrapping, faster exploration decay
    return _qconfig(cfg, cfg.rounds, seed, discount=0.0, epsilon_decay=min(cfg.epsilon_decay, 0.99))


def _quadratic(x):
    return -float((x[0] - 0.6) ** 2)


def cmd_bayes_opt(cfg: RunConfig, args) -> None:
    out = _out_dir(args)
    if cfg.objective == "quadratic":
        f, bounds = _quadratic, [[0.0, 1.0]]
    else:
        env = rl.chain_mdp(cfg.states, slip=0.2)
        f, bounds = (lambda x: rl.mean_training_return(env, x[0])), [[0.01, 1.0]]
    res = bayesopt.bayes_optimize(f, bounds, cfg.trials, cfg.init, seed=cfg.seed)
    bayesopt.write_history(res, out / "bo_history.csv")
    _write_json(out / "bo_result.json", {"best_x": res.best_x.tolist(), "best_y": res.best_y})


def cmd_hier_bench(cfg: RunConfig, args) -> None:
    out = _out_dir(args)
    rows = hierarchy.loss_sweep(cfg.k_list(), cfg.n_antennas, range(cfg.seeds), cfg.noise_power, cfg.budget)
    hierarchy.write_sweep_csv(rows, out / "hier_report.csv")


def cmd_recommend(cfg: RunConfig, args) -> None:
    out = _out_dir(args)
    if cfg.data:
        _require_file(cfg.data, "dataset")
        ds = replay.filter_dataset(replay.load_dataset(cfg.data))
    else:
        ds = replay.accumulate(cfg.index_count, _env(cfg), master_seed=cfg.seed)
    idx = recommend.build_index(ds)
    recommend.save_index(idx, out / "index.csv", dataset=ds)
    doc = bench.ssr_quality(idx, ds.meta, cfg.k, cfg.queries, cfg.seed + 1_000_003, cfg.radius)
    _write_json(out / "recommend_report.json", doc)


def cmd_bench_all(cfg: RunConfig, args) -> None:
    out = _out_dir(args)
    report = bench.run_bench(cfg)
    _write_json(out / "report.json", report)


COMMANDS = {
    "gen-data": (cmd_gen_data, "sample channels and store water-filling optima as a dataset CSV"),
    "train-replay": (cmd_train_replay, "train the experience-replay KELM on a dataset"),
    "eval-replay": (cmd_eval_replay, "evaluate a trained replay model on the held-out split"),
    "auto-model": (cmd_auto_model, "fit a surrogate to x_1..x_d,y samples and anneal it"),
    "rl-train": (cmd_rl_train, "Q-learning on the chain MDP"),
    "game-sim": (cmd_game_sim, "Q-learning channel selection game"),
    "bayes-opt": (cmd_bayes_opt, "Bayesian optimization of a built-in objective"),
    "hier-bench": (cmd_hier_bench, "hierarchical allocation loss sweep over k"),
    "recommend": (cmd_recommend, "build a k-NN index and score recommendations"),
    "bench-all": (cmd_bench_all, "run every benchmark and write report.json"),
}

# flags per subcommand: (flag, RunConfig field, type)
_FLAGS = {
    "env": [("--n", "n_antennas", int), ("--noise", "noise_power", float), ("--budget", "budget", float)],
    "split": [("--train-fraction", "train_fraction", float), ("--split-seed", "split_seed", int)],
    "kelm": [("--c", "c", float), ("--gamma", "gamma", float), ("--folds", "folds", int),
             ("--input-quantile", "input_quantile", float)],
    "q": [("--alpha", "alpha", float), ("--discount", "discount", float), ("--epsilon", "epsilon", float),
          ("--epsilon-decay", "epsilon_decay", float)],
}

_SUB_FLAGS = {
    "gen-data": ["env", [("--count", "count", int)]],
    "train-replay": ["split", "kelm", [("--data", "data", str)]],
    "eval-replay": ["split", [("--data", "data", str), ("--model", "model", str)]],
    "auto-model": [[("--samples", "samples", str), ("--c", "c", float), ("--gamma", "gamma", float),
                    ("--iterations", "iterations", int), ("--restarts", "restarts", int)]],
    "rl-train": ["q", [("--states", "states", int), ("--slip", "slip", float), ("--episodes", "episodes", int)]],
    "game-sim": ["q", [("--users", "users", int), ("--channels", "channels", int), ("--rounds", "rounds", int)]],
    "bayes-opt": [[("--objective", "objective", str), ("--trials", "trials", int), ("--init", "init", int)]],
    "hier-bench": ["env", [("--ks", "ks", str), ("--seeds", "seeds", int)]],
    "recommend": ["env", [("--data", "data", str), ("--k", "k", int), ("--index-count", "index_count", int),
                          ("--queries", "queries", int), ("--radius", "radius", float)]],
    "bench-all": [[("--n", "n_antennas", int), ("--budget", "budget", float)]],
}

_DEFAULT_OUT = {"gen-data": "dataset.csv"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int, help="random seed (default: $ALF_SEED or 42)")
        p.add_argument("--threads", type=int, help="worker cap; results do not depend on it")
        p.add_argument("-o", "--out", default=_DEFAULT_OUT.get(name, "out"),
                       help="output file (gen-data) or directory")
        for group in _SUB_FLAGS[name]:
            for flag, dest, kind in (_FLAGS[group] if isinstance(group, str) else group):
                p.add_argument(flag, dest=dest, type=kind)
        if name == "game-sim":
            p.add_argument("--cooperative", action="store_true", default=None)
        if name == "bench-all":
            p.add_argument("--scale", dest="scale", choices=sorted(SCALES))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        cfg = build_config(args)
        handler = COMMANDS[args.command][0]
        # validation that needs the filesystem happens inside the handler
        # before any output is created
        handler(cfg, args)
    except ConfigError as exc:
        print(f"alf {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except (AlfError, OSError, ValueError, ArithmeticError) as exc:
        print(f"alf {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
