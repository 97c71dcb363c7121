"""Synthetic massive-MIMO power allocation environment.

Each problem instance is a set of parallel Gaussian channels with linear
power gains ``g``, a noise power ``sigma2`` and a total power budget ``P``.
The objective is the sum rate ``sum(log2(1 + p_i g_i / sigma2))`` and its
exact maximizer is given by water-filling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InvalidArgumentError, UnsupportedSizeError

__all__ = [
    "ChannelRealization",
    "PowerAllocation",
    "sample_channel",
    "derive_seed",
    "throughput",
    "waterfill",
    "water_level",
    "grid_oracle",
    "project_feasible",
    "uniform_allocation",
]


@dataclass(frozen=True)
class ChannelRealization:
    """One power allocation problem instance.

    Parameters
    ----------
    gains : array_like
        Linear power gain per antenna, all strictly positive.
    noise_power : float
        Noise power on the same linear scale.
    budget : float
        Total transmit power.
    """

    gains: np.ndarray
    noise_power: float = 1.0
    budget: float = 1.0

    def __post_init__(self):
        g = np.array(self.gains, dtype=float).ravel()
        if g.size < 1:
            raise InvalidArgumentError("a channel needs at least one antenna")
        if not np.all(np.isfinite(g)) or np.any(g <= 0):
            raise InvalidArgumentError("channel gains must be finite and > 0")
        if not self.noise_power > 0:
            raise InvalidArgumentError(f"noise_power must be > 0, got {self.noise_power}")
        if not self.budget > 0:
            raise InvalidArgumentError(f"budget must be > 0, got {self.budget}")
        g.setflags(write=False)
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "noise_power", float(self.noise_power))
        object.__setattr__(self, "budget", float(self.budget))

    @property
    def n_antennas(self) -> int:
        return self.gains.size

    @property
    def floors(self) -> np.ndarray:
        """Inverse channel quality ``sigma2 / g_i`` (the water-filling floor)."""
        return self.noise_power / self.gains


@dataclass(frozen=True)
class PowerAllocation:
    """Non-negative power per antenna."""

    powers: np.ndarray = field()

    def __post_init__(self):
        p = np.array(self.powers, dtype=float).ravel()
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise InvalidArgumentError("powers must be finite and non-negative")
        p.setflags(write=False)
        object.__setattr__(self, "powers", p)

    def __len__(self):
        return self.powers.size

    @property
    def total(self) -> float:
        return float(self.powers.sum())

    def is_feasible(self, ch: ChannelRealization, tol: float = 1e-9) -> bool:
        return len(self) == ch.n_antennas and self.total <= ch.budget + tol


def derive_seed(master_seed: int, i: int) -> int:
    """Per-instance seed used for batch generation (``master XOR i``)."""
    return int(master_seed) ^ int(i)


def sample_channel(n: int, noise_power: float = 1.0, budget: float = 1.0,
                   seed: int | None = None) -> ChannelRealization:
    """Draw i.i.d. Rayleigh-fading power gains (Exponential with unit mean)."""
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"n must be a positive integer, got {n}")
    if not noise_power > 0 or not budget > 0:
        raise InvalidArgumentError("noise_power and budget must be > 0")
    rng = np.random.default_rng(seed)
    gains = rng.exponential(1.0, size=int(n))
    # exponential() can return exactly 0.0 with negligible probability
    gains = np.maximum(gains, np.finfo(float).tiny)
    return ChannelRealization(gains, noise_power, budget)


def _powers(alloc) -> np.ndarray:
    if isinstance(alloc, PowerAllocation):
        return alloc.powers
    return np.asarray(alloc, dtype=float).ravel()


def throughput(ch: ChannelRealization, alloc) -> float:
    """Sum rate in bits/s/Hz of ``alloc`` on channel ``ch``."""
    p = _powers(alloc)
    if p.size != ch.n_antennas:
        raise DimensionError(f"allocation has {p.size} entries, channel has {ch.n_antennas}")
    return float(np.sum(np.log2(1.0 + p * ch.gains / ch.noise_power)))


def water_level(ch: ChannelRealization) -> tuple[float, int]:
    """Exact water level ``mu`` and number of active channels.

    Floors are sorted ascending; with the ``k`` best channels active the level
    is ``(P + sum of k smallest floors) / k``. The active count is the largest
    ``k`` whose level still lies above the k-th floor.
    """
    floors = np.sort(ch.floors)
    csum = np.cumsum(floors)
    k = np.arange(1, floors.size + 1)
    levels = (ch.budget + csum) / k
    active = np.nonzero(levels > floors)[0]
    # k=1 always qualifies since budget > 0
    n_active = int(active[-1]) + 1
    return float(levels[n_active - 1]), n_active


def waterfill(ch: ChannelRealization) -> PowerAllocation:
    """Throughput-maximizing allocation using the whole budget."""
    mu, _ = water_level(ch)
    return PowerAllocation(np.maximum(0.0, mu - ch.floors))


def grid_oracle(ch: ChannelRealization, step: float) -> PowerAllocation:
    """Brute-force grid search for ``n_antennas <= 3``.

    The objective is strictly increasing in every power, so only the face
    ``sum(p) == budget`` of the simplex is enumerated: all antennas but the
    last take grid values and the last one takes the remainder.
    """
    n = ch.n_antennas
    if n > 3:
        raise UnsupportedSizeError(f"grid_oracle supports at most 3 antennas, got {n}")
    if not step > 0:
        raise InvalidArgumentError("step must be > 0")
    if n == 1:
        return PowerAllocation([ch.budget])
    levels = np.arange(0.0, ch.budget + 0.5 * step, step)
    levels = levels[levels <= ch.budget]
    g, s2, P = ch.gains, ch.noise_power, ch.budget
    if n == 2:
        p1 = levels
        p2 = P - p1
        rate = np.log2(1 + p1 * g[0] / s2) + np.log2(1 + np.maximum(p2, 0) * g[1] / s2)
        i = int(np.argmax(rate))
        return PowerAllocation([p1[i], max(P - p1[i], 0.0)])
    best, best_p = -np.inf, None
    r0 = np.log2(1 + levels * g[0] / s2)
    r1 = np.log2(1 + levels * g[1] / s2)
    for i, p1 in enumerate(levels):
        p2 = levels[: levels.size - i]
        p2 = p2[p2 <= P - p1]
        p3 = np.maximum(P - p1 - p2, 0.0)
        rate = r0[i] + r1[: p2.size] + np.log2(1 + p3 * g[2] / s2)
        j = int(np.argmax(rate))
        if rate[j] > best:
            best, best_p = rate[j], (p1, p2[j], p3[j])
    return PowerAllocation(best_p)


def project_feasible(raw, budget: float) -> PowerAllocation:
    """Clamp negatives to zero and rescale onto ``sum(p) == budget``.

    An all-zero (or all-negative) vector falls back to the uniform split.
    Non-finite entries are treated as zero.
    """
    if not budget > 0:
        raise InvalidArgumentError("budget must be > 0")
    p = np.asarray(raw, dtype=float).ravel().copy()
    p[~np.isfinite(p)] = 0.0
    p = np.maximum(p, 0.0)
    total = p.sum()
    if total > 0:
        p *= budget / total
    else:
        p = np.full(p.size, budget / p.size)
    return PowerAllocation(p)


def uniform_allocation(ch: ChannelRealization) -> PowerAllocation:
    return PowerAllocation(np.full(ch.n_antennas, ch.budget / ch.n_antennas))

