"""alf: learning-driven network optimization toolkit.

Modules
-------
mimo       power allocation environment and exact water-filling solver
kelm       kernel extreme learning machine (RBF kernel ridge regression)
replay     experience replay: learn optimal allocations from solver output
automodel  black-box surrogate construction and simulated annealing
rl         tabular Q-learning and the channel-selection game
bayesopt   Gaussian-process Bayesian optimization with expected improvement
hierarchy  k-means based hierarchical allocation
recommend  kd-tree k-NN solution recommendation
cli        command line entry point (``alf``)
"""

from .errors import (AlfError, ConfigError, DimensionError, EmptyDatasetError, IllConditionedError,
                     InvalidArgumentError, NoReliableNeighborsError, UnderdeterminedError,
                     UnsupportedSizeError)
from .mimo import (ChannelRealization, PowerAllocation, grid_oracle, project_feasible, sample_channel,
                   throughput, waterfill)

__version__ = "0.1.0"

__all__ = [
    "AlfError",
    "ConfigError",
    "DimensionError",
    "EmptyDatasetError",
    "IllConditionedError",
    "InvalidArgumentError",
    "NoReliableNeighborsError",
    "UnderdeterminedError",
    "UnsupportedSizeError",
    "ChannelRealization",
    "PowerAllocation",
    "grid_oracle",
    "project_feasible",
    "sample_channel",
    "throughput",
    "waterfill",
]
