"""Conditionally optimistic exploration for cooperative multi-agent learning.

Subpackages and modules:

``coex.ndgrad``     reverse-mode autodiff, optimizers, checkpoints
``coex.envs``       Bernoulli game, level-based foraging, a tiny chain MDP
``coex.counting``   SimHash keys and prefix-conditioned visit counts
``coex.banditlab``  tabular UCB learners for the repeated Bernoulli game
``coex.marlcore``   value-decomposition learners with count-based optimism
``coex.harness``    configs, seeded runs, sweeps, statistics and reports
"""

from coex.errors import ConfigError, NumericalError

__version__ = "0.1.0"
__all__ = ["ConfigError", "NumericalError", "__version__"]
