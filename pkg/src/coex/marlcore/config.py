from __future__ import annotations

from dataclasses import dataclass, fields

from coex.errors import ConfigError

VARIANTS = ("coe", "cond_iq", "cond_cq", "ucb_ind", "ucb_cen", "eps_greedy")
DEPENDENT = ("cond_iq", "cond_cq")


@dataclass
class COEConfig:
    """Hyperparameters of one training run.

    Defaults follow the common value-decomposition settings (soft target
    update 0.01, gamma 0.99, linear epsilon anneal 1.0 -> 0.0 over 50k steps,
    reward standardization on, gradient norm clipped at 10) with desk-scale
    network sizes. ``grad_clip = 0`` disables clipping. ``random_ties``
    breaks ties between equally scored actions (such as several unvisited
    ones) with the seeded acting generator instead of by lowest index.
    """

    variant: str = "coe"
    c_act: float = 0.01
    c_rew: float = 0.0
    c_boot: float = 0.0
    gamma: float = 0.99
    lr: float = 3e-4
    batch: int = 32
    buffer: int = 20000
    tau: float = 0.01
    grad_clip: float = 10.0
    train_interval: int = 1
    k: int = 8
    exact_counts: bool = False
    mixer: str = "monotonic"
    hidden: int = 64
    mixer_embed: int = 32
    optimizer: str = "adam"
    reward_standardization: bool = True
    epsilon_start: float = 1.0
    epsilon_end: float = 0.0
    epsilon_anneal: int = 50000
    random_order: bool = False
    random_ties: bool = False
    freeze_correction: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        for name in ("c_act", "c_rew", "c_boot", "lr", "tau", "grad_clip"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0, 1]")
        if self.tau > 1.0:
            raise ConfigError("tau must lie in [0, 1]")
        if self.epsilon_anneal < 1:
            raise ConfigError("epsilon_anneal must be at least 1")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.batch < 1 or self.buffer < self.batch or self.train_interval < 1 or self.k < 1:
            raise ConfigError("batch, buffer, train_interval and k must be positive with buffer >= batch")
        if self.mixer not in ("vdn", "monotonic"):
            raise ConfigError(f"unknown mixer {self.mixer!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")

    @property
    def dependent(self):
        return self.variant in DEPENDENT

    def effective_scales(self):
        """(c_act, c_rew, c_boot) after variant-specific overrides."""
        if self.variant == "eps_greedy":
            return 0.0, 0.0, 0.0
        if self.variant == "ucb_cen":
            return 0.0, self.c_rew, 0.0
        return self.c_act, self.c_rew, self.c_boot

    def epsilon(self, step):
        if self.variant != "eps_greedy":
            return 0.0
        frac = min(step / self.epsilon_anneal, 1.0)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]
