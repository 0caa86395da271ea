"""Leaky integrate-and-fire neuron with a polynomial membrane distortion."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class LifConfig:
    alpha: float = 0.9
    mu: float = 1.0
    sigma: float = 0.0

    def __post_init__(self):
        if not 0 <= self.alpha < 1:
            raise ConfigError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not self.mu > 0:
            raise ConfigError(f"mu must be positive, got {self.mu}")
        if not self.sigma >= 0:
            raise ConfigError(f"sigma must be non-negative, got {self.sigma}")


@dataclass(frozen=True)
class NeuronState:
    v: float = 0.0


def distort(x, sigma):
    """``x + sigma/2 x^2 + sigma/6 x^3``; works elementwise on arrays."""
    return x + (sigma / 2) * x * x + (sigma / 6) * x * x * x


def distort_slope(x, sigma):
    return 1 + sigma * x + (sigma / 2) * x * x


def lif_update(v, i_syn, cfg):
    """One step for arrays of neurons. Returns (new_v, spikes, distorted_v).

    ``distorted_v`` is the potential the threshold was compared against,
    before reset; the surrogate-gradient trainer needs it.
    """
    u = cfg.alpha * v + (1 - cfg.alpha) * i_syn
    d = distort(u, cfg.sigma)
    fired = d >= cfg.mu
    new_v = np.where(fired | (d < 0), 0.0, d)
    return new_v, fired.astype(np.float64), d


def lif_step(state, i_syn, cfg):
    """Advance a single neuron by one tick: integrate, distort, fire, reset."""
    v = cfg.alpha * state.v + (1 - cfg.alpha) * i_syn
    v = distort(v, cfg.sigma)
    spike = 1 if v >= cfg.mu else 0
    if v >= cfg.mu or v < 0:
        v = 0.0
    return NeuronState(v), spike
