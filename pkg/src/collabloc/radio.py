"""Log-distance path loss: RSS to range for fusion, range to noisy RSS for simulation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LdplParams:
    l0: float = 1.0         # reference distance, m
    rss_l0: float = -59.0   # dBm at l0
    n: float = 2.0          # path-loss exponent
    sigma_noise: float = 4.0  # shadowing std-dev, dB

    def __post_init__(self):
        if not self.l0 > 0:
            raise ValueError("l0 must be positive")
        if not self.n > 0:
            raise ValueError("path-loss exponent must be positive")
        if not self.sigma_noise >= 0:
            raise ValueError("sigma_noise must be non-negative")


BLUETOOTH_DEFAULT = LdplParams(l0=1.0, rss_l0=-59.0, n=2.0, sigma_noise=4.0)
WIFI_DEFAULT = LdplParams(l0=1.0, rss_l0=-40.0, n=3.0, sigma_noise=5.0)


def rss_to_distance(params: LdplParams, rss: float) -> float:
    # weaker signal -> longer range
    return params.l0 * 10.0 ** ((params.rss_l0 - rss) / (10.0 * params.n))


def distance_to_rss(params: LdplParams, d):
    """Noise-free RSS at distance ``d``; accepts scalars or arrays."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(~(d_arr > 0)):
        raise ValueError("distance must be positive")
    out = params.rss_l0 - 10.0 * params.n * np.log10(d_arr / params.l0)
    return float(out) if np.ndim(out) == 0 else out


def sample_rss(params: LdplParams, d, rng: np.random.Generator):
    """``distance_to_rss(d)`` plus one Gaussian shadowing draw per distance."""
    mean = distance_to_rss(params, d)
    if np.ndim(mean) == 0:
        return mean + params.sigma_noise * float(rng.standard_normal())
    return mean + params.sigma_noise * rng.standard_normal(np.shape(mean))
