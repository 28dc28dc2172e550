"""Tracking parameters and the TOML config file."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .radio import BLUETOOTH_DEFAULT, WIFI_DEFAULT, LdplParams


@dataclass(frozen=True)
class FusionConfig:
    delta_w: float = 4.0           # Wi-Fi position std-dev, m
    delta_b: float = 2.0           # Bluetooth range std-dev, m
    window_s: float = 10.0         # non-temporal grouping window
    wifi_effect_s: float = 10.0    # how far from a tick a Wi-Fi scan still counts
    bt_effect_s: float = 2.0       # same, for a Bluetooth sighting
    particle_count: int = 1000
    speed_mean: float = 1.0        # m/s
    speed_std: float = 0.3         # m/s
    track_interval_s: float = 0.5
    # non-temporal: use r^2/(2 dw^2) instead of r^2/dw^2 in the reduced error
    halve_wifi_term: bool = False
    # temporal
    use_bluetooth: bool = True
    bt_max_normalize: bool = True
    bt_weight: float = 1.0
    move_attempts: int = 10
    stair_radius_m: float = 1.5
    stair_prob: float = 0.2
    floor_penalty_m: float = 10.0
    bt_floor_penalty_m: float = 0.0

    def __post_init__(self):
        for name in ("delta_w", "delta_b", "window_s", "wifi_effect_s", "bt_effect_s",
                     "speed_mean", "track_interval_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.speed_std < 0:
            raise ValueError("speed_std must be non-negative")
        if self.particle_count < 1:
            raise ValueError("particle_count must be >= 1")
        if self.window_s < self.track_interval_s:
            raise ValueError("window_s must be >= track_interval_s")

    def replace(self, **kw) -> "FusionConfig":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class FingerprintConfig:
    k: int = 5
    missing_rss: float = -100.0
    clusters: int = 30
    grid_step_m: float = 1.0


@dataclass
class Config:
    fusion: FusionConfig
    fingerprint: FingerprintConfig
    ldpl_bluetooth: LdplParams
    ldpl_wifi: LdplParams
    scenario: dict[str, Any]


def _build(cls, section: dict | None, default):
    if not section:
        return default
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return dataclasses.replace(default, **section)


def config_from_dict(doc: dict) -> Config:
    ldpl = doc.get("ldpl", {})
    return Config(
        fusion=_build(FusionConfig, doc.get("fusion"), FusionConfig()),
        fingerprint=_build(FingerprintConfig, doc.get("fingerprint"), FingerprintConfig()),
        ldpl_bluetooth=_build(LdplParams, ldpl.get("bluetooth"), BLUETOOTH_DEFAULT),
        ldpl_wifi=_build(LdplParams, ldpl.get("wifi"), WIFI_DEFAULT),
        scenario=dict(doc.get("scenario", {})),
    )


def load_config(path: str | Path | None = None) -> Config:
    """Read a TOML config; ``None`` loads the bundled demo config."""
    if path is None:
        text = resources.files("collabloc").joinpath("data/demo.toml").read_text()
    else:
        text = Path(path).read_text()
    return config_from_dict(tomllib.loads(text))


def demo_config_path() -> Path:
    return Path(str(resources.files("collabloc").joinpath("data/demo.toml")))
