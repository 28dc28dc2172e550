"""Windowed pairwise correction of Wi-Fi estimates with Bluetooth ranges.

Within each window every device gets one Wi-Fi fix; every Bluetooth sighting
between two located devices moves both fixes along the line joining them so
that the squared-error trade-off between the Wi-Fi Gaussians (std ``delta_w``)
and the range Gaussian (std ``delta_b``) is minimised.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .config import FusionConfig
from .events import EventStream, WifiScan, iter_windows, window_events
from .fingerprint import FingerprintModel, UnlocatableScan, estimate_position
from .geomap import Position
from .radio import LdplParams, rss_to_distance

log = logging.getLogger(__name__)

Track = list[tuple[float, Position]]


@dataclass(frozen=True)
class PairCorrection:
    r_star: float
    corrected_i: Position
    corrected_j: Position


def g_full(xi, yi, xj, yj, est_i: Position, est_j: Position, l: float, cfg: FusionConfig) -> float:
    """Negative log-likelihood (up to a constant) of a candidate pair of positions."""
    wifi = ((xi - est_i.x) ** 2 + (yi - est_i.y) ** 2 +
            (xj - est_j.x) ** 2 + (yj - est_j.y) ** 2) / (2 * cfg.delta_w ** 2)
    d = math.sqrt((xi - xj) ** 2 + (yi - yj) ** 2)
    return wifi + (d - l) ** 2 / (2 * cfg.delta_b ** 2)


def g_reduced(r: float, d_hat: float, l: float, cfg: FusionConfig) -> float:
    """Error as a function of the equal displacement r of both endpoints."""
    a = 2.0 if cfg.halve_wifi_term else 1.0
    return r ** 2 / (a * cfg.delta_w ** 2) + (d_hat - 2 * r - l) ** 2 / (2 * cfg.delta_b ** 2)


def minimize_g_reduced(d_hat: float, l: float, cfg: FusionConfig) -> float:
    """Closed-form argmin of :func:`g_reduced` (its derivative is linear in r)."""
    w2, b2 = cfg.delta_w ** 2, cfg.delta_b ** 2
    if cfg.halve_wifi_term:
        return 2 * w2 * (d_hat - l) / (4 * w2 + b2)
    return w2 * (d_hat - l) / (2 * w2 + b2)


def fuse_pair(est_i: Position, est_j: Position, l: float, cfg: FusionConfig) -> PairCorrection:
    if est_i.floor != est_j.floor:
        return PairCorrection(0.0, est_i, est_j)
    dx, dy = est_j.x - est_i.x, est_j.y - est_i.y
    d_hat = math.hypot(dx, dy)
    r = minimize_g_reduced(d_hat, l, cfg)
    if d_hat == 0.0:
        # no direction to move along; split the pair along x
        log.debug("coincident pair estimates, separating along x by %.3f", abs(r))
        ux, uy, r_move = 1.0, 0.0, -abs(r)
    else:
        ux, uy, r_move = dx / d_hat, dy / d_hat, r
    ci = Position(est_i.x + r_move * ux, est_i.y + r_move * uy, est_i.floor)
    cj = Position(est_j.x - r_move * ux, est_j.y - r_move * uy, est_j.floor)
    return PairCorrection(r, ci, cj)


def _latest_fix(model: FingerprintModel, scans: list[WifiScan], stats: dict) -> Position | None:
    for scan in reversed(scans):
        try:
            return estimate_position(model, scan)
        except UnlocatableScan:
            stats["unlocatable"] += 1
    return None


def _window_fixes(stream: EventStream, model: FingerprintModel, cfg: FusionConfig, stats: dict):
    for window in iter_windows(stream, cfg.window_s):
        wifi, bt = window_events(stream, window)
        fixes = {}
        for dev in sorted(wifi):
            p = _latest_fix(model, wifi[dev], stats)
            if p is not None:
                fixes[dev] = p
        yield window, fixes, bt


def track_wifi_windowed(stream: EventStream, model: FingerprintModel, cfg: FusionConfig
                        ) -> dict[str, Track]:
    """Wi-Fi-only fixes at window granularity (latest scan, window midpoint)."""
    stats = {"unlocatable": 0}
    tracks: dict[str, Track] = {d: [] for d in sorted(stream.participants)}
    for window, fixes, _ in _window_fixes(stream, model, cfg, stats):
        for dev, p in fixes.items():
            tracks[dev].append((window.midpoint, p))
    return tracks


def track_nontemporal(stream: EventStream, model: FingerprintModel, cfg: FusionConfig,
                      ldpl: LdplParams, stats: dict | None = None) -> dict[str, Track]:
    stats = stats if stats is not None else {}
    stats.setdefault("unlocatable", 0)
    stats.setdefault("corrections", 0)
    tracks: dict[str, Track] = {d: [] for d in sorted(stream.participants)}
    for window, fixes, bt in _window_fixes(stream, model, cfg, stats):
        corrected: dict[str, list[Position]] = {}
        for s in bt:
            a, b = s.observer, s.observed
            if a not in fixes or b not in fixes or fixes[a].floor != fixes[b].floor:
                continue
            pc = fuse_pair(fixes[a], fixes[b], rss_to_distance(ldpl, s.rss), cfg)
            corrected.setdefault(a, []).append(pc.corrected_i)
            corrected.setdefault(b, []).append(pc.corrected_j)
            stats["corrections"] += 1
        for dev, p in fixes.items():
            if dev in corrected:
                pts = corrected[dev]
                p = Position(float(np.mean([q.x for q in pts])), float(np.mean([q.y for q in pts])), p.floor)
            tracks[dev].append((window.midpoint, p))
    if stats["unlocatable"]:
        log.info("skipped %d unlocatable scans", stats["unlocatable"])
    return tracks


def track_wifi_only(stream: EventStream, model: FingerprintModel, cfg: FusionConfig
                    ) -> dict[str, Track]:
    """Wi-Fi-only fixes at scan times, linearly resampled onto the tick grid.

    Ticks before the first or after the last fix hold the nearest fix; the
    floor comes from the earlier fix of each bracketing pair.
    """
    dt = cfg.track_interval_s
    ticks = np.arange(int(math.floor(stream.end_time / dt + 1e-9)) + 1) * dt
    fixes: dict[str, list[tuple[float, Position]]] = {d: [] for d in sorted(stream.participants)}
    skipped = 0
    for scan in stream.wifi():
        try:
            fixes[scan.device].append((scan.t, estimate_position(model, scan)))
        except UnlocatableScan:
            skipped += 1
    if skipped:
        log.info("skipped %d unlocatable scans", skipped)
    tracks: dict[str, Track] = {}
    for dev, fx in fixes.items():
        if not fx:
            tracks[dev] = []
            continue
        ts = np.array([t for t, _ in fx])
        xs = np.interp(ticks, ts, [p.x for _, p in fx])
        ys = np.interp(ticks, ts, [p.y for _, p in fx])
        fl = np.array([p.floor for _, p in fx])
        k = np.clip(np.searchsorted(ts, ticks, side="right") - 1, 0, len(ts) - 1)
        tracks[dev] = [(float(t), Position(float(x), float(y), int(f)))
                       for t, x, y, f in zip(ticks, xs, ys, fl[k])]
    return tracks
