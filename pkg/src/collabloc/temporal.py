"""Collaborative particle-filter tracking.

One particle set per device. Each tick every set is moved by a random-walk
motion model constrained by walls, then scored by the nearest Wi-Fi scan
(through the cluster classifier) plus any Bluetooth sightings linking it to
another device's set, and resampled in proportion to the summed score.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from . import _kernels
from .config import FusionConfig
from .events import BtSighting, EventStream, WifiScan
from .fingerprint import ClusterModel, FingerprintModel, UnlocatableScan, classify
from .geomap import FloorMap, Position, crosses_wall_many
from .radio import LdplParams, rss_to_distance

log = logging.getLogger(__name__)

Track = list[tuple[float, Position]]


@dataclass
class ParticleSet:
    device: str
    t: float
    xy: np.ndarray       # (N, 2)
    floor: np.ndarray    # (N,) int
    weights: np.ndarray  # (N,)

    def __len__(self):
        return len(self.weights)

    def copy(self) -> "ParticleSet":
        return ParticleSet(self.device, self.t, self.xy.copy(), self.floor.copy(), self.weights.copy())


def init_particles(fmap: FloorMap, cfg: FusionConfig, rng: np.random.Generator,
                   device: str = "", floor: int | None = None, t: float = 0.0) -> ParticleSet:
    """Uniform particles over the bounds of the starting (lowest by default) floor."""
    if not fmap.bounds:
        raise ValueError("map has no floors")
    f = fmap.floors[0] if floor is None else floor
    b = fmap.bounds[f]
    n = cfg.particle_count
    xy = np.column_stack([rng.uniform(b.xmin, b.xmax, n), rng.uniform(b.ymin, b.ymax, n)])
    return ParticleSet(device, t, xy, np.full(n, f, dtype=int), np.full(n, 1.0 / n))


def _speeds(rng: np.random.Generator, n: int, cfg: FusionConfig) -> np.ndarray:
    v = rng.normal(cfg.speed_mean, cfg.speed_std, n)
    bad = v < 0
    while np.any(bad):
        v[bad] = rng.normal(cfg.speed_mean, cfg.speed_std, int(bad.sum()))
        bad = v < 0
    return v


def propagate(pset: ParticleSet, dt: float, fmap: FloorMap, cfg: FusionConfig,
              rng: np.random.Generator) -> ParticleSet:
    """Random speed/heading move; moves through a wall are redrawn, then abandoned.

    Particles near a stair endpoint may also hop to the linked floor.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = len(pset)
    start = pset.xy
    new_xy = start.copy()
    pending = np.arange(n)
    for _ in range(cfg.move_attempts):
        if pending.size == 0:
            break
        v = _speeds(rng, pending.size, cfg) * dt
        h = rng.uniform(0.0, 2 * math.pi, pending.size)
        cand = start[pending] + np.column_stack([v * np.cos(h), v * np.sin(h)])
        blocked = np.zeros(pending.size, dtype=bool)
        floors = pset.floor[pending]
        for f in np.unique(floors):
            m = floors == f
            b = fmap.bounds[int(f)]
            blocked[m] = crosses_wall_many(fmap, int(f), start[pending[m]], cand[m]) | \
                ~b.contains(cand[m, 0], cand[m, 1])
        ok = ~blocked
        new_xy[pending[ok]] = cand[ok]
        pending = pending[blocked]

    new_floor = pset.floor.copy()
    if fmap.stairs:
        u = rng.random(n)
        for a, b in fmap.stairs:
            for src, dst in ((a, b), (b, a)):
                near = (new_floor == src.floor) & \
                    (np.hypot(new_xy[:, 0] - src.x, new_xy[:, 1] - src.y) <= cfg.stair_radius_m) & \
                    (u < cfg.stair_prob) & (new_floor == pset.floor)
                if not np.any(near):
                    continue
                moved = new_xy[near] - [src.x, src.y] + [dst.x, dst.y]
                bd = fmap.bounds[dst.floor]
                inside = bd.contains(moved[:, 0], moved[:, 1])
                moved[~inside] = [dst.x, dst.y]
                new_xy[near] = moved
                new_floor[near] = dst.floor
    return ParticleSet(pset.device, pset.t + dt, new_xy, new_floor, pset.weights.copy())


def _cluster_distances(pset: ParticleSet, clusters: ClusterModel, idx: np.ndarray,
                       floor_penalty: float) -> np.ndarray:
    c = clusters.centroids[idx]
    d = np.hypot(pset.xy[:, 0:1] - c[None, :, 0], pset.xy[:, 1:2] - c[None, :, 1])
    return d + floor_penalty * np.abs(pset.floor[:, None] - clusters.floors[idx][None, :])


def score_wifi(pset: ParticleSet, probs: np.ndarray, clusters: ClusterModel,
               floor_penalty: float = 10.0) -> np.ndarray:
    """Per-particle Wi-Fi score in [0, 1].

    For each cluster the particle distances to its centroid are rescaled so
    the closest particle gets the cluster probability and the farthest 0.
    """
    probs = np.asarray(probs, dtype=float)
    idx = np.flatnonzero(probs > 0)
    if idx.size == 0:
        return np.zeros(len(pset))
    d = _cluster_distances(pset, clusters, idx, floor_penalty)
    dmin, dmax = d.min(axis=0), d.max(axis=0)
    span = dmax - dmin
    flat = span == 0
    scaled = np.where(flat, 1.0, 1.0 - (d - dmin) / np.where(flat, 1.0, span))
    return scaled @ probs[idx]


def score_bluetooth(set_i: ParticleSet, set_j: ParticleSet, wifi_scores_j: np.ndarray,
                    rss: float, ldpl: LdplParams, cfg: FusionConfig) -> np.ndarray:
    """Bluetooth score of each particle of ``set_i`` given the sighting with ``set_j``.

    Sum over the opposing particles of their Wi-Fi score times the range
    kernel, max-normalised unless ``cfg.bt_max_normalize`` is off.
    """
    l = rss_to_distance(ldpl, rss)
    raw = _kernels.bt_scores_one_way(
        set_i.xy[:, 0], set_i.xy[:, 1], set_i.floor.astype(float),
        set_j.xy[:, 0], set_j.xy[:, 1], set_j.floor.astype(float),
        np.asarray(wifi_scores_j, dtype=float), l, 2.0 * cfg.delta_b ** 2, cfg.bt_floor_penalty_m)
    return _normalize(raw, cfg)


def _normalize(raw: np.ndarray, cfg: FusionConfig) -> np.ndarray:
    if not cfg.bt_max_normalize:
        return raw
    top = raw.max() if raw.size else 0.0
    return raw / top if top > 0 else raw


def systematic_resample(scores: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn by low-variance resampling proportional to ``scores``."""
    n = len(scores)
    c = np.cumsum(scores)
    c /= c[-1]
    c[-1] = 1.0
    u = (rng.random() + np.arange(n)) / n
    return np.searchsorted(c, u, side="right")


def estimate(pset: ParticleSet) -> Position:
    w = pset.weights / pset.weights.sum()
    xy = w @ pset.xy
    floors = np.unique(pset.floor)
    mass = [w[pset.floor == f].sum() for f in floors]
    return Position(float(xy[0]), float(xy[1]), int(floors[int(np.argmax(mass))]))


@dataclass
class TickEvents:
    """Observations in effect at one tick: one scan per device, one sighting per pair."""
    wifi: dict[str, WifiScan] = field(default_factory=dict)
    bt: list[BtSighting] = field(default_factory=list)


class _Classifier:
    def __init__(self, model: FingerprintModel, clusters: ClusterModel):
        self.model, self.clusters = model, clusters
        self._cache: dict[int, np.ndarray | None] = {}

    def __call__(self, scan: WifiScan) -> np.ndarray | None:
        key = id(scan)
        if key not in self._cache:
            try:
                self._cache[key] = classify(self.model, self.clusters, scan)
            except UnlocatableScan:
                self._cache[key] = None
        return self._cache[key]


def step(sets: dict[str, ParticleSet], events: TickEvents, clusters: ClusterModel,
         model: FingerprintModel | _Classifier, cfg: FusionConfig, ldpl: LdplParams,
         rng: np.random.Generator, fmap: FloorMap, dt: float | None = None
         ) -> dict[str, ParticleSet]:
    """Advance every device's particles by one tick and apply the observations.

    ``dt=0`` skips the motion update (first tick).
    """
    dt = cfg.track_interval_s if dt is None else dt
    classifier = model if isinstance(model, _Classifier) else _Classifier(model, clusters)
    devices = sorted(sets)
    if dt > 0:
        moved = {d: propagate(sets[d], dt, fmap, cfg, rng) for d in devices}
    else:
        moved = {d: sets[d].copy() for d in devices}

    wifi_scores: dict[str, np.ndarray] = {}
    for d in devices:
        scan = events.wifi.get(d)
        probs = classifier(scan) if scan is not None else None
        if probs is not None:
            wifi_scores[d] = score_wifi(moved[d], probs, clusters, cfg.floor_penalty_m)

    bt_sum: dict[str, np.ndarray] = {}
    bt_count: dict[str, int] = {}
    if cfg.use_bluetooth:
        for s in events.bt:
            i, j = s.observer, s.observed
            if i not in moved or j not in moved:
                continue
            wi = wifi_scores.get(i, np.ones(len(moved[i])))
            wj = wifi_scores.get(j, np.ones(len(moved[j])))
            si, sj = _kernels.bt_scores_both_ways(
                moved[i].xy[:, 0], moved[i].xy[:, 1], moved[i].floor.astype(float), wi,
                moved[j].xy[:, 0], moved[j].xy[:, 1], moved[j].floor.astype(float), wj,
                rss_to_distance(ldpl, s.rss), 2.0 * cfg.delta_b ** 2, cfg.bt_floor_penalty_m)
            for dev, sc in ((i, si), (j, sj)):
                sc = _normalize(sc, cfg)
                bt_sum[dev] = bt_sum[dev] + sc if dev in bt_sum else sc
                bt_count[dev] = bt_count.get(dev, 0) + 1

    out = {}
    for d in devices:
        pset = moved[d]
        total = np.zeros(len(pset))
        touched = False
        if d in wifi_scores:
            total = total + wifi_scores[d]
            touched = True
        if d in bt_sum:
            total = total + cfg.bt_weight * bt_sum[d] / bt_count[d]
            touched = True
        if touched and total.sum() > 0:
            idx = systematic_resample(total, rng)
            n = len(pset)
            pset = ParticleSet(d, pset.t, pset.xy[idx], pset.floor[idx], np.full(n, 1.0 / n))
        out[d] = pset
    return out


class EventIndex:
    """Nearest-in-time lookup of scans and sightings on the rounded tick grid."""

    def __init__(self, stream: EventStream, dt: float):
        self.dt = dt
        self.wifi: dict[str, tuple[np.ndarray, list[WifiScan]]] = {}
        per_dev: dict[str, list[WifiScan]] = {}
        per_pair: dict[tuple[str, str], list[BtSighting]] = {}
        for ev in stream.events:
            if isinstance(ev, WifiScan):
                per_dev.setdefault(ev.device, []).append(ev)
            else:
                per_pair.setdefault(ev.pair, []).append(ev)
        self.wifi = {d: (self._ticks(v), v) for d, v in per_dev.items()}
        self.bt = {p: (self._ticks(v), v) for p, v in sorted(per_pair.items())}

    def _ticks(self, evs) -> np.ndarray:
        return np.array([round(e.t / self.dt) for e in evs], dtype=float) * self.dt

    @staticmethod
    def _nearest(times: np.ndarray, t: float, reach: float) -> int | None:
        k = int(np.searchsorted(times, t))
        best, best_gap = None, math.inf
        for c in (k - 1, k, k + 1):
            if 0 <= c < len(times):
                gap = abs(times[c] - t)
                # ties go to the later event
                if gap <= reach + 1e-9 and gap <= best_gap:
                    best, best_gap = c, gap
        return best

    def at(self, t: float, cfg: FusionConfig) -> TickEvents:
        ev = TickEvents()
        for d, (times, scans) in self.wifi.items():
            c = self._nearest(times, t, cfg.wifi_effect_s)
            if c is not None:
                ev.wifi[d] = scans[c]
        for _, (times, sightings) in self.bt.items():
            c = self._nearest(times, t, cfg.bt_effect_s)
            if c is not None:
                ev.bt.append(sightings[c])
        return ev


def _dump(fh: IO, t: float, sets: dict[str, ParticleSet]) -> None:
    for d, s in sets.items():
        fh.write(json.dumps({"t": round(t, 3), "device": d,
                             "x": np.round(s.xy[:, 0], 3).tolist(),
                             "y": np.round(s.xy[:, 1], 3).tolist(),
                             "floor": s.floor.tolist()}, separators=(",", ":")) + "\n")


def track_temporal(stream: EventStream, model: FingerprintModel, clusters: ClusterModel,
                   fmap: FloorMap, cfg: FusionConfig, ldpl: LdplParams, seed: int = 0,
                   dump: IO | None = None) -> dict[str, Track]:
    """Run the coupled particle filters over the whole stream, one estimate per tick."""
    rng = np.random.default_rng(seed)
    dt = cfg.track_interval_s
    devices = sorted(stream.participants)
    sets = {d: init_particles(fmap, cfg, rng, device=d) for d in devices}
    index = EventIndex(stream, dt)
    classifier = _Classifier(model, clusters)
    n_ticks = int(math.floor(stream.end_time / dt + 1e-9)) + 1
    tracks: dict[str, Track] = {d: [] for d in devices}
    for k in range(n_ticks):
        t = k * dt
        sets = step(sets, index.at(t, cfg), clusters, classifier, cfg, ldpl, rng, fmap,
                    dt=dt if k > 0 else 0.0)
        for d in devices:
            tracks[d].append((t, estimate(sets[d])))
        if dump is not None:
            _dump(dump, t, sets)
    return tracks
