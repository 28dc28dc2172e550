"""Deterministic multi-user scenarios: floor map, ground truth, radio map, event stream."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .events import BtSighting, EventStream, WifiScan, ingest
from .fingerprint import RadioMap, RadioSample
from .geomap import Bounds, FloorMap, Position, Trajectory, Wall, position_at
from .radio import LdplParams, sample_rss

DETECTION_DBM = -95.0


def demo_map(length: float = 100.0, width: float = 8.0, n_floors: int = 2,
             room_depth: float = 2.5, room_width: float = 10.0, door: float = 2.0) -> FloorMap:
    """Corridor floors with a row of rooms along the north side, joined by a stair.

    The stair sits at the east end of the corridor; consecutive floors link
    there and at the west end alternately.
    """
    walls = []
    bounds = {}
    front = width - room_depth
    for f in range(n_floors):
        bounds[f] = Bounds(0.0, 0.0, length, width)
        corners = [(0, 0), (length, 0), (length, width), (0, width)]
        for (x1, y1), (x2, y2) in zip(corners, corners[1:] + corners[:1]):
            walls.append(Wall(Position(x1, y1, f), Position(x2, y2, f)))
        x = 0.0
        while x + room_width <= length + 1e-9:
            walls.append(Wall(Position(x + door, front, f), Position(x + room_width, front, f)))
            if x > 0:
                walls.append(Wall(Position(x, front, f), Position(x, width, f)))
            x += room_width
    mid = 0.5 * front
    stairs = []
    for f in range(n_floors - 1):
        sx = length - 2.0 if f % 2 == 0 else 2.0
        stairs.append((Position(sx, mid, f), Position(sx, mid, f + 1)))
    return FloorMap(tuple(walls), bounds, tuple(stairs))


def demo_path(fmap: FloorMap, spacing: float = 8.0, walk_speed: float = 1.0,
              stair_time: float = 6.0) -> Trajectory:
    """Corridor walk through every floor, one checkpoint every ``spacing`` metres."""
    if not fmap.stairs:
        b = fmap.bounds[fmap.floors[0]]
        y = 0.5 * (b.ymin + b.ymax)
        legs = [(Position(b.xmin + 2, y, fmap.floors[0]), Position(b.xmax - 2, y, fmap.floors[0]))]
    else:
        a0, _ = fmap.stairs[0]
        b = fmap.bounds[a0.floor]
        far = b.xmin + 2.0 if a0.x > 0.5 * (b.xmin + b.xmax) else b.xmax - 2.0
        legs = [(Position(far, a0.y, a0.floor), a0)]
        for a, bb in fmap.stairs:
            nb = fmap.bounds[bb.floor]
            end_x = nb.xmin + 2.0 if bb.x > 0.5 * (nb.xmin + nb.xmax) else nb.xmax - 2.0
            legs.append((bb, Position(end_x, bb.y, bb.floor)))
    checkpoints: list[tuple[Position, float]] = []
    t = 0.0
    for p, q in legs:
        if checkpoints:
            t += stair_time
        n = max(1, round(p.dist(q) / spacing))
        for i in range(n + 1):
            f = i / n
            pos = Position(p.x + f * (q.x - p.x), p.y + f * (q.y - p.y), p.floor)
            if i > 0:
                t += p.dist(q) / n / walk_speed
            checkpoints.append((pos, t))
    return Trajectory(tuple(checkpoints))


def path_length(traj: Trajectory) -> float:
    """In-plane length; stair hops count as zero."""
    total = 0.0
    for (p, _), (q, _) in zip(traj.checkpoints, traj.checkpoints[1:]):
        if p.floor == q.floor:
            total += p.dist(q)
    return total


def demo_aps(fmap: FloorMap, per_floor: int = 12, margin: float = 1.0) -> list[tuple[str, Position]]:
    aps = []
    for f in fmap.floors:
        b = fmap.bounds[f]
        xs = np.linspace(b.xmin + 4.0, b.xmax - 4.0, per_floor)
        for i, x in enumerate(xs):
            y = b.ymin + margin if i % 2 == 0 else b.ymax - margin
            aps.append((f"ap{f}_{i:02d}", Position(float(x), float(y), f)))
    return aps


@dataclass
class ScenarioConfig:
    groups: list[list[str]] = field(default_factory=lambda: [["d1", "d2"], ["d3", "d4"]])
    group_gap_m: float = 20.0
    intra_gap_m: float = 2.0
    duration_s: float = 300.0
    wifi_cycle_s: float = 4.0
    wifi_jitter: float = 0.25
    bt_rate_hz: float = 0.5
    bt_range_m: float = 15.0
    floor_attenuation_db: float = 15.0
    floor_height_m: float = 4.0
    radio_band_m: float = 2.5
    seed: int = 0
    device_cycle_s: dict[str, float] = field(default_factory=dict)
    device_rss_offset_db: dict[str, float] = field(default_factory=dict)
    fmap: FloorMap = field(default_factory=demo_map)
    path: Trajectory | None = None
    ap_layout: list[tuple[str, Position]] | None = None

    def __post_init__(self):
        users = [u for g in self.groups for u in g]
        if not users:
            raise ValueError("scenario needs at least one user")
        if len(set(users)) != len(users):
            raise ValueError("groups must partition the users")
        if not self.duration_s > 0:
            raise ValueError("duration_s must be positive")
        if self.path is None:
            self.path = demo_path(self.fmap)
        if self.ap_layout is None:
            self.ap_layout = demo_aps(self.fmap)
        if not self.ap_layout:
            raise ValueError("no access points")

    @property
    def users(self) -> list[str]:
        return [u for g in self.groups for u in g]

    @property
    def n_users(self) -> int:
        return len(self.users)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScenarioConfig":
        d = dict(d)
        map_kw = d.pop("map", None)
        if map_kw is not None:
            d["fmap"] = demo_map(**map_kw)
        n_users = d.pop("n_users", None)
        n_groups = d.pop("n_groups", None)
        if n_users is not None and "groups" not in d:
            d["groups"] = split_groups(int(n_users), int(n_groups or 1))
        return cls(**d)


def split_groups(n_users: int, n_groups: int) -> list[list[str]]:
    users = [f"d{i + 1}" for i in range(n_users)]
    return [list(g) for g in np.array_split(users, n_groups) if len(g)]


def user_offsets(cfg: ScenarioConfig) -> dict[str, float]:
    """Distance (m) along the path by which each user leads the last one."""
    out = {}
    G = len(cfg.groups)
    for g, members in enumerate(cfg.groups):
        for m, u in enumerate(members):
            out[u] = (G - 1 - g) * cfg.group_gap_m + (len(members) - 1 - m) * cfg.intra_gap_m
    return out


def generate_truth(cfg: ScenarioConfig) -> dict[str, Trajectory]:
    """Everyone walks the template path at the same pace, staggered along it."""
    template = cfg.path
    offsets = user_offsets(cfg)
    L = path_length(template)
    o_max = max(offsets.values())
    if o_max >= L:
        raise ValueError(f"user offsets ({o_max} m) exceed the path length ({L:.1f} m)")
    # leads are measured along the walked legs, so stair time must not dilute the pace
    cps = template.checkpoints
    walking = sum(t2 - t1 for (p, t1), (q, t2) in zip(cps, cps[1:]) if p.floor == q.floor)
    walk_frac = walking / (template.end_time - template.start_time)
    total = cfg.duration_s / (1.0 - o_max * walk_frac / L)
    scale = total / (template.end_time - template.start_time)
    scaled = Trajectory(tuple((p, (t - template.start_time) * scale) for p, t in cps))
    scaled = Trajectory(scaled.checkpoints[:-1] + ((scaled.checkpoints[-1][0], total),))
    speed = L / (walking * scale)
    out = {}
    for u in cfg.users:
        shift = offsets[u] / speed
        if shift == 0.0 and total == cfg.duration_s:
            out[u] = scaled
            continue
        end = min(shift + cfg.duration_s, total)
        cps = [(position_at(scaled, shift), 0.0)]
        for p, t in scaled.checkpoints:
            if shift < t < end:
                cps.append((p, t - shift))
        cps.append((position_at(scaled, end), cfg.duration_s))
        out[u] = Trajectory(tuple(cps))
    return out


def _ap_rss(ldpl: LdplParams, cfg: ScenarioConfig, x, y, floor, rng) -> dict[str, float]:
    out = {}
    for ap, p in cfg.ap_layout:
        dz = cfg.floor_height_m * abs(floor - p.floor)
        d = max(math.sqrt((x - p.x) ** 2 + (y - p.y) ** 2 + dz ** 2), 0.1 * ldpl.l0)
        v = sample_rss(ldpl, d, rng) - cfg.floor_attenuation_db * abs(floor - p.floor)
        if v >= DETECTION_DBM:
            out[ap] = round(v, 1)
    return out


def _distance_to_path(path: Trajectory, floor: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    best = np.full(x.shape, np.inf)
    for (p, _), (q, _) in zip(path.checkpoints, path.checkpoints[1:]):
        if p.floor != floor or q.floor != floor:
            continue
        dx, dy = q.x - p.x, q.y - p.y
        seg2 = dx * dx + dy * dy
        u = np.clip(((x - p.x) * dx + (y - p.y) * dy) / seg2, 0.0, 1.0) if seg2 > 0 else 0.0
        best = np.minimum(best, np.hypot(x - (p.x + u * dx), y - (p.y + u * dy)))
    return best


def generate_radio_map(cfg: ScenarioConfig, ldpl_wifi: LdplParams, grid_step_m: float,
                       rng: np.random.Generator) -> RadioMap:
    """One fingerprint per grid node within ``radio_band_m`` of the walking path."""
    samples = []
    for f in cfg.fmap.floors:
        b = cfg.fmap.bounds[f]
        xs = np.arange(b.xmin + grid_step_m / 2, b.xmax, grid_step_m)
        ys = np.arange(b.ymin + grid_step_m / 2, b.ymax, grid_step_m)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        keep = _distance_to_path(cfg.path, f, gx, gy) <= cfg.radio_band_m
        for x, y in zip(gx[keep], gy[keep]):
            r = _ap_rss(ldpl_wifi, cfg, float(x), float(y), f, rng)
            if r:
                samples.append(RadioSample(Position(round(float(x), 3), round(float(y), 3), f), r))
    return RadioMap(tuple(samples))


def _scan_times(cfg: ScenarioConfig, device: str, rng: np.random.Generator) -> list[float]:
    cycle = cfg.device_cycle_s.get(device, cfg.wifi_cycle_s)
    phase = rng.uniform(0.0, cycle)
    times = []
    k = 0
    while True:
        base = phase + k * cycle
        if base - cfg.wifi_jitter * cycle >= cfg.duration_s:
            break
        t = round(base + rng.uniform(-cfg.wifi_jitter, cfg.wifi_jitter) * cycle, 3)
        if 0.0 <= t < cfg.duration_s:
            times.append(t)
        k += 1
    return times


def _poisson_times(rate: float, duration: float, rng: np.random.Generator) -> list[float]:
    times = []
    t = rng.exponential(1.0 / rate) if rate > 0 else math.inf
    while t < duration:
        times.append(t)
        t += rng.exponential(1.0 / rate)
    return times


def generate_events(cfg: ScenarioConfig, truth: dict[str, Trajectory], ldpl_wifi: LdplParams,
                    ldpl_bt: LdplParams, rng: np.random.Generator) -> EventStream:
    events: list = []
    for dev in cfg.users:
        offset = cfg.device_rss_offset_db.get(dev, 0.0)
        for t in _scan_times(cfg, dev, rng):
            p = position_at(truth[dev], t)
            readings = _ap_rss(ldpl_wifi, cfg, p.x, p.y, p.floor, rng)
            if offset:
                readings = {k: round(v + offset, 1) for k, v in readings.items()}
            if readings:
                events.append(WifiScan(dev, t, readings))
    for a in cfg.users:
        for b in cfg.users:
            if a == b:
                continue
            for t in _poisson_times(cfg.bt_rate_hz, cfg.duration_s, rng):
                t = round(t, 3)
                if t >= cfg.duration_s:
                    continue
                pa, pb = position_at(truth[a], t), position_at(truth[b], t)
                if pa.floor != pb.floor:
                    continue
                d = pa.dist(pb)
                if d > cfg.bt_range_m:
                    continue
                rss = sample_rss(ldpl_bt, max(d, 0.1 * ldpl_bt.l0), rng)
                events.append(BtSighting(a, b, t, round(rss, 1)))
    return ingest(events, cfg.users, cfg.duration_s)


@dataclass
class Scenario:
    config: ScenarioConfig
    truth: dict[str, Trajectory]
    radio_map: RadioMap
    stream: EventStream

    @property
    def fmap(self) -> FloorMap:
        return self.config.fmap


def simulate(cfg: ScenarioConfig, ldpl_wifi: LdplParams, ldpl_bt: LdplParams,
             grid_step_m: float = 1.0, seed: int | None = None) -> Scenario:
    """Build everything for one seed; radio map and events use independent streams."""
    seed = cfg.seed if seed is None else seed
    map_rng, ev_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    truth = generate_truth(cfg)
    rm = generate_radio_map(cfg, ldpl_wifi, grid_step_m, map_rng)
    stream = generate_events(cfg, truth, ldpl_wifi, ldpl_bt, ev_rng)
    return Scenario(cfg, truth, rm, stream)
