"""Floor-map geometry: walls, wall-crossing tests, checkpoint trajectories."""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels

# Distance charged for a position reported on the wrong floor.
FLOOR_PENALTY_M = 10.0


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    floor: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite position ({self.x}, {self.y})")

    def dist(self, other: "Position") -> float:
        """In-plane distance, ignoring floors."""
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Wall:
    a: Position
    b: Position

    def __post_init__(self):
        if self.a.floor != self.b.floor:
            raise ValueError("wall endpoints on different floors")
        if (self.a.x, self.a.y) == (self.b.x, self.b.y):
            raise ValueError("degenerate wall")

    @property
    def floor(self) -> int:
        return self.a.floor


@dataclass(frozen=True)
class Bounds:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, x, y):
        return (x >= self.xmin) & (x <= self.xmax) & (y >= self.ymin) & (y <= self.ymax)


@dataclass(frozen=True)
class FloorMap:
    walls: tuple[Wall, ...]
    bounds: dict[int, Bounds]
    stairs: tuple[tuple[Position, Position], ...] = ()
    _wall_arrays: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        for w in self.walls:
            b = self.bounds.get(w.floor)
            if b is None:
                raise ValueError(f"wall on floor {w.floor} which has no bounds")
            if not (b.contains(w.a.x, w.a.y) and b.contains(w.b.x, w.b.y)):
                raise ValueError(f"wall {w} outside floor bounds")
        arrays = {}
        for f in self.bounds:
            ws = [w for w in self.walls if w.floor == f]
            arrays[f] = np.array([[w.a.x, w.a.y, w.b.x, w.b.y] for w in ws],
                                 dtype=float).reshape(-1, 4)
        self._wall_arrays.update(arrays)

    @property
    def floors(self) -> list[int]:
        return sorted(self.bounds)

    def wall_array(self, floor: int) -> np.ndarray:
        """Walls of one floor as an (n, 4) array of x1, y1, x2, y2."""
        return self._wall_arrays.get(floor, np.zeros((0, 4)))


# -- segment tests ----------------------------------------------------------

def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _on_segment(ax, ay, bx, by, cx, cy):
    """c collinear with a-b lies within the bounding box of a-b."""
    return (min(ax, bx) <= cx <= max(ax, bx)) and (min(ay, by) <= cy <= max(ay, by))


def segments_intersect(p1: Position, p2: Position, q1: Position, q2: Position) -> bool:
    """True iff the closed segments p1-p2 and q1-q2 share a point."""
    d1 = _orient(q1.x, q1.y, q2.x, q2.y, p1.x, p1.y)
    d2 = _orient(q1.x, q1.y, q2.x, q2.y, p2.x, p2.y)
    d3 = _orient(p1.x, p1.y, p2.x, p2.y, q1.x, q1.y)
    d4 = _orient(p1.x, p1.y, p2.x, p2.y, q2.x, q2.y)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and \
       ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    if d1 == 0 and _on_segment(q1.x, q1.y, q2.x, q2.y, p1.x, p1.y):
        return True
    if d2 == 0 and _on_segment(q1.x, q1.y, q2.x, q2.y, p2.x, p2.y):
        return True
    if d3 == 0 and _on_segment(p1.x, p1.y, p2.x, p2.y, q1.x, q1.y):
        return True
    if d4 == 0 and _on_segment(p1.x, p1.y, p2.x, p2.y, q2.x, q2.y):
        return True
    return False


def crosses_wall(fmap: FloorMap, start: Position, end: Position) -> bool:
    if start.floor != end.floor:
        raise ValueError(f"move spans floors {start.floor} -> {end.floor}")
    return any(segments_intersect(start, end, w.a, w.b)
               for w in fmap.walls if w.floor == start.floor)


def crosses_wall_many(fmap: FloorMap, floor: int, start: np.ndarray, end: np.ndarray) -> np.ndarray:
    """Vectorised ``crosses_wall`` for n moves on one floor.

    ``start`` and ``end`` are (n, 2) arrays; returns a bool array of length n.
    Same predicate as :func:`segments_intersect`, touching included.
    """
    walls = fmap.wall_array(floor)
    n = start.shape[0]
    if n == 0 or walls.shape[0] == 0:
        return np.zeros(n, dtype=bool)
    return _kernels.crosses_any(np.ascontiguousarray(start, dtype=float),
                                np.ascontiguousarray(end, dtype=float), walls)


# -- trajectories -----------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """Ground-truth path through timestamped checkpoints."""

    checkpoints: tuple[tuple[Position, float], ...]

    def __post_init__(self):
        if len(self.checkpoints) < 2:
            raise ValueError("a trajectory needs at least two checkpoints")
        times = [t for _, t in self.checkpoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("checkpoint times must be strictly increasing")

    @property
    def start_time(self) -> float:
        return self.checkpoints[0][1]

    @property
    def end_time(self) -> float:
        return self.checkpoints[-1][1]

    @property
    def times(self) -> list[float]:
        return [t for _, t in self.checkpoints]


def position_at(traj: Trajectory, t: float) -> Position:
    """Linear interpolation between the checkpoints bracketing ``t``.

    The floor is the earlier checkpoint's floor, except exactly at a
    checkpoint time where that checkpoint is returned.
    """
    times = traj.times
    if not (times[0] <= t <= times[-1]):
        raise ValueError(f"t={t} outside trajectory range [{times[0]}, {times[-1]}]")
    k = bisect.bisect_right(times, t) - 1
    if times[k] == t:
        return traj.checkpoints[k][0]
    (p0, t0), (p1, t1) = traj.checkpoints[k], traj.checkpoints[k + 1]
    f = (t - t0) / (t1 - t0)
    return Position(p0.x + f * (p1.x - p0.x), p0.y + f * (p1.y - p0.y), p0.floor)


def positions_at(traj: Trajectory, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`position_at`: returns ((n, 2) xy, (n,) floors)."""
    ts = np.asarray(ts, dtype=float)
    times = np.array(traj.times)
    if ts.size and (ts.min() < times[0] or ts.max() > times[-1]):
        raise ValueError("timestamps outside trajectory range")
    xy = np.array([[p.x, p.y] for p, _ in traj.checkpoints])
    fl = np.array([p.floor for p, _ in traj.checkpoints])
    k = np.clip(np.searchsorted(times, ts, side="right") - 1, 0, len(times) - 2)
    f = ((ts - times[k]) / (times[k + 1] - times[k]))[:, None]
    out = xy[k] + f * (xy[k + 1] - xy[k])
    floors = fl[k].copy()
    at_next = ts == times[k + 1]
    floors[at_next] = fl[k + 1][at_next]
    return out, floors


# -- files ------------------------------------------------------------------

def map_to_dict(fmap: FloorMap) -> dict:
    return {
        "walls": [[w.a.x, w.a.y, w.b.x, w.b.y, w.floor] for w in fmap.walls],
        "bounds": {str(f): [b.xmin, b.ymin, b.xmax, b.ymax] for f, b in sorted(fmap.bounds.items())},
        "stairs": [[a.x, a.y, a.floor, b.x, b.y, b.floor] for a, b in fmap.stairs],
    }


def map_from_dict(d: dict) -> FloorMap:
    walls = tuple(Wall(Position(x1, y1, int(f)), Position(x2, y2, int(f)))
                  for x1, y1, x2, y2, f in d["walls"])
    bounds = {int(f): Bounds(*v) for f, v in d["bounds"].items()}
    stairs = tuple((Position(ax, ay, int(af)), Position(bx, by, int(bf)))
                   for ax, ay, af, bx, by, bf in d.get("stairs", []))
    return FloorMap(walls, bounds, stairs)


def save_map(fmap: FloorMap, path: str | Path) -> None:
    Path(path).write_text(json.dumps(map_to_dict(fmap), indent=1) + "\n")


def load_map(path: str | Path) -> FloorMap:
    return map_from_dict(json.loads(Path(path).read_text()))


def trajectory_to_dict(traj: Trajectory) -> dict:
    return {"checkpoints": [[p.x, p.y, p.floor, t] for p, t in traj.checkpoints]}


def trajectory_from_dict(d: dict) -> Trajectory:
    return Trajectory(tuple((Position(x, y, int(f)), float(t)) for x, y, f, t in d["checkpoints"]))


def save_trajectories(trajs: dict[str, Trajectory], path: str | Path) -> None:
    doc = {dev: trajectory_to_dict(tr) for dev, tr in sorted(trajs.items())}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_trajectories(path: str | Path) -> dict[str, Trajectory]:
    doc = json.loads(Path(path).read_text())
    if "checkpoints" in doc:
        return {"d1": trajectory_from_dict(doc)}
    return {dev: trajectory_from_dict(v) for dev, v in doc.items()}
