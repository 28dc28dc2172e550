"""Wi-Fi fingerprinting: weighted-KNN position regression, K-means clusters of
training positions, and the cluster classifier built on top of the regressor."""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .events import WifiScan
from .geomap import Position

WEIGHT_EPS = 1e-6


class UnlocatableScan(ValueError):
    """The scan shares no access point with the radio map."""


@dataclass(frozen=True)
class RadioSample:
    position: Position
    readings: Mapping[str, float]


@dataclass(frozen=True)
class RadioMap:
    samples: tuple[RadioSample, ...]

    def __post_init__(self):
        if not self.samples:
            raise ValueError("empty radio map")
        for i, s in enumerate(self.samples):
            if not s.readings:
                raise ValueError(f"radio-map sample {i} has no readings")

    def __len__(self):
        return len(self.samples)

    @property
    def access_points(self) -> list[str]:
        seen: dict[str, None] = {}
        for s in self.samples:
            for ap in s.readings:
                seen.setdefault(ap, None)
        return sorted(seen)


class FingerprintModel:
    """Weighted K-nearest-neighbours regressor in RSS space.

    Neighbour weights are ``1 / (eps + dist)``; APs missing from a sample or
    a scan read as ``missing_rss``.
    """

    def __init__(self, radio_map: RadioMap, k: int = 5, missing_rss: float = -100.0):
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        self.radio_map = radio_map
        self.k = int(k)
        self.missing_rss = float(missing_rss)
        self.aps = radio_map.access_points
        self._ap_index = {ap: i for i, ap in enumerate(self.aps)}
        fp = np.full((len(radio_map), len(self.aps)), self.missing_rss)
        for i, s in enumerate(radio_map.samples):
            for ap, v in s.readings.items():
                fp[i, self._ap_index[ap]] = v
        lowest = fp[fp != self.missing_rss].min() if np.any(fp != self.missing_rss) else self.missing_rss
        if self.missing_rss > lowest:
            raise ValueError(f"missing_rss {self.missing_rss} above the weakest reading {lowest}")
        self.fingerprints = fp
        self.positions = np.array([[s.position.x, s.position.y] for s in radio_map.samples])
        self.floors = np.array([s.position.floor for s in radio_map.samples], dtype=int)

    @property
    def samples(self) -> tuple[RadioSample, ...]:
        return self.radio_map.samples

    def neighbours(self, readings: Mapping[str, float]) -> tuple[np.ndarray, np.ndarray]:
        """Indices of the k nearest samples (nearest first) and their weights."""
        known = [ap for ap in readings if ap in self._ap_index]
        if not known:
            raise UnlocatableScan("scan shares no access point with the radio map")
        vec = np.full(len(self.aps), self.missing_rss)
        for ap in known:
            vec[self._ap_index[ap]] = readings[ap]
        sq = np.sum((self.fingerprints - vec) ** 2, axis=1)
        # APs heard only by the scan add the same term to every sample
        extra = sum((v - self.missing_rss) ** 2 for ap, v in readings.items()
                    if ap not in self._ap_index)
        dist = np.sqrt(sq + extra)
        k = min(self.k, len(dist))
        idx = np.argsort(dist, kind="stable")[:k]
        return idx, 1.0 / (WEIGHT_EPS + dist[idx])


def fit(radio_map: RadioMap, k: int = 5, missing_rss: float = -100.0) -> FingerprintModel:
    return FingerprintModel(radio_map, k, missing_rss)


def _readings(scan) -> Mapping[str, float]:
    return scan.readings if isinstance(scan, WifiScan) else scan


def _neighbour_floor(floors: np.ndarray, idx: np.ndarray) -> int:
    counts = Counter(int(f) for f in floors[idx])
    best = max(counts.values())
    tied = {f for f, c in counts.items() if c == best}
    if len(tied) == 1:
        return tied.pop()
    return int(floors[idx[0]])


def estimate_position(model: FingerprintModel, scan: WifiScan | Mapping[str, float]) -> Position:
    idx, w = model.neighbours(_readings(scan))
    xy = (w[:, None] * model.positions[idx]).sum(axis=0) / w.sum()
    return Position(float(xy[0]), float(xy[1]), _neighbour_floor(model.floors, idx))


# -- clustering -------------------------------------------------------------

@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray   # (D, 2)
    floors: np.ndarray      # (D,)
    assignment: np.ndarray  # sample index -> cluster index

    def __len__(self):
        return len(self.centroids)

    def positions(self) -> list[Position]:
        return [Position(float(x), float(y), int(f)) for (x, y), f in zip(self.centroids, self.floors)]

    def radii(self, model_positions: np.ndarray) -> np.ndarray:
        """Mean distance from each centroid to its assigned samples."""
        d = np.linalg.norm(model_positions - self.centroids[self.assignment], axis=1)
        return np.array([d[self.assignment == c].mean() for c in range(len(self))])


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [points[rng.integers(len(points))]]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            i = int(rng.integers(len(points)))
        else:
            i = int(np.searchsorted(np.cumsum(d2) / total, rng.random(), side="right"))
            i = min(i, len(points) - 1)
        centers.append(points[i])
        d2 = np.minimum(d2, np.sum((points - points[i]) ** 2, axis=1))
    return np.array(centers, dtype=float)


def lloyd(points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100,
          history: list | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm from a k-means++ start.

    Returns (centroids, labels). When ``history`` is a list, the objective
    after each iteration is appended to it.
    """
    centers = _kmeans_pp(points, k, rng)
    labels = None
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        # an emptied cluster takes the point worst served by its own centre
        for c in range(k):
            if not np.any(new == c):
                own = d2[np.arange(len(points)), new]
                movable = np.array([np.sum(new == new[i]) > 1 for i in range(len(points))])
                own = np.where(movable, own, -1.0)
                new[int(np.argmax(own))] = c
        centers = np.array([points[new == c].mean(axis=0) for c in range(k)])
        if history is not None:
            history.append(float(((points - centers[new]) ** 2).sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    return centers, labels


def _split_k(counts: dict[int, int], K: int) -> dict[int, int]:
    """Share K clusters between floors in proportion to distinct positions."""
    floors = sorted(counts)
    if K < len(floors):
        raise ValueError(f"K={K} is smaller than the number of floors ({len(floors)})")
    total = sum(counts.values())
    raw = {f: K * counts[f] / total for f in floors}
    alloc = {f: max(1, min(counts[f], int(raw[f]))) for f in floors}
    while sum(alloc.values()) < K:
        f = max((f for f in floors if alloc[f] < counts[f]), key=lambda f: raw[f] - alloc[f])
        alloc[f] += 1
    while sum(alloc.values()) > K:
        f = min((f for f in floors if alloc[f] > 1), key=lambda f: raw[f] - alloc[f])
        alloc[f] -= 1
    return alloc


def kmeans(radio_map: RadioMap | FingerprintModel, K: int, seed: int = 0) -> ClusterModel:
    """Cluster the training positions, floor by floor, into K clusters total."""
    rm = radio_map.radio_map if isinstance(radio_map, FingerprintModel) else radio_map
    pos = np.array([[s.position.x, s.position.y] for s in rm.samples])
    floors = np.array([s.position.floor for s in rm.samples], dtype=int)
    distinct = {f: len({tuple(p) for p in pos[floors == f]}) for f in np.unique(floors)}
    if not 1 <= K <= sum(distinct.values()):
        raise ValueError(f"K={K} must lie in [1, {sum(distinct.values())}] distinct positions")
    alloc = _split_k({int(f): n for f, n in distinct.items()}, K)
    rng = np.random.default_rng(seed)
    centroids, cfloors = [], []
    assignment = np.empty(len(pos), dtype=int)
    for f in sorted(alloc):
        mask = floors == f
        c, lab = lloyd(pos[mask], alloc[f], rng)
        assignment[mask] = lab + len(centroids)
        centroids.extend(c)
        cfloors.extend([f] * len(c))
    return ClusterModel(np.array(centroids), np.array(cfloors, dtype=int), assignment)


def classify(model: FingerprintModel, clusters: ClusterModel,
             scan: WifiScan | Mapping[str, float]) -> np.ndarray:
    """Probability of the scan belonging to each cluster, from the KNN neighbour weights."""
    idx, w = model.neighbours(_readings(scan))
    probs = np.zeros(len(clusters))
    np.add.at(probs, clusters.assignment[idx], w)
    return probs / probs.sum()


# -- files ------------------------------------------------------------------

def save_radio_map(rm: RadioMap, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "x", "y", "floor", "ap_id", "rss"])
        for i, s in enumerate(rm.samples):
            for ap, v in s.readings.items():
                w.writerow([i, repr(float(s.position.x)), repr(float(s.position.y)),
                            s.position.floor, ap, repr(float(v))])


def load_radio_map(path: str | Path) -> RadioMap:
    rows: dict[int, tuple[Position, dict[str, float]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            i = int(row["sample"])
            if i not in rows:
                rows[i] = (Position(float(row["x"]), float(row["y"]), int(row["floor"])), {})
            rows[i][1][row["ap_id"]] = float(row["rss"])
    return RadioMap(tuple(RadioSample(p, r) for _, (p, r) in sorted(rows.items())))


def save_model(model: FingerprintModel, clusters: ClusterModel | None, path: str | Path) -> None:
    doc = {
        "k": model.k,
        "missing_rss": model.missing_rss,
        "samples": [[s.position.x, s.position.y, s.position.floor, dict(s.readings)]
                    for s in model.samples],
    }
    if clusters is not None:
        doc["clusters"] = cluster_to_dict(clusters)
    Path(path).write_text(json.dumps(doc) + "\n")


def load_model(path: str | Path) -> tuple[FingerprintModel, ClusterModel | None]:
    doc = json.loads(Path(path).read_text())
    rm = RadioMap(tuple(RadioSample(Position(x, y, int(f)), r) for x, y, f, r in doc["samples"]))
    model = FingerprintModel(rm, doc["k"], doc["missing_rss"])
    clusters = cluster_from_dict(doc["clusters"]) if "clusters" in doc else None
    return model, clusters


def cluster_to_dict(c: ClusterModel) -> dict:
    return {
        "centroids": [[float(x), float(y), int(f)] for (x, y), f in zip(c.centroids, c.floors)],
        "assignment": [int(a) for a in c.assignment],
    }


def cluster_from_dict(d: dict) -> ClusterModel:
    cen = np.array([[x, y] for x, y, _ in d["centroids"]], dtype=float).reshape(-1, 2)
    fl = np.array([f for _, _, f in d["centroids"]], dtype=int)
    return ClusterModel(cen, fl, np.array(d["assignment"], dtype=int))
