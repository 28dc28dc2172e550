"""Error statistics, comparison tables, and the simulate/train/track pipeline."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .config import Config
from .fingerprint import ClusterModel, FingerprintModel, fit, kmeans
from .geomap import FLOOR_PENALTY_M, Position, Trajectory, positions_at
from .nontemporal import track_nontemporal, track_wifi_only, track_wifi_windowed
from .simulator import Scenario, ScenarioConfig, simulate
from .temporal import track_temporal

log = logging.getLogger(__name__)

CDF_BIN_M = 0.1
MODES = ("wifi", "wifi_window", "nontemporal", "temporal")

Tracks = Mapping[str, Sequence[tuple[float, Position]]]


@dataclass(frozen=True)
class ErrorStats:
    mean: float
    std: float
    p50: float
    p75: float
    p90: float
    n: int

    @classmethod
    def of(cls, errors: np.ndarray) -> "ErrorStats":
        if errors.size == 0:
            nan = float("nan")
            return cls(nan, nan, nan, nan, nan, 0)
        q = np.percentile(errors, [50, 75, 90], method="inverted_cdf")
        return cls(float(errors.mean()), float(errors.std()), float(q[0]), float(q[1]),
                   float(q[2]), int(errors.size))


@dataclass
class ErrorReport:
    per_device: dict[str, ErrorStats]
    overall: ErrorStats
    cdf: list[tuple[float, float]]
    errors: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "per_device": {d: asdict(s) for d, s in sorted(self.per_device.items())},
            "overall": asdict(self.overall),
            "cdf": [[round(e, 6), f] for e, f in self.cdf],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ErrorReport":
        return cls({k: ErrorStats(**v) for k, v in d["per_device"].items()},
                   ErrorStats(**d["overall"]), [tuple(x) for x in d["cdf"]])


def empirical_cdf(errors: np.ndarray, bin_m: float = CDF_BIN_M) -> list[tuple[float, float]]:
    """Fraction of errors at or below each multiple of ``bin_m``, up to the maximum."""
    if errors.size == 0:
        return []
    srt = np.sort(errors)
    top = max(1, int(math.ceil(srt[-1] / bin_m - 1e-12)))
    edges = np.arange(top + 1) * bin_m
    edges[-1] = max(edges[-1], srt[-1])
    frac = np.searchsorted(srt, edges, side="right") / srt.size
    return [(float(e), float(f)) for e, f in zip(edges, frac)]


def point_errors(track: Sequence[tuple[float, Position]], truth: Trajectory,
                 floor_penalty: float = FLOOR_PENALTY_M) -> np.ndarray:
    if not track:
        return np.zeros(0)
    ts = np.array([t for t, _ in track])
    xy, floors = positions_at(truth, ts)
    est = np.array([[p.x, p.y] for _, p in track])
    est_f = np.array([p.floor for _, p in track])
    err = np.hypot(est[:, 0] - xy[:, 0], est[:, 1] - xy[:, 1])
    return np.where(est_f == floors, err, floor_penalty)


def evaluate(tracks: Tracks, truth: Mapping[str, Trajectory],
             floor_penalty: float = FLOOR_PENALTY_M) -> ErrorReport:
    unknown = set(tracks) - set(truth)
    if unknown:
        raise KeyError(f"no ground truth for devices {sorted(unknown)}")
    errors = {d: point_errors(tr, truth[d], floor_penalty) for d, tr in sorted(tracks.items())}
    pooled = np.concatenate(list(errors.values())) if errors else np.zeros(0)
    return ErrorReport({d: ErrorStats.of(e) for d, e in errors.items()},
                       ErrorStats.of(pooled), empirical_cdf(pooled), errors)


@dataclass
class Comparison:
    names: list[str]
    rows: list[tuple[str, list[ErrorStats]]]

    def reduction(self, row: int, col: int) -> float | None:
        """Percent reduction of the mean error against the first column."""
        if len(self.names) < 2 or col == 0:
            return None
        base = self.rows[row][1][0].mean
        return 100.0 * (base - self.rows[row][1][col].mean) / base if base else 0.0

    def to_dict(self) -> dict:
        out = []
        for r, (label, stats) in enumerate(self.rows):
            entry = {"row": label}
            for c, (name, s) in enumerate(zip(self.names, stats)):
                entry[name] = {"mean": s.mean, "std": s.std}
                red = self.reduction(r, c)
                if red is not None:
                    entry[name]["reduction_pct"] = red
            out.append(entry)
        return {"columns": self.names, "rows": out}

    def format(self) -> str:
        head = ["device"] + [f"{n}" for n in self.names]
        if len(self.names) > 1:
            head += [f"{n} vs {self.names[0]}" for n in self.names[1:]]
        lines = [head]
        for r, (label, stats) in enumerate(self.rows):
            cells = [label] + [f"{s.mean:.2f}m ± {s.std:.2f}m" for s in stats]
            cells += [f"{self.reduction(r, c):+.1f}%" for c in range(1, len(stats))]
            lines.append(cells)
        widths = [max(len(row[i]) for row in lines) for i in range(len(head))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in lines)


def compare(reports: Mapping[str, ErrorReport]) -> Comparison:
    if not reports:
        raise ValueError("nothing to compare")
    names = list(reports)
    devices = sorted(set().union(*(r.per_device for r in reports.values())))
    nan = ErrorStats(float("nan"), float("nan"), float("nan"), float("nan"), float("nan"), 0)
    rows = [(d, [reports[n].per_device.get(d, nan) for n in names]) for d in devices]
    rows.append(("overall", [reports[n].overall for n in names]))
    return Comparison(names, rows)


# -- files ------------------------------------------------------------------

def write_tracks(tracks: Tracks, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["device", "t", "x", "y", "floor"])
        for dev in sorted(tracks):
            for t, p in tracks[dev]:
                w.writerow([dev, f"{t:.3f}", repr(p.x), repr(p.y), p.floor])


def read_tracks(path: str | Path) -> dict[str, list[tuple[float, Position]]]:
    out: dict[str, list[tuple[float, Position]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["device"], []).append(
                (float(row["t"]), Position(float(row["x"]), float(row["y"]), int(row["floor"]))))
    return out


def write_cdf(report: ErrorReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["error_m", "fraction"])
        for e, f in report.cdf:
            w.writerow([f"{e:.6f}", repr(f)])


# -- pipeline ---------------------------------------------------------------

@dataclass
class Trained:
    model: FingerprintModel
    clusters: ClusterModel


def train(scenario: Scenario, cfg: Config, seed: int = 0) -> Trained:
    fp = cfg.fingerprint
    model = fit(scenario.radio_map, fp.k, fp.missing_rss)
    clusters = kmeans(scenario.radio_map, fp.clusters, seed)
    log.info("%d clusters, mean radius %.2f m", len(clusters), clusters.radii(model.positions).mean())
    return Trained(model, clusters)


def run_tracking(mode: str, scenario: Scenario, trained: Trained, cfg: Config, seed: int = 0,
                 stream=None) -> dict:
    stream = scenario.stream if stream is None else stream
    if mode == "wifi":
        return track_wifi_only(stream, trained.model, cfg.fusion)
    if mode == "wifi_window":
        return track_wifi_windowed(stream, trained.model, cfg.fusion)
    if mode == "nontemporal":
        return track_nontemporal(stream, trained.model, cfg.fusion, cfg.ldpl_bluetooth)
    if mode == "temporal":
        return track_temporal(stream, trained.model, trained.clusters, scenario.fmap,
                              cfg.fusion, cfg.ldpl_bluetooth, seed)
    raise ValueError(f"unknown mode {mode!r}")


def run_seed(cfg: Config, seed: int, modes: Sequence[str] = MODES) -> dict[str, ErrorReport]:
    """Simulate, train and track one seed; returns an error report per mode."""
    sc = ScenarioConfig.from_dict(cfg.scenario)
    scenario = simulate(sc, cfg.ldpl_wifi, cfg.ldpl_bluetooth, cfg.fingerprint.grid_step_m, seed)
    trained = train(scenario, cfg, seed)
    return {m: evaluate(run_tracking(m, scenario, trained, cfg, seed), scenario.truth) for m in modes}


def _run_seed_job(args):
    cfg, seed, modes = args
    return run_seed(cfg, seed, modes)


def run_experiment(cfg: Config, seeds: Sequence[int], modes: Sequence[str] = MODES,
                   jobs: int = 1) -> list[dict[str, ErrorReport]]:
    work = [(cfg, s, tuple(modes)) for s in seeds]
    if jobs <= 1:
        return [_run_seed_job(w) for w in work]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_run_seed_job, work))


def summarize(runs: Sequence[dict[str, ErrorReport]]) -> dict[str, dict[str, float]]:
    """Seed-averaged pooled mean, p75 and p90 per mode."""
    out = {}
    for mode in runs[0]:
        out[mode] = {k: float(np.mean([getattr(r[mode].overall, k) for r in runs]))
                     for k in ("mean", "std", "p50", "p75", "p90")}
    return out


def save_report(reports: Mapping[str, ErrorReport], path: str | Path) -> None:
    doc = {"reports": {n: r.to_dict() for n, r in reports.items()},
           "comparison": compare(reports).to_dict()}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n")


def load_report(path: str | Path) -> dict[str, ErrorReport]:
    doc = json.loads(Path(path).read_text())
    return {n: ErrorReport.from_dict(r) for n, r in doc["reports"].items()}
