"""Command line front end: simulate, train, track, eval, report, experiment."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .config import load_config
from .events import read_jsonl, write_jsonl
from .fingerprint import fit, kmeans, load_model, load_radio_map, save_model, save_radio_map
from .geomap import load_map, load_trajectories, save_map, save_trajectories
from .nontemporal import track_nontemporal, track_wifi_only, track_wifi_windowed
from .simulator import ScenarioConfig, simulate
from .temporal import track_temporal

TRACK_MODES = ("wifi", "wifi-tick", "nontemporal", "temporal")


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise argparse.ArgumentTypeError(f"no such file: {path}")
    return p


def _nonneg_int(v: str) -> int:
    n = int(v)
    if n < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {v}")
    return n


def _pos_int(v: str) -> int:
    n = int(v)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return n


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    sc = ScenarioConfig.from_dict(cfg.scenario)
    scenario = simulate(sc, cfg.ldpl_wifi, cfg.ldpl_bluetooth, cfg.fingerprint.grid_step_m, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(scenario.stream, out / "events.jsonl")
    save_trajectories(scenario.truth, out / "truth.json")
    save_radio_map(scenario.radio_map, out / "radio_map.csv")
    save_map(scenario.fmap, out / "map.json")
    print(f"{len(scenario.stream)} events, {len(scenario.radio_map)} radio-map samples -> {out}")
    return 0


def cmd_train(args) -> int:
    rm = load_radio_map(args.radio_map)
    model = fit(rm, args.k, args.missing_rss)
    clusters = kmeans(rm, args.clusters, args.seed)
    save_model(model, clusters, args.out)
    print(f"model: {len(rm)} samples, k={args.k}, {args.clusters} clusters "
          f"(mean radius {clusters.radii(model.positions).mean():.2f} m) -> {args.out}")
    return 0


def cmd_track(args) -> int:
    cfg = load_config(args.config)
    stream = read_jsonl(args.events)
    model, clusters = load_model(args.model)
    if args.mode == "wifi":
        tracks = track_wifi_windowed(stream, model, cfg.fusion)
    elif args.mode == "wifi-tick":
        tracks = track_wifi_only(stream, model, cfg.fusion)
    elif args.mode == "nontemporal":
        tracks = track_nontemporal(stream, model, cfg.fusion, cfg.ldpl_bluetooth)
    else:
        if clusters is None:
            raise ValueError(f"{args.model} has no cluster model; retrain with --clusters")
        if args.map is None:
            raise ValueError("--map is required for temporal tracking")
        fmap = load_map(args.map)
        if args.dump_particles:
            with open(args.dump_particles, "w") as fh:
                tracks = track_temporal(stream, model, clusters, fmap, cfg.fusion,
                                        cfg.ldpl_bluetooth, args.seed, dump=fh)
        else:
            tracks = track_temporal(stream, model, clusters, fmap, cfg.fusion,
                                    cfg.ldpl_bluetooth, args.seed)
    harness.write_tracks(tracks, args.out)
    return 0


def cmd_eval(args) -> int:
    truth = load_trajectories(args.truth)
    names = args.names or [p.stem for p in args.tracks]
    if len(names) != len(args.tracks):
        raise ValueError("--names must give one name per tracks file")
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate report names {names}; pass --names")
    reports = {n: harness.evaluate(harness.read_tracks(p), truth)
               for n, p in zip(names, args.tracks)}
    harness.save_report(reports, args.out)
    print(harness.compare(reports).format())
    return 0


def cmd_report(args) -> int:
    reports = harness.load_report(args.report)
    if args.cdf:
        name = args.name or next(iter(reports))
        if name not in reports:
            raise ValueError(f"no report named {name!r}; have {sorted(reports)}")
        if args.out is None:
            raise ValueError("--cdf needs --out")
        harness.write_cdf(reports[name], args.out)
        return 0
    table = harness.compare(reports).format()
    if args.out:
        Path(args.out).write_text(table + "\n")
    else:
        print(table)
    return 0


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    seeds = range(args.seed_start, args.seed_start + args.seeds)
    runs = harness.run_experiment(cfg, seeds, args.modes, args.jobs)
    summary = harness.summarize(runs)
    for mode, s in summary.items():
        print(f"{mode:12s} mean {s['mean']:.2f}m  p75 {s['p75']:.2f}m  p90 {s['p90']:.2f}m")
    if args.out:
        doc = {"seeds": list(seeds), "summary": summary,
               "runs": [{m: r.to_dict() for m, r in run.items()} for run in runs]}
        Path(args.out).write_text(json.dumps(doc, indent=1) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="collabloc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a scenario: events, truth, radio map, floor map")
    s.add_argument("--config", type=_existing, default=None)
    s.add_argument("--seed", type=_nonneg_int, default=0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("train", help="fit the fingerprint model and cluster the radio map")
    s.add_argument("--radio-map", type=_existing, required=True)
    s.add_argument("--k", type=_pos_int, default=5)
    s.add_argument("--clusters", type=_pos_int, default=30)
    s.add_argument("--missing-rss", type=float, default=-100.0)
    s.add_argument("--seed", type=_nonneg_int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("track", help="run one tracker over an event log")
    s.add_argument("--mode", choices=TRACK_MODES, required=True,
                   help="wifi: fingerprint fixes per window; wifi-tick: per scan, "
                        "resampled to the tick grid")
    s.add_argument("--events", type=_existing, required=True)
    s.add_argument("--model", type=_existing, required=True)
    s.add_argument("--map", type=_existing, default=None)
    s.add_argument("--config", type=_existing, default=None)
    s.add_argument("--seed", type=_nonneg_int, default=0)
    s.add_argument("--dump-particles", default=None, metavar="JSONL")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("eval", help="score track files against ground truth")
    s.add_argument("--tracks", type=_existing, nargs="+", required=True)
    s.add_argument("--names", nargs="+", default=None)
    s.add_argument("--truth", type=_existing, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="print the comparison table or export a CDF")
    s.add_argument("--report", type=_existing, required=True)
    s.add_argument("--cdf", action="store_true")
    s.add_argument("--name", default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("experiment", help="simulate, train, track and score over several seeds")
    s.add_argument("--config", type=_existing, default=None)
    s.add_argument("--seeds", type=_pos_int, default=10)
    s.add_argument("--seed-start", type=_nonneg_int, default=0)
    s.add_argument("--modes", nargs="+", choices=harness.MODES, default=list(harness.MODES))
    s.add_argument("--jobs", type=_pos_int, default=1)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors (2) and --help (0)
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"collabloc {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
