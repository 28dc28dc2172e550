import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collabloc.config import FusionConfig
from collabloc.events import BtSighting, WifiScan, ingest
from collabloc.fingerprint import ClusterModel, fit, kmeans
from collabloc.geomap import (Bounds, FloorMap, Position, Trajectory, Wall, crosses_wall_many)
from collabloc.harness import point_errors
from collabloc.radio import LdplParams, rss_to_distance
from collabloc.simulator import ScenarioConfig, demo_map, generate_radio_map, _ap_rss
from collabloc.temporal import (EventIndex, ParticleSet, TickEvents, estimate, init_particles,
                                propagate, score_bluetooth, score_wifi, step, systematic_resample,
                                track_temporal)

CFG = FusionConfig()
BT = LdplParams(1.0, -59.0, 2.0, 0.0)


def open_floor(size=1000.0):
    return FloorMap((), {0: Bounds(-size, -size, size, size)})


def pset(xy, floor=None, device="d"):
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    n = len(xy)
    fl = np.zeros(n, dtype=int) if floor is None else np.asarray(floor, dtype=int)
    return ParticleSet(device, 0.0, xy, fl, np.full(n, 1.0 / n))


def test_init_particles():
    fmap = demo_map()
    s = init_particles(fmap, CFG, np.random.default_rng(0))
    assert len(s) == 1000 and np.all(s.weights == 1e-3) and np.all(s.floor == 0)
    assert np.all(fmap.bounds[0].contains(s.xy[:, 0], s.xy[:, 1]))
    s2 = init_particles(fmap, CFG, np.random.default_rng(0))
    assert np.array_equal(s.xy, s2.xy)


def test_propagate_mean_displacement():
    rng = np.random.default_rng(1)
    s = pset(np.zeros((10_000, 2)))
    moved = propagate(s, 0.5, open_floor(), CFG, rng)
    disp = np.hypot(*(moved.xy - s.xy).T)
    assert abs(disp.mean() - 0.5) <= 3 * disp.std() / math.sqrt(disp.size)
    assert np.array_equal(moved.weights, s.weights)


def test_propagate_zero_speed_spread():
    s = pset(np.random.default_rng(2).uniform(-5, 5, (500, 2)))
    moved = propagate(s, 0.5, open_floor(), CFG.replace(speed_std=0.0), np.random.default_rng(3))
    assert np.hypot(*(moved.xy - s.xy).T) == pytest.approx(np.full(500, 0.5), abs=1e-12)


def test_propagate_requires_positive_dt():
    with pytest.raises(ValueError):
        propagate(pset([[0, 0]]), 0.0, open_floor(), CFG, np.random.default_rng(0))


def test_particles_stay_in_closed_cell():
    P = lambda x, y: Position(x, y, 0)
    cell = FloorMap((Wall(P(0, 0), P(1, 0)), Wall(P(1, 0), P(1, 1)), Wall(P(1, 1), P(0, 1)),
                     Wall(P(0, 1), P(0, 0))), {0: Bounds(-5, -5, 5, 5)})
    s = pset(np.full((200, 2), 0.5))
    rng = np.random.default_rng(4)
    for _ in range(100):
        s = propagate(s, 0.5, cell, CFG, rng)
    assert np.all((s.xy > 0) & (s.xy < 1))


def test_propagate_never_crosses_walls():
    fmap = demo_map()
    rng = np.random.default_rng(5)
    s = init_particles(fmap, CFG, rng)
    for _ in range(50):
        new = propagate(s, 0.5, fmap, CFG, rng)
        same = new.floor == s.floor
        for f in np.unique(s.floor[same]):
            m = same & (s.floor == f)
            assert not crosses_wall_many(fmap, int(f), s.xy[m], new.xy[m]).any()
        s = new


def test_stair_hop():
    fmap = demo_map()
    a, b = fmap.stairs[0]
    s = pset(np.tile([a.x, a.y], (2000, 1)), np.full(2000, a.floor))
    moved = propagate(s, 0.5, fmap, CFG.replace(stair_prob=0.5), np.random.default_rng(6))
    frac = np.mean(moved.floor == b.floor)
    assert 0.4 < frac < 0.6
    assert np.all(fmap.bounds[b.floor].contains(moved.xy[:, 0], moved.xy[:, 1]))


def one_cluster(x, y):
    return ClusterModel(np.array([[x, y]], dtype=float), np.zeros(1, dtype=int), np.zeros(1, dtype=int))


def test_score_wifi_endpoints():
    s = pset([[1, 0], [2, 0], [5, 0]])
    sc = score_wifi(s, np.array([1.0]), one_cluster(0, 0))
    assert sc.tolist() == [1.0, 0.75, 0.0]


def test_score_wifi_equidistant_gets_probability():
    s = pset([[1, 0], [0, 1], [-1, 0]])
    c = ClusterModel(np.array([[0.0, 0.0], [9.0, 9.0]]), np.zeros(2, dtype=int), np.array([0, 1]))
    sc = score_wifi(s, np.array([0.3, 0.7]), c)
    assert sc[0] == pytest.approx(0.3 + 0.7 * 1.0)  # nearest to cluster 2 among the three
    assert np.all(sc >= 0.3 - 1e-12)


def test_score_wifi_ring_symmetry():
    ang = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    s = pset(np.column_stack([np.cos(ang), np.sin(ang)]) * 2.0)
    c = ClusterModel(np.column_stack([np.cos(ang), np.sin(ang)]) * 5.0, np.zeros(8, dtype=int),
                     np.arange(8))
    sc = score_wifi(s, np.full(8, 1 / 8), c)
    assert sc == pytest.approx(np.full(8, sc[0]), abs=1e-12)


@settings(max_examples=50)
@given(st.integers(0, 10_000))
def test_score_wifi_range_and_monotone(seed):
    rng = np.random.default_rng(seed)
    c = ClusterModel(rng.uniform(0, 20, (5, 2)), np.zeros(5, dtype=int), np.arange(5))
    probs = rng.dirichlet(np.ones(5)) + 1e-3
    probs /= probs.sum()
    xy = rng.uniform(0, 20, (50, 2))
    sc = score_wifi(pset(xy), probs, c)
    assert np.all(sc >= -1e-12) and np.all(sc <= 1 + 1e-12)
    # a particle at least as close to every centroid as the best one scores at least as high
    best = int(np.argmax(sc))
    d_best = np.hypot(*(c.centroids - xy[best]).T)
    closer = [i for i in range(50)
              if np.all(np.hypot(*(c.centroids - xy[i]).T) <= d_best + 1e-12)]
    for i in closer:
        assert sc[i] >= sc[best] - 1e-12


def brute_bt(set_i, set_j, wj, l, delta_b):
    out = []
    for a in range(len(set_i)):
        acc = 0.0
        for b in range(len(set_j)):
            dx = set_i.xy[a, 0] - set_j.xy[b, 0]
            dy = set_i.xy[a, 1] - set_j.xy[b, 1]
            e = math.sqrt(dx * dx + dy * dy) - l
            acc += wj[b] * math.exp(-(e * e) / (2 * delta_b ** 2))
        out.append(acc)
    top = max(out)
    return [v / top for v in out]


def test_score_bluetooth_matches_double_loop_exactly():
    rng = np.random.default_rng(8)
    for _ in range(20):
        si, sj = pset(rng.normal(0, 3, (50, 2))), pset(rng.normal(2, 3, (50, 2)))
        wj = rng.random(50)
        rss = float(rng.uniform(-80, -60))
        got = score_bluetooth(si, sj, wj, rss, BT, CFG)
        assert got.tolist() == brute_bt(si, sj, wj, rss_to_distance(BT, rss), CFG.delta_b)


def test_score_bluetooth_peaks_on_range_circle():
    l = 3.0
    rss = -59.0 - 20 * math.log10(l)
    ang = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    ring = np.column_stack([np.cos(ang), np.sin(ang)]) * l
    si = pset(np.vstack([ring, [[0.5, 0], [6, 0], [0, 4]]]))
    sc = score_bluetooth(si, pset([[0, 0]]), np.ones(1), rss, BT, CFG)
    assert sc[:12] == pytest.approx(np.ones(12), abs=1e-12)
    assert np.all(sc[12:] < 1.0)


def test_score_bluetooth_flat_kernel():
    rng = np.random.default_rng(9)
    si, sj = pset(rng.normal(0, 3, (30, 2))), pset(rng.normal(0, 3, (30, 2)))
    sc = score_bluetooth(si, sj, np.ones(30), -65.0, BT, CFG.replace(delta_b=1e9))
    assert sc == pytest.approx(np.ones(30), abs=1e-12)


def test_score_bluetooth_raw_when_not_normalised():
    rng = np.random.default_rng(10)
    si, sj = pset(rng.normal(0, 3, (20, 2))), pset(rng.normal(0, 3, (20, 2)))
    raw = score_bluetooth(si, sj, np.ones(20), -65.0, BT, CFG.replace(bt_max_normalize=False))
    norm = score_bluetooth(si, sj, np.ones(20), -65.0, BT, CFG)
    assert norm == pytest.approx(raw / raw.max())


@settings(max_examples=100)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=60).filter(lambda v: sum(v) > 1e-6),
       st.integers(0, 2 ** 32 - 1))
def test_systematic_resample_counts(scores, seed):
    scores = np.array(scores)
    n = len(scores)
    idx = systematic_resample(scores, np.random.default_rng(seed))
    counts = np.bincount(idx, minlength=n)
    expected = scores / scores.sum() * n
    assert idx.size == n
    assert np.all(counts >= np.floor(expected - 1e-9)) and np.all(counts <= np.ceil(expected + 1e-9))


def test_estimate_examples():
    e = estimate(pset([[3, 4]] * 5))
    assert (e.x, e.y, e.floor) == (pytest.approx(3.0), pytest.approx(4.0), 0)
    e = estimate(pset([[0, 0], [2, 0]]))
    assert (e.x, e.y, e.floor) == (pytest.approx(1.0), pytest.approx(0.0), 0)
    s = pset([[0, 0], [1, 1], [2, 2]], floor=[1, 0, 1])
    assert estimate(s).floor == 1


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_estimate_inside_hull(seed):
    from scipy.spatial import Delaunay
    rng = np.random.default_rng(seed)
    xy = rng.normal(0, 5, (40, 2))
    s = ParticleSet("d", 0.0, xy, np.zeros(40, dtype=int), rng.dirichlet(np.ones(40)))
    e = estimate(s)
    assert Delaunay(xy).find_simplex([e.x, e.y], tol=1e-9) >= 0


def square_model():
    fmap = demo_map()
    sc = ScenarioConfig(groups=[["d1"]], fmap=fmap)
    rm = generate_radio_map(sc, LdplParams(1.0, -40.0, 3.0, 0.0), 1.0, np.random.default_rng(0))
    return sc, fit(rm, k=3), kmeans(rm, 30, seed=0)


def test_step_without_events_only_propagates():
    fmap = demo_map()
    _, model, clusters = square_model()
    rng = np.random.default_rng(11)
    sets = {"d1": init_particles(fmap, CFG, rng, "d1")}
    out = step(sets, TickEvents(), clusters, model, CFG, BT, np.random.default_rng(12), fmap)
    ref = propagate(sets["d1"], 0.5, fmap, CFG, np.random.default_rng(12))
    assert np.array_equal(out["d1"].xy, ref.xy) and np.array_equal(out["d1"].weights, ref.weights)


def test_step_with_scan_resamples_and_keeps_distribution():
    fmap = demo_map()
    sc, model, clusters = square_model()
    rng = np.random.default_rng(13)
    sets = {"d1": init_particles(fmap, CFG, rng, "d1")}
    scan = WifiScan("d1", 0.0, _ap_rss(LdplParams(1.0, -40.0, 3.0, 0.0), sc, 30.0, 3.0, 0, rng))
    out = step(sets, TickEvents(wifi={"d1": scan}), clusters, model, CFG, BT, rng, fmap, dt=0.0)
    assert not np.array_equal(out["d1"].xy, sets["d1"].xy)
    assert abs(out["d1"].weights.sum() - 1.0) <= 1e-9
    # the kept particles lean towards the scan position
    assert abs(estimate(out["d1"]).x - 30.0) < abs(estimate(sets["d1"]).x - 30.0)


def test_event_index_effect_windows():
    s = ingest([WifiScan("d1", 3.0, {"a": -50.0}), WifiScan("d1", 30.0, {"a": -60.0}),
                BtSighting("d1", "d2", 12.5, -60.0), BtSighting("d2", "d1", 13.0, -61.0)],
               {"d1", "d2"}, 40.0)
    idx = EventIndex(s, 0.5)
    assert idx.at(10.0, CFG).bt == []                       # 2.5 s away
    assert idx.at(10.5, CFG).bt[0].t == 12.5                 # exactly 2 s away
    assert [e.t for e in idx.at(12.5, CFG).bt] == [12.5]     # one sighting per pair
    assert idx.at(13.0, CFG).bt[0].t == 13.0
    assert idx.at(12.0, CFG).wifi["d1"].t == 3.0             # 9 s away, still in effect
    assert "d1" not in idx.at(13.5, CFG).wifi                # 10.5 s from 3 s, 16.5 s from 30 s
    assert idx.at(20.0, CFG).wifi["d1"].t == 30.0
    assert idx.at(19.5, CFG).wifi == {}


def test_track_temporal_deterministic(short_scenario, short_trained, demo_cfg):
    run = lambda: track_temporal(short_scenario.stream, short_trained.model, short_trained.clusters,
                                 short_scenario.fmap, demo_cfg.fusion, demo_cfg.ldpl_bluetooth, 7)
    a, b = run(), run()
    assert a == b
    ticks = [t for t, _ in a["d1"]]
    assert ticks[0] == 0.0 and ticks[-1] == 60.0 and len(ticks) == 121


def test_track_temporal_without_bluetooth_matches_disabled(short_scenario, short_trained, demo_cfg):
    tr = short_trained
    nobt = track_temporal(short_scenario.stream.without_bluetooth(), tr.model, tr.clusters,
                          short_scenario.fmap, demo_cfg.fusion, demo_cfg.ldpl_bluetooth, 3)
    off = track_temporal(short_scenario.stream, tr.model, tr.clusters, short_scenario.fmap,
                         demo_cfg.fusion.replace(use_bluetooth=False), demo_cfg.ldpl_bluetooth, 3)
    for d in nobt:
        a = np.array([[p.x, p.y, p.floor] for _, p in nobt[d]])
        b = np.array([[p.x, p.y, p.floor] for _, p in off[d]])
        assert np.abs(a - b).max() <= 1e-12


def test_track_temporal_dump(short_scenario, short_trained, demo_cfg, tmp_path):
    import io, json
    buf = io.StringIO()
    cfg = demo_cfg.fusion.replace(particle_count=20)
    tr = short_trained
    track_temporal(short_scenario.stream, tr.model, tr.clusters, short_scenario.fmap, cfg,
                   demo_cfg.ldpl_bluetooth, 0, dump=buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 121 * 2
    rec = json.loads(lines[0])
    assert rec["t"] == 0.0 and len(rec["x"]) == 20


def test_standing_user_beats_random_walk():
    sc, model, clusters = square_model()
    where = Position(55.0, 2.75, 0)
    truth = Trajectory(((where, 0.0), (where, 60.0)))
    noiseless = LdplParams(1.0, -40.0, 3.0, 0.0)
    rng = np.random.default_rng(14)
    scans = [WifiScan("d1", t, _ap_rss(noiseless, sc, where.x, where.y, 0, rng))
             for t in np.arange(0.0, 60.0, 5.0)]
    observed = ingest(scans, {"d1"}, 60.0)
    blind = ingest([], {"d1"}, 60.0)
    err = {}
    for name, stream in (("observed", observed), ("blind", blind)):
        tracks = track_temporal(stream, model, clusters, sc.fmap, CFG, BT, seed=1)
        err[name] = point_errors(tracks["d1"], truth).mean()
    assert err["observed"] < err["blind"]
    assert err["observed"] < 3.0
