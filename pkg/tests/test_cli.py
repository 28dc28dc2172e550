import json

import pytest

from collabloc.cli import main
from collabloc.config import demo_config_path


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Simulated demo scenario plus a trained model, made through the CLI."""
    d = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--seed", "0", "--out-dir", str(d)]) == 0
    assert main(["train", "--radio-map", str(d / "radio_map.csv"), "--k", "5", "--clusters", "30",
                 "--out", str(d / "model.json")]) == 0
    return d


@pytest.fixture(scope="module")
def short_config(tmp_path_factory):
    text = demo_config_path().read_text()
    text = text.replace("n_users = 4", "n_users = 2").replace("n_groups = 2", "n_groups = 1")
    text = text.replace("duration_s = 300.0", "duration_s = 40.0")
    path = tmp_path_factory.mktemp("cfg") / "short.toml"
    path.write_text(text)
    return path


def track(d, mode, out, events="events.jsonl", *extra):
    return main(["track", "--mode", mode, "--events", str(d / events), "--model", str(d / "model.json"),
                 "--map", str(d / "map.json"), "--out", str(d / out), *extra])


def test_simulate_outputs(workdir):
    for name in ("events.jsonl", "truth.json", "radio_map.csv", "map.json"):
        assert (workdir / name).stat().st_size > 0


def test_full_pipeline(workdir, capsys):
    for mode in ("wifi", "wifi-tick", "nontemporal", "temporal"):
        assert track(workdir, mode, f"{mode}.csv") == 0
    tracks = [str(workdir / f"{m}.csv") for m in ("wifi", "nontemporal", "temporal")]
    assert main(["eval", "--tracks", *tracks, "--names", "wifi", "nontemporal", "temporal",
                 "--truth", str(workdir / "truth.json"), "--out", str(workdir / "report.json")]) == 0
    out = capsys.readouterr().out
    assert "overall" in out and "temporal vs wifi" in out
    doc = json.loads((workdir / "report.json").read_text())
    assert set(doc["reports"]) == {"wifi", "nontemporal", "temporal"}
    assert main(["report", "--report", str(workdir / "report.json")]) == 0
    assert main(["report", "--report", str(workdir / "report.json"), "--cdf", "--name", "temporal",
                 "--out", str(workdir / "cdf.csv")]) == 0
    assert (workdir / "cdf.csv").read_text().startswith("error_m,fraction\n")


def test_wifi_equals_nontemporal_without_bluetooth(workdir):
    lines = (workdir / "events.jsonl").read_text().splitlines()
    wifi_only = [ln for ln in lines if '"type":"bt"' not in ln]
    assert 0 < len(wifi_only) < len(lines)
    (workdir / "nobt.jsonl").write_text("\n".join(wifi_only) + "\n")
    assert track(workdir, "wifi", "a.csv", "nobt.jsonl") == 0
    assert track(workdir, "nontemporal", "b.csv", "nobt.jsonl") == 0
    assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()


def test_temporal_seed_is_reproducible(tmp_path, short_config):
    assert main(["simulate", "--config", str(short_config), "--seed", "4", "--out-dir", str(tmp_path)]) == 0
    assert main(["train", "--radio-map", str(tmp_path / "radio_map.csv"), "--out",
                 str(tmp_path / "model.json")]) == 0
    for out in ("t1.csv", "t2.csv"):
        assert track(tmp_path, "temporal", out, "events.jsonl", "--seed", "7",
                     "--config", str(short_config)) == 0
    assert (tmp_path / "t1.csv").read_bytes() == (tmp_path / "t2.csv").read_bytes()
    assert track(tmp_path, "temporal", "t3.csv", "events.jsonl", "--seed", "8",
                 "--config", str(short_config), "--dump-particles", str(tmp_path / "p.jsonl")) == 0
    assert (tmp_path / "t3.csv").read_bytes() != (tmp_path / "t1.csv").read_bytes()
    assert (tmp_path / "p.jsonl").stat().st_size > 0


def test_experiment_command(short_config, tmp_path, capsys):
    out = tmp_path / "exp.json"
    assert main(["experiment", "--config", str(short_config), "--seeds", "1", "--modes", "wifi",
                 "nontemporal", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert set(doc["summary"]) == {"wifi", "nontemporal"} and doc["seeds"] == [0]


@pytest.mark.parametrize("argv", [
    ["track", "--mode", "wifi", "--events", "missing.jsonl", "--model", "m.json", "--out", "x.csv"],
    ["simulate", "--out-dir", "x", "--bogus"],
    ["train", "--radio-map", "nope.csv", "--out", "m.json"],
    ["track", "--mode", "psychic", "--events", "e", "--model", "m", "--out", "o"],
    ["simulate", "--seed", "-1", "--out-dir", "x"],
    [],
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err


def test_runtime_errors_exit_1(workdir, capsys):
    bad = workdir / "bad.jsonl"
    bad.write_text('{"type": "wifi", "device": "d1"}\n')
    assert track(workdir, "wifi", "o.csv", "bad.jsonl") == 1
    assert "error" in capsys.readouterr().err
    assert main(["report", "--report", str(workdir / "report.json"), "--cdf"]) == 1
    assert "--out" in capsys.readouterr().err
