import pytest

from collabloc.config import load_config
from collabloc.harness import train
from collabloc.simulator import ScenarioConfig, simulate


@pytest.fixture(scope="session")
def demo_cfg():
    return load_config()


@pytest.fixture(scope="session")
def demo_scenario(demo_cfg):
    sc = ScenarioConfig.from_dict(demo_cfg.scenario)
    return simulate(sc, demo_cfg.ldpl_wifi, demo_cfg.ldpl_bluetooth,
                    demo_cfg.fingerprint.grid_step_m, seed=0)


@pytest.fixture(scope="session")
def demo_trained(demo_scenario, demo_cfg):
    return train(demo_scenario, demo_cfg, seed=0)


@pytest.fixture(scope="session")
def short_scenario(demo_cfg):
    """Two users walking together for 60 s: small enough for full temporal runs."""
    d = dict(demo_cfg.scenario, n_users=2, n_groups=1, duration_s=60.0)
    sc = ScenarioConfig.from_dict(d)
    return simulate(sc, demo_cfg.ldpl_wifi, demo_cfg.ldpl_bluetooth,
                    demo_cfg.fingerprint.grid_step_m, seed=3)


@pytest.fixture(scope="session")
def short_trained(short_scenario, demo_cfg):
    return train(short_scenario, demo_cfg, seed=3)


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE[number] = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        print(ACCEPTANCE[number])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
