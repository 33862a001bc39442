import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ofdm_energy.model import ChannelMatrix, DemandVector, SystemConfig
from ofdm_energy.scenario import default_paper_scenario, generate_channels

settings.register_profile(
    "repo",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile("repo")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cell():
    """Default four-MT cell, seed 0: (cfg, chan, demand)."""
    spec = default_paper_scenario()
    cfg = spec.system_config()
    return cfg, generate_channels(spec, 0, cfg), spec.demand()


def unit_config(K=1, **kw):
    """W = N0 = 1 so that f equals h and a = ln 2."""
    base = dict(W=1.0, N0=1.0, P_avg=10.0, P_tc=2.0, P_rc=0.5, alphas=(1.0,) * K)
    base.update(kw)
    return SystemConfig(**base)


def random_instance(rng, K, N, **cfg_kw):
    cfg = default_paper_scenario().system_config(alphas=tuple(rng.uniform(0.5, 2.0, K)), **cfg_kw)
    d = rng.uniform(300.0, 800.0, K)
    h = rng.exponential(size=(K, N)) * d[:, None] ** -4.0
    return cfg, ChannelMatrix.from_gains(h, cfg), DemandVector(rng.uniform(2e3, 1.5e4, K))
