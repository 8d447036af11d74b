import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from horizon_fairness.cache import load_topology, network_from_dict

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cycle_net():
    return load_topology("cycle", 20)


def single_cache_net(repo_cost=10.0, capacity=1, F=1):
    """One cache (node 1) behind a repository (node 2) at ``repo_cost``."""
    return network_from_dict(
        {
            "nodes": [1, 2],
            "edges": [[1, 2, repo_cost]],
            "capacities": {1: capacity, 2: 0},
            "repositories": {2: "all"},
            "agents": [{"caches": [1], "query_nodes": [1]}],
        },
        F,
    )


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Callable recording one PASS/FAIL line per acceptance criterion."""

    def report(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
