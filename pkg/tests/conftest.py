import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from aiswh import grid, heatmap, partition, synthetic, trajectory  # noqa: E402
from aiswh.grid import Domain  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


class Pipeline:
    """In-memory run of every stage on one synthetic fleet."""

    def __init__(self, domain, fleet, budget=64, method="kd", simplify=True):
        self.domain = domain
        self.fleet = fleet
        trajs = trajectory.build_trajectories(fleet, trajectory.TrajectoryParams())
        if simplify:
            trajs = [trajectory.simplify(t, 10.0) for t in trajs]
        self.trajectories = trajs
        self.events = {g: grid.rollup_all(trajs, g, domain) for g in grid.GRANULARITIES}
        self.counts = partition.CountGrid.from_events(self.events[5000], domain)
        build = partition.build_kdtree if method == "kd" else partition.build_quadtree
        self.divisions = build(self.counts, budget)
        self.store = heatmap.rollup_heatmaps(self.events, heatmap.BUILTIN_TYPES, grid.GRANULARITIES,
                                             self.divisions, domain)


@pytest.fixture(scope="session")
def small_domain():
    return Domain(0.0, 0.0, 60_000.0, 60_000.0)


@pytest.fixture(scope="session")
def skewed(small_domain):
    cfg = synthetic.FleetConfig(seed=7, n_points=12_000, n_ships=40, n_days=3, interval=30)
    return Pipeline(small_domain, synthetic.skewed_fleet(small_domain, cfg), budget=36)


@pytest.fixture(scope="session")
def uniform():
    domain = Domain(0.0, 0.0, 100_000.0, 100_000.0)
    fleet = synthetic.lane_grid_fleet(domain)
    cols, rows = domain.shape(5000)
    return Pipeline(domain, fleet, budget=cols * rows)


@pytest.fixture
def rng():
    return np.random.default_rng(20240229)
