import numpy as np
import pytest

from socialgrid.ingest import build_scenario, load_case, synthetic_social_graph
from socialgrid.model import Coupling, PowerGrid, Scenario, SocialGraph
from socialgrid.powerflow import settle

CRITERIA = {
    1: "DC flow: triangle flows and IEEE30 conservation",
    2: "cascade: parallel lines and two-round trace",
    3: "IC Monte Carlo matches live-edge enumeration",
    4: "branch and bound matches 2^n enumeration",
    5: "CIC end-to-end on the chain",
    6: "load shedding stops the next round; safe input untouched",
    7: "SPA-S damage dominates SPA-C and Random on IEEE30",
    8: "CLS yield non-increasing in round and above uncontrolled",
    9: "CLI output is byte-identical on re-run",
}

_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n = mark.args[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        ok = rep.passed
        _results.setdefault(n, []).append((item.name, ok, rep.duration))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        if n not in _results:
            continue
        runs = _results[n]
        ok = all(r[1] for r in runs)
        secs = sum(r[2] for r in runs)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {CRITERIA[n]}  ({secs:.1f} s)")


# ----------------------------------------------------------------- grids

def two_bus(demand=1.0, cap=10.0, pmax=10.0):
    grid = PowerGrid.build(2, [(0, 1, 1.0, cap)], [(0, demand, 0.0, pmax)], {1: demand})
    settle(grid)
    grid.ma_flow = grid.flow.copy()
    return grid


def chain_grid():
    """gen(0) - A(1) - B(2), one MW at A and B."""
    grid = PowerGrid.build(3, [(0, 1, 1.0, 2.6), (1, 2, 1.0, 1.2)], [(0, 2.0, 0.0, 10.0)], {1: 1.0, 2: 1.0})
    settle(grid)
    grid.ma_flow = grid.flow.copy()
    return grid


def four_bus_grid():
    """Failing line A (0-2) pushes line B (1-2) over its limit next round.

    Line order: A 0-2, L1 0-1, B 1-2, D 2-3. One generator at bus 0,
    one MW of demand at bus 3.
    """
    lines = [(0, 2, 1.0, 0.8), (0, 1, 1.0, 2.0), (1, 2, 1.0, 1.0), (2, 3, 1.0, 2.0)]
    grid = PowerGrid.build(4, lines, [(0, 1.0, 0.0, 10.0)], {3: 1.0})
    settle(grid)
    grid.ma_flow = grid.flow.copy()
    return grid


def small_scenario(grid, prob=1.0, alpha=1.0, delta=0.25):
    """One user per demand bus, a directed path between them, weight ``prob``."""
    demand = grid.demand_buses.tolist()
    n = len(demand)
    edges = [(i, i + 1) for i in range(n - 1)]
    social = SocialGraph.from_edges(n, edges, prob=[prob] * len(edges))
    coupling = Coupling([(b, i) for i, b in enumerate(demand)])
    return Scenario(social, grid, coupling, delta=delta, alpha=alpha)


@pytest.fixture
def chain():
    return chain_grid()


@pytest.fixture
def four_bus():
    return four_bus_grid()


@pytest.fixture(scope="session")
def standin_social():
    return synthetic_social_graph(rng=0)


@pytest.fixture(scope="session")
def ieee30():
    return load_case("ieee30")


@pytest.fixture(scope="session")
def ieee30_scenario(ieee30, standin_social):
    return build_scenario(ieee30, standin_social, capacity_factor=1.3, rng_seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_grid(rng, n_bus, factor=1.1, extra_lines=2):
    """Connected grid: a random spanning tree plus a few extra lines, one generator at bus 0."""
    from socialgrid.ingest import set_line_capacities

    lines = []
    for b in range(1, n_bus):
        lines.append((int(rng.integers(0, b)), b))
    for _ in range(extra_lines):
        i, j = (int(v) for v in rng.choice(n_bus, 2, replace=False))
        lines.append((i, j))
    demand = {b: float(rng.uniform(0.5, 2.0)) for b in range(1, n_bus) if rng.random() < 0.8}
    total = sum(demand.values())
    rows = [(i, j, float(rng.uniform(0.5, 1.5)), np.inf) for i, j in lines]
    grid = PowerGrid.build(n_bus, rows, [(0, total, 0.0, 10 * total + 10)], demand)
    grid = set_line_capacities(grid, factor)
    grid.ma_flow = grid.flow.copy()
    return grid
