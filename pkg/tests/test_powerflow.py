import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from socialgrid.ingest import set_line_capacities
from socialgrid.model import PowerGrid
from socialgrid.powerflow import (apply_demand_change, balance, balance_island, find_islands, run_cascade, settle,
                                  solve_dc_flow, trace_records)

from conftest import two_bus
from oracles import bfs_components


def _residual(grid, flow):
    out = np.zeros(grid.n_bus)
    live = grid.alive
    np.add.at(out, grid.line_from[live], flow[live])
    np.add.at(out, grid.line_to[live], -flow[live])
    return out - grid.injections()


def test_two_bus_flow():
    g = two_bus()
    assert g.flow[0] == pytest.approx(1.0)
    assert g.theta[0] - g.theta[1] == pytest.approx(1.0)


def test_triangle_flows():
    g = PowerGrid.build(3, [(0, 1, 1.0, 9.0), (0, 2, 1.0, 9.0), (2, 1, 1.0, 9.0)], [(0, 1.0, 0.0, 1.0)], {1: 1.0})
    sol = solve_dc_flow(g)
    np.testing.assert_allclose(sol.flow, [2 / 3, 1 / 3, 1 / 3], atol=1e-9)


def test_ieee30_conservation(ieee30):
    g = ieee30.copy()
    sol = settle(g)
    total = g.demand.sum()
    assert np.abs(_residual(g, sol.flow)).max() < 1e-6 * total
    # angle equation on every live line
    x = g.reactance / g.base_mva
    np.testing.assert_allclose(g.theta[g.line_from] - g.theta[g.line_to], x * sol.flow, atol=1e-9)


def test_islands_examples():
    g = PowerGrid.build(3, [(0, 1, 1.0, 1.0), (1, 2, 1.0, 1.0)], [(0, 1.0, 0.0, 2.0)], {2: 1.0})
    assert [sorted(i) for i in find_islands(g)] == [[0, 1, 2]]
    g.alive[:] = False
    assert sorted(sorted(i) for i in find_islands(g)) == [[0], [1], [2]]


def test_islands_match_bfs():
    rng = np.random.default_rng(0)
    pairs = list(itertools.combinations(range(6), 2))
    lines = [(i, j, 1.0, 1.0) for i, j in pairs]
    g = PowerGrid.build(6, lines, [(0, 1.0, 0.0, 2.0)], {5: 1.0})
    for _ in range(200):
        g.alive = rng.random(len(lines)) < 0.3
        live = [p for p, a in zip(pairs, g.alive) if a]
        assert sorted(sorted(int(b) for b in i) for i in find_islands(g)) == bfs_components(6, live)


def test_balance_examples():
    g = PowerGrid.build(2, [(0, 1, 1.0, 9.0)], [(0, 0.0, 0.0, 10.0)], {1: 4.0})
    balance_island(g, [0, 1])
    assert g.gen_p[0] == pytest.approx(4.0)

    g = PowerGrid.build(3, [(0, 1, 1.0, 9.0), (0, 2, 1.0, 9.0)], [(0, 10.0, 0.0, 10.0)], {1: 6.0, 2: 6.0})
    balance_island(g, [0, 1, 2])
    np.testing.assert_allclose(g.demand[[1, 2]], [5.0, 5.0])
    assert g.gen_p[0] == pytest.approx(10.0)

    g = PowerGrid.build(3, [(0, 1, 1.0, 9.0)], [(0, 0.0, 0.0, 10.0)], {2: 5.0})
    balance(g)
    assert g.demand[2] == 0.0


def test_balance_is_headroom_proportional():
    g = PowerGrid.build(3, [(0, 1, 1.0, 9.0), (1, 2, 1.0, 9.0)],
                        [(0, 2.0, 0.0, 10.0), (2, 2.0, 0.0, 4.0)], {1: 7.0})
    balance(g)
    # extra 3 MW split 8:2 by headroom
    np.testing.assert_allclose(g.gen_p, [2.0 + 2.4, 2.0 + 0.6])


def test_parallel_lines_fail_together():
    g = PowerGrid.build(2, [(0, 1, 1.0, 0.6), (0, 1, 1.0, 0.6)], [(0, 1.0, 0.0, 5.0)], {1: 1.0})
    settle(g)
    g.ma_flow = g.flow.copy()
    out = run_cascade(apply_demand_change(g, [1], 0.25), alpha=1.0)
    np.testing.assert_allclose(out.rounds[0].flow, [0.625, 0.625])
    assert sorted(out.failed_lines) == [0, 1]
    assert out.failed_nodes == {1}
    assert out.rounds[0].removed_lines == [0, 1]
    assert out.final_yield == 0.0


def test_stable_base_has_one_round():
    out = run_cascade(two_bus(), alpha=0.5)
    assert out.failed_lines == [] and out.failed_nodes == set() and out.n_rounds == 1
    assert out.final_yield == 1.0


def test_four_bus_two_round_trace(four_bus):
    out = run_cascade(apply_demand_change(four_bus, [3], 0.25), alpha=1.0)
    r1, r2, r3 = out.rounds
    np.testing.assert_allclose(r1.flow, [5 / 6, 5 / 12, 5 / 12, 1.25], atol=1e-12)
    assert r1.removed_lines == [0] and r1.failed_buses == []
    np.testing.assert_allclose(r2.flow, [0.0, 1.25, 1.25, 1.25], atol=1e-12)
    assert r2.removed_lines == [2] and r2.failed_buses == [3]
    assert r3.removed_lines == []
    assert out.failed_lines == [0, 2]
    assert out.failed_nodes == {3}


def test_moving_average_delays_trip(four_bus):
    # with alpha=0.5 line A sees (2/3 + 5/6)/2 = 0.75 < 0.8 and nothing trips
    out = run_cascade(apply_demand_change(four_bus, [3], 0.25), alpha=0.5)
    assert out.failed_lines == []


def test_alpha_limits():
    g = two_bus(demand=1.0, cap=5.0)
    g.ma_flow[:] = 0.3
    one = run_cascade(g, alpha=1.0)
    np.testing.assert_allclose(one.grid.ma_flow, one.grid.flow)
    tiny = run_cascade(g, alpha=1e-9)
    np.testing.assert_allclose(tiny.grid.ma_flow, [0.3], atol=1e-8)
    with pytest.raises(ValueError):
        run_cascade(g, alpha=0.0)


def test_demand_change_examples():
    g = PowerGrid.build(3, [(0, 1, 1.0, 9.0), (0, 2, 1.0, 9.0)], [(0, 10.0, 0.0, 20.0)], {1: 8.0, 2: 2.0})
    same = apply_demand_change(g, [], 0.25)
    np.testing.assert_array_equal(same.demand, g.demand)
    up = apply_demand_change(g, [1], 0.25)
    assert up.demand[1] == 10.0 and up.base_demand[1] == 8.0
    both = apply_demand_change(g, [1, 2], 0.25)
    assert both.demand.sum() - g.demand.sum() == pytest.approx(0.25 * 10.0)
    assert apply_demand_change(up, [1], 0.25).demand[1] == 10.0
    with pytest.raises(ValueError):
        apply_demand_change(g, [0], 0.25)
    with pytest.raises(ValueError):
        apply_demand_change(g, [7], 0.25)


def test_orientation_antisymmetry(ieee30):
    g = ieee30.copy()
    base = solve_dc_flow(g, balance(g)).flow
    flipped = g.copy()
    flipped.line_from, flipped.line_to = g.line_to.copy(), g.line_from.copy()
    np.testing.assert_allclose(solve_dc_flow(flipped).flow, -base, atol=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(0, 29), min_size=1, max_size=12, unique=True), st.floats(1.0, 1.6))
def test_cascade_invariants(ieee30, attacked, factor):
    g = set_line_capacities(ieee30, factor)
    demand = [b for b in attacked if g.is_demand[b]]
    out = run_cascade(apply_demand_change(g, demand, 0.25), alpha=0.5)
    assert out.stable and out.rounds[-1].removed_lines == []
    live = g.n_lines
    for r in out.rounds[:-1]:
        assert r.removed_lines
        live -= len(r.removed_lines)
    assert len(set(out.failed_lines)) == len(out.failed_lines)
    assert live == int(out.grid.alive.sum())
    assert 0.0 <= out.final_yield <= 1.0
    # every island conserves power after the last solve
    final = out.grid
    scale = max(1.0, final.demand.sum())
    assert np.abs(_residual(final, final.flow)).max() <= 1e-6 * scale


def test_trace_records(four_bus):
    out = run_cascade(apply_demand_change(four_bus, [3], 0.25), alpha=1.0)
    recs = trace_records(out)
    assert [r["removed_lines"] for r in recs] == [[0], [2], []]
    assert recs[1]["failed_buses"] == [3]
