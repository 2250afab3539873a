import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from socialgrid.ingest import dumps_scenario, loads_scenario
from socialgrid.model import Coupling, PowerGrid, SocialGraph, compute_yield, failed_nodes

from conftest import two_bus
from oracles import bfs_failed


def test_failed_nodes_connected_and_cut():
    g = two_bus()
    assert failed_nodes(g) == set()
    g.alive[0] = False
    assert failed_nodes(g) == {1}


def test_failed_nodes_empty_grid():
    g = PowerGrid.build(0, [], [], {})
    assert failed_nodes(g) == set()


def _five_bus():
    lines = [(0, 1, 1.0, 5.0), (1, 2, 1.0, 5.0), (2, 3, 1.0, 5.0), (3, 4, 1.0, 5.0), (0, 4, 1.0, 5.0),
             (1, 3, 1.0, 5.0), (2, 4, 1.0, 5.0)]
    return PowerGrid.build(5, lines, [(0, 3.0, 0.0, 10.0)], {1: 1.0, 2: 0.5, 3: 1.0, 4: 0.5})


def test_failed_nodes_matches_bfs_on_every_alive_pattern():
    g = _five_bus()
    lines = list(zip(g.line_from.tolist(), g.line_to.tolist()))
    for pattern in itertools.product((False, True), repeat=g.n_lines):
        g.alive = np.array(pattern)
        expect = bfs_failed(5, lines, pattern, [0], g.demand_buses.tolist())
        assert failed_nodes(g) == expect


def test_failed_nodes_monotone_in_line_removal():
    g = _five_bus()
    for pattern in itertools.product((False, True), repeat=g.n_lines):
        g.alive = np.array(pattern)
        base = failed_nodes(g)
        for line in np.flatnonzero(g.alive):
            g.alive[line] = False
            assert failed_nodes(g) >= base
            g.alive[line] = True


def test_compute_yield_examples():
    g = PowerGrid.build(3, [(0, 1, 1.0, 1.0), (0, 2, 1.0, 1.0)], [(0, 210.0, 0.0, 500.0)], {1: 110.0, 2: 100.0})
    assert compute_yield(g, 300.0) == pytest.approx(0.7)
    assert compute_yield(g, 210.0) == 1.0
    g.alive[:] = False
    assert compute_yield(g, 210.0) == 0.0
    with pytest.raises(ValueError):
        compute_yield(g, 0.0)


def test_grid_validation():
    with pytest.raises(ValueError):
        PowerGrid.build(2, [(0, 1, -1.0, 1.0)], [(0, 1.0, 0.0, 2.0)], {1: 1.0})
    with pytest.raises(ValueError):
        PowerGrid.build(2, [(0, 2, 1.0, 1.0)], [(0, 1.0, 0.0, 2.0)], {1: 1.0})
    with pytest.raises(ValueError):
        PowerGrid.build(2, [(0, 1, 1.0, 1.0)], [(0, 1.0, 3.0, 2.0)], {1: 1.0})


def test_coupling_is_injective_and_round_trips():
    c = Coupling([(1, 7), (3, 2), (4, 0)])
    for bus, user in c.pairs():
        assert c.users_of([bus]) == [user]
        assert c.buses_of([user]) == [bus]
    with pytest.raises(ValueError):
        Coupling([(1, 7), (2, 7)])
    with pytest.raises(ValueError):
        Coupling([(1, 7), (1, 8)])


@settings(max_examples=30, deadline=None)
@given(st.permutations(list(range(12))), st.integers(1, 12))
def test_coupling_inverse_map(perm, n):
    c = Coupling([(b, perm[b]) for b in range(n)])
    for user in c.users:
        assert c.users_of(c.buses_of([user])) == [user]


def test_social_graph_edges():
    s = SocialGraph.from_edges(3, [(0, 1), (1, 2)], prob=[0.2, 0.4])
    assert s.n_edges == 2
    assert s.has_weights
    assert not SocialGraph.from_edges(3, [(0, 1)]).has_weights


def test_scenario_round_trip_is_bit_exact(ieee30_scenario):
    text = dumps_scenario(ieee30_scenario)
    back = loads_scenario(text)
    assert dumps_scenario(back) == text
    assert back.grid == ieee30_scenario.grid
    assert back.social == ieee30_scenario.social
    assert back.coupling == ieee30_scenario.coupling
    np.testing.assert_array_equal(back.social.prob, ieee30_scenario.social.prob)
