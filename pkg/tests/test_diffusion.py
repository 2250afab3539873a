import itertools

import numpy as np
import pytest

from socialgrid.diffusion import LiveEdgeSample, estimate_influence, greedy_targeted_im, simulate_ic
from socialgrid.model import SocialGraph

from oracles import exact_activation, round_based_ic


def _graph(n, edges, probs):
    return SocialGraph.from_edges(n, edges, prob=probs)


def test_no_propagation_returns_seeds():
    g = _graph(4, [(0, 1), (1, 2), (2, 3)], [0.0, 0.0, 0.0])
    assert simulate_ic(g, [0, 2], 0) == {0, 2}


def test_certain_chain():
    g = _graph(3, [(0, 1), (1, 2)], [1.0, 1.0])
    assert simulate_ic(g, [0], 0) == {0, 1, 2}


def test_single_edge_frequency():
    g = _graph(2, [(0, 1)], [0.3])
    rng = np.random.default_rng(7)
    hits = sum(1 in simulate_ic(g, [0], rng) for _ in range(100_000))
    assert abs(hits / 100_000 - 0.3) < 0.01


def test_unknown_seed_and_duplicates():
    g = _graph(2, [(0, 1)], [0.5])
    with pytest.raises(ValueError):
        simulate_ic(g, [5], 0)
    with pytest.raises(ValueError):
        simulate_ic(g, [0, 0], 0)
    with pytest.raises(ValueError):
        simulate_ic(SocialGraph.from_edges(2, [(0, 1)]), [0], 0)


def test_estimate_examples():
    g = _graph(4, [(0, 1), (1, 2), (2, 3), (3, 0)], [1.0] * 4)
    assert estimate_influence(g, [], trials=10, rng=0).expected == 0.0
    assert estimate_influence(g, [2], trials=10, rng=0).expected == 4.0


def test_estimate_matches_enumeration_on_four_nodes():
    edges = [(0, 1), (0, 2), (1, 3), (2, 3), (3, 0), (1, 2)]
    probs = [0.4, 0.7, 0.5, 0.2, 0.9, 0.3]
    g = _graph(4, edges, probs)
    exact = exact_activation(4, edges, probs, [0]).sum()
    est = estimate_influence(g, [0], trials=20_000, rng=3)
    assert abs(est.expected - exact) <= 3 * est.stderr


def test_live_edge_matches_round_based_process():
    rng = np.random.default_rng(11)
    for _ in range(3):
        n = 6
        edges = [e for e in itertools.permutations(range(n), 2) if rng.random() < 0.3][:12]
        probs = rng.random(len(edges)).tolist()
        g = _graph(n, edges, probs)
        trials = 20_000
        live = np.zeros(n)
        rounds = np.zeros(n)
        for _ in range(trials):
            live[list(simulate_ic(g, [0], rng))] += 1
            rounds[list(round_based_ic(n, edges, probs, [0], rng))] += 1
        p_live, p_rounds = live / trials, rounds / trials
        se = np.sqrt((p_live * (1 - p_live) + p_rounds * (1 - p_rounds)) / trials)
        assert np.all(np.abs(p_live - p_rounds) <= 3 * se + 1e-12)


def test_sample_equals_simulate_with_same_streams():
    from socialgrid._rng import trial_streams
    g = _graph(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)], [0.5] * 5)
    sample = LiveEdgeSample(g, 50, rng=9)
    for r, stream in enumerate(trial_streams(9, 50)):
        assert set(np.flatnonzero(sample.reach(1)[r]).tolist()) == simulate_ic(g, [1], stream)


def test_influence_monotone_under_common_random_numbers():
    rng = np.random.default_rng(2)
    n = 12
    edges = [(int(a), int(b)) for a, b in rng.integers(0, n, size=(30, 2)) if a != b]
    g = _graph(n, edges, rng.random(len(edges)).tolist())
    sample = LiveEdgeSample(g, 500, rng=4)
    nested = [[], [3], [3, 7], [3, 7, 0], [3, 7, 0, 11]]
    values = [estimate_influence(g, s, sample=sample).expected for s in nested]
    assert all(a <= b for a, b in zip(values, values[1:]))


def test_greedy_star_picks_center():
    edges = [(0, i) for i in range(1, 11)]
    g = _graph(11, edges, [1.0] * 10)
    assert greedy_targeted_im(g, range(1, 11), 1, trials=20, rng=0) == [0]


def test_greedy_without_propagation_picks_targets():
    g = _graph(5, [(0, 1), (2, 3)], [0.0, 0.0])
    assert greedy_targeted_im(g, [1, 3], 2, coverage_goal=1.0, trials=20, rng=0) == [1, 3]


def test_greedy_empty_targets():
    g = _graph(3, [(0, 1)], [0.5])
    assert greedy_targeted_im(g, [], 2, trials=10, rng=0) == []


def test_greedy_near_best_subset():
    rng = np.random.default_rng(5)
    n = 6
    edges = [e for e in itertools.permutations(range(n), 2) if rng.random() < 0.35]
    g = _graph(n, edges, rng.random(len(edges)).tolist())
    sample = LiveEdgeSample(g, 3000, rng=1)
    k = 2
    chosen = greedy_targeted_im(g, range(n), k, coverage_goal=1.0, sample=sample)
    got = estimate_influence(g, chosen, sample=sample).expected
    best = max(estimate_influence(g, list(s), sample=sample).expected for s in itertools.combinations(range(n), k))
    assert got >= (1 - 1 / np.e - 0.05) * best


def test_greedy_gains_non_increasing():
    rng = np.random.default_rng(8)
    n = 30
    edges = [(int(a), int(b)) for a, b in rng.integers(0, n, size=(90, 2)) if a != b]
    g = _graph(n, edges, (0.3 * rng.random(len(edges))).tolist())
    seeds, gains = greedy_targeted_im(g, range(n), 8, coverage_goal=1.0, trials=400, rng=1, return_gains=True)
    assert len(seeds) == len(set(seeds))
    assert all(a >= b - 1e-12 for a, b in zip(gains, gains[1:]))


def test_greedy_stops_at_coverage_goal():
    g = _graph(4, [], [])
    seeds = greedy_targeted_im(g, [0, 1, 2, 3], 4, coverage_goal=0.5, trials=10, rng=0)
    assert seeds == [0, 1]
