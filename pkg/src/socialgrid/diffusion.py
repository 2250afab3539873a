"""Independent Cascade diffusion and targeted influence maximization.

Influence is computed on live-edge realizations: each edge ``(u, v)`` is
kept independently with probability ``p_uv`` and the influenced set is
everything reachable from the seeds. Estimates share one batch of
realizations (common random numbers), so marginal gains of different
candidates are compared on the same samples.
"""

import heapq
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ._rng import check_random_state, trial_streams

DEFAULT_TRIALS = 2000
DEFAULT_COVERAGE = 0.9


@dataclass
class InfluenceEstimate:
    expected: float
    trials: int
    activation: dict = field(default_factory=dict)
    stderr: float = 0.0


def _check_seeds(social, seeds):
    seeds = [int(s) for s in seeds]
    if len(set(seeds)) != len(seeds):
        raise ValueError("seed set contains duplicates")
    for s in seeds:
        if not 0 <= s < social.n_nodes:
            raise ValueError(f"seed {s} is not a node of the graph")
    return seeds


def _require_weights(social):
    if not social.has_weights:
        raise ValueError("social graph has unassigned edge weights")


def sample_live_edges(social, rng):
    """Boolean live mask over the edges for one realization."""
    return check_random_state(rng).random(social.n_edges) < social.prob


def reachable(social, live, sources):
    """Nodes reachable from ``sources`` over the ``live`` edges."""
    order = np.argsort(social.src[live], kind="stable")
    src, dst = social.src[live][order], social.dst[live][order]
    starts = np.searchsorted(src, np.arange(social.n_nodes + 1))
    seen = np.zeros(social.n_nodes, dtype=bool)
    stack = list(sources)
    seen[stack] = True
    while stack:
        u = stack.pop()
        for v in dst[starts[u]:starts[u + 1]]:
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    return seen


def simulate_ic(social, seeds, rng=None):
    """One IC realization: the set of users influenced by ``seeds``."""
    _require_weights(social)
    seeds = _check_seeds(social, seeds)
    if not seeds:
        return set()
    live = sample_live_edges(social, rng)
    return set(np.flatnonzero(reachable(social, live, seeds)).tolist())


class LiveEdgeSample:
    """A batch of live-edge realizations with cached per-node reach sets.

    Realization ``r`` is drawn from the ``r``-th private trial stream, so
    it equals what :func:`simulate_ic` would draw from that stream.
    ``reach(v)`` is a ``(trials, n_nodes)`` boolean array.
    """

    def __init__(self, social, trials=DEFAULT_TRIALS, rng=None):
        _require_weights(social)
        if trials < 1:
            raise ValueError("trials must be at least 1")
        self.social = social
        self.trials = int(trials)
        streams = trial_streams(rng, self.trials)
        self.live = np.array([sample_live_edges(social, s) for s in streams], dtype=bool)
        self.live = self.live.reshape(self.trials, social.n_edges)
        # edges sorted by tail so each realization is a CSR adjacency
        order = np.argsort(social.src, kind="stable")
        self._dst = social.dst[order]
        self._indptr = np.searchsorted(social.src[order], np.arange(social.n_nodes + 1))
        self._live_sorted = np.ascontiguousarray(self.live[:, order])
        self._cache = {}

    @property
    def n_nodes(self):
        return self.social.n_nodes

    def reach(self, v):
        v = int(v)
        packed = self._cache.get(v)
        if packed is None:
            hit = _reach_from(self._indptr, self._dst, self._live_sorted, v, self.n_nodes)
            packed = np.packbits(hit, axis=1)
            self._cache[v] = packed
        return np.unpackbits(packed, axis=1, count=self.n_nodes).astype(bool)

    def coverage(self, seeds):
        """Per-realization influenced mask of ``seeds``."""
        covered = np.zeros((self.trials, self.n_nodes), dtype=bool)
        for s in seeds:
            covered |= self.reach(s)
        return covered


@njit(cache=True)
def _reach_from(indptr, dst, live, v, n):
    trials = live.shape[0]
    out = np.zeros((trials, n), dtype=np.bool_)
    stack = np.empty(n, dtype=np.int64)
    for r in range(trials):
        seen = out[r]
        seen[v] = True
        stack[0] = v
        top = 1
        while top > 0:
            top -= 1
            u = stack[top]
            for e in range(indptr[u], indptr[u + 1]):
                w = dst[e]
                if live[r, e] and not seen[w]:
                    seen[w] = True
                    stack[top] = w
                    top += 1
    return out


def _target_weights(n, targets, weights=None):
    w = np.zeros(n)
    targets = [int(t) for t in targets]
    if weights is None:
        w[targets] = 1.0
    else:
        for t in targets:
            w[t] = float(weights[t])
    return w


def estimate_influence(social, seeds, targets=None, trials=DEFAULT_TRIALS, rng=None, sample=None):
    """Monte-Carlo estimate of the expected number of influenced targets.

    ``targets=None`` counts every user, i.e. estimates I(S).
    """
    seeds = _check_seeds(social, seeds)
    targets = range(social.n_nodes) if targets is None else sorted({int(t) for t in targets})
    targets = list(targets)
    if sample is None:
        if not seeds:
            return InfluenceEstimate(0.0, int(trials), {t: 0.0 for t in targets})
        sample = LiveEdgeSample(social, trials, rng)
    covered = sample.coverage(seeds)[:, targets]
    counts = covered.sum(axis=1)
    stderr = counts.std(ddof=1) / np.sqrt(sample.trials) if sample.trials > 1 else 0.0
    probs = covered.mean(axis=0)
    return InfluenceEstimate(float(counts.mean()), sample.trials,
                             {t: float(p) for t, p in zip(targets, probs)}, float(stderr))


def greedy_targeted_im(social, targets, k, coverage_goal=DEFAULT_COVERAGE, trials=DEFAULT_TRIALS,
                       rng=None, *, weights=None, initial=(), candidates=None, sample=None,
                       return_gains=False):
    """Lazy-greedy seed selection for influence restricted to ``targets``.

    Seeds are added one at a time by largest estimated marginal gain in
    (optionally ``weights``-weighted) influenced targets, ties going to the
    smaller id. Selection stops after ``k`` new seeds, once the expected
    covered weight reaches ``coverage_goal`` of the total target weight, or
    when no candidate adds anything. ``initial`` seeds count as already
    chosen but not against ``k``; only the new seeds are returned.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    if not 0 < coverage_goal <= 1:
        raise ValueError("coverage_goal must lie in (0, 1]")
    targets = sorted({int(t) for t in targets})
    initial = _check_seeds(social, initial)
    chosen, gains = [], []
    if not targets or k == 0:
        return (chosen, gains) if return_gains else chosen
    if sample is None:
        sample = LiveEdgeSample(social, trials, rng)
    w = _target_weights(social.n_nodes, targets, weights)
    goal = coverage_goal * w.sum()
    covered = sample.coverage(initial)
    value = float((covered @ w).mean())
    pool = range(social.n_nodes) if candidates is None else candidates
    taken = set(initial)
    pool = sorted({int(c) for c in pool} - taken)

    def gain(v):
        return float(((sample.reach(v) & ~covered) @ w).mean())

    heap = [(-gain(v), v, 0) for v in pool]
    heapq.heapify(heap)
    rnd = 0
    while heap and len(chosen) < k and value < goal - 1e-12:
        neg, v, stamp = heapq.heappop(heap)
        if stamp != rnd:
            heapq.heappush(heap, (-gain(v), v, rnd))
            continue
        if -neg <= 1e-12:
            break
        chosen.append(v)
        gains.append(-neg)
        covered |= sample.reach(v)
        value = float((covered @ w).mean())
        rnd += 1
    return (chosen, gains) if return_gains else chosen
