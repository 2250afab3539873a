"""Seed-selection strategies and the end-to-end attack evaluator.

A seed set is a list of social users. Influenced users that are coupled
to demand buses inflate those buses' demand, and the grid then cascades.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._rng import check_random_state, named_stream, trial_streams
from .diffusion import DEFAULT_COVERAGE, DEFAULT_TRIALS, LiveEdgeSample, greedy_targeted_im, simulate_ic
from .milp.formulations import build_cic_milp, build_spac_milp, cic_attack_set, spac_selection
from .milp.solve import solve_lp, solve_milp
from .model import Scenario, failed_nodes
from .powerflow import apply_demand_change, run_cascade

logger = logging.getLogger(__name__)

STRATEGIES = ("random", "gsa", "spa-c", "spa-s")
EXACT_CIC_LIMIT = 60      # buses; larger grids use the relaxation heuristic unless exact=True
NODE_BUDGET = 5000


class FallbackWarning(UserWarning):
    """A strategy had nothing to work with and fell back to a simpler one."""


@dataclass
class CascadeImpact:
    """What it takes to fail ``bus`` and what else fails with it.

    ``pload`` are the demand buses to inflate, ``nodes`` the demand buses
    that fail when they are inflated, and ``seeds`` the extra users needed
    to influence the users coupled to ``pload``.
    """

    bus: int
    pload: list = field(default_factory=list)
    nodes: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    reachable: bool = False
    status: str = "unreachable"


@dataclass
class AttackOutcome:
    seeds: list
    trials: int
    mean_influenced: float
    mean_failed: float
    mean_failed_fraction: float
    stderr_failed_fraction: float
    mean_yield: float
    traces: list = field(default_factory=list, repr=False)


def _check_scenario(scenario):
    if not isinstance(scenario, Scenario):
        raise TypeError(f"expected a Scenario, got {type(scenario).__name__}")
    return scenario


def _check_budget(k):
    if int(k) != k or k < 0:
        raise ValueError("k must be a non-negative integer")
    return int(k)


def _delta_map(scenario):
    return {int(b): scenario.delta_for(b) for b in scenario.grid.demand_buses}


def _sample(scenario, trials, rng, sample):
    if sample is not None:
        return sample
    return LiveEdgeSample(scenario.social, trials, rng)


# ----------------------------------------------------------------- baselines

def random_attack(scenario, k, rng=None, trials=DEFAULT_TRIALS, sample=None):
    """Target the users of ``k`` random demand buses with a greedy seed set."""
    _check_scenario(scenario)
    k = _check_budget(k)
    rng = check_random_state(rng)
    demand = scenario.grid.demand_buses
    picked = rng.choice(demand, size=min(k, demand.size), replace=False) if k else []
    targets = scenario.coupling.users_of(picked)
    sample = _sample(scenario, trials, rng, sample)
    return greedy_targeted_im(scenario.social, targets, k, coverage_goal=1.0, sample=sample,
                              candidates=scenario.candidate_users())


def gsa(scenario, k, rng=None, trials=DEFAULT_TRIALS, sample=None):
    """Greedy influence over every coupled user, blind to the grid."""
    _check_scenario(scenario)
    k = _check_budget(k)
    sample = _sample(scenario, trials, rng, sample)
    return greedy_targeted_im(scenario.social, scenario.coupling.users, k, coverage_goal=1.0,
                              sample=sample, candidates=scenario.candidate_users())


# ---------------------------------------------------------- impact calculator

def _solve_cic(grid, bus, delta, exact, node_budget, method):
    lp = build_cic_milp(grid, bus, delta)
    if exact:
        sol = solve_milp(lp, node_budget=node_budget, method=method)
        if not sol.ok:
            return None, sol.status
        return cic_attack_set(sol), "optimal"
    return _cic_heuristic(grid, bus, delta, lp)


def _cic_heuristic(grid, bus, delta, lp, max_attack=10, alpha=1.0):
    """Round the LP relaxation and repair by simulation.

    Buses are added in decreasing relaxed ``z`` until one simulated round
    disconnects ``bus``; redundant buses are then pruned.
    """
    relax = solve_lp(lp.relaxed())
    if not relax.ok:
        return None, "infeasible"
    vals = relax.values()
    order = sorted((b for b in (int(n[2:-1]) for n in vals if n.startswith("z["))),
                   key=lambda b: (-vals[f"z[{b}]"], b))
    order = [b for b in order if vals[f"z[{b}]"] > 1e-6][:max_attack]

    def fails(attack):
        out = run_cascade(apply_demand_change(grid, attack, delta), alpha=alpha)
        return bus in out.failed_nodes

    chosen = []
    for b in order:
        chosen.append(b)
        if fails(chosen):
            break
    else:
        return None, "heuristic-miss"
    for b in list(reversed(chosen)):
        rest = [c for c in chosen if c != b]
        if rest and fails(rest):
            chosen = rest
    return sorted(chosen), "heuristic"


def cic(scenario, current_seeds=(), *, grid=None, sample=None, trials=DEFAULT_TRIALS, rng=None,
        coverage_goal=DEFAULT_COVERAGE, exact=None, node_budget=NODE_BUDGET, method="highs"):
    """Cascading impact of failing each live demand bus.

    ``grid`` defaults to the scenario grid; pass a residual grid to
    evaluate a partially failed state. Buses that host a generator cannot
    be disconnected and are reported unreachable.
    """
    _check_scenario(scenario)
    grid = scenario.grid if grid is None else grid
    exact = grid.n_bus <= EXACT_CIC_LIMIT if exact is None else exact
    delta = _delta_map(scenario)
    current = [int(s) for s in current_seeds]
    sample = _sample(scenario, trials, rng, sample)
    dead = failed_nodes(grid)
    has_gen = grid.has_generator()
    candidates = scenario.candidate_users()
    impacts = []
    for bus in grid.demand_buses.tolist():
        if bus in dead or has_gen[bus]:
            impacts.append(CascadeImpact(bus))
            continue
        pload, status = _solve_cic(grid, bus, delta, exact, node_budget, method)
        if pload is None:
            impacts.append(CascadeImpact(bus, status=status))
            continue
        out = run_cascade(apply_demand_change(grid, pload, delta), alpha=scenario.alpha)
        nodes = sorted(out.failed_nodes - dead)
        targets = scenario.coupling.users_of(pload)
        seeds = greedy_targeted_im(scenario.social, targets, len(candidates), coverage_goal=coverage_goal,
                                   sample=sample, initial=current, candidates=candidates)
        impacts.append(CascadeImpact(bus, pload=pload, nodes=nodes, seeds=sorted(seeds), reachable=True,
                                     status=status))
    return impacts


# ----------------------------------------------------------------- SPA

def spa_c(scenario, k, rng=None, trials=DEFAULT_TRIALS, sample=None, return_info=False, **cic_kwargs):
    """Choose certificates jointly with the seed-cover program.

    Returns the union of the seed sets of the certificates the program
    selects. If no bus can be failed, falls back to :func:`gsa`.
    """
    _check_scenario(scenario)
    k = _check_budget(k)
    sample = _sample(scenario, trials, rng, sample)
    if k == 0:
        return ([], {"fallback": False}) if return_info else []
    impacts = [ci for ci in cic(scenario, (), sample=sample, **cic_kwargs) if ci.reachable and ci.nodes]
    info = {"fallback": False, "impacts": impacts, "selected": [], "predicted": 0}
    seeds = []
    if impacts:
        seed_sets = [ci.seeds for ci in impacts]
        failure_sets = [ci.nodes for ci in impacts]
        sol = solve_milp(build_spac_milp(seed_sets, failure_sets, k), method="highs")
        chosen = spac_selection(sol, seed_sets, failure_sets) if sol.ok else []
        seeds = sorted({s for l in chosen for s in seed_sets[l]})
        info.update(selected=[impacts[l].bus for l in chosen], predicted=sol.objective if sol.ok else 0)
    if not seeds:
        # nothing reachable within budget: spend it on plain influence instead
        warnings.warn("no demand bus can be failed within the budget; falling back to greedy social attack",
                      FallbackWarning)
        info["fallback"] = True
        seeds = gsa(scenario, k, sample=sample)
    return (seeds, info) if return_info else seeds


def spa_s(scenario, k, rng=None, trials=DEFAULT_TRIALS, sample=None, return_info=False, **cic_kwargs):
    """Pick certificates one at a time on the residual grid.

    Each step takes the certificate failing the most buses that fits the
    remaining budget (ties: fewer seeds, then smaller bus), applies its
    demand change and cascade, and recomputes impacts. Leftover budget
    goes to seeds with the largest expected influenced live demand.
    """
    _check_scenario(scenario)
    k = _check_budget(k)
    sample = _sample(scenario, trials, rng, sample)
    delta = _delta_map(scenario)
    residual = scenario.grid.copy()
    seeds, steps = [], []
    while len(seeds) < k:
        impacts = cic(scenario, seeds, grid=residual, sample=sample, **cic_kwargs)
        usable = [ci for ci in impacts if ci.reachable and ci.nodes and len(ci.seeds) <= k - len(seeds)]
        if not usable:
            break
        best = min(usable, key=lambda ci: (-len(ci.nodes), len(ci.seeds), ci.bus))
        seeds.extend(s for s in best.seeds if s not in seeds)
        residual = run_cascade(apply_demand_change(residual, best.pload, delta), alpha=scenario.alpha).grid
        steps.append(best)
    n_engineered = len(seeds)
    if len(seeds) < k:
        seeds.extend(_yield_fallback(scenario, residual, seeds, k - len(seeds), sample))
    info = {"steps": steps, "engineered_seeds": n_engineered, "residual": residual}
    return (seeds, info) if return_info else seeds


def _yield_fallback(scenario, residual, seeds, budget, sample):
    """Seeds maximizing expected influenced demand (MW) on live coupled buses."""
    dead = failed_nodes(residual)
    weights = np.zeros(scenario.social.n_nodes)
    for bus, user in scenario.coupling.pairs():
        if bus not in dead and not residual.attacked[bus]:
            weights[user] = residual.demand[bus]
    targets = np.flatnonzero(weights > 0).tolist()
    if not targets:
        return []
    return greedy_targeted_im(scenario.social, targets, budget, coverage_goal=1.0, weights=weights,
                              sample=sample, initial=seeds, candidates=scenario.candidate_users())


def select_seeds(strategy, scenario, k, rng=None, trials=DEFAULT_TRIALS, **kwargs):
    """Run a strategy by name: ``random``, ``gsa``, ``spa-c`` or ``spa-s``."""
    funcs = {"random": random_attack, "gsa": gsa, "spa-c": spa_c, "spa-s": spa_s}
    if strategy not in funcs:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {', '.join(STRATEGIES)}")
    return funcs[strategy](scenario, k, rng=rng, trials=trials, **kwargs)


# ----------------------------------------------------------------- evaluation

def evaluate_attack(scenario, seeds, trials=100, rng=None):
    """Monte-Carlo damage of a seed set.

    Each trial draws one diffusion from its own stream, inflates the
    demand of influenced coupled buses and runs the cascade. Trials whose
    inflated bus set repeats reuse the cascade result.
    """
    _check_scenario(scenario)
    if trials < 1:
        raise ValueError("trials must be at least 1")
    seeds = sorted({int(s) for s in seeds})
    grid = scenario.grid
    delta = _delta_map(scenario)
    n_demand = int(grid.is_demand.sum())
    already = failed_nodes(grid)
    cache = {}
    traces = []
    for stream in trial_streams(rng, trials):
        influenced = simulate_ic(scenario.social, seeds, stream) if seeds else set()
        buses = tuple(b for b in scenario.coupling.buses_of(influenced) if b not in already)
        if buses not in cache:
            if buses:
                out = run_cascade(apply_demand_change(grid, buses, delta), alpha=scenario.alpha)
                cache[buses] = (sorted(out.failed_nodes - already), out.final_yield, out.n_rounds)
            else:
                cache[buses] = ([], 1.0, 0)
        failed, yld, rounds = cache[buses]
        traces.append({"influenced": len(influenced), "attacked": list(buses), "failed": failed,
                       "failed_fraction": len(failed) / n_demand if n_demand else 0.0,
                       "yield": yld, "rounds": rounds})
    frac = np.array([t["failed_fraction"] for t in traces])
    return AttackOutcome(
        seeds=seeds, trials=trials,
        mean_influenced=float(np.mean([t["influenced"] for t in traces])),
        mean_failed=float(np.mean([len(t["failed"]) for t in traces])),
        mean_failed_fraction=float(frac.mean()),
        stderr_failed_fraction=float(frac.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0,
        mean_yield=float(np.mean([t["yield"] for t in traces])),
        traces=traces,
    )


# ----------------------------------------------------------------- estimators

class AttackStrategy(BaseEstimator):
    """Estimator wrapper: ``fit(scenario)`` selects ``seeds_``.

    ``score(scenario)`` is the mean failed fraction of demand buses over
    ``eval_trials`` diffusions.
    """

    def __init__(self, strategy="spa-s", k=5, trials=DEFAULT_TRIALS, eval_trials=100, random_state=0):
        self.strategy = strategy
        self.k = k
        self.trials = trials
        self.eval_trials = eval_trials
        self.random_state = random_state

    def fit(self, scenario, y=None):
        _check_scenario(scenario)
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        self.seeds_ = select_seeds(self.strategy, scenario, self.k,
                                   rng=named_stream(self.random_state, "select"), trials=self.trials)
        return self

    def score(self, scenario, y=None):
        if not hasattr(self, "seeds_"):
            raise ValueError("call fit before score")
        out = evaluate_attack(scenario, self.seeds_, self.eval_trials,
                              rng=named_stream(self.random_state, "evaluate"))
        self.outcome_ = out
        return out.mean_failed_fraction
