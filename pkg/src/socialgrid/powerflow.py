"""DC power flow, island balancing and the moving-average cascade."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .model import CascadeOutcome, CascadeRound, compute_yield, failed_nodes

logger = logging.getLogger(__name__)

# a line trips when |f~| > u * (1 + OVERLOAD_RTOL) + OVERLOAD_ATOL
OVERLOAD_RTOL = 1e-7
OVERLOAD_ATOL = 1e-9


class PowerFlowError(RuntimeError):
    pass


class CascadeDidNotConverge(RuntimeError):
    pass


@dataclass
class FlowSolution:
    flow: np.ndarray
    theta: np.ndarray
    islands: list


def find_islands(grid):
    """Connected components over live lines, each a sorted bus array."""
    labels = grid.component_labels()
    if labels.size == 0:
        return []
    order = np.argsort(labels, kind="stable")
    splits = np.flatnonzero(np.diff(labels[order])) + 1
    islands = np.split(order, splits)
    islands.sort(key=lambda isl: isl[0])
    return islands


def balance_island(grid, island):
    """Match supply and demand inside one island, mutating ``grid``.

    Surplus demand is covered by raising generators in proportion to their
    upward headroom; surplus generation is shed by lowering them in
    proportion to their downward room. If demand exceeds total capacity the
    demands are scaled down uniformly. A generator-free island loses all of
    its demand. Returns the resulting net injections of the island buses.
    """
    island = np.asarray(island)
    in_island = np.zeros(grid.n_bus, dtype=bool)
    in_island[island] = True
    gens = np.flatnonzero(in_island[grid.gen_bus])
    if gens.size == 0:
        grid.demand[island] = 0.0
        return grid.injections()[island]

    p = np.clip(grid.gen_p[gens], grid.gen_pmin[gens], grid.gen_pmax[gens])
    pmin, pmax = grid.gen_pmin[gens], grid.gen_pmax[gens]
    load = grid.demand[island].sum()
    if load >= pmax.sum():
        if load > 0:
            grid.demand[island] *= pmax.sum() / load
        p = pmax.copy()
    elif load <= pmin.sum():
        # below every minimum output: run the units part-loaded pro rata
        p = pmin * (load / pmin.sum()) if pmin.sum() > 0 else np.zeros_like(p)
    else:
        gap = load - p.sum()
        room = (pmax - p) if gap > 0 else (p - pmin)
        if gap != 0:
            p = p + np.sign(gap) * room * (abs(gap) / room.sum())
    grid.gen_p[gens] = p
    return grid.injections()[island]


def balance(grid):
    """Balance every island of ``grid`` in place and return the islands."""
    islands = find_islands(grid)
    for island in islands:
        balance_island(grid, island)
    return islands


def solve_dc_flow(grid, islands=None, tol=1e-6):
    """Solve the linearized power flow on a balanced grid.

    One reference angle per island is pinned to zero and the reduced
    weighted Laplacian is factorized densely. Flows follow from the angle
    differences, ``f = base_mva * (theta_i - theta_j) / x``.
    """
    if islands is None:
        islands = find_islands(grid)
    inj = grid.injections() / grid.base_mva
    theta = np.zeros(grid.n_bus)
    live = np.flatnonzero(grid.alive)
    fr, to = grid.line_from[live], grid.line_to[live]
    b = 1.0 / grid.reactance[live]
    local = np.full(grid.n_bus, -1, dtype=np.int64)

    for island in islands:
        scale = max(1.0, grid.demand[island].sum() / grid.base_mva)
        if abs(inj[island].sum()) > tol * scale:
            raise PowerFlowError(f"island starting at bus {island[0]} is not balanced "
                                 f"(net injection {inj[island].sum() * grid.base_mva:.6g} MW)")
        if island.size == 1:
            continue
        local[island] = np.arange(island.size)
        mask = local[fr] >= 0
        i, j, bij = local[fr[mask]], local[to[mask]], b[mask]
        lap = np.zeros((island.size, island.size))
        np.add.at(lap, (i, j), -bij)
        np.add.at(lap, (j, i), -bij)
        np.add.at(lap, (i, i), bij)
        np.add.at(lap, (j, j), bij)
        try:
            factor = cho_factor(lap[1:, 1:])
        except LinAlgError as exc:
            cond = np.linalg.cond(lap[1:, 1:])
            raise PowerFlowError(f"singular susceptance matrix (cond={cond:.3g})") from exc
        theta[island[1:]] = cho_solve(factor, inj[island[1:]])
        local[island] = -1

    flow = np.zeros(grid.n_lines)
    flow[live] = grid.base_mva * (theta[fr] - theta[to]) * b
    return FlowSolution(flow=flow, theta=theta, islands=islands)


def settle(grid):
    """Balance and solve ``grid`` in place, leaving flows and angles set."""
    islands = balance(grid)
    sol = solve_dc_flow(grid, islands)
    grid.flow, grid.theta = sol.flow, sol.theta
    return sol


def apply_demand_change(grid, attacked, delta):
    """Copy of ``grid`` with the ``attacked`` demand buses inflated.

    Each attacked bus gets ``d = d0 * (1 + delta)`` where ``d0`` is its
    demand when first attacked; re-attacking a bus is a no-op. ``delta``
    may be a scalar or a mapping from bus to fraction.
    """
    out = grid.copy()
    for bus in sorted({int(b) for b in attacked}):
        if not (0 <= bus < grid.n_bus) or not grid.is_demand[bus]:
            raise ValueError(f"bus {bus} is not a demand bus")
        frac = delta[bus] if isinstance(delta, dict) else delta
        if not frac > 0:
            raise ValueError("delta must be positive")
        if out.attacked[bus]:
            continue
        out.base_demand[bus] = out.demand[bus]
        out.demand[bus] = out.base_demand[bus] * (1.0 + frac)
        out.attacked[bus] = True
    return out


def overloaded(grid, ma_flow=None):
    """Boolean mask of live lines whose moving average exceeds capacity."""
    ma = grid.ma_flow if ma_flow is None else ma_flow
    limit = grid.capacity * (1.0 + OVERLOAD_RTOL) + OVERLOAD_ATOL
    return grid.alive & (np.abs(ma) > limit)


def run_cascade(grid, alpha=0.5, max_rounds=None, round_cap=None, in_place=False):
    """Run the cascade until a round removes no line.

    Each round balances every island, solves the flow, updates the moving
    average ``f~ = alpha * f + (1 - alpha) * f~`` on live lines and trips
    every line with ``|f~| > u``. ``max_rounds`` stops early (the outcome
    is then flagged ``stable=False``); ``round_cap`` (default ``10 * |E|``)
    guards against non-termination.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    g = grid if in_place else grid.copy()
    cap = round_cap if round_cap is not None else max(10 * g.n_lines, 1)
    start_demand = g.demand[g.is_demand].sum()
    s1, rounds = [], []
    already = failed_nodes(g)
    stable = False
    t = 0
    while True:
        if max_rounds is not None and t >= max_rounds:
            break
        if t >= cap:
            raise CascadeDidNotConverge(f"cascade still removing lines after {cap} rounds")
        t += 1
        sol = settle(g)
        solved = g.flow.copy()
        live = g.alive
        g.ma_flow[live] = alpha * g.flow[live] + (1.0 - alpha) * g.ma_flow[live]
        g.ma_flow[~live] = 0.0
        trip = overloaded(g)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.abs(g.ma_flow[live]) / g.capacity[live]
        max_ratio = float(np.nanmax(ratio)) if ratio.size else 0.0
        removed = np.flatnonzero(trip).tolist()
        g.alive[trip] = False
        g.flow[trip] = 0.0
        g.ma_flow[trip] = 0.0
        now = failed_nodes(g)
        new = sorted(now - already)
        already = now
        s1.extend(removed)
        rounds.append(CascadeRound(index=t, removed_lines=removed, failed_buses=new,
                                   n_islands=len(sol.islands), max_ratio=max_ratio,
                                   flow=solved))
        logger.debug("round %d: removed %s, failed %s", t, removed, new)
        if not removed:
            stable = True
            break
    final_yield = compute_yield(g, start_demand) if start_demand > 0 else 1.0
    return CascadeOutcome(failed_lines=s1, failed_nodes=already, rounds=rounds,
                          final_yield=final_yield, grid=g, stable=stable)


def trace_records(outcome):
    """One JSON-ready dict per cascade round."""
    return [
        {"round": r.index, "removed_lines": list(r.removed_lines),
         "failed_buses": list(r.failed_buses), "max_ratio": r.max_ratio}
        for r in outcome.rounds
    ]
