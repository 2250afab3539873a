"""Builders for the attack-planning, seed-cover and load-shedding programs."""

import numpy as np

from ..model import failed_nodes
from ..powerflow import find_islands
from .program import LinearProgram

# a line counts as overloaded in the program only if |f| >= u + OVERLOAD_MARGIN * max(1, u);
# the margin is larger than the simulator's trip tolerance, so predicted trips are real trips
OVERLOAD_MARGIN = 1e-5
# shedding keeps |f| <= u * (1 - CLS_MARGIN) so solver round-off cannot trip a line
CLS_MARGIN = 1e-7


def _island_index(grid):
    islands = find_islands(grid)
    label = np.empty(grid.n_bus, dtype=np.int64)
    for k, isl in enumerate(islands):
        label[isl] = k
    return islands, label


def _add_dc_flow(lp, grid, islands):
    """Flow and angle variables plus the angle-difference rows on live lines."""
    live = np.flatnonzero(grid.alive)
    for b in range(grid.n_bus):
        lp.add_variable(f"th[{b}]", -np.inf, np.inf)
    for isl in islands:
        lp.add_constraint({f"th[{isl[0]}]": 1.0}, "==", 0.0, name=f"ref[{isl[0]}]")
    for l in live:
        lp.add_variable(f"f[{l}]", -np.inf, np.inf)
    for l in live:
        i, j = int(grid.line_from[l]), int(grid.line_to[l])
        lp.add_constraint({f"th[{i}]": 1.0, f"th[{j}]": -1.0, f"f[{l}]": -grid.reactance[l] / grid.base_mva},
                          "==", 0.0, name=f"angle[{l}]")
    return live


def _net_outflow(grid, live):
    """Per bus, the ``{flow var: +-1}`` terms of outgoing minus incoming flow."""
    terms = [dict() for _ in range(grid.n_bus)]
    for l in live:
        i, j = int(grid.line_from[l]), int(grid.line_to[l])
        terms[i][f"f[{l}]"] = terms[i].get(f"f[{l}]", 0.0) + 1.0
        terms[j][f"f[{l}]"] = terms[j].get(f"f[{l}]", 0.0) - 1.0
    return terms


def default_big_m(grid, delta):
    """A bound on |f| + u for every line under any attack.

    A DC line flow never exceeds the total injected power, which is at
    most the fully inflated total demand.
    """
    d = grid.demand[grid.is_demand]
    frac = np.array([delta.get(int(b), 0.0) for b in grid.demand_buses]) if isinstance(delta, dict) \
        else np.full(d.size, float(delta))
    top = float((d * (1.0 + frac)).sum())
    cap = float(grid.capacity[grid.alive & np.isfinite(grid.capacity)].max(initial=0.0))
    return top + cap * (1 + OVERLOAD_MARGIN) + 1.0


def build_cic_milp(grid, target, delta, big_m=None, generator_rule="headroom"):
    """Minimum set of demand buses whose inflation disconnects ``target``.

    One cascade step is modelled on the current grid: attacked demands
    rise by ``delta`` (scalar or per-bus mapping), generators absorb the
    extra load, the DC flow is recomputed, and any subset of lines whose
    new flow exceeds capacity may be cut. A moving-average trip rule
    converges to the same test while the flow stays put, so the program
    uses the new flow itself. ``t[target] = 1`` demands that the target
    ends in a generator-free component.

    ``generator_rule="headroom"`` splits an island's extra load across its
    generators in proportion to upward headroom, which is what the flow
    simulator does. ``"uniform"`` raises every generator of the island by
    the same amount.
    """
    target = int(target)
    if not (0 <= target < grid.n_bus) or not grid.is_demand[target]:
        raise ValueError(f"bus {target} is not a demand bus")
    has_gen = grid.has_generator()
    if has_gen[target]:
        raise ValueError(f"bus {target} hosts a generator and cannot be disconnected from one")
    if generator_rule not in ("headroom", "uniform"):
        raise ValueError("generator_rule must be 'headroom' or 'uniform'")
    if big_m is None:
        big_m = default_big_m(grid, delta)

    def frac(b):
        return float(delta.get(int(b), 0.0)) if isinstance(delta, dict) else float(delta)

    islands, label = _island_index(grid)
    powered = np.zeros(len(islands), dtype=bool)
    powered[label[grid.gen_bus]] = True
    dead = failed_nodes(grid)
    demand = np.where(powered[label], grid.demand, 0.0)

    lp = LinearProgram("min", name=f"cic[{target}]")
    attackable = [int(b) for b in grid.demand_buses
                  if b not in dead and not grid.attacked[b] and demand[b] > 0 and frac(b) > 0]
    for b in attackable:
        lp.add_binary(f"z[{b}]")
    lp.set_objective({f"z[{b}]": 1.0 for b in attackable})
    live = _add_dc_flow(lp, grid, islands)

    # generation response
    extra = {k: {} for k in range(len(islands))}
    for b in attackable:
        extra[label[b]][f"z[{b}]"] = demand[b] * frac(b)
    for g in range(grid.gen_bus.size):
        lp.add_variable(f"p[{g}]", grid.gen_pmin[g], grid.gen_pmax[g])
    for k in range(len(islands)):
        gens = np.flatnonzero(label[grid.gen_bus] == k)
        if gens.size == 0:
            continue
        if generator_rule == "uniform":
            lp.add_variable(f"dp[{k}]", 0.0, np.inf)
        room = np.maximum(grid.gen_pmax[gens] - grid.gen_p[gens], 0.0)
        for g in gens:
            row = {f"p[{g}]": 1.0}
            if generator_rule == "uniform":
                row[f"dp[{k}]"] = -1.0
            elif room.sum() > 0:
                share = room[gens == g][0] / room.sum()
                for var, mw in extra[k].items():
                    row[var] = row.get(var, 0.0) - share * mw
            lp.add_constraint(row, "==", float(grid.gen_p[g]), name=f"gen[{g}]")

    # bus balance: outflow - generation + inflation = -current demand
    out = _net_outflow(grid, live)
    gen_at = [[] for _ in range(grid.n_bus)]
    for g, b in enumerate(grid.gen_bus):
        gen_at[b].append(g)
    for b in range(grid.n_bus):
        row = dict(out[b])
        for g in gen_at[b]:
            row[f"p[{g}]"] = -1.0
        if f"z[{b}]" in lp:
            row[f"z[{b}]"] = demand[b] * frac(b)
        lp.add_constraint(row, "==", -float(demand[b]), name=f"bal[{b}]")

    # overload indicators; dead lines count as already cut
    for l in range(grid.n_lines):
        if not grid.alive[l]:
            lp.add_variable(f"y[{l}]", 1.0, 1.0, integer=True)
            continue
        lp.add_binary(f"y[{l}]")
        lp.add_binary(f"w[{l}]")
        u = float(grid.capacity[l])
        if not np.isfinite(u):
            lp.variables[lp.index(f"y[{l}]")].ub = 0.0
            continue
        need = u + OVERLOAD_MARGIN * max(1.0, u)
        lp.add_constraint({f"f[{l}]": 1.0, f"w[{l}]": big_m, f"y[{l}]": -need}, ">=", 0.0,
                          name=f"over+[{l}]")
        lp.add_constraint({f"f[{l}]": -1.0, f"w[{l}]": -big_m, f"y[{l}]": -need}, ">=", -big_m,
                          name=f"over-[{l}]")

    # connectivity: t[i] = 1 only if every incident line is cut or leads to a bus with t = 1
    plain = [b for b in range(grid.n_bus) if not has_gen[b]]
    for b in plain:
        lp.add_binary(f"t[{b}]")
    lp.variables[lp.index(f"t[{target}]")].lb = 1.0
    incident = [[] for _ in range(grid.n_bus)]
    for l in range(grid.n_lines):
        i, j = int(grid.line_from[l]), int(grid.line_to[l])
        incident[i].append((l, j))
        incident[j].append((l, i))
    for b in plain:
        row = {f"t[{b}]": 0.0}
        count = 0
        for l, other in incident[b]:
            count += 1
            if has_gen[other]:
                row[f"y[{l}]"] = row.get(f"y[{l}]", 0.0) + 1.0
            else:
                phi = lp.add_binary(f"phi[{l},{b}]")
                row[phi] = 1.0
                lp.add_constraint({phi: 1.0, f"t[{other}]": -1.0}, ">=", 0.0)
                lp.add_constraint({phi: 1.0, f"y[{l}]": -1.0}, ">=", 0.0)
                lp.add_constraint({phi: 1.0, f"t[{other}]": -1.0, f"y[{l}]": -1.0}, "<=", 0.0)
        m_conn = max(count, 1)
        # M (1 - t) >= sum (1 - phi) + sum (1 - y)   <=>   -M t + sum phi + sum y >= count - M
        row[f"t[{b}]"] = -float(m_conn)
        lp.add_constraint(row, ">=", float(count - m_conn), name=f"conn[{b}]")
    return lp


def cic_attack_set(solution):
    """Attacked buses in an optimal CIC solution."""
    return sorted(int(n[2:-1]) for n, v in solution.values().items() if n.startswith("z[") and v > 0.5)


def build_spac_milp(seed_sets, failure_sets, k):
    """Pick at most ``k`` seeds so that the most buses are covered.

    Bus ``j`` counts as failed (``y[j] = 1``) only through one selected
    certificate ``l`` with ``j`` in ``failure_sets[l]`` whose seed set
    ``seed_sets[l]`` is entirely chosen.
    """
    if len(seed_sets) != len(failure_sets):
        raise ValueError("seed_sets and failure_sets must have the same length")
    if k < 0:
        raise ValueError("k must be non-negative")
    seed_sets = [sorted({int(s) for s in ss}) for ss in seed_sets]
    failure_sets = [sorted({int(b) for b in fs}) for fs in failure_sets]
    lp = LinearProgram("max", name="spa-c")
    users = sorted({s for ss in seed_sets for s in ss})
    buses = sorted({b for fs in failure_sets for b in fs})
    for u in users:
        lp.add_binary(f"x[{u}]")
    for b in buses:
        lp.add_binary(f"y[{b}]")
    lp.set_objective({f"y[{b}]": 1.0 for b in buses})
    if users:
        lp.add_constraint({f"x[{u}]": 1.0 for u in users}, "<=", float(k), name="budget")
    for b in buses:
        owners = [l for l, fs in enumerate(failure_sets) if b in fs]
        for l in owners:
            lp.add_binary(f"psi[{l},{b}]")
        lp.add_constraint({f"psi[{l},{b}]": 1.0 for l in owners}, "==", 1.0, name=f"pick[{b}]")
        for l in owners:
            size = len(seed_sets[l])
            if size == 0:
                continue
            # M (2 - y - psi) >= |S_l| - sum x   with M = |S_l|
            row = {f"y[{b}]": -float(size), f"psi[{l},{b}]": -float(size)}
            for s in seed_sets[l]:
                row[f"x[{s}]"] = 1.0
            lp.add_constraint(row, ">=", -float(size), name=f"cert[{l},{b}]")
    return lp


def spac_selection(solution, seed_sets, failure_sets):
    """Indices of certificates that are selected and fully paid for."""
    vals = solution.values()
    chosen = set()
    for name, v in vals.items():
        if name.startswith("psi[") and v > 0.5:
            l, b = (int(s) for s in name[4:-1].split(","))
            if vals.get(f"y[{b}]", 0.0) > 0.5:
                chosen.add(l)
    return sorted(chosen)


def build_cls_lp(grid):
    """Least total load shedding that keeps every live line within capacity.

    Demands drop by ``tau`` and generators ramp down by ``beta`` (down to
    zero output at most); the DC flow of the new operating point must
    respect ``|f| <= u``. Buses in generator-free islands carry no load
    and are left out.
    """
    islands, label = _island_index(grid)
    powered = np.zeros(len(islands), dtype=bool)
    powered[label[grid.gen_bus]] = True
    lp = LinearProgram("min", name="cls")
    live = _add_dc_flow(lp, grid, islands)
    shed = [int(b) for b in grid.demand_buses if powered[label[b]]]
    for b in shed:
        lp.add_variable(f"tau[{b}]", 0.0, max(float(grid.demand[b]), 0.0))
    for g in range(grid.gen_bus.size):
        lp.add_variable(f"beta[{g}]", 0.0, max(float(grid.gen_p[g]), 0.0))
    lp.set_objective({f"tau[{b}]": 1.0 for b in shed})

    out = _net_outflow(grid, live)
    gen_at = [[] for _ in range(grid.n_bus)]
    for g, b in enumerate(grid.gen_bus):
        gen_at[b].append(g)
    for b in range(grid.n_bus):
        row = dict(out[b])
        rhs = 0.0
        for g in gen_at[b]:
            row[f"beta[{g}]"] = 1.0
            rhs += float(grid.gen_p[g])
        if f"tau[{b}]" in lp:
            row[f"tau[{b}]"] = -1.0
            rhs -= float(grid.demand[b])
        lp.add_constraint(row, "==", rhs, name=f"bal[{b}]")
    for l in live:
        u = float(grid.capacity[l])
        if np.isfinite(u):
            lp.variables[lp.index(f"f[{l}]")].lb = -u * (1 - CLS_MARGIN)
            lp.variables[lp.index(f"f[{l}]")].ub = u * (1 - CLS_MARGIN)
    return lp
