"""LP and mixed-binary solvers behind one ``MilpSolution`` contract.

``solve_lp`` uses HiGHS (through SciPy) by default and the in-house Bland
simplex on request. ``solve_milp`` runs its own best-bound branch and bound
with most-fractional branching, or hands the whole problem to HiGHS.
"""

import heapq
import itertools
import logging

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp
from scipy.sparse import vstack

from .program import MilpSolution
from .simplex import NumericalError, simplex

logger = logging.getLogger(__name__)

INT_TOL = 1e-6


def _split_rows(lp):
    a, rels, rhs = lp.matrix()
    rels = np.array(rels)
    le, ge, eq = rels == "<=", rels == ">=", rels == "=="
    a_ub = vstack([a[le], -a[ge]]).tocsr() if (le.any() or ge.any()) else None
    b_ub = np.concatenate([rhs[le], -rhs[ge]]) if a_ub is not None else None
    a_eq = a[eq] if eq.any() else None
    b_eq = rhs[eq] if eq.any() else None
    return a, rels, rhs, a_ub, b_ub, a_eq, b_eq


def _finish(lp, status, x, nodes=0):
    if status != "optimal" or x is None:
        return MilpSolution(status=status, names=lp.names, node_count=nodes)
    x = np.asarray(x, dtype=float)
    ints = lp.integrality
    x[ints] = np.round(x[ints]) + 0.0
    return MilpSolution(status="optimal", objective=lp.objective_value(x), x=x, names=lp.names,
                        node_count=nodes)


def _empty(lp):
    if any({"<=": 0 > c.rhs, ">=": 0 < c.rhs, "==": c.rhs != 0}[c.relation] for c in lp.constraints):
        return MilpSolution(status="infeasible", names=[])
    return MilpSolution(status="optimal", objective=0.0, x=np.zeros(0), names=[])


def solve_lp(lp, method="highs", lower=None, upper=None):
    """Solve the continuous relaxation of ``lp``.

    ``lower``/``upper`` override the variable bounds (used by branching).
    """
    if lp.n_variables == 0:
        return _empty(lp)
    sign = -1.0 if lp.sense == "max" else 1.0
    c = sign * lp.cost_vector()
    lb = lp.lower if lower is None else lower
    ub = lp.upper if upper is None else upper
    if np.any(lb > ub + 1e-12):
        return MilpSolution(status="infeasible", names=lp.names)
    if method == "simplex":
        a, rels, rhs = lp.matrix()
        status, x, _ = simplex(c, a, rels, rhs, lb, ub)
    elif method == "highs":
        _, _, _, a_ub, b_ub, a_eq, b_eq = _split_rows(lp)
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                      bounds=np.column_stack([lb, ub]), method="highs")
        status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status)
        if status is None:
            raise NumericalError(f"LP solver failed: {res.message}")
        x = res.x
    else:
        raise ValueError(f"unknown LP method {method!r}")
    if status != "optimal":
        return MilpSolution(status=status, names=lp.names)
    x = np.asarray(x, dtype=float)
    return MilpSolution(status="optimal", objective=lp.objective_value(x), x=x, names=lp.names)


def solve_milp(lp, node_budget=10_000, method="bnb", lp_method="highs"):
    """Solve ``lp`` with its integrality flags.

    Returns the proven optimum, or the best incumbent with status
    ``budget-exceeded`` when the node budget runs out first.
    """
    if lp.n_variables == 0:
        return _empty(lp)
    if method == "highs":
        return _solve_highs(lp, node_budget)
    if method != "bnb":
        raise ValueError(f"unknown MILP method {method!r}")
    return _branch_and_bound(lp, node_budget, lp_method)


def _solve_highs(lp, node_budget):
    sign = -1.0 if lp.sense == "max" else 1.0
    a, rels, rhs = lp.matrix()
    rels = np.array(rels)
    lo = np.where(rels == "<=", -np.inf, rhs)
    hi = np.where(rels == ">=", np.inf, rhs)
    cons = [LinearConstraint(a, lo, hi)] if a.shape[0] else []
    res = milp(sign * lp.cost_vector(), integrality=lp.integrality.astype(int),
               bounds=Bounds(lp.lower, lp.upper), constraints=cons,
               options={"node_limit": int(node_budget), "mip_rel_gap": 0.0})
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 0:
        return _finish(lp, "optimal", res.x, nodes)
    if res.status == 2:
        return MilpSolution(status="infeasible", names=lp.names, node_count=nodes)
    if res.status == 3:
        return MilpSolution(status="unbounded", names=lp.names, node_count=nodes)
    if res.status == 1:
        sol = _finish(lp, "optimal", res.x, nodes) if res.x is not None else MilpSolution("budget-exceeded")
        sol.status = "budget-exceeded"
        sol.names = lp.names
        return sol
    raise NumericalError(f"MILP solver failed: {res.message}")


def _improves(val, best):
    return best == np.inf or val < best - 1e-9 * max(1.0, abs(best))


def _branch_and_bound(lp, node_budget, lp_method):
    sign = -1.0 if lp.sense == "max" else 1.0   # search minimizes sign * objective
    ints = np.flatnonzero(lp.integrality)
    counter = itertools.count()
    root_lo, root_hi = lp.lower, lp.upper
    root_lo[ints] = np.ceil(root_lo[ints] - INT_TOL)
    root_hi[ints] = np.floor(root_hi[ints] + INT_TOL)
    best_x, best_val = None, np.inf
    nodes = 0

    relax = solve_lp(lp, lp_method, root_lo, root_hi)
    nodes += 1
    if relax.status == "unbounded":
        return MilpSolution(status="unbounded", names=lp.names, node_count=nodes)
    if relax.status != "optimal":
        return MilpSolution(status="infeasible", names=lp.names, node_count=nodes)
    heap = [(sign * relax.objective, next(counter), root_lo, root_hi, relax.x)]

    while heap:
        bound, _, lo, hi, x = heapq.heappop(heap)
        if not _improves(bound, best_val):
            continue
        frac = np.abs(x[ints] - np.round(x[ints]))
        if ints.size == 0 or frac.max() <= INT_TOL:
            best_x, best_val = x, bound
            continue
        if nodes >= node_budget:
            heapq.heappush(heap, (bound, next(counter), lo, hi, x))
            break
        # most fractional variable, smallest index on ties
        dist = np.abs(x[ints] - np.floor(x[ints]) - 0.5)
        j = ints[np.flatnonzero(dist <= dist.min() + 1e-12)[0]]
        for side in ("down", "up"):
            clo, chi = lo.copy(), hi.copy()
            if side == "down":
                chi[j] = np.floor(x[j])
            else:
                clo[j] = np.ceil(x[j])
            child = solve_lp(lp, lp_method, clo, chi)
            nodes += 1
            if child.status == "optimal":
                val = sign * child.objective
                if _improves(val, best_val):
                    heapq.heappush(heap, (val, next(counter), clo, chi, child.x))
            elif child.status == "unbounded":
                return MilpSolution(status="unbounded", names=lp.names, node_count=nodes)

    open_nodes = [h for h in heap if _improves(h[0], best_val)]
    if open_nodes:
        logger.info("branch and bound stopped at node budget %d", node_budget)
        if best_x is None:
            return MilpSolution(status="budget-exceeded", names=lp.names, node_count=nodes)
        sol = _finish(lp, "optimal", best_x, nodes)
        sol.status = "budget-exceeded"
        return sol
    if best_x is None:
        return MilpSolution(status="infeasible", names=lp.names, node_count=nodes)
    return _finish(lp, "optimal", best_x, nodes)
