"""Container for linear and mixed-binary programs."""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix

RELATIONS = ("<=", "==", ">=")


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = np.inf
    integer: bool = False


@dataclass
class Constraint:
    coeffs: dict
    relation: str
    rhs: float
    name: str = None


class LinearProgram:
    """A linear objective over named variables with linear constraints.

    Variables are referenced by name; declaration order fixes their index
    so solver output is deterministic.
    """

    def __init__(self, sense="min", name="lp"):
        if sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        self.sense = sense
        self.name = name
        self.variables = []
        self.constraints = []
        self.objective = {}
        self._index = {}

    def __repr__(self):
        return (f"LinearProgram({self.name!r}, {self.sense}, vars={len(self.variables)}, "
                f"cons={len(self.constraints)}, int={int(self.integrality.sum())})")

    def add_variable(self, name, lb=0.0, ub=np.inf, integer=False):
        if name in self._index:
            raise ValueError(f"variable {name!r} already declared")
        if lb > ub:
            raise ValueError(f"variable {name!r} has lb > ub")
        self._index[name] = len(self.variables)
        self.variables.append(Variable(name, float(lb), float(ub), bool(integer)))
        return name

    def add_binary(self, name):
        return self.add_variable(name, 0.0, 1.0, integer=True)

    def add_constraint(self, coeffs, relation, rhs, name=None):
        if relation not in RELATIONS:
            raise ValueError(f"relation must be one of {RELATIONS}")
        merged = {}
        for var, c in coeffs.items():
            if var not in self._index:
                raise KeyError(f"constraint references undeclared variable {var!r}")
            merged[var] = merged.get(var, 0.0) + float(c)
        self.constraints.append(Constraint(merged, relation, float(rhs), name))

    def set_objective(self, coeffs, sense=None):
        for var in coeffs:
            if var not in self._index:
                raise KeyError(f"objective references undeclared variable {var!r}")
        self.objective = {v: float(c) for v, c in coeffs.items()}
        if sense is not None:
            if sense not in ("min", "max"):
                raise ValueError("sense must be 'min' or 'max'")
            self.sense = sense

    def index(self, name):
        return self._index[name]

    def __contains__(self, name):
        return name in self._index

    @property
    def names(self):
        return [v.name for v in self.variables]

    @property
    def n_variables(self):
        return len(self.variables)

    @property
    def lower(self):
        return np.array([v.lb for v in self.variables])

    @property
    def upper(self):
        return np.array([v.ub for v in self.variables])

    @property
    def integrality(self):
        return np.array([v.integer for v in self.variables], dtype=bool)

    def cost_vector(self):
        c = np.zeros(self.n_variables)
        for var, coef in self.objective.items():
            c[self._index[var]] = coef
        return c

    def matrix(self):
        """``(A, relations, rhs)`` with A sparse, one row per constraint."""
        rows, cols, vals = [], [], []
        for r, con in enumerate(self.constraints):
            for var, coef in con.coeffs.items():
                rows.append(r)
                cols.append(self._index[var])
                vals.append(coef)
        a = csr_matrix((vals, (rows, cols)), shape=(len(self.constraints), self.n_variables))
        return a, [c.relation for c in self.constraints], np.array([c.rhs for c in self.constraints])

    def relaxed(self):
        out = self.copy()
        for v in out.variables:
            v.integer = False
        return out

    def copy(self):
        out = LinearProgram(self.sense, self.name)
        for v in self.variables:
            out.add_variable(v.name, v.lb, v.ub, v.integer)
        for c in self.constraints:
            out.constraints.append(Constraint(dict(c.coeffs), c.relation, c.rhs, c.name))
        out.objective = dict(self.objective)
        return out

    def objective_value(self, x):
        return float(self.cost_vector() @ np.asarray(x, dtype=float))

    def violation(self, x, scaled=True):
        """Largest constraint, bound or integrality violation of ``x``.

        With ``scaled`` each row's violation is divided by
        ``max(1, |rhs|, max |coefficient|)``.
        """
        x = np.asarray(x, dtype=float)
        worst = 0.0
        if x.size:
            worst = max(worst, float(np.max(self.lower - x, initial=0.0)),
                        float(np.max(x - self.upper, initial=0.0)))
            ints = self.integrality
            if ints.any():
                worst = max(worst, float(np.max(np.abs(x[ints] - np.round(x[ints])))))
        for con in self.constraints:
            lhs = sum(coef * x[self._index[v]] for v, coef in con.coeffs.items())
            gap = {"<=": lhs - con.rhs, ">=": con.rhs - lhs, "==": abs(lhs - con.rhs)}[con.relation]
            if scaled:
                gap /= max(1.0, abs(con.rhs), max((abs(c) for c in con.coeffs.values()), default=0.0))
            worst = max(worst, gap)
        return worst

    def to_lp_text(self):
        """Render in the CPLEX LP text format for external cross-checks."""
        safe = {v.name: _lp_name(v.name, i) for i, v in enumerate(self.variables)}

        def expr(coeffs):
            terms = [f"{'-' if c < 0 else '+'} {abs(c)!r} {safe[v]}" for v, c in coeffs.items() if c != 0]
            text = " ".join(terms) if terms else "0 " + safe[self.variables[0].name] if self.variables else "0"
            return text[2:] if text.startswith("+ ") else text

        out = [f"\\ {self.name}", "Maximize" if self.sense == "max" else "Minimize", f" obj: {expr(self.objective)}",
               "Subject To"]
        ops = {"<=": "<=", ">=": ">=", "==": "="}
        for i, con in enumerate(self.constraints):
            label = _lp_name(con.name, i) if con.name else f"c{i}"
            out.append(f" {label}: {expr(con.coeffs)} {ops[con.relation]} {con.rhs!r}")
        out.append("Bounds")
        for v in self.variables:
            lo = "-inf" if np.isinf(v.lb) else repr(v.lb)
            hi = "+inf" if np.isinf(v.ub) else repr(v.ub)
            out.append(f" {lo} <= {safe[v.name]} <= {hi}")
        binaries = [safe[v.name] for v in self.variables if v.integer]
        if binaries:
            out += ["General", " " + " ".join(binaries)]
        out.append("End")
        return "\n".join(out) + "\n"


def _lp_name(name, i):
    cleaned = "".join(ch if ch.isalnum() or ch in "_." else "_" for ch in name)
    if not cleaned or not cleaned[0].isalpha():
        cleaned = f"v{i}_{cleaned}"
    return cleaned


@dataclass
class MilpSolution:
    """Solver result. ``status`` is optimal, infeasible, unbounded or budget-exceeded."""

    status: str
    objective: float = None
    x: np.ndarray = None
    names: list = field(default_factory=list, repr=False)
    node_count: int = 0

    @property
    def ok(self):
        return self.status == "optimal"

    def value(self, name):
        return float(self.x[self.names.index(name)])

    def values(self):
        return dict(zip(self.names, self.x.tolist())) if self.x is not None else {}
