"""Dataset parsing, scenario construction and scenario persistence."""

import json
import logging
import re
import warnings
from collections import deque
from importlib import resources
from pathlib import Path

import numpy as np

from ._rng import check_random_state, named_stream
from .model import Coupling, PowerGrid, Scenario, SocialGraph
from .powerflow import settle

logger = logging.getLogger(__name__)

BUILTIN_CASES = {
    "ieee30": "case30.m",
    "case30": "case30.m",
    "ieee300": "case300.m",
    "case300": "case300.m",
    "pegase1354": "case1354pegase.m",
    "case1354pegase": "case1354pegase.m",
}

# default seed budgets per grid size, as used for the capacity sweeps
DEFAULT_BUDGETS = {30: 5, 300: 20, 1354: 50}

SCENARIO_FORMAT = "socialgrid-scenario"
SCENARIO_VERSION = 1


class ParseError(ValueError):
    """Malformed input; ``line`` is the 1-based line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class InfeasibleError(ValueError):
    pass


# ---------------------------------------------------------------- MATPOWER

_MATRIX_START = re.compile(r"^\s*(?:mpc\.)?(bus|gen|branch)\s*=\s*\[(.*)$")
_BASE_MVA = re.compile(r"^\s*(?:mpc\.)?baseMVA\s*=\s*([^;%]+)")


def _matrices(text):
    """Return ``(base_mva, {name: rows})`` with rows as ``(line_no, [floats])``.

    A row ends at ``;`` or at the end of a line, as in MATPOWER scripts.
    """
    base_mva = None
    found = {}
    name, rows, opened_at = None, None, None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        code = raw.split("%", 1)[0]
        if name is None:
            m = _BASE_MVA.match(code)
            if m:
                try:
                    base_mva = float(m.group(1))
                except ValueError:
                    raise ParseError(f"bad baseMVA value {m.group(1).strip()!r}", line_no) from None
                continue
            m = _MATRIX_START.match(code)
            if not m:
                continue
            name, rows, opened_at = m.group(1), [], line_no
            code = m.group(2)
        body, closed, _ = code.partition("]")
        for piece in body.split(";"):
            tokens = piece.replace(",", " ").split()
            if not tokens:
                continue
            try:
                rows.append((line_no, [float(t) for t in tokens]))
            except ValueError:
                raise ParseError(f"non-numeric entry in {name} matrix: {piece.strip()!r}", line_no) from None
        if closed:
            found[name] = rows
            name = None
    if name is not None:
        raise ParseError(f"unterminated {name} matrix", opened_at)
    return base_mva, found


def _check_width(name, rows, width):
    n = None
    for line_no, row in rows:
        if len(row) < width:
            raise ParseError(f"{name} row has {len(row)} columns, need at least {width}", line_no)
        if n is not None and len(row) != n:
            raise ParseError(f"{name} row has {len(row)} columns, previous rows had {n}", line_no)
        n = len(row)


def parse_matpower(text, negative_reactance="abs", use_file_ratings=True):
    """Parse a MATPOWER case script into a :class:`PowerGrid`.

    Out-of-service branches and generators and isolated (type 4) buses are
    dropped; generators with ``Pmax <= 0`` never supply and are dropped
    too. A negative bus load is an injection and becomes a fixed-output
    generator. Branches with negative reactance (series compensation) use
    ``|x|`` unless ``negative_reactance="error"``. Line capacities come from
    ``rateA`` (0 meaning unlimited) when ``use_file_ratings`` is set,
    otherwise they are left unlimited for later calibration.
    """
    base_mva, mats = _matrices(text)
    for name in ("bus", "gen", "branch"):
        if name not in mats:
            raise ParseError(f"missing {name} matrix")
    if base_mva is None:
        base_mva = 100.0
    _check_width("bus", mats["bus"], 3)
    _check_width("gen", mats["gen"], 10)
    _check_width("branch", mats["branch"], 4)

    index = {}
    bus_ids, demand = [], []
    for line_no, row in mats["bus"]:
        bus_id, bus_type = int(row[0]), int(row[1])
        if bus_type == 4:
            continue
        if bus_id in index:
            raise ParseError(f"duplicate bus id {bus_id}", line_no)
        index[bus_id] = len(bus_ids)
        bus_ids.append(bus_id)
        demand.append(row[2])
    demand = np.array(demand, dtype=float)

    gens = []
    for line_no, row in mats["gen"]:
        bus_id = int(row[0])
        if bus_id not in index:
            raise ParseError(f"generator at unknown bus {bus_id}", line_no)
        if row[7] <= 0 or row[8] <= 0:
            continue
        pmax, pmin = row[8], max(row[9], 0.0)
        gens.append((index[bus_id], min(max(row[1], pmin), pmax), min(pmin, pmax), pmax))
    for bus in np.flatnonzero(demand < 0):
        gens.append((int(bus), -demand[bus], -demand[bus], -demand[bus]))
        demand[bus] = 0.0

    lines = []
    for line_no, row in mats["branch"]:
        status = row[10] if len(row) > 10 else 1.0
        if status <= 0:
            continue
        f, t = int(row[0]), int(row[1])
        for end in (f, t):
            if end not in index:
                raise ParseError(f"branch references unknown bus {end}", line_no)
        x = row[3]
        if x == 0:
            raise ParseError("branch reactance must be non-zero", line_no)
        if x < 0:
            if negative_reactance == "error":
                raise ParseError(f"negative branch reactance {x}", line_no)
            warnings.warn(f"line {line_no}: negative reactance {x} replaced by {-x}", stacklevel=2)
            x = -x
        rate = row[5] if len(row) > 5 else 0.0
        cap = rate if (use_file_ratings and rate > 0) else np.inf
        lines.append((index[f], index[t], x, cap))

    grid = PowerGrid.build(len(bus_ids), lines, gens, {i: d for i, d in enumerate(demand)}, base_mva=base_mva)
    grid.bus_ids = np.array(bus_ids, dtype=np.int64)
    return grid


def write_matpower(grid, name="case"):
    """Serialize the fields a :class:`PowerGrid` retains as a MATPOWER script."""
    ref = int(grid.gen_bus[0]) if grid.gen_bus.size else -1
    gen_at = set(grid.gen_bus.tolist())
    out = [f"function mpc = {name}", "mpc.version = '2';", f"mpc.baseMVA = {grid.base_mva!r};",
           "%\tbus_i\ttype\tPd", "mpc.bus = ["]
    for b in range(grid.n_bus):
        kind = 3 if b == ref else (2 if b in gen_at else 1)
        out.append(f"\t{int(grid.bus_ids[b])}\t{kind}\t{float(grid.demand[b])!r};")
    out += ["];", "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin", "mpc.gen = ["]
    for g in range(grid.gen_bus.size):
        out.append(f"\t{int(grid.bus_ids[grid.gen_bus[g]])}\t{float(grid.gen_p[g])!r}\t0\t0\t0\t1\t"
                   f"{grid.base_mva!r}\t1\t{float(grid.gen_pmax[g])!r}\t{float(grid.gen_pmin[g])!r};")
    out += ["];", "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus", "mpc.branch = ["]
    for e in range(grid.n_lines):
        cap = grid.capacity[e]
        rate = 0.0 if np.isinf(cap) else float(cap)
        out.append(f"\t{int(grid.bus_ids[grid.line_from[e]])}\t{int(grid.bus_ids[grid.line_to[e]])}\t0\t"
                   f"{float(grid.reactance[e])!r}\t0\t{rate!r}\t0\t0\t0\t0\t{int(grid.alive[e])};")
    out += ["];", ""]
    return "\n".join(out)


def load_case(name_or_path, **kwargs):
    """Load a bundled case (``ieee30``, ``ieee300``, ``pegase1354``) or a file path."""
    key = str(name_or_path).lower()
    if key in BUILTIN_CASES:
        text = resources.files("socialgrid.data").joinpath(BUILTIN_CASES[key]).read_text()
    else:
        text = Path(name_or_path).read_text()
    return parse_matpower(text, **kwargs)


# ------------------------------------------------------------ social graph

def parse_edge_list(text):
    """Parse ``u v`` integer pairs into an undirected (doubly directed) graph.

    External ids are mapped to dense ids in increasing order; weights are
    left unset.
    """
    pairs = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        tokens = body.replace(",", " ").split()
        if len(tokens) != 2:
            raise ParseError(f"expected two node ids, got {len(tokens)} tokens", line_no)
        try:
            pairs.append((int(tokens[0]), int(tokens[1])))
        except ValueError:
            raise ParseError(f"non-integer node id in {body!r}", line_no) from None
    if not pairs:
        return SocialGraph(0)
    ext = np.array(pairs, dtype=np.int64)
    ids, dense = np.unique(ext, return_inverse=True)
    dense = dense.reshape(ext.shape)
    src = np.concatenate([dense[:, 0], dense[:, 1]])
    dst = np.concatenate([dense[:, 1], dense[:, 0]])
    order = np.lexsort((dst, src))
    return SocialGraph(ids.size, src[order], dst[order], ids=ids)


def synthetic_social_graph(n=4039, m=22, triangle_prob=0.5, rng=None):
    """Clustered scale-free friendship graph (Holme-Kim model).

    With the defaults it has the size and mean degree of the public
    Facebook ego-network snapshot and stands in for it when that file is
    not available.
    """
    import networkx as nx

    seed = int(check_random_state(rng).integers(0, 2**31 - 1))
    g = nx.powerlaw_cluster_graph(n, m, triangle_prob, seed=seed)
    edges = np.array(sorted(g.edges()), dtype=np.int64).reshape(-1, 2)
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((dst, src))
    return SocialGraph(n, src[order], dst[order])


def sample_connected_subgraph(social, n, rng=None):
    """Induced subgraph on ``n`` users grown by random frontier expansion."""
    rng = check_random_state(rng)
    if n < 1 or n > social.n_nodes:
        raise InfeasibleError(f"cannot sample {n} users from {social.n_nodes}")
    adj = social.undirected_neighbors()
    labels = _undirected_labels(social)
    sizes = np.bincount(labels)
    eligible = np.flatnonzero(sizes[labels] >= n)
    if eligible.size == 0:
        raise InfeasibleError(f"no weakly connected component with {n} users")
    start = int(rng.choice(eligible))
    chosen = {start}
    frontier = set(adj[start].tolist())
    while len(chosen) < n:
        pick = int(rng.choice(sorted(frontier)))
        frontier.discard(pick)
        chosen.add(pick)
        frontier.update(v for v in adj[pick].tolist() if v not in chosen)
    return social.subgraph(sorted(chosen))


def _undirected_labels(social):
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    n = social.n_nodes
    adj = coo_matrix((np.ones(social.n_edges), (social.src, social.dst)), shape=(n, n))
    return connected_components(adj, directed=False)[1]


def assign_uniform_weights(social, lo=0.0, hi=1.0, rng=None):
    """Copy of ``social`` with every edge weight drawn from U[lo, hi]."""
    if not 0 <= lo <= hi <= 1:
        raise ValueError("need 0 <= lo <= hi <= 1")
    rng = check_random_state(rng)
    return social.with_prob(lo + (hi - lo) * rng.random(social.n_edges))


def build_coupling(grid, social, rng=None):
    """Map every demand bus to a distinct user by recursive neighbour matching.

    A random unlinked demand bus is paired with a random unlinked user;
    the bus's neighbours are then paired with unlinked neighbours of the
    user in breadth-first order, falling back to a random unlinked user
    when the user has none left. Transit buses are crossed while keeping
    the anchor user, so matching stays local.
    """
    rng = check_random_state(rng)
    demand = grid.demand_buses.tolist()
    if social.n_nodes < len(demand):
        raise InfeasibleError(f"{social.n_nodes} users cannot cover {len(demand)} demand buses")
    bus_adj = [set() for _ in range(grid.n_bus)]
    for f, t in zip(grid.line_from.tolist(), grid.line_to.tolist()):
        bus_adj[f].add(t)
        bus_adj[t].add(f)
    user_adj = social.undirected_neighbors()
    free_users = set(range(social.n_nodes))
    pairs = {}

    def link(bus, user):
        pairs[bus] = user
        free_users.discard(user)

    while len(pairs) < len(demand):
        bus = int(rng.choice([b for b in demand if b not in pairs]))
        link(bus, int(rng.choice(sorted(free_users))))
        seen = {bus}
        queue = deque([(bus, pairs[bus])])
        while queue:
            b, u = queue.popleft()
            for nb in sorted(bus_adj[b]):
                if nb in seen:
                    continue
                seen.add(nb)
                if not grid.is_demand[nb]:
                    queue.append((nb, u))
                    continue
                if nb in pairs:
                    continue
                options = [v for v in user_adj[u].tolist() if v in free_users]
                if not options:
                    options = sorted(free_users)
                link(nb, int(rng.choice(options)))
                queue.append((nb, pairs[nb]))
    return Coupling(sorted(pairs.items()))


def set_line_capacities(grid, capacity_factor=1.1):
    """Copy of ``grid`` with capacities set to ``factor * |base flow|``.

    The base case is balanced and solved first; its flows also seed the
    moving average. Lines that carry no base flow get
    ``factor * 1%`` of the largest base flow so they do not trip at t=0.
    """
    if not capacity_factor >= 1:
        raise ValueError("capacity_factor must be at least 1")
    g = grid.copy()
    settle(g)
    base = np.abs(g.flow)
    floor = 0.01 * base.max() if base.size else 0.0
    zero = base <= 1e-9 * max(base.max(initial=0.0), 1.0)
    g.capacity = capacity_factor * np.where(zero, floor, base)
    g.capacity[~g.alive] = 0.0
    g.ma_flow = g.flow.copy()
    g.base_demand = g.demand.copy()
    return g


def build_scenario(grid, social, *, n_users=None, weight_range=(0.0, 1.0), capacity_factor=1.1,
                   delta=0.25, alpha=0.5, k=5, rng_seed=0):
    """Assemble a scenario the way the experiments do.

    Samples a connected set of ``n_users`` (default: one per bus), assigns
    uniform edge weights, couples every demand bus to a user and
    calibrates line capacities. Each step draws from its own named stream
    of ``rng_seed``.
    """
    n_users = grid.n_bus if n_users is None else n_users
    n_users = max(n_users, int(grid.is_demand.sum()))
    sub = sample_connected_subgraph(social, n_users, named_stream(rng_seed, "sample"))
    sub = assign_uniform_weights(sub, *weight_range, rng=named_stream(rng_seed, "weights"))
    calibrated = set_line_capacities(grid, capacity_factor)
    coupling = build_coupling(calibrated, sub, named_stream(rng_seed, "coupling"))
    return Scenario(social=sub, grid=calibrated, coupling=coupling, delta=delta, alpha=alpha,
                    capacity_factor=capacity_factor, k=k, rng_seed=rng_seed)


def recalibrate(scenario, capacity_factor):
    """Same scenario with capacities rebuilt for another factor."""
    base = scenario.grid.copy()
    return Scenario(social=scenario.social, grid=set_line_capacities(base, capacity_factor),
                    coupling=scenario.coupling, delta=scenario.delta, alpha=scenario.alpha,
                    capacity_factor=capacity_factor, k=scenario.k, rng_seed=scenario.rng_seed,
                    delta_overrides=dict(scenario.delta_overrides), utility_user=scenario.utility_user)


# ------------------------------------------------------------- persistence

def _floats(a):
    return [float(v) for v in a]


def scenario_to_dict(scenario):
    s, g = scenario.social, scenario.grid
    return {
        "format": SCENARIO_FORMAT,
        "version": SCENARIO_VERSION,
        "social": {
            "nodes": s.n_nodes,
            "ids": [int(v) for v in s.ids],
            "edges": [{"from": int(u), "to": int(v), "p": float(p)}
                      for u, v, p in zip(s.src, s.dst, s.prob)],
        },
        "grid": {
            "base_mva": g.base_mva,
            "buses": [int(v) for v in g.bus_ids],
            "theta": _floats(g.theta),
            "gens": [{"bus": int(b), "p": float(p), "pmin": float(lo), "pmax": float(hi)}
                     for b, p, lo, hi in zip(g.gen_bus, g.gen_p, g.gen_pmin, g.gen_pmax)],
            "demands": [{"bus": int(b), "d": float(g.demand[b]), "nominal": float(g.nominal_demand[b]),
                         "base": float(g.base_demand[b]), "attacked": bool(g.attacked[b]),
                         "is_demand": bool(g.is_demand[b])}
                        for b in range(g.n_bus)],
            "lines": [{"from": int(f), "to": int(t), "x": float(x), "u": float(u), "alive": bool(a),
                       "f": float(fl), "f_ma": float(ma)}
                      for f, t, x, u, a, fl, ma in zip(g.line_from, g.line_to, g.reactance, g.capacity,
                                                       g.alive, g.flow, g.ma_flow)],
        },
        "coupling": [[b, u] for b, u in scenario.coupling.pairs()],
        "params": {
            "delta": scenario.delta,
            "alpha": scenario.alpha,
            "capacity_factor": scenario.capacity_factor,
            "k": scenario.k,
            "rng_seed": scenario.rng_seed,
            "delta_overrides": {str(b): v for b, v in sorted(scenario.delta_overrides.items())},
            "utility_user": scenario.utility_user,
        },
    }


def scenario_from_dict(doc):
    if doc.get("format") != SCENARIO_FORMAT:
        raise ParseError("not a scenario document")
    s = doc["social"]
    edges = s["edges"]
    social = SocialGraph(s["nodes"], [e["from"] for e in edges], [e["to"] for e in edges],
                         [e["p"] for e in edges], s["ids"])
    g = doc["grid"]
    dem, lines, gens = g["demands"], g["lines"], g["gens"]
    col = lambda rows, key: [r[key] for r in rows]
    grid = PowerGrid(
        line_from=col(lines, "from"), line_to=col(lines, "to"), reactance=col(lines, "x"),
        capacity=col(lines, "u"), alive=col(lines, "alive"), flow=col(lines, "f"),
        ma_flow=col(lines, "f_ma"),
        gen_bus=col(gens, "bus"), gen_p=col(gens, "p"), gen_pmin=col(gens, "pmin"), gen_pmax=col(gens, "pmax"),
        demand=col(dem, "d"), nominal_demand=col(dem, "nominal"), base_demand=col(dem, "base"),
        attacked=col(dem, "attacked"), is_demand=col(dem, "is_demand"),
        base_mva=g["base_mva"], bus_ids=g["buses"], theta=g["theta"],
    )
    p = doc["params"]
    return Scenario(social=social, grid=grid, coupling=Coupling(doc["coupling"]), delta=p["delta"],
                    alpha=p["alpha"], capacity_factor=p["capacity_factor"], k=p["k"],
                    rng_seed=p["rng_seed"],
                    delta_overrides={int(b): v for b, v in p.get("delta_overrides", {}).items()},
                    utility_user=p.get("utility_user"))


def dumps_scenario(scenario):
    return json.dumps(scenario_to_dict(scenario), indent=1, sort_keys=True) + "\n"


def loads_scenario(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno) from None
    return scenario_from_dict(doc)


def save_scenario(scenario, path):
    Path(path).write_text(dumps_scenario(scenario))


def load_scenario(path):
    return loads_scenario(Path(path).read_text())
