"""Domain types for the coupled social network / power grid system."""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class SocialGraph:
    """Directed social graph with per-edge propagation probabilities.

    Users are dense integers ``0..n_nodes-1``; ``ids`` keeps the external
    identifiers seen at ingestion. Self-loops are dropped and repeated
    ordered pairs are merged (the first weight wins). ``prob`` holds NaN
    until weights are assigned.
    """

    def __init__(self, n_nodes, src=(), dst=(), prob=None, ids=None):
        src = np.asarray(src, dtype=np.int64).reshape(-1)
        dst = np.asarray(dst, dtype=np.int64).reshape(-1)
        if src.shape != dst.shape:
            raise ValueError("src and dst must have the same length")
        if prob is None:
            prob = np.full(src.shape, np.nan)
        prob = np.asarray(prob, dtype=float).reshape(-1)
        if prob.shape != src.shape:
            raise ValueError("prob must have one entry per edge")
        if src.size and (src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= n_nodes):
            raise ValueError("edge endpoint outside 0..n_nodes-1")
        keep = src != dst
        src, dst, prob = src[keep], dst[keep], prob[keep]
        _, first = np.unique(src * max(n_nodes, 1) + dst, return_index=True)
        first.sort()
        self.n_nodes = int(n_nodes)
        self.src = src[first]
        self.dst = dst[first]
        self.prob = prob[first]
        finite = self.prob[~np.isnan(self.prob)]
        if finite.size and (finite.min() < 0 or finite.max() > 1):
            raise ValueError("edge probabilities must lie in [0, 1]")
        self.ids = np.arange(n_nodes) if ids is None else np.asarray(ids, dtype=np.int64)
        if self.ids.shape != (self.n_nodes,):
            raise ValueError("ids must have one entry per node")

    @classmethod
    def from_edges(cls, n_nodes, edges, prob=None, ids=None):
        edges = list(edges)
        src = [u for u, _ in edges]
        dst = [v for _, v in edges]
        if prob is not None and np.ndim(prob) == 0:
            prob = np.full(len(edges), float(prob))
        return cls(n_nodes, src, dst, prob, ids)

    @property
    def n_edges(self):
        return int(self.src.size)

    @property
    def has_weights(self):
        return not np.isnan(self.prob).any()

    def with_prob(self, prob):
        return SocialGraph(self.n_nodes, self.src, self.dst, prob, self.ids)

    def out_neighbors(self, u):
        return self.dst[self.src == u]

    def undirected_neighbors(self):
        """List of sorted neighbour arrays ignoring edge direction."""
        adj = [set() for _ in range(self.n_nodes)]
        for u, v in zip(self.src.tolist(), self.dst.tolist()):
            adj[u].add(v)
            adj[v].add(u)
        return [np.array(sorted(a), dtype=np.int64) for a in adj]

    def subgraph(self, nodes):
        """Induced subgraph on ``nodes``; the new ids are positions in ``nodes``."""
        nodes = np.asarray(nodes, dtype=np.int64)
        pos = np.full(self.n_nodes, -1, dtype=np.int64)
        pos[nodes] = np.arange(nodes.size)
        keep = (pos[self.src] >= 0) & (pos[self.dst] >= 0)
        return SocialGraph(nodes.size, pos[self.src[keep]], pos[self.dst[keep]],
                           self.prob[keep], self.ids[nodes])

    def __eq__(self, other):
        if not isinstance(other, SocialGraph):
            return NotImplemented
        return (self.n_nodes == other.n_nodes
                and np.array_equal(self.src, other.src)
                and np.array_equal(self.dst, other.dst)
                and np.array_equal(self.prob, other.prob, equal_nan=True)
                and np.array_equal(self.ids, other.ids))

    def __repr__(self):
        return f"SocialGraph(n_nodes={self.n_nodes}, n_edges={self.n_edges})"


@dataclass
class PowerGrid:
    """DC power grid plus its mutable operating state.

    Buses are dense integers; ``bus_ids`` keeps the case-file numbers.
    Line arrays are indexed by line id, generator arrays by generator id
    and demand arrays by bus. ``is_demand`` fixes the demand set D at
    construction time. ``base_demand`` is the pre-attack demand d0 and
    ``ma_flow`` the moving-average flow used by the overload test.
    Quantities are MW; reactances are per unit on ``base_mva``.
    """

    line_from: np.ndarray
    line_to: np.ndarray
    reactance: np.ndarray
    capacity: np.ndarray
    gen_bus: np.ndarray
    gen_p: np.ndarray
    gen_pmin: np.ndarray
    gen_pmax: np.ndarray
    demand: np.ndarray
    nominal_demand: np.ndarray
    base_mva: float = 1.0
    bus_ids: np.ndarray = None
    alive: np.ndarray = None
    flow: np.ndarray = None
    ma_flow: np.ndarray = None
    base_demand: np.ndarray = None
    attacked: np.ndarray = None
    theta: np.ndarray = None
    is_demand: np.ndarray = None

    def __post_init__(self):
        as_f = lambda a: np.array(a, dtype=float).reshape(-1)
        as_i = lambda a: np.array(a, dtype=np.int64).reshape(-1)
        self.line_from, self.line_to = as_i(self.line_from), as_i(self.line_to)
        self.reactance, self.capacity = as_f(self.reactance), as_f(self.capacity)
        self.gen_bus = as_i(self.gen_bus)
        self.gen_p, self.gen_pmin, self.gen_pmax = as_f(self.gen_p), as_f(self.gen_pmin), as_f(self.gen_pmax)
        self.demand, self.nominal_demand = as_f(self.demand), as_f(self.nominal_demand)
        n, m = self.demand.size, self.line_from.size
        if self.bus_ids is None:
            self.bus_ids = np.arange(n)
        self.bus_ids = as_i(self.bus_ids)
        if self.alive is None:
            self.alive = np.ones(m, dtype=bool)
        self.alive = np.array(self.alive, dtype=bool)
        for name, size, default in (("flow", m, 0.0), ("ma_flow", m, 0.0), ("theta", n, 0.0)):
            value = getattr(self, name)
            setattr(self, name, np.full(size, default) if value is None else as_f(value))
        self.base_demand = self.demand.copy() if self.base_demand is None else as_f(self.base_demand)
        self.attacked = np.zeros(n, dtype=bool) if self.attacked is None else np.array(self.attacked, dtype=bool)
        if self.is_demand is None:
            self.is_demand = self.nominal_demand > 0
        self.is_demand = np.array(self.is_demand, dtype=bool)
        self.base_mva = float(self.base_mva)
        self._validate()

    def _validate(self):
        n = self.n_bus
        for name in ("nominal_demand", "bus_ids", "theta", "base_demand", "attacked", "is_demand"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have one entry per bus")
        m = self.n_lines
        for name in ("line_to", "reactance", "capacity", "alive", "flow", "ma_flow"):
            if getattr(self, name).shape != (m,):
                raise ValueError(f"{name} must have one entry per line")
        g = self.gen_bus.size
        for name in ("gen_p", "gen_pmin", "gen_pmax"):
            if getattr(self, name).shape != (g,):
                raise ValueError(f"{name} must have one entry per generator")
        for ends in (self.line_from, self.line_to, self.gen_bus):
            if ends.size and (ends.min() < 0 or ends.max() >= n):
                raise ValueError("bus reference outside 0..n_bus-1")
        if m and np.any(self.line_from == self.line_to):
            raise ValueError("lines must join two distinct buses")
        if np.any(self.reactance <= 0):
            raise ValueError("line reactance must be positive")
        if np.any(self.capacity < 0):
            raise ValueError("line capacity must be non-negative")
        if np.any(self.gen_pmin < 0) or np.any(self.gen_pmin > self.gen_pmax):
            raise ValueError("generator bounds must satisfy 0 <= pmin <= pmax")
        if np.any(self.demand < 0) or np.any(self.nominal_demand < 0):
            raise ValueError("demands must be non-negative")

    @classmethod
    def build(cls, n_bus, lines, gens, demands, base_mva=1.0):
        """Convenience constructor for hand-made grids.

        ``lines`` holds ``(from, to, reactance, capacity)`` tuples, ``gens``
        holds ``(bus, p, pmin, pmax)`` tuples and ``demands`` maps bus to MW.
        """
        lines = list(lines)
        gens = list(gens)
        demand = np.zeros(n_bus)
        for bus, d in dict(demands).items():
            demand[bus] = d
        col = lambda rows, i, dtype: np.array([r[i] for r in rows], dtype=dtype)
        return cls(
            line_from=col(lines, 0, np.int64), line_to=col(lines, 1, np.int64),
            reactance=col(lines, 2, float), capacity=col(lines, 3, float),
            gen_bus=col(gens, 0, np.int64), gen_p=col(gens, 1, float),
            gen_pmin=col(gens, 2, float), gen_pmax=col(gens, 3, float),
            demand=demand, nominal_demand=demand.copy(), base_mva=base_mva,
        )

    @property
    def n_bus(self):
        return int(self.demand.size)

    @property
    def n_lines(self):
        return int(self.line_from.size)

    @property
    def demand_buses(self):
        return np.flatnonzero(self.is_demand)

    @property
    def generator_buses(self):
        return np.unique(self.gen_bus)

    def has_generator(self):
        mask = np.zeros(self.n_bus, dtype=bool)
        mask[self.gen_bus] = True
        return mask

    def injections(self):
        """Net MW injection per bus: generation minus demand."""
        inj = -self.demand.copy()
        np.add.at(inj, self.gen_bus, self.gen_p)
        return inj

    def copy(self):
        return PowerGrid(**{name: _copy(getattr(self, name)) for name in self.__dataclass_fields__})

    def component_labels(self):
        """Connected-component label per bus over live lines."""
        n = self.n_bus
        if n == 0:
            return np.zeros(0, dtype=np.int64)
        live = self.alive
        adj = coo_matrix((np.ones(int(live.sum())), (self.line_from[live], self.line_to[live])), shape=(n, n))
        _, labels = connected_components(adj, directed=False)
        return labels

    def __eq__(self, other):
        if not isinstance(other, PowerGrid):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in self.__dataclass_fields__)


def _copy(value):
    return value.copy() if isinstance(value, np.ndarray) else value


class Coupling:
    """One-to-one map between demand buses and social users."""

    def __init__(self, pairs=()):
        self.bus_to_user = {}
        self.user_to_bus = {}
        for bus, user in pairs:
            bus, user = int(bus), int(user)
            if bus in self.bus_to_user or user in self.user_to_bus:
                raise ValueError(f"coupling is not injective at pair ({bus}, {user})")
            self.bus_to_user[bus] = user
            self.user_to_bus[user] = bus

    def __len__(self):
        return len(self.bus_to_user)

    def __eq__(self, other):
        if not isinstance(other, Coupling):
            return NotImplemented
        return self.bus_to_user == other.bus_to_user

    def __repr__(self):
        return f"Coupling({len(self)} pairs)"

    def pairs(self):
        return sorted(self.bus_to_user.items())

    @property
    def users(self):
        """The coupled users (the target set for social attacks)."""
        return sorted(self.user_to_bus)

    def users_of(self, buses):
        return sorted(self.bus_to_user[int(b)] for b in buses if int(b) in self.bus_to_user)

    def buses_of(self, users):
        return sorted(self.user_to_bus[int(u)] for u in users if int(u) in self.user_to_bus)

    def validate(self, grid, social):
        for bus, user in self.bus_to_user.items():
            if not (0 <= bus < grid.n_bus) or not grid.is_demand[bus]:
                raise ValueError(f"coupled bus {bus} is not a demand bus")
            if not (0 <= user < social.n_nodes):
                raise ValueError(f"coupled user {user} is not in the social graph")


@dataclass
class Scenario:
    """The coupled system together with the attack parameters."""

    social: SocialGraph
    grid: PowerGrid
    coupling: Coupling
    delta: float = 0.25
    alpha: float = 0.5
    capacity_factor: float = 1.1
    k: int = 5
    rng_seed: int = 0
    delta_overrides: dict = field(default_factory=dict)
    utility_user: int = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not self.capacity_factor >= 1:
            raise ValueError("capacity_factor must be at least 1")
        if int(self.k) < 1:
            raise ValueError("k must be a positive integer")
        self.k = int(self.k)
        if any(v <= 0 for v in self.delta_overrides.values()):
            raise ValueError("delta overrides must be positive")
        self.coupling.validate(self.grid, self.social)

    def delta_for(self, bus):
        return self.delta_overrides.get(int(bus), self.delta)

    def candidate_users(self):
        """Users the attacker may seed (everyone except the utility account)."""
        return [u for u in range(self.social.n_nodes) if u != self.utility_user]


@dataclass
class CascadeRound:
    index: int
    removed_lines: list
    failed_buses: list
    n_islands: int
    max_ratio: float
    flow: np.ndarray = field(repr=False, default=None)  # solved flow before this round's trips


@dataclass
class CascadeOutcome:
    """Result of one cascade: S1 (lines in failure order), S2 and the trace."""

    failed_lines: list
    failed_nodes: set
    rounds: list
    final_yield: float
    grid: PowerGrid = field(repr=False, default=None)
    stable: bool = True

    @property
    def n_rounds(self):
        return len(self.rounds)


def failed_nodes(grid):
    """Demand buses with no live path to any generator, F(G_P) = len(result)."""
    if grid.n_bus == 0:
        return set()
    labels = grid.component_labels()
    powered = np.zeros(labels.max() + 1, dtype=bool)
    powered[labels[grid.gen_bus]] = True
    return set(np.flatnonzero(grid.is_demand & ~powered[labels]).tolist())


def compute_yield(grid, original_total_demand):
    """Served demand at stability divided by ``original_total_demand``."""
    if not original_total_demand > 0:
        raise ValueError("original_total_demand must be positive")
    dead = failed_nodes(grid)
    served = sum(grid.demand[b] for b in grid.demand_buses if b not in dead)
    return float(min(1.0, max(0.0, served / original_total_demand)))
