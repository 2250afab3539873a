"""Command-line entry point: ``socialgrid <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 input or parse error,
3 infeasible setup or diagnostic stop.
"""

import argparse
import csv
import io
import json
import logging
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._rng import named_stream
from .attack import STRATEGIES, evaluate_attack, select_seeds
from .diffusion import DEFAULT_TRIALS
from .ingest import (DEFAULT_BUDGETS, InfeasibleError, ParseError, build_scenario, load_case, load_scenario,
                     parse_edge_list, recalibrate, dumps_scenario, synthetic_social_graph)
from .protect import attacked_grid, cls_replay

logger = logging.getLogger("socialgrid")

DEFAULT_FACTORS = (1.1, 1.2, 1.3, 1.4, 1.5)
SOCIAL_STANDIN_SEED = 0


class UsageError(Exception):
    pass


class DiagnosticStop(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class SweepSpec:
    strategies: list
    factors: list
    budgets: list
    trials: int
    rng_seed: int
    ic_trials: int = DEFAULT_TRIALS
    cic: str = "auto"

    def __post_init__(self):
        if not self.strategies or not self.factors or not self.budgets:
            raise UsageError("strategy, capacity and k lists must be non-empty")
        if self.trials < 1:
            raise UsageError("--trials must be at least 1")
        bad = [s for s in self.strategies if s not in STRATEGIES]
        if bad:
            raise UsageError(f"unknown strategy {bad[0]!r}; choose from {', '.join(STRATEGIES)}")


# ----------------------------------------------------------------- helpers

def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _fmt(x):
    return f"{x:.6f}"


def _write(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _social(args):
    if args.edgelist:
        return parse_edge_list(Path(args.edgelist).read_text())
    return synthetic_social_graph(rng=SOCIAL_STANDIN_SEED)


def _scenario(args):
    """Load ``--scenario`` or build one from ``--case`` and the social data."""
    if getattr(args, "scenario", None):
        sc = load_scenario(args.scenario)
        if args.delta is not None:
            sc.delta = args.delta
        if args.alpha is not None:
            sc.alpha = args.alpha
        return sc
    grid = load_case(args.case)
    k = args.k if isinstance(getattr(args, "k", None), int) else _default_budget(grid.n_bus)
    return build_scenario(grid, _social(args), weight_range=tuple(args.weight_range),
                          capacity_factor=args.capacity_default, delta=args.delta or 0.25,
                          alpha=args.alpha or 0.5, k=max(k, 1), rng_seed=args.rng_seed)


def _default_budget(n_bus):
    if n_bus in DEFAULT_BUDGETS:
        return DEFAULT_BUDGETS[n_bus]
    return max(1, round(n_bus / 6))


def _cic_kwargs(mode):
    return {} if mode == "auto" else {"exact": mode == "exact"}


def _run_cell(scenario, strategy, k, trials, ic_trials, rng_seed, cell, cic_mode):
    """Select seeds with one strategy and evaluate them; returns (pct, stderr, error)."""
    try:
        kwargs = _cic_kwargs(cic_mode) if strategy in ("spa-c", "spa-s") else {}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            seeds = select_seeds(strategy, scenario, k, rng=named_stream(rng_seed, f"select/{strategy}/{cell}"),
                                 trials=ic_trials, **kwargs) if k > 0 else []
        out = evaluate_attack(scenario, seeds, trials, rng=named_stream(rng_seed, f"evaluate/{cell}"))
        return 100.0 * out.mean_failed_fraction, 100.0 * out.stderr_failed_fraction, ""
    except Exception as exc:  # a failing cell must not stop the sweep
        logger.error("cell %s/%s failed: %s", strategy, cell, exc)
        return float("nan"), float("nan"), f"{type(exc).__name__}: {exc}"


def _run_cells(cells, jobs):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_cell, *c) for c in cells]
            return [f.result() for f in futures]
    return [_run_cell(*c) for c in cells]


# ----------------------------------------------------------------- commands

def cmd_build_scenario(args):
    sc = _scenario(args)
    _write(dumps_scenario(sc), args.out)
    return 0


def cmd_attack(args):
    sc = _scenario(args)
    if args.capacity is not None:
        sc = recalibrate(sc, _float_list(args.capacity)[0])
    k = args.k if args.k is not None else sc.k
    strategy = args.strategy.split(",")[0]
    if strategy not in STRATEGIES:
        raise UsageError(f"unknown strategy {strategy!r}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        seeds = select_seeds(strategy, sc, k, rng=named_stream(args.rng_seed, f"select/{strategy}/0"),
                             trials=args.ic_trials, **(_cic_kwargs(args.cic) if strategy.startswith("spa") else {}))
    out = evaluate_attack(sc, seeds, args.trials, rng=named_stream(args.rng_seed, "evaluate/0"))
    row = [strategy, k, " ".join(str(s) for s in seeds), _fmt(100 * out.mean_failed_fraction),
           _fmt(100 * out.stderr_failed_fraction), _fmt(out.mean_yield), _fmt(out.mean_influenced)]
    _write(_csv(["strategy", "k", "seeds", "mean_failed_pct", "stderr", "mean_yield", "mean_influenced"],
                [row]), args.out)
    return 0


def cmd_sweep_capacity(args):
    sc = _scenario(args)
    factors = _float_list(args.capacity) if args.capacity else list(DEFAULT_FACTORS)
    k = args.k if args.k is not None else sc.k
    spec = SweepSpec(args.strategy.split(","), factors, [k], args.trials, args.rng_seed, args.ic_trials, args.cic)
    if any(f < 1 for f in factors):
        raise UsageError("capacity factors must be at least 1")
    cells, keys = [], []
    for s in spec.strategies:
        for i, f in enumerate(spec.factors):
            cells.append((recalibrate(sc, f), s, k, spec.trials, spec.ic_trials, spec.rng_seed, f"f{i}", spec.cic))
            keys.append((s, f))
    results = _run_cells(cells, args.jobs)
    rows = [[s, _fmt(f), _fmt(p), _fmt(e), err] for (s, f), (p, e, err) in zip(keys, results)]
    _write(_csv(["strategy", "capacity_factor", "mean_failed_pct", "stderr", "error"], rows), args.out)
    return 0


def cmd_sweep_seeds(args):
    sc = _scenario(args)
    factor = _float_list(args.capacity)[0] if args.capacity else 1.3
    if factor < 1:
        raise UsageError("capacity factor must be at least 1")
    base_k = args.k if args.k is not None else sc.k
    budgets = _int_list(args.k_list) if args.k_list else sorted({max(1, round(base_k * i / 5)) for i in range(1, 6)})
    if any(b < 0 for b in budgets):
        raise UsageError("seed budgets must be non-negative")
    spec = SweepSpec(args.strategy.split(","), [factor], budgets, args.trials, args.rng_seed, args.ic_trials, args.cic)
    sc = recalibrate(sc, factor)
    cells, keys = [], []
    for s in spec.strategies:
        for i, k in enumerate(spec.budgets):
            cells.append((sc, s, k, spec.trials, spec.ic_trials, spec.rng_seed, f"k{i}", spec.cic))
            keys.append((s, k))
    results = _run_cells(cells, args.jobs)
    rows = [[s, k, _fmt(p), _fmt(e), err] for (s, k), (p, e, err) in zip(keys, results)]
    _write(_csv(["strategy", "k", "mean_failed_pct", "stderr", "error"], rows), args.out)
    return 0


def cmd_cls(args):
    sc = _scenario(args)
    if args.capacity is not None:
        sc = recalibrate(sc, _float_list(args.capacity)[0])
    k = args.k if args.k is not None else sc.k
    strategy = args.strategy.split(",")[0]
    if strategy not in STRATEGIES:
        raise UsageError(f"unknown strategy {strategy!r}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        seeds = select_seeds(strategy, sc, k, rng=named_stream(args.rng_seed, f"select/{strategy}/0"),
                             trials=args.ic_trials, **(_cic_kwargs(args.cic) if strategy.startswith("spa") else {}))
    for attempt in range(args.retries):
        grid, _ = attacked_grid(sc, seeds, named_stream(args.rng_seed, f"cls/{attempt}"))
        rows, _ = cls_replay(grid, alpha=sc.alpha)
        if len(rows) - 1 >= args.min_rounds:
            logger.info("cascade with %d removal rounds found at attempt %d", len(rows) - 1, attempt)
            _write(_csv(["round", "yield"], [[r, _fmt(y)] for r, y in rows]), args.out)
            return 0
    raise DiagnosticStop(f"no cascade with at least {args.min_rounds} rounds in {args.retries} attempts")


def cmd_report(args):
    lines = []
    if args.scenario:
        sc = load_scenario(args.scenario)
        g = sc.grid
        lines += [
            f"scenario: {args.scenario}",
            f"grid: {g.n_bus} buses, {g.n_lines} lines ({int(g.alive.sum())} live), "
            f"{g.gen_bus.size} generators, {int(g.is_demand.sum())} demand buses",
            f"total demand: {g.demand[g.is_demand].sum():.3f} MW",
            f"social: {sc.social.n_nodes} users, {sc.social.n_edges} directed edges, "
            f"mean weight {float(np.mean(sc.social.prob)) if sc.social.n_edges else 0.0:.4f}",
            f"coupled users: {len(sc.coupling)}",
            f"delta={sc.delta} alpha={sc.alpha} capacity_factor={sc.capacity_factor} k={sc.k} "
            f"rng_seed={sc.rng_seed}",
        ]
    for path in args.csv or []:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ParseError(f"{path}: empty CSV")
        widths = [max(len(r[i]) for r in rows if i < len(r)) for i in range(len(rows[0]))]
        lines.append(f"{path}:")
        lines += ["  " + "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    if not lines:
        raise UsageError("report needs --scenario and/or --csv")
    _write("\n".join(lines) + "\n", args.out)
    return 0


# ----------------------------------------------------------------- parser

def build_parser():
    p = _Parser(prog="socialgrid", description="Misinformation attacks on social-network-coupled power grids.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, scenario=True):
        sp.add_argument("--case", default="ieee30", help="bundled case name or MATPOWER file")
        sp.add_argument("--edgelist", help="social edge list (default: synthetic stand-in graph)")
        if scenario:
            sp.add_argument("--scenario", help="scenario JSON written by build-scenario")
        sp.add_argument("--delta", type=float, default=None, help="demand increase fraction (default 0.25)")
        sp.add_argument("--alpha", type=float, default=None, help="moving-average weight (default 0.5)")
        sp.add_argument("--k", type=int, default=None, help="seed budget")
        sp.add_argument("--rng-seed", type=int, default=0)
        sp.add_argument("--weight-range", type=float, nargs=2, default=[0.0, 1.0], metavar=("LO", "HI"))
        sp.add_argument("--out", default=None, help="output file (default stdout)")
        sp.add_argument("-v", "--verbose", action="store_true")
        sp.set_defaults(capacity_default=1.1)

    def attack_opts(sp, strategy_default):
        sp.add_argument("--strategy", default=strategy_default)
        sp.add_argument("--trials", type=int, default=100, help="evaluation diffusions")
        sp.add_argument("--ic-trials", type=int, default=DEFAULT_TRIALS, help="live-edge samples for seed selection")
        sp.add_argument("--cic", choices=("auto", "exact", "heuristic"), default="auto",
                        help="impact calculator: exact program, relaxation heuristic, or by grid size")
        sp.add_argument("--jobs", type=int, default=1)

    sp = sub.add_parser("build-scenario", help="build and save a scenario")
    common(sp, scenario=False)
    sp.add_argument("--capacity", type=float, default=1.1, dest="capacity_default")
    sp.set_defaults(func=cmd_build_scenario)

    sp = sub.add_parser("attack", help="select seeds with one strategy and evaluate them")
    common(sp)
    attack_opts(sp, "spa-s")
    sp.add_argument("--capacity", default=None)
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("sweep-capacity", help="failed-node percentage against line capacity")
    common(sp)
    attack_opts(sp, ",".join(STRATEGIES))
    sp.add_argument("--capacity", default=None, help="comma-separated factors (default 1.1,...,1.5)")
    sp.set_defaults(func=cmd_sweep_capacity)

    sp = sub.add_parser("sweep-seeds", help="failed-node percentage against seed budget")
    common(sp)
    attack_opts(sp, ",".join(STRATEGIES))
    sp.add_argument("--capacity", default=None, help="capacity factor (default 1.3)")
    sp.add_argument("--k-list", default=None, help="comma-separated budgets")
    sp.set_defaults(func=cmd_sweep_seeds)

    sp = sub.add_parser("cls", help="yield against load-shedding intervention round")
    common(sp)
    attack_opts(sp, "gsa")
    sp.add_argument("--capacity", default=None)
    sp.add_argument("--retries", type=int, default=50)
    sp.add_argument("--min-rounds", type=int, default=3)
    sp.set_defaults(func=cmd_cls)

    sp = sub.add_parser("report", help="summarize a scenario and result CSVs")
    sp.add_argument("--scenario")
    sp.add_argument("--csv", nargs="*")
    sp.add_argument("--out", default=None)
    sp.add_argument("-v", "--verbose", action="store_true")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if not getattr(args, "command", None):
            raise UsageError("a command is required")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ParseError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except (InfeasibleError, DiagnosticStop) as exc:
        print(f"stopped: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
