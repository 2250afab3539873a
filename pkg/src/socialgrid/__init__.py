"""Misinformation attacks on power grids coupled to a social network.

Users of a utility's social network can be nudged into raising their
demand; the package models the diffusion, the resulting DC power-flow
cascade, attack planning against it, and load shedding as a defence.
"""

from .attack import (AttackOutcome, AttackStrategy, CascadeImpact, cic, evaluate_attack, gsa, random_attack,
                     select_seeds, spa_c, spa_s)
from .diffusion import LiveEdgeSample, estimate_influence, greedy_targeted_im, simulate_ic
from .ingest import build_scenario, load_case, load_scenario, parse_edge_list, parse_matpower, save_scenario
from .model import CascadeOutcome, Coupling, PowerGrid, Scenario, SocialGraph
from .powerflow import apply_demand_change, run_cascade, settle, solve_dc_flow
from .protect import ClsReport, ControlledLoadShedding, apply_cls, cls_experiment

__all__ = [
    "AttackOutcome", "AttackStrategy", "CascadeImpact", "CascadeOutcome", "ClsReport", "ControlledLoadShedding",
    "Coupling", "LiveEdgeSample", "PowerGrid", "Scenario", "SocialGraph", "apply_cls", "apply_demand_change",
    "build_scenario", "cic", "cls_experiment", "estimate_influence", "evaluate_attack", "greedy_targeted_im",
    "gsa", "load_case", "load_scenario", "parse_edge_list", "parse_matpower", "random_attack", "run_cascade",
    "save_scenario", "select_seeds", "settle", "simulate_ic", "solve_dc_flow", "spa_c", "spa_s",
]
