"""Evaluate zonal divisions of a power grid with flow-based market coupling."""

from .case_io import (
    CaseError, DivisionError, Network, ZoneDivision, load_case, load_zone_division, parse_matpower, single_zone,
)
from .dcflow import build_gsk, build_nodal_ptdf, dc_power_flow, zonal_ptdf
from .evaluate import EvalConfig, compare_divisions, evaluate_division
from .market import InfeasibleError, build_offer_book, bootstrap_run, solve_coupling
from .qpsolve import QpProblem, solve_concave_qp, verify_kkt
from .settlement import SettlementReport, clearing_prices, redispatch_cost, social_welfare

__all__ = [
    "CaseError", "DivisionError", "Network", "ZoneDivision", "load_case", "load_zone_division", "parse_matpower",
    "single_zone", "build_gsk", "build_nodal_ptdf", "dc_power_flow", "zonal_ptdf", "EvalConfig",
    "compare_divisions", "evaluate_division", "InfeasibleError", "build_offer_book", "bootstrap_run",
    "solve_coupling", "QpProblem", "solve_concave_qp", "verify_kkt", "SettlementReport", "clearing_prices",
    "redispatch_cost", "social_welfare",
]
