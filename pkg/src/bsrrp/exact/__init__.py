"""Exact-model services: replay validation, LP export, oracles, reduction."""

from .variables import IPVariableSpace
from .replay import FeasibilityReport, Violation, replay_validate
from .lp_export import ExportSizeError, LPModel, LPRow, encode_schedule, export_ip, parse_lp
from .oracle import OracleCaps, OracleResult, brute_force_optimal, optimality_gap
from .brp import (BRPInstance, UnsolvableError, brp_brute_force,
                  max_relocations, reduce_brp)

__all__ = [
    "IPVariableSpace",
    "FeasibilityReport",
    "Violation",
    "replay_validate",
    "ExportSizeError",
    "LPModel",
    "LPRow",
    "encode_schedule",
    "export_ip",
    "parse_lp",
    "OracleCaps",
    "OracleResult",
    "brute_force_optimal",
    "optimality_gap",
    "BRPInstance",
    "UnsolvableError",
    "brp_brute_force",
    "max_relocations",
    "reduce_brp",
]
