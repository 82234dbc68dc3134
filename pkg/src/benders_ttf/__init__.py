"""Benders column generation for the two-tier formulation of multi-person pose grouping."""
from .bcg import BendersRow, BcgResult, run_bcg
from .columns import ColumnPool, LocalAssignment, Skeleton
from .model import Instance, SolverConfig, generate_instance, load_instance, save_instance, validate_instance
from .oracle import solve_exact
from .pcg import run_pcg
from .pipeline import solve_instance
from .rounding import IntegralSolution

__version__ = "0.1.0"

__all__ = [
    "BendersRow", "BcgResult", "ColumnPool", "Instance", "IntegralSolution", "LocalAssignment",
    "Skeleton", "SolverConfig", "generate_instance", "load_instance", "run_bcg", "run_pcg",
    "save_instance", "solve_exact", "solve_instance", "validate_instance",
]
