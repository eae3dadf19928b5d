"""Semi-stochastic Frank-Wolfe with away-steps for finite-sum problems over polytopes."""

from .active_set import ActiveSet, InvariantError, caratheodory_reduce, vru_update
from .block_solver import BlockConfig, run_block_fw_away
from .erm import (
    ErmProblem,
    FullBatch,
    GeometricGrowth,
    TheoremSchedule,
    estimate_constants,
    make_rng,
)
from .polytopes import (
    PolytopeSpec,
    Vertex,
    box,
    compute_hoffman,
    compute_omega,
    lifted_l1_ball,
    lmo,
    product,
    unit_simplex,
)
from .solver import SolverConfig, run_fw_away
from .trace import TraceRecord, read_trace_csv, write_trace_csv

__version__ = "0.1.0"

__all__ = [
    "ActiveSet",
    "BlockConfig",
    "box",
    "caratheodory_reduce",
    "compute_hoffman",
    "compute_omega",
    "ErmProblem",
    "estimate_constants",
    "FullBatch",
    "GeometricGrowth",
    "InvariantError",
    "lifted_l1_ball",
    "lmo",
    "make_rng",
    "PolytopeSpec",
    "product",
    "read_trace_csv",
    "run_block_fw_away",
    "run_fw_away",
    "SolverConfig",
    "TheoremSchedule",
    "TraceRecord",
    "unit_simplex",
    "Vertex",
    "vru_update",
    "write_trace_csv",
]
