"""Processor-sharing networks with simultaneous resource requirements.

Exact CTMC simulation under pluggable bandwidth-sharing controls, analytic
Lyapunov drift scans, and recursive stability classification of monotone
controls.  Type and resource indices are 0-based.
"""
__version__ = "0.1.0"

from .errors import (
    InfeasibleAllocationError,
    InsufficientDataError,
    LimitNotResolvedError,
    NotMonotoneError,
    PsnetError,
    ReducedChainUnstableError,
    SolverError,
    TopologyError,
    ValidationError,
)
from .network import NetworkSpec, capacity_condition, is_feasible, is_pareto_efficient
from .controls import (
    CompletePartitioning,
    Control,
    CustomTable,
    FunctionControl,
    ReservedGreedy,
    StaticPriority,
    SwitchingMax,
    ThresholdPriority,
    progressive_fill,
)
from .fairshare import AlphaFair, AlphaFairParams, solve_alpha_fair
from .sim import SimConfig, detect_growth, fluid_integrate, replicate, simulate
from .lyapunov import (
    DriftConfig,
    ExceptionSet,
    LinearLyapunov,
    SmoothedBackboneLyapunov,
    SmoothedFirstLyapunov,
    SmoothedSumLyapunov,
    drift,
    find_threshold_a,
    foster_scan,
    instability_evidence,
)
from .classifier import (
    ClassifyConfig,
    SubsetControl,
    check_monotone,
    classify,
    critical_threshold,
    expected_service,
    limiting_control,
    reduced_stationary,
)
