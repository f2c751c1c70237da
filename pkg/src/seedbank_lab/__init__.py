"""Spatial population models with dormant states: forward simulation,
genealogical duals, coexistence criteria, and finite-systems experiments."""

__version__ = "0.1.0"

from .errors import BudgetError, ConfigError, DiagnosticError
from .geometry import (Geography, HeavyTail, HierarchicalJump, MigrationKernel,
                       NearestNeighbour, build_kernel, kernel_from_row,
                       transition_probability, transition_row)
from .seedbank import SeedBankProfile, alternation_active_fraction, wake_time_tail
from .forward import (FisherWright, OhtaKimura, System, SystemState,
                      TabulatedDiffusion, Trajectory, depth_moments, diversity,
                      macroscopic, make_state, run, validate_diffusion)
from .dual import (ACTIVE, CoalescentHistory, Event, Lineage, estimate_hazard,
                   hazard_exact, joint_activity_bursts, moment_dual_expectation,
                   pair_moment_dual, run_coalescent)
from .criteria import (EuclideanSetting, FiniteRho, HeavyTailSetting,
                       HierarchicalSetting, InfiniteRho, Modulated,
                       classify_example, coexistence_integral, renormalize_fw)
from .experiments import (EnsembleResult, FgEstimate, LadderLevel, RenewalResult,
                          TimeScaleReport, TrappingResult, accessibility_index,
                          clustering_diagnostics, estimate_Fg,
                          fg_diffusion_reference, finite_systems_run,
                          renewal_intersection, run_ensemble, time_scales,
                          trapping_time)
from .config import RunConfig, build_system, config_sha256, echo, parse_config
from .streams import derive_seed, parallel_map, spawn_rng

__all__ = [
    "__version__",
    "BudgetError", "ConfigError", "DiagnosticError",
    "Geography", "HeavyTail", "HierarchicalJump", "MigrationKernel",
    "NearestNeighbour", "build_kernel", "kernel_from_row",
    "transition_probability", "transition_row",
    "SeedBankProfile", "alternation_active_fraction", "wake_time_tail",
    "FisherWright", "OhtaKimura", "System", "SystemState", "TabulatedDiffusion",
    "Trajectory", "depth_moments", "diversity", "macroscopic", "make_state",
    "run", "validate_diffusion",
    "ACTIVE", "CoalescentHistory", "Event", "Lineage", "estimate_hazard",
    "hazard_exact", "joint_activity_bursts", "moment_dual_expectation",
    "pair_moment_dual", "run_coalescent",
    "EuclideanSetting", "FiniteRho", "HeavyTailSetting", "HierarchicalSetting",
    "InfiniteRho", "Modulated", "classify_example", "coexistence_integral",
    "renormalize_fw",
    "EnsembleResult", "FgEstimate", "LadderLevel", "RenewalResult",
    "TimeScaleReport", "TrappingResult", "accessibility_index",
    "clustering_diagnostics", "estimate_Fg", "fg_diffusion_reference",
    "finite_systems_run", "renewal_intersection", "run_ensemble", "time_scales",
    "trapping_time",
    "RunConfig", "build_system", "config_sha256", "echo", "parse_config",
    "derive_seed", "parallel_map", "spawn_rng",
]
