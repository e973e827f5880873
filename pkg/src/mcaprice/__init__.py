"""Pricing and traffic equilibria for mobile collaborative internet access."""

from ._accel import backend
from .benchmarks import Comparison, compare_schemes, solve_ntp
from .cooperative import CoopResult, WelfareResult, solve_ft, solve_ropm, solve_swm
from .errors import (ConfigError, ConvexityError, DomainError, InfeasibleError, MCAError, RegimeError,
                     SolverError)
from .experiment import ExperimentConfig, Sweep, emit_results, run_experiment
from .outcome import EquilibriumOutcome, Scheme
from .price_competition import (MONOPOLY, PceOutcome, Regime, Region, classify_2x2_region,
                                classify_regime, multi_operator_pce, single_operator_pce, solve_pce,
                                verify_pce, zeta_table)
from .quantity_competition import QuantityProfile, competitive_scheme, find_qce
from .scenario import (Scenario, ScenarioConfig, TruncNormalSpec, filter_participants, load_scenario,
                       sample_scenario, save_scenario, validate)
from .upm import HybridPriceMatrix, TrafficSolution, solve_upm
from .utility import Family, UtilityFunction

__all__ = [
    "backend", "Comparison", "compare_schemes", "solve_ntp", "CoopResult", "WelfareResult", "solve_ft",
    "solve_ropm", "solve_swm", "ConfigError", "ConvexityError", "DomainError", "InfeasibleError",
    "MCAError", "RegimeError", "SolverError", "ExperimentConfig", "Sweep", "emit_results",
    "run_experiment", "EquilibriumOutcome", "Scheme", "MONOPOLY", "PceOutcome", "Regime", "Region",
    "classify_2x2_region", "classify_regime", "multi_operator_pce", "single_operator_pce", "solve_pce",
    "verify_pce", "zeta_table", "QuantityProfile", "competitive_scheme", "find_qce", "Scenario",
    "ScenarioConfig", "TruncNormalSpec", "filter_participants", "load_scenario", "sample_scenario",
    "save_scenario", "validate", "HybridPriceMatrix", "TrafficSolution", "solve_upm", "Family",
    "UtilityFunction",
]
