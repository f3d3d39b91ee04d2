"""Joint continuous-time evolution of a growing social network and an
integer actor behavior: event-driven simulation, method-of-moments
estimation with stochastic approximation, exact small-chain oracles,
descriptive tables, and fixed-effects regression baselines."""

from .panel import (
    CovariateTable,
    DataError,
    LoadConfig,
    PanelDataset,
    behavior_change_table,
    bin_counts_to_levels,
    classify_activity,
    describe_network,
    load_dataset,
    network_change_table,
)
from .effects import (
    Effect,
    EffectContext,
    EffectSpec,
    TargetStatistics,
    actor_behavior_stats,
    actor_network_stats,
    behavior_range,
    evaluate_behavior_objective,
    evaluate_network_objective,
    moment_vector,
    target_statistics,
    wave_contexts,
)
from .simulate import (
    ChainState,
    ParameterVector,
    behavior_micro_step,
    choice_probabilities,
    network_micro_step,
    next_event,
    replicated_moments,
    simulate_panel,
    simulate_period,
)
from .estimate import (
    CollinearStatisticsError,
    EstimationConfig,
    EstimationDiverged,
    EstimationResult,
    convergence_check,
    estimate,
    initial_parameters,
    robbins_monro,
    standard_errors,
)
from .baselines import RegressionPanel, build_regression_panel, fe_ols, fe_poisson
from .synth import SynthesisConfig, synthesize_dataset

__version__ = "0.1.0"
