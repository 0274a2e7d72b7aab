"""Collaborative wireless sensing: exact BLUE distortion analysis and
power-constrained optimization of the observation-mixing stage.

The package models a field of sensors that linearly share raw observations
before transmitting to a fusion center over noisy channels, computes the
best linear unbiased estimator and its exact distortion, optimizes the
sparsity-patterned mixing matrix under a cumulative transmit-power budget,
and validates every analytic quantity with an independent Monte Carlo pass.
"""

from .errors import (
    CollabSenseError,
    ConfigurationError,
    ContractError,
    EstimationError,
    ModelError,
)
from .estimator import (
    CONDITION_LIMIT,
    EstimationReport,
    MixingMatrix,
    blue_covariance,
    blue_estimate,
    fisher_information,
    fisher_information_woodbury,
    surrogate_objective,
    transmit_power,
)
from .experiment import (
    ExperimentConfig,
    FieldConfig,
    SolverSettings,
    SweepResult,
    SweepRow,
    ValidationConfig,
    config_from_dict,
    config_from_file,
    emit_results,
    paper_defaults,
    run_experiment,
)
from .montecarlo import TrialBatch, psd_factor, run_trials, sample_gaussian
from .network import (
    AdjacencyMatrix,
    CovarianceMatrix,
    CovarianceSpec,
    EquicorrelatedSpec,
    SensorField,
    SignalCovarianceSpec,
    equicorrelated_covariance,
    generate_field,
    nearest_neighbor_adjacency,
    signal_covariance,
)
from .optimizer import (
    SolverConfig,
    SolverResult,
    StepRule,
    aligned_initial_mixing,
    information_deficit,
    information_deficit_gradient,
    optimize_mixing,
    project_to_power,
    schur_feasibility_block,
)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyMatrix",
    "CONDITION_LIMIT",
    "CollabSenseError",
    "ConfigurationError",
    "ContractError",
    "CovarianceMatrix",
    "CovarianceSpec",
    "EquicorrelatedSpec",
    "EstimationError",
    "EstimationReport",
    "ExperimentConfig",
    "FieldConfig",
    "MixingMatrix",
    "ModelError",
    "SensorField",
    "SignalCovarianceSpec",
    "SolverConfig",
    "SolverResult",
    "SolverSettings",
    "StepRule",
    "SweepResult",
    "SweepRow",
    "TrialBatch",
    "ValidationConfig",
    "aligned_initial_mixing",
    "blue_covariance",
    "blue_estimate",
    "config_from_dict",
    "config_from_file",
    "emit_results",
    "equicorrelated_covariance",
    "fisher_information",
    "fisher_information_woodbury",
    "generate_field",
    "information_deficit",
    "information_deficit_gradient",
    "nearest_neighbor_adjacency",
    "optimize_mixing",
    "paper_defaults",
    "project_to_power",
    "psd_factor",
    "run_experiment",
    "run_trials",
    "sample_gaussian",
    "schur_feasibility_block",
    "signal_covariance",
    "surrogate_objective",
    "transmit_power",
]
