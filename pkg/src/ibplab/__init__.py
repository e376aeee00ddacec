"""Monte Carlo laboratory for the interacting Indian buffet process."""

__version__ = "0.1.0"

from .params import Parameters, ParameterError, Lambda_t, lambda_t, validate  # noqa: E402
from .process import (ModelState, StepRecord, Trajectory, geometric_checkpoints,  # noqa: E402
                      inclusion_probability, init, simulate, state_from_counts, step,
                      step_naive)
from .observables import (AggregateRow, Regime, RegimeError, ScalingRule,  # noqa: E402
                          aggregates, classify_regime, clt_centering, scaling_rule)
from .ensemble import (EnsembleSummary, EstimationReport, clt_pipeline_dish,  # noqa: E402
                       clt_pipeline_mean, estimate_parameters, replica_seed,
                       run_ensemble, run_replicas)
from .stats import (convergence_diagnostic, lil_band_check, loglog_fit,  # noqa: E402
                    normality_check)

__all__ = [
    "Parameters", "ParameterError", "validate", "lambda_t", "Lambda_t",
    "ModelState", "StepRecord", "Trajectory", "init", "step", "step_naive",
    "simulate", "state_from_counts", "inclusion_probability", "geometric_checkpoints",
    "AggregateRow", "Regime", "RegimeError", "ScalingRule", "aggregates",
    "classify_regime", "scaling_rule", "clt_centering",
    "EnsembleSummary", "EstimationReport", "run_ensemble", "run_replicas",
    "replica_seed", "estimate_parameters", "clt_pipeline_mean", "clt_pipeline_dish",
    "normality_check", "lil_band_check", "loglog_fit", "convergence_diagnostic",
]
