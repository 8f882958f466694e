"""State-space simulation, filtering, and estimation for EMA time series."""

from .dataset import EmaDataset, Participant, datasets_equal
from .dataio import (TimeCovariate, augment_night_gaps, encode_time_covariates,
                     read_dataset, write_dataset)
from .errors import EmaError
from .estimate import (ComparisonTable, FitOptions, FitResult, ParameterMap,
                       compare_disturbance_codings, fit, information_criteria,
                       rank_fits)
from .filtering import (FilterResult, SmoothResult, kalman_filter,
                        kalman_filter_ct, kalman_smooth, particle_filter)
from .figures import figure_series, thinning_rmse
from .model import (MeasurementChannel, ModelSpec, ValidationReport, discretize,
                    nyquist_check, stationary_moments, to_continuous,
                    validate_model)
from .simulate import (DisturbanceEvent, MissingnessSpec, PingSchedule, Regime,
                       RegimeSchedule, Scenario, TrendSpec, TvpSchedule,
                       encode_disturbance, generate_schedule, inject_missingness,
                       run_scenario, scenario_from_dict, simulate_dataset)

__version__ = "0.1.0"

__all__ = [
    "EmaDataset", "Participant", "datasets_equal",
    "TimeCovariate", "augment_night_gaps", "encode_time_covariates",
    "read_dataset", "write_dataset",
    "EmaError",
    "ComparisonTable", "FitOptions", "FitResult", "ParameterMap",
    "compare_disturbance_codings", "fit", "information_criteria", "rank_fits",
    "FilterResult", "SmoothResult", "kalman_filter", "kalman_filter_ct",
    "kalman_smooth", "particle_filter",
    "figure_series", "thinning_rmse",
    "MeasurementChannel", "ModelSpec", "ValidationReport", "discretize",
    "nyquist_check", "stationary_moments", "to_continuous", "validate_model",
    "DisturbanceEvent", "MissingnessSpec", "PingSchedule", "Regime",
    "RegimeSchedule", "Scenario", "TrendSpec", "TvpSchedule",
    "encode_disturbance", "generate_schedule", "inject_missingness",
    "run_scenario", "scenario_from_dict", "simulate_dataset",
]
