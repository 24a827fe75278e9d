"""Sequential detection of transient mean shifts in one- and N-channel
streams: streaming charts, closed-form FDP/POD approximations, threshold
calibration and a stationary-start Monte Carlo engine."""

from .approx import (ApproxResult, EwmaArg, Overshoot, OvershootConvention, delay_moments,
                     fdp, fdp_1d, fdp_glr_unwindowed, fdp_mv, nu, pod_approx)
from .calibrate import Calibration, NoBracket, calibrate_mc, solve_threshold
from .charts1d import AlarmRun, StepDecision, run_first_alarm, step_1d
from .core import (Asymmetric, ChartKind, ChartSpec, CovarianceModel, DimensionMismatch,
                   DomainError, EstimateWithError, InvalidSpec, NotPositiveDefinite,
                   ScenarioSpec, TransientScanError, UnsupportedKind, build_whitener,
                   identity_model, whiten)
from .ingest import (Panel, estimate_covariance, load_panel, standardized_returns)
from .mc import (SimConfig, WarmUp, estimate_fdp, estimate_pod, estimate_pod_grid,
                 reproduce_table)
from .mv_charts import Hard, Soft, step_mv, threshold_stat

__all__ = [
    "AlarmRun", "ApproxResult", "Asymmetric", "Calibration", "ChartKind", "ChartSpec",
    "CovarianceModel", "DimensionMismatch", "DomainError", "EstimateWithError", "EwmaArg",
    "Hard", "InvalidSpec", "NoBracket", "NotPositiveDefinite", "Overshoot",
    "OvershootConvention", "Panel", "ScenarioSpec", "SimConfig", "Soft", "StepDecision",
    "TransientScanError", "UnsupportedKind", "WarmUp", "build_whitener", "calibrate_mc",
    "delay_moments", "estimate_covariance", "estimate_fdp", "estimate_pod",
    "estimate_pod_grid", "fdp", "fdp_1d", "fdp_glr_unwindowed", "fdp_mv", "identity_model",
    "load_panel", "nu", "pod_approx", "reproduce_table", "run_first_alarm",
    "solve_threshold", "standardized_returns", "step_1d", "step_mv", "threshold_stat",
    "whiten",
]
