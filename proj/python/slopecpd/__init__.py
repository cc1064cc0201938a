"""Streaming multi-sensor slope change-point detection."""

from ._slopecpd import (
    AdaptiveParams,
    CalibrationResult,
    DetectionResult,
    Detector,
    DetectorConfig,
    DetectorStatus,
    SensorModel,
    SummaryStats,
    arl_approx,
    conservative_threshold,
    detrend,
    edd_bound,
    first_order_edd,
    fit_ttf_model,
    generate,
    predict_life,
    relative_error,
    simulate_arl,
    simulate_edd,
    soft_threshold_g,
    solve_threshold,
    whiten,
)

__version__ = "0.3.0"

__all__ = [name for name in dir() if not name.startswith("_")]
