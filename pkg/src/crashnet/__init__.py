"""Crash detection by Hilbert-spectrum energy and partial-correlation
threshold networks over multi-asset daily closes."""

from .costats import daily_returns, mean_offdiagonal, partial_corr_matrix, pearson_matrix
from .emd import ImfSet, SiftConfig, decompose, sift
from .errors import (
    ConfigError,
    CrashnetError,
    DataError,
    NoCrashDetected,
    NotACrash,
    NotEnoughExtrema,
    NumericalError,
    SingularCorrelation,
)
from .hspec import (
    CrashConfig,
    analytic_signal,
    detect_crash,
    detection_energy,
    hilbert_spectrum,
    instantaneous_energy,
    partition_periods,
)
from .ingest import DateWindow, MissingPolicy, PricePanel, PriceSeries, align_panel, load_price_csv, slice_period
from .netbuild import build_network, percentile_threshold
from .netmetrics import metrics_report
from .pipeline import RunConfig, run_pipeline
from .synth import RegimeSpec, generate_panel

__version__ = "0.1.0"


__all__ = [
    "align_panel",
    "analytic_signal",
    "build_network",
    "ConfigError",
    "CrashConfig",
    "CrashnetError",
    "daily_returns",
    "DataError",
    "DateWindow",
    "decompose",
    "detect_crash",
    "detection_energy",
    "generate_panel",
    "hilbert_spectrum",
    "ImfSet",
    "instantaneous_energy",
    "load_price_csv",
    "mean_offdiagonal",
    "metrics_report",
    "MissingPolicy",
    "NoCrashDetected",
    "NotACrash",
    "NotEnoughExtrema",
    "NumericalError",
    "partial_corr_matrix",
    "partition_periods",
    "pearson_matrix",
    "percentile_threshold",
    "PricePanel",
    "PriceSeries",
    "RegimeSpec",
    "run_pipeline",
    "RunConfig",
    "sift",
    "SiftConfig",
    "SingularCorrelation",
    "slice_period",
]
