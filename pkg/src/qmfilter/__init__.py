"""Hybrid Monte Carlo matched filtering with simulated amplitude-encoding circuits."""

from .core import (
    EncodedSegment,
    SnrEstimate,
    SnrSeries,
    TimeSeries,
    ZeroNormError,
    corrected_snr,
    oracle_snr,
    predict_precision,
    preprocess,
)
from .encoding import AngleTree, CircuitDescription, Gate, angle_tree, build_loader, combine, resource_report
from .hybrid import (
    RelocationRule,
    SegmentPlan,
    compare_runs,
    estimate_snr,
    plan_segments,
    relocate,
)
from .simulator import NoiseModel, ShotHistogram, StateVector, apply_noise, sample, sample_ideal, simulate

__version__ = "0.1.0"

__all__ = [
    "AngleTree", "CircuitDescription", "EncodedSegment", "Gate", "NoiseModel",
    "RelocationRule", "SegmentPlan", "ShotHistogram", "SnrEstimate", "SnrSeries",
    "StateVector", "TimeSeries", "ZeroNormError", "angle_tree", "apply_noise",
    "build_loader", "combine", "compare_runs", "corrected_snr", "estimate_snr",
    "oracle_snr", "plan_segments", "predict_precision", "preprocess", "relocate",
    "resource_report", "sample", "sample_ideal", "simulate",
]
