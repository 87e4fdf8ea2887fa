"""Herd vigilance scoring, mission replay and metrics."""

from ._core import (
    MAX_THETA_S,
    MIN_THETA_S,
    Trace,
    TraceError,
    compare,
    instantaneous_level,
    metrics,
    replay,
    score_frame,
    validate,
)

__all__ = [
    "MAX_THETA_S",
    "MIN_THETA_S",
    "Trace",
    "TraceError",
    "compare",
    "instantaneous_level",
    "metrics",
    "replay",
    "score_frame",
    "validate",
]
__version__ = "0.1.0"
