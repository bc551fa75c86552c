"""Mouse-movement paradata analytics for web surveys.

Reconstructs cursor trajectories from client-side event logs, computes
mouse-tracking measures, personalizes them against respondents' baseline
behavior, and evaluates difficulty classifiers under a nested
cross-validation protocol. A synthetic session generator with known
ground truth stands in for live survey data.
"""

__version__ = "0.1.0"

from mousepara.records import (
    CursorEvent,
    Trajectory,
    QuestionRecord,
    ExclusionConfig,
    ExclusionReport,
    parse_event_log,
    apply_exclusions,
)
from mousepara.measures import MeasureSet, extract_measures, DEFAULT_HOVER_THRESHOLDS

__all__ = [
    "CursorEvent",
    "Trajectory",
    "QuestionRecord",
    "ExclusionConfig",
    "ExclusionReport",
    "parse_event_log",
    "apply_exclusions",
    "MeasureSet",
    "extract_measures",
    "DEFAULT_HOVER_THRESHOLDS",
    "__version__",
]
