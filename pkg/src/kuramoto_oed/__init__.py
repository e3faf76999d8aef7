"""Objective-based uncertainty quantification and experiment design for
uncertain Kuramoto oscillator networks."""

__version__ = "0.1.0"

from .model import (
    KuramotoModel,
    SimConfig,
    Trajectory,
    augment_with_control,
    detect_sync,
    integrate_rk4,
    order_parameter,
)
from .uncertainty import (
    ExperimentOutcome,
    UncertaintyClass,
    build_paper_class,
    outcome_probability,
    pairwise_sync_threshold,
    sample,
    update_class,
)

__all__ = [
    "KuramotoModel",
    "SimConfig",
    "Trajectory",
    "augment_with_control",
    "detect_sync",
    "integrate_rk4",
    "order_parameter",
    "UncertaintyClass",
    "ExperimentOutcome",
    "build_paper_class",
    "pairwise_sync_threshold",
    "outcome_probability",
    "update_class",
    "sample",
]
