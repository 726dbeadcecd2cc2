"""Geometric opinion dynamics on the unit sphere."""

from .analysis import (
    cluster_partition,
    epsilon_activity,
    polarization_check,
    potential_min_corr,
    potential_triangle,
    separability,
    strict_convexity,
)
from .constructive import (
    InterventionScript,
    active_convexify,
    cluster_merge,
    convexify_2d,
    counterexample,
    drive_pair_close,
    greedy_inactivation,
    quadrant_2d,
)
from .engine import InterventionDistribution, SimulationParams, StopRule, apply_sequence, run, step
from .geometry import Configuration, correlation, correlation_matrix, normalize, sample_uniform_sphere
from .update_rules import UpdateSpec, apply_update, classify, evaluate, predicted_correlation, slerp_update

__all__ = [
    "Configuration", "InterventionDistribution", "InterventionScript", "SimulationParams", "StopRule", "UpdateSpec",
    "active_convexify", "apply_sequence", "apply_update", "classify", "cluster_merge", "cluster_partition",
    "convexify_2d", "correlation", "correlation_matrix", "counterexample", "drive_pair_close", "epsilon_activity",
    "evaluate", "greedy_inactivation", "normalize", "polarization_check", "potential_min_corr", "potential_triangle",
    "predicted_correlation", "quadrant_2d", "run", "sample_uniform_sphere", "separability", "slerp_update", "step",
    "strict_convexity",
]
