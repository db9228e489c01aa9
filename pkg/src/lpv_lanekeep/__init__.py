"""Gain-scheduled (LPV) lane keeping with PCA-reduced scheduling and a rollover speed cap."""

from .controller import (ScheduledController, SynthesisConfig, SynthesisError, SynthesisResult,
                         estimate_gamma, lti_gain, synthesize_vertex_gains, verify_theorem1)
from .polytope import Polytope, convex_coordinates, membership, select_simplex
from .scheduling import (PcaReduction, Trajectory, assemble_system, build_theta, normalize,
                         pca_reduce, reconstruct, reduce_point)
from .simulator import RoadProfile, SimConfig, run
from .vehicle_model import VehicleParams, desired_speed, lateral_matrices

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "VehicleParams",
    "desired_speed",
    "lateral_matrices",
    "PcaReduction",
    "Trajectory",
    "assemble_system",
    "build_theta",
    "normalize",
    "pca_reduce",
    "reconstruct",
    "reduce_point",
    "Polytope",
    "convex_coordinates",
    "membership",
    "select_simplex",
    "ScheduledController",
    "SynthesisConfig",
    "SynthesisError",
    "SynthesisResult",
    "estimate_gamma",
    "lti_gain",
    "synthesize_vertex_gains",
    "verify_theorem1",
    "RoadProfile",
    "SimConfig",
    "run",
]
