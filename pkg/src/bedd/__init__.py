"""Cooperative AUV localization from acoustic bearing, elevation, and
depth-difference measurements: Lie groups, factor graphs, a sparse
Levenberg-Marquardt solver, origin-state odometry sharing, an acoustic
channel simulation with a bit-exact frame codec, and a deterministic fleet
simulator with experiment tooling."""

from .acoustic import (
    AcousticMessage,
    Channel,
    ChannelConfig,
    Delivery,
    decode,
    encode,
    next_transmitter,
    sample_bearing,
)
from .factors import (
    BearingMeasurement,
    FactorKind,
    FactorRecord,
    NoiseModel,
    bearing_error,
    depth_error,
    factor_jacobian,
    odometry_error,
    orientation_error,
    predict_bearing,
    prior_error,
)
from .graph import FactorGraph, VariableKey, anchor_key, pose_key
from .liegroups import Pose3, Rot2, Rot3, compose, exp_map, group_error, inverse, log_map
from .metrics import ate, compute_metrics, relative_error, smoothed_relative_error
from .osm import (
    ChainSummary,
    CovarianceMode,
    compound_covariance,
    decompose,
    recover_covariance,
    summarize,
)
from .scenario import ScenarioConfig, TrajectorySpec, load_scenario, parse_scenario
from .fleetsim import GroundTruth, RunResult, generate_truth, run, sense
from .solver import SolveReport, SolverParams, marginal_covariance, optimize

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
