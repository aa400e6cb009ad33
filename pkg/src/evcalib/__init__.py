"""Event-camera intrinsic calibration from circle-grid event streams.

The pipeline: raw events are sliced into fixed windows; each window keeps
the latest event per pixel, estimates per-pixel normal flow by RANSAC
plane fits in the local space-time neighborhood, groups same-polarity
events into clusters, pairs opposite-polarity clusters that chase each
other along the flow, fits a time-varying ellipse to each pair, and
orders the sampled centers into the asymmetric grid. Recognized views
feed closed-form intrinsic initialization, planar PnP, and a robust
bundle adjustment. A deterministic event simulator provides ground truth
for testing.
"""

from ._kernels import BACKEND
from .calib import (
    CalibOptions,
    CalibrationResult,
    Intrinsics,
    Pose,
    ViewObservation,
    calibrate_views,
    init_intrinsics,
    project,
    solve_pnp_planar,
)
from .clustering import ClusterLabel, ClusterParams, cluster_homopolar, match_clusters
from .ellipse import EllipseFitParams, TimeVaryingEllipse, fit_time_varying_ellipse
from .events import (
    DAVIS346,
    Events,
    SensorGeometry,
    StreamFormatError,
    load_events,
    parse_event_stream,
    window_events,
    write_events,
)
from .flow import FlowParams, estimate_flows
from .grid import BoardSpec, GridMatch, board_points, find_grid, load_board_spec
from .pipeline import DetectorParams, WindowDetection, detect_views, recognize_window
from .sim import (
    Keyframe,
    Scenario,
    SimConfig,
    SimulatedEvents,
    Trajectory,
    ground_truth_centers,
    make_wobble_scenario,
    render_edge_events,
    simulate_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BoardSpec",
    "CalibOptions",
    "CalibrationResult",
    "ClusterLabel",
    "ClusterParams",
    "DAVIS346",
    "DetectorParams",
    "EllipseFitParams",
    "Events",
    "FlowParams",
    "GridMatch",
    "Intrinsics",
    "Keyframe",
    "Pose",
    "Scenario",
    "SensorGeometry",
    "SimConfig",
    "SimulatedEvents",
    "StreamFormatError",
    "TimeVaryingEllipse",
    "Trajectory",
    "ViewObservation",
    "WindowDetection",
    "board_points",
    "calibrate_views",
    "cluster_homopolar",
    "detect_views",
    "estimate_flows",
    "find_grid",
    "fit_time_varying_ellipse",
    "ground_truth_centers",
    "init_intrinsics",
    "load_board_spec",
    "load_events",
    "make_wobble_scenario",
    "match_clusters",
    "parse_event_stream",
    "project",
    "recognize_window",
    "render_edge_events",
    "simulate_scenario",
    "solve_pnp_planar",
    "window_events",
    "write_events",
    "__version__",
]
