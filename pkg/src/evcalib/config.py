"""Run configuration: dotted-key text files plus CLI overrides.

Config files are `key = value` lines; `#` starts a comment. Keys are
namespaced by module (`flow.radius`, `cluster.theta_thd`, ...). Unknown
keys are errors: a typo silently reverting a knob to its default is worse
than a parse failure. CLI flags override file values; the effective set,
defaults included, is echoed verbatim into the report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .calib import CalibOptions
from .clustering import ClusterParams
from .ellipse import EllipseFitParams
from .events import SensorGeometry
from .flow import FlowParams
from .pipeline import DetectorParams

_SCHEMA: dict[str, type] = {
    "window_len": float,
    "seed": int,
    "geometry.width": int,
    "geometry.height": int,
    "flow.radius": int,
    "flow.ransac_iters": int,
    "flow.inlier_thresh_frac": float,
    "flow.inlier_thresh_floor": float,
    "flow.min_points": int,
    "flow.inlier_rate_min": float,
    "cluster.min_size": int,
    "cluster.theta_thd": float,
    "ellipse.min_events": int,
    "ellipse.max_iters": int,
    "ellipse.tol": float,
    "ellipse.min_axis_px": float,
    "grid.gate_px": float,
    "grid.iterations": int,
    "calib.n_trials": int,
    "calib.views_per_trial": int,
    "calib.huber_delta": float,
    "calib.max_iters": int,
    "calib.tol": float,
    "calib.max_views": int,
    "calib.min_views": int,
}

_DETECTOR = DetectorParams()

_DEFAULTS: dict[str, object] = {
    "window_len": _DETECTOR.window_len,
    "seed": 0,
    "geometry.width": 346,
    "geometry.height": 260,
    "flow.radius": _DETECTOR.flow.radius,
    "flow.ransac_iters": _DETECTOR.flow.ransac_iters,
    "flow.inlier_thresh_frac": _DETECTOR.flow.inlier_thresh_frac,
    "flow.inlier_thresh_floor": _DETECTOR.flow.inlier_thresh_floor,
    "flow.min_points": _DETECTOR.flow.min_points,
    "flow.inlier_rate_min": _DETECTOR.flow.inlier_rate_min,
    "cluster.min_size": _DETECTOR.cluster.min_size,
    "cluster.theta_thd": _DETECTOR.cluster.theta_thd,
    "ellipse.min_events": _DETECTOR.ellipse.min_events,
    "ellipse.max_iters": _DETECTOR.ellipse.max_iters,
    "ellipse.tol": _DETECTOR.ellipse.tol,
    "ellipse.min_axis_px": _DETECTOR.ellipse.min_axis_px,
    "grid.gate_px": _DETECTOR.grid_gate_px,
    "grid.iterations": _DETECTOR.grid_iterations,
    "calib.n_trials": CalibOptions.n_trials,
    "calib.views_per_trial": CalibOptions.views_per_trial,
    "calib.huber_delta": CalibOptions.huber_delta,
    "calib.max_iters": CalibOptions.max_iters,
    "calib.tol": CalibOptions.tol,
    "calib.max_views": CalibOptions.max_views,
    "calib.min_views": 10,
}


def parse_config_text(text: str) -> dict[str, object]:
    """Parse dotted-key config text into typed values."""
    out: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _SCHEMA:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        try:
            out[key] = _SCHEMA[key](val.strip())
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: bad value for {key!r}") from exc
    return out


def load_config_file(path) -> dict[str, object]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


@dataclass
class RunConfig:
    """Effective parameter set for one CLI run."""

    events_path: str = ""
    board_path: str = ""
    out_path: str = "report.json"
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = dict(_DEFAULTS)
        for key, val in self.values.items():
            if key not in _SCHEMA:
                raise ValueError(f"unknown config key {key!r}")
            merged[key] = _SCHEMA[key](val)
        if merged["window_len"] <= 0:
            raise ValueError("window_len must be positive")
        self.values = merged

    def __getitem__(self, key: str):
        return self.values[key]

    def geometry(self) -> SensorGeometry:
        return SensorGeometry(self["geometry.width"], self["geometry.height"])

    def detector_params(self) -> DetectorParams:
        v = self.values
        return DetectorParams(
            window_len=v["window_len"],
            flow=FlowParams(
                radius=v["flow.radius"],
                ransac_iters=v["flow.ransac_iters"],
                inlier_thresh_frac=v["flow.inlier_thresh_frac"],
                inlier_thresh_floor=v["flow.inlier_thresh_floor"],
                min_points=v["flow.min_points"],
                inlier_rate_min=v["flow.inlier_rate_min"],
                seed=v["seed"],
            ),
            cluster=ClusterParams(
                min_size=v["cluster.min_size"],
                theta_thd=v["cluster.theta_thd"],
            ),
            ellipse=EllipseFitParams(
                min_events=v["ellipse.min_events"],
                max_iters=v["ellipse.max_iters"],
                tol=v["ellipse.tol"],
                min_axis_px=v["ellipse.min_axis_px"],
            ),
            grid_gate_px=v["grid.gate_px"],
            grid_iterations=v["grid.iterations"],
            seed=v["seed"],
        )

    def calib_options(self) -> CalibOptions:
        v = self.values
        return CalibOptions(
            n_trials=v["calib.n_trials"],
            views_per_trial=v["calib.views_per_trial"],
            huber_delta=v["calib.huber_delta"],
            max_iters=v["calib.max_iters"],
            tol=v["calib.tol"],
            seed=v["seed"],
            max_views=v["calib.max_views"],
        )

    def echo(self, **extra) -> dict:
        """Every effective parameter, for the report's config_echo."""
        out = {key: self.values[key] for key in sorted(self.values)}
        out["events"] = self.events_path
        out["board"] = self.board_path
        out["out"] = self.out_path
        out.update(extra)
        return out
