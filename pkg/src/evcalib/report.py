"""Calibration report serialization.

The report is deterministic JSON: sorted keys, native float repr, and the
remap table rounded to 1e-4 so equal runs produce equal bytes.
"""

from __future__ import annotations

import json

import numpy as np

from .calib import CalibrationResult, INTR_NAMES, undistort_rectify_map
from .events import SensorGeometry

HIST_EDGES = np.round(np.linspace(0.0, 2.0, 41), 4)


def residual_histogram(residuals) -> dict:
    """Histogram of per-correspondence residual norms.

    Norms beyond the last edge are clamped into the final bin so counts
    always sum to the number of correspondences.
    """
    norms = np.sqrt((np.asarray(residuals) ** 2).sum(axis=1)) if len(residuals) else np.zeros(0)
    clipped = np.minimum(norms, HIST_EDGES[-1])
    counts, _ = np.histogram(clipped, bins=HIST_EDGES)
    return {
        "edges": [float(e) for e in HIST_EDGES],
        "counts": [int(c) for c in counts],
    }


def build_report(result: CalibrationResult, geometry: SensorGeometry,
                 config_echo: dict) -> dict:
    intr = result.intrinsics
    map_x, map_y = undistort_rectify_map(intr, geometry.width, geometry.height)
    return {
        "intrinsics": {k: float(getattr(intr, k)) for k in INTR_NAMES},
        "rms_reproj": float(result.rms),
        "n_views": int(result.n_views),
        "per_view": [
            {"t": float(v.t), "rms": float(r)}
            for v, r in zip(result.views, result.per_view_rms)
        ],
        "residual_histogram": residual_histogram(result.residuals),
        "undistort_map": {
            "width": geometry.width,
            "height": geometry.height,
            "map_x": np.round(map_x, 4).tolist(),
            "map_y": np.round(map_y, 4).tolist(),
        },
        "config_echo": _plain(config_echo),
    }


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def render_report(result: CalibrationResult, geometry: SensorGeometry,
                  config_echo: dict) -> str:
    payload = build_report(result, geometry, config_echo)
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"


def write_report(path, result: CalibrationResult, geometry: SensorGeometry,
                 config_echo: dict) -> None:
    text = render_report(result, geometry, config_echo)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
