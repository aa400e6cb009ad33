"""Shared fixtures.

The synthetic wobble sequences are expensive (simulation plus full
detection), so they are built once per session. Everything derived from
them must treat the arrays as read-only.
"""

import types

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from evcalib.calib import Pose, ViewObservation, project
from evcalib.grid import BoardSpec, board_points
from evcalib.pipeline import DetectorParams, detect_views
from evcalib import sim as simlib

SHORT_SECONDS = 2.4
SHORT_SEED = 5

# "moderate" synthetic noise tier used across the suite: a background rate
# comparable to the signal rate plus timestamp jitter well above the
# simulator substep
MODERATE_NOISE_RATE = 1.0  # events / pixel / second
MODERATE_JITTER = 1e-4  # seconds


def build_short_scenario(noisy: bool, duration: float = SHORT_SECONDS,
                         seed: int = SHORT_SEED):
    kwargs = {}
    if noisy:
        kwargs = {"noise_rate": MODERATE_NOISE_RATE,
                  "jitter_sigma": MODERATE_JITTER}
    return simlib.make_wobble_scenario(duration, seed=seed, **kwargs)


def run_scenario(scenario):
    """Simulate and detect; returns a namespace used by many tests."""
    sim_ev, truth_rows = simlib.simulate_scenario(scenario)
    detections = detect_views(sim_ev.events, scenario.geometry,
                              scenario.board, DetectorParams())
    return types.SimpleNamespace(
        scenario=scenario,
        trajectory=scenario.trajectory(),
        sim=sim_ev,
        events=sim_ev.events,
        truth_rows=truth_rows,
        detections=detections,
    )


@pytest.fixture(scope="session")
def clean_run():
    """Noise-free short wobble sequence plus its detections."""
    return run_scenario(build_short_scenario(noisy=False))


@pytest.fixture(scope="session")
def noisy_run():
    """Moderate-noise short wobble sequence plus its detections."""
    return run_scenario(build_short_scenario(noisy=True))


def write_board_file(path, board: BoardSpec) -> None:
    path.write_text(
        f"rows = {board.rows}\n"
        f"cols = {board.cols}\n"
        f"spacing_m = {board.spacing}\n"
        f"circle_radius_m = {board.circle_radius}\n",
        encoding="utf-8",
    )


@pytest.fixture(scope="session")
def board4x11() -> BoardSpec:
    return BoardSpec(rows=4, cols=11, spacing=0.05, circle_radius=0.0125)


@pytest.fixture(scope="session")
def board_file(tmp_path_factory, board4x11):
    path = tmp_path_factory.mktemp("board") / "board.txt"
    write_board_file(path, board4x11)
    return path


def make_synthetic_views(n_views: int = 60, noise: float = 0.0,
                         seed: int = 0,
                         intrinsics=simlib.DEFAULT_TRUTH,
                         board: BoardSpec | None = None):
    """Deterministic synthetic board views for calibration-level tests.

    Poses sweep tilt, yaw, roll and translation widely enough that the
    closed-form initialization is well conditioned. Optional Gaussian pixel
    noise is added to the image points. Returns (views, poses).
    """
    if board is None:
        board = BoardSpec(rows=4, cols=11, spacing=0.05, circle_radius=0.0125)
    pts3 = board_points(board)
    centroid = pts3.mean(axis=0)
    rng = np.random.default_rng(seed)
    views, poses = [], []
    for i in range(n_views):
        u = 2.0 * np.pi * i / n_views
        rot = Rotation.from_rotvec([
            0.45 * np.sin(3.0 * u + 0.3),
            0.35 * np.cos(2.0 * u + 1.1),
            0.50 * np.sin(u + 0.7),
        ]).as_matrix()
        target = np.array([0.05 * np.sin(u),
                           0.04 * np.cos(3.0 * u),
                           0.65 + 0.08 * np.sin(2.0 * u)])
        pose = Pose(rot, target - rot @ centroid)
        assert np.all(pose.transform(pts3)[:, 2] > 0.1)
        img = project(pts3, pose, intrinsics)
        if noise > 0.0:
            img = img + rng.normal(0.0, noise, img.shape)
        views.append(ViewObservation(t=float(i), image_points=img,
                                     object_points=pts3))
        poses.append(pose)
    return views, poses


@pytest.fixture(scope="session")
def synthetic_views_clean():
    return make_synthetic_views(n_views=60, noise=0.0, seed=0)
