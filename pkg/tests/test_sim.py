"""Synthetic event generator: trajectories, edge events, scenarios.

The renderer is the verification oracle for the rest of the pipeline, so
its own tests stick to first principles: ray-plane geometry, exact edge
crossing times, and provenance tags.
"""

import math

import numpy as np
import pytest

from evcalib.calib import Intrinsics, Pose, project
from evcalib.events import SensorGeometry
from evcalib.grid import BoardSpec, board_points
from evcalib.sim import (
    DEFAULT_TRUTH,
    NOISE_CIRCLE,
    Keyframe,
    Scenario,
    SimConfig,
    Trajectory,
    ground_truth_centers,
    load_scenario,
    make_wobble_scenario,
    render_edge_events,
    render_translating_edge,
    save_scenario,
    simulate_scenario,
    write_truth,
)

GEOM = SensorGeometry(346, 260)


@pytest.fixture(scope="module")
def short_sim():
    scenario = make_wobble_scenario(0.4, seed=3)
    sim_ev, rows = simulate_scenario(scenario)
    return scenario, sim_ev, rows


class TestTrajectory:
    def test_single_keyframe_is_constant(self):
        pose = Pose.from_rotvec([0.1, 0.0, 0.2], [0.0, 0.0, 0.5])
        traj = Trajectory([Keyframe(0.0, pose)])
        got = traj.pose_at(0.0)
        np.testing.assert_array_equal(got.rotation, pose.rotation)

    def test_translation_lerps(self):
        a = Pose.identity()
        b = Pose(np.eye(3), np.array([1.0, -2.0, 4.0]))
        traj = Trajectory([Keyframe(0.0, a), Keyframe(2.0, b)])
        np.testing.assert_allclose(traj.pose_at(0.5).translation,
                                   [0.25, -0.5, 1.0])

    def test_rotation_slerps(self):
        a = Pose.identity()
        b = Pose.from_rotvec([0.0, 0.0, 0.8], np.zeros(3))
        traj = Trajectory([Keyframe(0.0, a), Keyframe(1.0, b)])
        mid = traj.pose_at(0.5)
        np.testing.assert_allclose(mid.rotvec(), [0.0, 0.0, 0.4], atol=1e-12)

    def test_keyframes_sorted_on_input(self):
        a = Keyframe(1.0, Pose.identity())
        b = Keyframe(0.0, Pose(np.eye(3), np.array([1.0, 0, 0])))
        traj = Trajectory([a, b])
        assert traj.t_start == 0.0 and traj.t_end == 1.0

    def test_rejects_bad_keyframes(self):
        with pytest.raises(ValueError):
            Trajectory([])
        k = Keyframe(0.0, Pose.identity())
        with pytest.raises(ValueError, match="increasing"):
            Trajectory([k, k])

    def test_out_of_span_raises(self):
        traj = Trajectory([Keyframe(0.0, Pose.identity()),
                           Keyframe(1.0, Pose.identity())])
        with pytest.raises(ValueError, match="span"):
            traj.pose_at(1.5)


class TestSimConfig:
    @pytest.mark.parametrize("kwargs", [
        {"contrast_threshold": 0.0},
        {"noise_rate": -1.0},
        {"jitter_sigma": -0.1},
        {"substep": 0.0},
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            SimConfig(**kwargs)


class TestRenderedStream:
    def test_sorted_and_in_frame(self, short_sim):
        scenario, sim_ev, _ = short_sim
        ev = sim_ev.events
        assert len(ev) > 10000
        assert np.all(np.diff(ev.t) >= 0)
        assert ev.x.min() >= 0 and ev.x.max() < scenario.geometry.width
        assert ev.y.min() >= 0 and ev.y.max() < scenario.geometry.height
        assert set(np.unique(ev.p)) <= {-1, 1}

    def test_tags_cover_board(self, short_sim):
        scenario, sim_ev, _ = short_sim
        n = scenario.board.rows * scenario.board.cols
        assert np.all(sim_ev.signal_mask)  # clean run: no noise tags
        assert set(np.unique(sim_ev.circle_index)) == set(range(n))
        # darkening edge fires p = -1 and side tracks it
        np.testing.assert_array_equal(sim_ev.side, sim_ev.events.p)

    def test_events_on_circle_contours(self, short_sim):
        scenario, sim_ev, _ = short_sim
        traj = scenario.trajectory()
        board = scenario.board
        pts = board_points(board)
        theta = np.linspace(0.0, 2.0 * math.pi, 96, endpoint=False)
        rim = np.stack([np.cos(theta), np.sin(theta),
                        np.zeros_like(theta)], axis=1) * board.circle_radius
        rng = np.random.default_rng(0)
        pick = rng.choice(len(sim_ev), size=400, replace=False)
        worst = 0.0
        for k in pick:
            t = sim_ev.events.t[k]
            ci = sim_ev.circle_index[k]
            contour = project(pts[ci] + rim, traj.pose_at(t),
                              scenario.intrinsics)
            d = np.hypot(contour[:, 0] - sim_ev.events.x[k],
                         contour[:, 1] - sim_ev.events.y[k]).min()
            worst = max(worst, d)
        # pixel quantization + substep motion bound the gap
        assert worst <= 1.5

    def test_deterministic(self):
        scenario = make_wobble_scenario(0.25, seed=9, noise_rate=0.5,
                                        jitter_sigma=1e-4)
        a, _ = simulate_scenario(scenario)
        b, _ = simulate_scenario(scenario)
        np.testing.assert_array_equal(a.events.t, b.events.t)
        np.testing.assert_array_equal(a.events.x, b.events.x)
        np.testing.assert_array_equal(a.events.p, b.events.p)
        np.testing.assert_array_equal(a.circle_index, b.circle_index)

    def test_noise_events_tagged_and_poisson(self):
        rate, dur = 2.0, 0.3
        scenario = make_wobble_scenario(dur, seed=11, noise_rate=rate)
        sim_ev, _ = simulate_scenario(scenario)
        noise = ~sim_ev.signal_mask
        lam = rate * scenario.geometry.n_pixels * dur
        assert abs(noise.sum() - lam) <= 6.0 * math.sqrt(lam)
        assert np.all(sim_ev.side[noise] == 0)
        assert np.all(sim_ev.side[~noise] != 0)
        assert np.all(sim_ev.circle_index[noise] == NOISE_CIRCLE)

    def test_jitter_perturbs_but_keeps_sorted(self):
        base = make_wobble_scenario(0.2, seed=4)
        jit = make_wobble_scenario(0.2, seed=4, jitter_sigma=2e-4)
        ev0, _ = simulate_scenario(base)
        ev1, _ = simulate_scenario(jit)
        assert len(ev0) == len(ev1)
        assert np.all(np.diff(ev1.events.t) >= 0)
        assert not np.array_equal(np.sort(ev0.events.t),
                                  np.sort(ev1.events.t))
        assert ev1.events.t.min() >= 0.0
        assert ev1.events.t.max() <= jit.t_end

    def test_static_board_emits_nothing(self):
        pose = Pose(np.eye(3), np.array([-0.25, -0.08, 0.65]))
        scenario = make_wobble_scenario(0.3, seed=1)
        scenario.keyframes = [Keyframe(0.0, pose), Keyframe(0.5, pose)]
        sim_ev, _ = simulate_scenario(scenario)
        assert len(sim_ev) == 0

    def test_threshold_above_contrast_emits_nothing(self):
        scenario = make_wobble_scenario(0.2, seed=2)
        scenario.sim = SimConfig(contrast_threshold=1.5)
        sim_ev, _ = simulate_scenario(scenario)
        assert len(sim_ev) == 0

    def test_render_span_must_fit_trajectory(self):
        scenario = make_wobble_scenario(0.2, seed=2)
        with pytest.raises(ValueError, match="span"):
            render_edge_events(scenario.board, scenario.trajectory(),
                               scenario.intrinsics, scenario.geometry,
                               scenario.sim, 0.0, 99.0)


class TestGroundTruth:
    def test_centers_are_projected_board_points(self, short_sim):
        scenario, _, _ = short_sim
        traj = scenario.trajectory()
        t = 0.123
        got = ground_truth_centers(scenario.board, traj,
                                   scenario.intrinsics, t)
        want = project(board_points(scenario.board), traj.pose_at(t),
                       scenario.intrinsics)
        np.testing.assert_array_equal(got, want)

    def test_board_behind_camera_raises(self):
        pose = Pose(np.eye(3), np.array([0.0, 0.0, -0.5]))
        traj = Trajectory([Keyframe(0.0, pose)])
        board = BoardSpec(rows=4, cols=11, spacing=0.05, circle_radius=0.0125)
        with pytest.raises(ValueError, match="behind"):
            ground_truth_centers(board, traj, DEFAULT_TRUTH, 0.0)

    def test_truth_rows_at_window_midpoints(self, short_sim):
        scenario, _, rows = short_sim
        n = scenario.board.rows * scenario.board.cols
        n_win = int(math.floor(
            (scenario.t_end - scenario.t_start) / scenario.truth_dt + 1e-9))
        assert len(rows) == n_win * n
        ts = sorted({r[0] for r in rows})
        np.testing.assert_allclose(
            ts, [(i + 0.5) * scenario.truth_dt for i in range(n_win)])
        t0, ci, cx, cy = rows[7]
        want = ground_truth_centers(scenario.board, scenario.trajectory(),
                                    scenario.intrinsics, t0)[ci]
        np.testing.assert_allclose([cx, cy], want)

    def test_wobble_keeps_grid_in_frame(self, short_sim):
        scenario, _, rows = short_sim
        arr = np.array([(r[2], r[3]) for r in rows])
        assert arr[:, 0].min() >= 0 and arr[:, 0].max() <= GEOM.width - 1
        assert arr[:, 1].min() >= 0 and arr[:, 1].max() <= GEOM.height - 1


class TestTranslatingEdge:
    def test_crossing_times_exact(self):
        geom = SensorGeometry(40, 8)
        ev, flow = render_translating_edge(geom, 100.0, 0.0, 1.0)
        np.testing.assert_array_equal(flow, [100.0, 0.0])
        assert np.all(ev.p == -1)
        # each live column fires all rows at t = (x + 0.5) / speed
        for col in (0, 7, 39):
            sel = ev.x == col
            assert sel.sum() == geom.height
            np.testing.assert_allclose(ev.t[sel], (col + 0.5) / 100.0)
        assert set(ev.y[ev.x == 3].tolist()) == set(range(geom.height))

    def test_window_clips_columns(self):
        geom = SensorGeometry(40, 8)
        ev, _ = render_translating_edge(geom, 100.0, 0.0, 0.1)
        # columns crossing at t < 0.1: x + 0.5 < 10
        assert ev.x.max() == 9
        assert len(ev) == 10 * geom.height

    def test_rejects_bad_speed(self):
        with pytest.raises(ValueError, match="speed"):
            render_translating_edge(GEOM, 0.0, 0.0, 1.0)


class TestScenarioIO:
    def test_round_trip(self, tmp_path, short_sim):
        scenario, _, _ = short_sim
        path = tmp_path / "scn.json"
        save_scenario(scenario, path)
        again = load_scenario(path)
        da, db = again.to_dict(), scenario.to_dict()
        keys_a = da.pop("keyframes")
        keys_b = db.pop("keyframes")
        assert da == db
        # rotvec -> matrix -> rotvec wobbles in the last ulp, so keyframes
        # are compared numerically rather than textually
        for ka, kb in zip(keys_a, keys_b):
            assert ka["t"] == kb["t"]
            np.testing.assert_allclose(ka["rotvec"], kb["rotvec"],
                                       rtol=0, atol=1e-14)
            np.testing.assert_allclose(ka["translation"], kb["translation"],
                                       rtol=0, atol=1e-14)
        ga = ground_truth_centers(again.board, again.trajectory(),
                                  again.intrinsics, 0.2)
        gb = ground_truth_centers(scenario.board, scenario.trajectory(),
                                  scenario.intrinsics, 0.2)
        np.testing.assert_allclose(ga, gb, atol=1e-9)

    def test_from_dict_defaults(self):
        data = {
            "geometry": {"width": 64, "height": 48},
            "board": {"rows": 4, "cols": 11, "spacing_m": 0.05},
            "intrinsics": {"fx": 60.0, "fy": 60.0, "cx": 32.0, "cy": 24.0},
            "t_start": 0.0, "t_end": 1.0,
            "keyframes": [{"t": 0.0, "rotvec": [0, 0, 0],
                           "translation": [0, 0, 0.5]}],
        }
        scn = Scenario.from_dict(data)
        assert scn.sim.contrast_threshold == 0.4
        assert scn.truth_dt == 0.02
        # omitted radius falls back to the board default (spacing / 5)
        assert scn.board.circle_radius == pytest.approx(0.01)

    def test_write_truth_round_trip(self, tmp_path):
        rows = [(0.01, 3, 12.5, 8.25), (0.03, 0, -1.0, 260.75)]
        path = tmp_path / "truth.txt"
        write_truth(rows, path, intrinsics=DEFAULT_TRUTH)
        text = path.read_text()
        assert f"# truth k1 = {DEFAULT_TRUTH.k1!r}" in text
        got = []
        for line in text.splitlines():
            if line.startswith("#"):
                continue
            t, ci, cx, cy = line.split()
            got.append((float(t), int(ci), float(cx), float(cy)))
        assert got == rows
