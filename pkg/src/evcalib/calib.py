"""Pinhole + radial-tangential intrinsic calibration from planar views.

Pipeline: per-view homographies give a closed-form focal/principal-point
estimate (several random view subsets, best kept), distortion starts at
zero, per-view poses come from planar PnP, and a robust Levenberg-Marquardt
bundle adjustment refines intrinsics and all poses jointly. Rotations are
updated by left multiplication with exp of the increment, so pose Jacobians
are taken w.r.t. that tangent perturbation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

INTR_NAMES = ("fx", "fy", "cx", "cy", "k1", "k2", "p1", "p2")


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.fx, self.fy, self.cx, self.cy,
                         self.k1, self.k2, self.p1, self.p2])

    @staticmethod
    def from_array(a) -> "Intrinsics":
        return Intrinsics(*(float(v) for v in a))

    def camera_matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Pose:
    """Camera-from-world transform: p_cam = rotation @ p_world + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_rotvec(rvec, tvec) -> "Pose":
        return Pose(Rotation.from_rotvec(np.asarray(rvec, dtype=np.float64)).as_matrix(),
                    np.asarray(tvec, dtype=np.float64).copy())

    def rotvec(self) -> np.ndarray:
        return Rotation.from_matrix(self.rotation).as_rotvec()

    def transform(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def perturbed(self, d_rot, d_trans) -> "Pose":
        """Left-multiplicative update: R <- exp([d_rot]x) R, t <- t + d_trans."""
        rot = Rotation.from_rotvec(np.asarray(d_rot, dtype=np.float64)).as_matrix()
        return Pose(rot @ self.rotation, self.translation + np.asarray(d_trans))


def distort_normalized(pts_n, intr: Intrinsics) -> np.ndarray:
    """Apply radial-tangential distortion to normalized image coords (N, 2)."""
    pts_n = np.asarray(pts_n, dtype=np.float64)
    x, y = pts_n[:, 0], pts_n[:, 1]
    r2 = x * x + y * y
    radial = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2
    xd = x * radial + 2.0 * intr.p1 * x * y + intr.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + intr.p1 * (r2 + 2.0 * y * y) + 2.0 * intr.p2 * x * y
    return np.stack([xd, yd], axis=1)


def undistort_points(pts_px, intr: Intrinsics, iterations: int = 20) -> np.ndarray:
    """Pixels -> undistorted normalized coords via fixed-point iteration."""
    pts_px = np.asarray(pts_px, dtype=np.float64)
    xd = (pts_px[:, 0] - intr.cx) / intr.fx
    yd = (pts_px[:, 1] - intr.cy) / intr.fy
    x, y = xd.copy(), yd.copy()
    for _ in range(iterations):
        r2 = x * x + y * y
        radial = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2
        dx = 2.0 * intr.p1 * x * y + intr.p2 * (r2 + 2.0 * x * x)
        dy = intr.p1 * (r2 + 2.0 * y * y) + 2.0 * intr.p2 * x * y
        x = (xd - dx) / radial
        y = (yd - dy) / radial
    return np.stack([x, y], axis=1)


def project(points_w, pose: Pose, intr: Intrinsics) -> np.ndarray:
    """World points (N, 3) -> pixel coords (N, 2)."""
    pc = pose.transform(points_w)
    pn = pc[:, :2] / pc[:, 2:3]
    pd = distort_normalized(pn, intr)
    return np.stack([intr.fx * pd[:, 0] + intr.cx,
                     intr.fy * pd[:, 1] + intr.cy], axis=1)


def project_camera(points_c, intr: Intrinsics) -> np.ndarray:
    """Camera-frame points (N, 3) -> pixels; rejects non-positive depth."""
    pts = np.asarray(points_c, dtype=np.float64)
    if np.any(pts[:, 2] <= 0):
        raise ValueError("point depth must be positive")
    return project(pts, Pose.identity(), intr)


def project_with_jacobians(points_w, pose: Pose, intr: Intrinsics):
    """Projection plus analytic Jacobians.

    Returns (pix (N,2), j_intr (N,2,8) ordered as INTR_NAMES,
    j_pose (N,2,6) ordered [rot_x, rot_y, rot_z, t_x, t_y, t_z] for a
    left-multiplicative rotation perturbation).
    """
    points_w = np.asarray(points_w, dtype=np.float64)
    n = len(points_w)
    pc = pose.transform(points_w)
    X, Y, Z = pc[:, 0], pc[:, 1], pc[:, 2]
    inv_z = 1.0 / Z
    x = X * inv_z
    y = Y * inv_z
    r2 = x * x + y * y
    radial = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2
    d_radial = intr.k1 + 2.0 * intr.k2 * r2  # d(radial)/d(r2)
    xd = x * radial + 2.0 * intr.p1 * x * y + intr.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + intr.p1 * (r2 + 2.0 * y * y) + 2.0 * intr.p2 * x * y
    pix = np.stack([intr.fx * xd + intr.cx, intr.fy * yd + intr.cy], axis=1)

    j_intr = np.zeros((n, 2, 8))
    j_intr[:, 0, 0] = xd
    j_intr[:, 1, 1] = yd
    j_intr[:, 0, 2] = 1.0
    j_intr[:, 1, 3] = 1.0
    j_intr[:, 0, 4] = intr.fx * x * r2
    j_intr[:, 1, 4] = intr.fy * y * r2
    j_intr[:, 0, 5] = intr.fx * x * r2 * r2
    j_intr[:, 1, 5] = intr.fy * y * r2 * r2
    j_intr[:, 0, 6] = intr.fx * 2.0 * x * y
    j_intr[:, 1, 6] = intr.fy * (r2 + 2.0 * y * y)
    j_intr[:, 0, 7] = intr.fx * (r2 + 2.0 * x * x)
    j_intr[:, 1, 7] = intr.fy * 2.0 * x * y

    # distorted w.r.t. normalized coords
    dxd_dx = radial + 2.0 * x * x * d_radial + 2.0 * intr.p1 * y + 6.0 * intr.p2 * x
    dxd_dy = 2.0 * x * y * d_radial + 2.0 * intr.p1 * x + 2.0 * intr.p2 * y
    dyd_dx = 2.0 * x * y * d_radial + 2.0 * intr.p1 * x + 2.0 * intr.p2 * y
    dyd_dy = radial + 2.0 * y * y * d_radial + 6.0 * intr.p1 * y + 2.0 * intr.p2 * x

    # normalized coords w.r.t. camera point
    dn_dp = np.zeros((n, 2, 3))
    dn_dp[:, 0, 0] = inv_z
    dn_dp[:, 0, 2] = -x * inv_z
    dn_dp[:, 1, 1] = inv_z
    dn_dp[:, 1, 2] = -y * inv_z

    dd_dn = np.empty((n, 2, 2))
    dd_dn[:, 0, 0] = dxd_dx
    dd_dn[:, 0, 1] = dxd_dy
    dd_dn[:, 1, 0] = dyd_dx
    dd_dn[:, 1, 1] = dyd_dy

    dpix_dd = np.zeros((n, 2, 2))
    dpix_dd[:, 0, 0] = intr.fx
    dpix_dd[:, 1, 1] = intr.fy

    dpix_dp = dpix_dd @ dd_dn @ dn_dp  # (n, 2, 3)

    # left perturbation R <- exp([d]x) R shifts the camera point by
    # d x (R p_w), so d(pc)/d(rot) = -[R p_w]x with R p_w = pc - t
    vx = X - pose.translation[0]
    vy = Y - pose.translation[1]
    vz = Z - pose.translation[2]
    skew = np.zeros((n, 3, 3))
    skew[:, 0, 1] = vz
    skew[:, 0, 2] = -vy
    skew[:, 1, 0] = -vz
    skew[:, 1, 2] = vx
    skew[:, 2, 0] = vy
    skew[:, 2, 1] = -vx
    j_pose = np.concatenate([dpix_dp @ skew, dpix_dp], axis=2)
    return pix, j_intr, j_pose


def _normalize_2d(pts):
    pts = np.asarray(pts, dtype=np.float64)
    mean = pts.mean(axis=0)
    d = np.sqrt(((pts - mean) ** 2).sum(axis=1)).mean()
    s = math.sqrt(2.0) / d if d > 1e-12 else 1.0
    t = np.array([[s, 0.0, -s * mean[0]],
                  [0.0, s, -s * mean[1]],
                  [0.0, 0.0, 1.0]])
    return (pts - mean) * s, t


def homography_dlt(src, dst) -> np.ndarray:
    """Direct linear transform homography, Hartley-normalized.

    Maps src (N, 2) to dst (N, 2); needs N >= 4. The result is scaled so
    h22 = 1 when that entry is meaningfully nonzero, unit Frobenius norm
    with positive leading entry otherwise.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if len(src) < 4 or len(src) != len(dst):
        raise ValueError("homography needs >= 4 point pairs of equal count")
    sn, ts = _normalize_2d(src)
    dn, td = _normalize_2d(dst)
    n = len(sn)
    a = np.zeros((2 * n, 9))
    a[0::2, 0] = sn[:, 0]
    a[0::2, 1] = sn[:, 1]
    a[0::2, 2] = 1.0
    a[0::2, 6] = -dn[:, 0] * sn[:, 0]
    a[0::2, 7] = -dn[:, 0] * sn[:, 1]
    a[0::2, 8] = -dn[:, 0]
    a[1::2, 3] = sn[:, 0]
    a[1::2, 4] = sn[:, 1]
    a[1::2, 5] = 1.0
    a[1::2, 6] = -dn[:, 1] * sn[:, 0]
    a[1::2, 7] = -dn[:, 1] * sn[:, 1]
    a[1::2, 8] = -dn[:, 1]
    _, _, vt = np.linalg.svd(a)
    h = vt[-1].reshape(3, 3)
    h = np.linalg.inv(td) @ h @ ts
    if abs(h[2, 2]) > 1e-8 * np.abs(h).max():
        h = h / h[2, 2]
    else:
        h = h / np.linalg.norm(h)
        flat = h.ravel()
        lead = flat[np.flatnonzero(np.abs(flat) > 1e-12)[0]]
        if lead < 0:
            h = -h
    return h


def apply_homography(h, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64)
    q = pts @ h[:, :2].T + h[:, 2]
    # points on the horizon line map to inf; callers gate on finiteness
    with np.errstate(divide="ignore", invalid="ignore"):
        return q[:, :2] / q[:, 2:3]


def zhang_intrinsics(homographies) -> Intrinsics | None:
    """Closed-form focal lengths and principal point from plane homographies.

    Each homography maps board-plane coords (meters) to pixels. Needs at
    least 3 views in general position; returns None when the absolute-conic
    system is degenerate or yields a non-positive-definite solution.
    """
    if len(homographies) < 3:
        return None

    def vij(h, i, j):
        return np.array([
            h[0, i] * h[0, j],
            h[0, i] * h[1, j] + h[1, i] * h[0, j],
            h[1, i] * h[1, j],
            h[2, i] * h[0, j] + h[0, i] * h[2, j],
            h[2, i] * h[1, j] + h[1, i] * h[2, j],
            h[2, i] * h[2, j],
        ])

    rows = []
    for h in homographies:
        rows.append(vij(h, 0, 1))
        rows.append(vij(h, 0, 0) - vij(h, 1, 1))
    _, _, vt = np.linalg.svd(np.asarray(rows))
    b11, b12, b22, b13, b23, b33 = vt[-1]
    den = b11 * b22 - b12 * b12
    if abs(den) < 1e-30 or abs(b11) < 1e-30:
        return None
    v0 = (b12 * b13 - b11 * b23) / den
    lam = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11
    if lam / b11 <= 0 or lam * b11 / den <= 0:
        return None
    fx = math.sqrt(lam / b11)
    fy = math.sqrt(lam * b11 / den)
    skew = -b12 * fx * fx * fy / lam
    u0 = skew * v0 / fy - b13 * fx * fx / lam
    if not (np.isfinite(fx) and np.isfinite(fy) and np.isfinite(u0) and np.isfinite(v0)):
        return None
    return Intrinsics(fx=fx, fy=fy, cx=u0, cy=v0)


def solve_pnp_planar(object_points, image_points, intr: Intrinsics,
                     iterations: int = 25) -> Pose | None:
    """Pose of a planar (Z = 0) target from 2D-3D correspondences.

    Homography decomposition seeds the pose; a small pose-only LM refine
    runs against the full distortion model.
    """
    obj = np.asarray(object_points, dtype=np.float64)
    img = np.asarray(image_points, dtype=np.float64)
    if len(obj) < 4:
        return None
    und = undistort_points(img, intr)
    try:
        h = homography_dlt(obj[:, :2], und)
    except (ValueError, np.linalg.LinAlgError):
        return None
    h1, h2, h3 = h[:, 0], h[:, 1], h[:, 2]
    n1, n2 = np.linalg.norm(h1), np.linalg.norm(h2)
    if n1 < 1e-12 or n2 < 1e-12:
        return None
    lam = 2.0 / (n1 + n2)
    r1, r2, t = lam * h1, lam * h2, lam * h3
    if t[2] < 0:
        r1, r2, t = -r1, -r2, -t
    r3 = np.cross(r1, r2)
    rot = np.stack([r1, r2, r3], axis=1)
    u, _, vt = np.linalg.svd(rot)
    rot = u @ vt
    if np.linalg.det(rot) < 0:
        u[:, 2] = -u[:, 2]
        rot = u @ vt
    pose = Pose(rot, t)

    if np.any(pose.transform(obj)[:, 2] <= 0):
        return None

    cost = float(((project(obj, pose, intr) - img) ** 2).sum())
    mu = 1e-3
    for _ in range(iterations):
        pix, _, j_pose = project_with_jacobians(obj, pose, intr)
        r = (pix - img).reshape(-1)
        j = j_pose.reshape(-1, 6)
        jtj = j.T @ j
        g = j.T @ r
        stepped = False
        for _ in range(10):
            try:
                delta = np.linalg.solve(jtj + mu * np.diag(np.maximum(np.diag(jtj), 1e-12)), -g)
            except np.linalg.LinAlgError:
                mu *= 4.0
                continue
            cand = pose.perturbed(delta[:3], delta[3:])
            pc_z = cand.transform(obj)[:, 2]
            if np.all(pc_z > 0):
                c_new = float(((project(obj, cand, intr) - img) ** 2).sum())
                if np.isfinite(c_new) and c_new < cost:
                    rel = (cost - c_new) / max(cost, 1e-300)
                    pose, cost = cand, c_new
                    mu = max(mu / 3.0, 1e-12)
                    stepped = True
                    break
            mu *= 4.0
            if mu > 1e10:
                break
        if not stepped or rel < 1e-14:
            break
    return pose


@dataclass(frozen=True)
class ViewObservation:
    """One recognized board view: pattern centers at a common timestamp."""

    t: float
    image_points: np.ndarray
    object_points: np.ndarray


@dataclass(frozen=True)
class CalibOptions:
    n_trials: int = 10
    views_per_trial: int = 8
    huber_delta: float = 1.0
    max_iters: int = 60
    tol: float = 1e-12
    seed: int = 0
    max_views: int = 0  # 0 keeps every view


@dataclass
class CalibrationResult:
    intrinsics: Intrinsics
    poses: list
    views: list
    rms: float
    per_view_rms: np.ndarray
    residuals: np.ndarray
    cost_trace: list = field(default_factory=list)

    @property
    def n_views(self) -> int:
        return len(self.views)


def _huber_weights(res, delta):
    """Per-correspondence robust weight and cost for 2-vector residuals."""
    s = (res * res).sum(axis=1)
    out = (res * res).sum(axis=1).copy()
    big = s > delta * delta
    out[big] = 2.0 * delta * np.sqrt(s[big]) - delta * delta
    w = np.ones_like(s)
    w[big] = delta / np.sqrt(s[big])
    return w, out


def _robust_cost(intr, poses, views, delta):
    total = 0.0
    for pose, view in zip(poses, views):
        res = project(view.object_points, pose, intr) - view.image_points
        _, rho = _huber_weights(res, delta)
        total += float(rho.sum())
    return total


def refine_calibration(intr: Intrinsics, poses, views,
                       opts: CalibOptions = CalibOptions()):
    """Joint robust LM over intrinsics and all poses.

    The normal system is solved by eliminating the per-view 6-dof blocks
    (Schur complement onto the 8 intrinsic parameters), so cost per
    iteration is linear in the number of views. Returns
    (intrinsics, poses, cost_trace); the trace holds the robust cost after
    each accepted step, starting with the initial cost.
    """
    poses = list(poses)
    n_views = len(views)
    if n_views == 0:
        raise ValueError("no views to refine")
    delta_h = opts.huber_delta
    cost = _robust_cost(intr, poses, views, delta_h)
    trace = [cost]
    mu = 1e-4
    for _ in range(opts.max_iters):
        h_ii = np.zeros((8, 8))
        g_i = np.zeros(8)
        h_ip = np.zeros((n_views, 8, 6))
        h_pp = np.zeros((n_views, 6, 6))
        g_p = np.zeros((n_views, 6))
        for vi, (pose, view) in enumerate(zip(poses, views)):
            pix, j_int, j_pos = project_with_jacobians(view.object_points, pose, intr)
            res = pix - view.image_points
            w, _ = _huber_weights(res, delta_h)
            ji = j_int * w[:, None, None]
            jp = j_pos * w[:, None, None]
            ji2 = ji.reshape(-1, 8)
            jp2 = jp.reshape(-1, 6)
            ji_raw = j_int.reshape(-1, 8)
            jp_raw = j_pos.reshape(-1, 6)
            rv = res.reshape(-1)
            # weight applied once: (sqrt(w) J)^T (sqrt(w) J) written as J^T w J
            h_ii += ji2.T @ ji_raw
            h_ip[vi] = ji2.T @ jp_raw
            h_pp[vi] = jp2.T @ jp_raw
            g_i += ji2.T @ rv
            g_p[vi] = jp2.T @ rv

        stepped = False
        for _ in range(12):
            a_ii = h_ii + mu * np.diag(np.maximum(np.diag(h_ii), 1e-12))
            rhs = -g_i.copy()
            red = a_ii.copy()
            hpp_inv = np.empty_like(h_pp)
            ok = True
            for vi in range(n_views):
                a_pp = h_pp[vi] + mu * np.diag(np.maximum(np.diag(h_pp[vi]), 1e-12))
                try:
                    hpp_inv[vi] = np.linalg.inv(a_pp)
                except np.linalg.LinAlgError:
                    ok = False
                    break
                red -= h_ip[vi] @ hpp_inv[vi] @ h_ip[vi].T
                rhs += h_ip[vi] @ hpp_inv[vi] @ g_p[vi]
            if ok:
                try:
                    d_int = np.linalg.solve(red, rhs)
                except np.linalg.LinAlgError:
                    ok = False
            if ok:
                intr_new = Intrinsics.from_array(intr.as_array() + d_int)
                poses_new = []
                for vi in range(n_views):
                    d_pose = hpp_inv[vi] @ (-g_p[vi] - h_ip[vi].T @ d_int)
                    poses_new.append(poses[vi].perturbed(d_pose[:3], d_pose[3:]))
                cost_new = _robust_cost(intr_new, poses_new, views, delta_h)
                if np.isfinite(cost_new) and cost_new < cost:
                    rel = (cost - cost_new) / max(cost, 1e-300)
                    intr, poses, cost = intr_new, poses_new, cost_new
                    trace.append(cost)
                    mu = max(mu / 3.0, 1e-12)
                    stepped = True
                    break
            mu *= 4.0
            if mu > 1e12:
                break
        if not stepped or rel < opts.tol:
            break
    return intr, poses, trace


def reprojection_residuals(intr, poses, views):
    """Stacked per-correspondence residuals (M, 2), view order preserved."""
    out = [project(v.object_points, p, intr) - v.image_points
           for p, v in zip(poses, views)]
    return np.concatenate(out, axis=0) if out else np.zeros((0, 2))


def rms_per_correspondence(res) -> float:
    if len(res) == 0:
        return 0.0
    return float(np.sqrt(((res ** 2).sum(axis=1)).mean()))


def init_intrinsics(views, n_trials: int = 10, views_per_trial: int = 8,
                    seed: int = 0) -> Intrinsics:
    """Closed-form intrinsics from random view subsets, best trial kept.

    Each trial: Zhang's absolute-conic estimate from the subset's
    homographies (distortion starts at zero), planar PnP for the subset
    poses, then a short joint refinement; trials are ranked by RMS
    reprojection over their own subset. Raises ValueError when fewer
    than ``views_per_trial`` usable views exist or every trial is
    degenerate (e.g. all views fronto-parallel).
    """
    views = list(views)
    if len(views) < views_per_trial:
        raise ValueError(
            f"need at least {views_per_trial} views, got {len(views)}")

    homs = []
    for v in views:
        try:
            homs.append(homography_dlt(v.object_points[:, :2], v.image_points))
        except (ValueError, np.linalg.LinAlgError):
            homs.append(None)
    usable = [i for i, h in enumerate(homs) if h is not None]
    if len(usable) < views_per_trial:
        raise ValueError("too few views yield a homography")

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_trials):
        pick = rng.choice(len(usable), size=views_per_trial, replace=False)
        subset = [usable[i] for i in sorted(pick)]
        intr0 = zhang_intrinsics([homs[i] for i in subset])
        if intr0 is None:
            continue
        sub_views, sub_poses = [], []
        for i in subset:
            pose = solve_pnp_planar(views[i].object_points, views[i].image_points, intr0)
            if pose is not None:
                sub_views.append(views[i])
                sub_poses.append(pose)
        if len(sub_views) < 3:
            continue
        try:
            intr_t, poses_t, _ = refine_calibration(
                intr0, sub_poses, sub_views,
                CalibOptions(max_iters=15, seed=seed))
        except (ValueError, np.linalg.LinAlgError):
            continue
        rms_t = rms_per_correspondence(
            reprojection_residuals(intr_t, poses_t, sub_views))
        if np.isfinite(rms_t) and (best is None or rms_t < best[0]):
            best = (rms_t, intr_t)
    if best is None:
        raise ValueError("every initialization trial was degenerate")
    return best[1]


def calibrate_views(views, opts: CalibOptions = CalibOptions()) -> CalibrationResult:
    """Full calibration from recognized views.

    Raises ValueError when too few usable views exist or no trial
    produces a valid closed-form start.
    """
    views = list(views)
    if opts.max_views and len(views) > opts.max_views:
        keep = np.linspace(0, len(views) - 1, opts.max_views).round().astype(int)
        views = [views[i] for i in np.unique(keep)]

    intr0 = init_intrinsics(views, n_trials=opts.n_trials,
                            views_per_trial=opts.views_per_trial,
                            seed=opts.seed)
    kept_views, poses0 = [], []
    for v in views:
        pose = solve_pnp_planar(v.object_points, v.image_points, intr0)
        if pose is not None:
            kept_views.append(v)
            poses0.append(pose)
    if len(kept_views) < 3:
        raise ValueError("fewer than 3 views survive pose estimation")

    intr, poses, trace = refine_calibration(intr0, poses0, kept_views, opts)
    res = reprojection_residuals(intr, poses, kept_views)
    per_view = np.empty(len(kept_views))
    off = 0
    for i, v in enumerate(kept_views):
        m = len(v.object_points)
        per_view[i] = rms_per_correspondence(res[off:off + m])
        off += m
    return CalibrationResult(
        intrinsics=intr,
        poses=poses,
        views=kept_views,
        rms=rms_per_correspondence(res),
        per_view_rms=per_view,
        residuals=res,
        cost_trace=trace,
    )


def undistort_rectify_map(intr: Intrinsics, width: int, height: int):
    """Remap tables (map_x, map_y), each (height, width).

    For every undistorted output pixel, the source position in the original
    (distorted) image, sharing the same camera matrix.
    """
    u, v = np.meshgrid(np.arange(width, dtype=np.float64),
                       np.arange(height, dtype=np.float64))
    x = (u - intr.cx) / intr.fx
    y = (v - intr.cy) / intr.fy
    pd = distort_normalized(np.stack([x.ravel(), y.ravel()], axis=1), intr)
    map_x = (intr.fx * pd[:, 0] + intr.cx).reshape(height, width)
    map_y = (intr.fy * pd[:, 1] + intr.cy).reshape(height, width)
    return map_x, map_y
