"""Time-varying ellipse fitting over a cluster pair's raw events.

The model: an ellipse whose center and semi-axes are linear in time while
the orientation stays fixed. With points rotated into the ellipse frame
(xr, yr) the residual of an event at local time tau is

    r = ly(tau)^2 (xr - cx(tau))^2 + lx(tau)^2 (yr - cy(tau))^2
        - lx(tau)^2 ly(tau)^2

which vanishes exactly on the moving contour. The solver minimizes r
divided by its point-gradient norm (the Sampson approximation of the
geometric distance), with the normalization frozen between accepted steps;
the raw algebraic form weights high-curvature arcs unevenly and noticeably
shrinks the fit under pixel noise. Center polynomials live in the rotated
frame; ``sample`` converts back to image coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class LinearPoly:
    """value(tau) = slope * tau + offset."""

    slope: float
    offset: float

    def __call__(self, tau):
        return self.slope * tau + self.offset


@dataclass(frozen=True)
class Ellipse2D:
    center: np.ndarray
    semi_axes: np.ndarray
    alpha: float

    def points(self, angles) -> np.ndarray:
        """Points on the contour at the given parametric angles (N, 2)."""
        angles = np.asarray(angles, dtype=np.float64)
        ca, sa = math.cos(self.alpha), math.sin(self.alpha)
        ex = self.semi_axes[0] * np.cos(angles)
        ey = self.semi_axes[1] * np.sin(angles)
        return np.stack([
            self.center[0] + ca * ex - sa * ey,
            self.center[1] + sa * ex + ca * ey,
        ], axis=1)


@dataclass(frozen=True)
class TimeVaryingEllipse:
    """Fixed-orientation ellipse with linear-in-time center and semi-axes.

    ``alpha`` is the image-plane angle of the first semi-axis, normalized to
    [0, pi). ``center_x``/``center_y`` are in the rotated (axis-aligned)
    frame; times are local, tau = t - t_ref.
    """

    t_ref: float
    center_x: LinearPoly
    center_y: LinearPoly
    axis_x: LinearPoly
    axis_y: LinearPoly
    alpha: float

    def sample(self, t: float) -> Ellipse2D:
        tau = t - self.t_ref
        lx, ly = self.axis_x(tau), self.axis_y(tau)
        if lx <= 0 or ly <= 0:
            raise ValueError(f"ellipse axis not positive at t={t}")
        cx, cy = self.center_x(tau), self.center_y(tau)
        ca, sa = math.cos(self.alpha), math.sin(self.alpha)
        center = np.array([ca * cx - sa * cy, sa * cx + ca * cy])
        return Ellipse2D(center=center,
                         semi_axes=np.array([lx, ly]),
                         alpha=self.alpha)

    def center_velocity(self) -> np.ndarray:
        """Image-frame center velocity (px/s)."""
        ca, sa = math.cos(self.alpha), math.sin(self.alpha)
        vx, vy = self.center_x.slope, self.center_y.slope
        return np.array([ca * vx - sa * vy, sa * vx + ca * vy])


def residuals(e: TimeVaryingEllipse, ts, xs, ys) -> np.ndarray:
    ts = np.asarray(ts, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    tau = ts - e.t_ref
    ca, sa = math.cos(e.alpha), math.sin(e.alpha)
    xr = ca * xs + sa * ys
    yr = -sa * xs + ca * ys
    u = xr - e.center_x(tau)
    v = yr - e.center_y(tau)
    lx = e.axis_x(tau)
    ly = e.axis_y(tau)
    return ly * ly * u * u + lx * lx * v * v - lx * lx * ly * ly


def residual(e: TimeVaryingEllipse, t: float, x: float, y: float) -> float:
    return float(residuals(e, [t], [x], [y])[0])


@dataclass(frozen=True)
class EllipseFitParams:
    min_events: int = 12
    max_iters: int = 100
    tol: float = 1e-10
    min_axis_px: float = 0.5


def fit_conic_ellipse(xs, ys):
    """Direct least-squares conic fit, ellipse-constrained.

    Returns (center (2,), semi_axes (2,), angle) or None when the points do
    not determine an ellipse.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if len(xs) < 6:
        return None
    # center/scale for conditioning
    mx, my = xs.mean(), ys.mean()
    scale = max(np.abs(xs - mx).max(), np.abs(ys - my).max(), 1e-9)
    x = (xs - mx) / scale
    y = (ys - my) / scale

    d1 = np.stack([x * x, x * y, y * y], axis=1)
    d2 = np.stack([x, y, np.ones_like(x)], axis=1)
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    try:
        t_mat = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError:
        return None
    m = s1 + s2 @ t_mat
    m = np.array([m[2] / 2.0, -m[1], m[0] / 2.0])
    try:
        eigval, eigvec = np.linalg.eig(m)
    except np.linalg.LinAlgError:
        return None
    real = np.abs(np.imag(eigval)) < 1e-12 * (1.0 + np.abs(np.real(eigval)))
    eigvec = np.real(eigvec)
    cond = 4.0 * eigvec[0] * eigvec[2] - eigvec[1] ** 2
    valid = np.flatnonzero((cond > 0) & real)
    if len(valid) == 0:
        return None
    a1 = eigvec[:, valid[0]]
    coeffs = np.concatenate([a1, t_mat @ a1])

    a, b, c, d, e_, f = coeffs
    det = 4.0 * a * c - b * b
    if det <= 0:
        return None
    x0 = (b * e_ - 2.0 * c * d) / det
    y0 = (b * d - 2.0 * a * e_) / det
    f0 = a * x0 * x0 + b * x0 * y0 + c * y0 * y0 + d * x0 + e_ * y0 + f
    theta = 0.5 * math.atan2(b, a - c)
    ct, st = math.cos(theta), math.sin(theta)
    lam1 = a * ct * ct + b * ct * st + c * st * st
    lam2 = a * st * st - b * ct * st + c * ct * ct
    if lam1 == 0 or lam2 == 0:
        return None
    r1_sq = -f0 / lam1
    r2_sq = -f0 / lam2
    if r1_sq <= 0 or r2_sq <= 0:
        return None
    center = np.array([x0 * scale + mx, y0 * scale + my])
    axes = np.array([math.sqrt(r1_sq) * scale, math.sqrt(r2_sq) * scale])
    return center, axes, theta


def _canonical_alpha(alpha, cx: LinearPoly, cy: LinearPoly):
    k = math.floor(alpha / math.pi)
    alpha -= k * math.pi
    if alpha >= math.pi:  # guard the alpha == -eps rounding case
        alpha -= math.pi
        k += 1
    if k % 2:
        cx = LinearPoly(-cx.slope, -cx.offset)
        cy = LinearPoly(-cy.slope, -cy.offset)
    return alpha, cx, cy


def _pack(e: np.ndarray, t_ref: float) -> TimeVaryingEllipse:
    alpha, cx, cy = _canonical_alpha(
        float(e[8]),
        LinearPoly(float(e[0]), float(e[1])),
        LinearPoly(float(e[2]), float(e[3])),
    )
    return TimeVaryingEllipse(
        t_ref=t_ref,
        center_x=cx,
        center_y=cy,
        axis_x=LinearPoly(float(e[4]), math.exp(float(e[5]))),
        axis_y=LinearPoly(float(e[6]), math.exp(float(e[7]))),
        alpha=alpha,
    )


def _eval_residual(p, tau, xs, ys):
    """Residual vector and jacobian intermediates at parameter vector p.

    p = [cx_s, cx_o, cy_s, cy_o, lx_s, lx_log_o, ly_s, ly_log_o, alpha];
    the constant axis coefficients are optimized in log space so the axes
    cannot flip sign or collapse through zero.
    """
    cx = p[0] * tau + p[1]
    cy = p[2] * tau + p[3]
    e5, e7 = math.exp(p[5]), math.exp(p[7])
    lx = p[4] * tau + e5
    ly = p[6] * tau + e7
    ca, sa = math.cos(p[8]), math.sin(p[8])
    xr = ca * xs + sa * ys
    yr = -sa * xs + ca * ys
    u = xr - cx
    v = yr - cy
    lx2, ly2 = lx * lx, ly * ly
    r = ly2 * u * u + lx2 * v * v - lx2 * ly2
    return r, (u, v, lx, ly, lx2, ly2, xr, yr, e5, e7)


def _eval_jacobian(tau, aux):
    """Analytic Jacobian from the intermediates of ``_eval_residual``."""
    u, v, lx, ly, lx2, ly2, xr, yr, e5, e7 = aux
    jac = np.empty((len(tau), 9))
    jac[:, 1] = -2.0 * ly2 * u
    jac[:, 0] = jac[:, 1] * tau
    jac[:, 3] = -2.0 * lx2 * v
    jac[:, 2] = jac[:, 3] * tau
    dr_dlx = 2.0 * lx * (v * v - ly2)
    jac[:, 4] = dr_dlx * tau
    jac[:, 5] = dr_dlx * e5
    dr_dly = 2.0 * ly * (u * u - lx2)
    jac[:, 6] = dr_dly * tau
    jac[:, 7] = dr_dly * e7
    jac[:, 8] = 2.0 * ly2 * u * yr - 2.0 * lx2 * v * xr
    return jac


def _eval_fit(p, tau, xs, ys):
    """Residual vector and analytic Jacobian at parameter vector p."""
    r, aux = _eval_residual(p, tau, xs, ys)
    return r, _eval_jacobian(tau, aux)


def _grad_norm_weights(aux):
    """Inverse point-gradient norms of the algebraic residual.

    Scaling each residual by 1/|grad r| turns it into the Sampson distance,
    removing the algebraic form's shrinkage bias under point noise. The
    floor is relative so a stray point near the ellipse center cannot grab
    unbounded weight.
    """
    u, v, _, _, lx2, ly2 = aux[:6]
    g = 2.0 * np.sqrt(ly2 * ly2 * u * u + lx2 * lx2 * v * v)
    return 1.0 / np.maximum(g, 1e-6 * g.max() + 1e-300)


def fit_time_varying_ellipse(ts, xs, ys, t_ref: float,
                             params: EllipseFitParams = EllipseFitParams()):
    """Damped least-squares fit of the moving-ellipse model.

    Initialized from a static direct conic fit with zero velocities.
    Returns None on too few events, a degenerate initialization, or axis
    collapse (either semi-axis <= ``min_axis_px`` inside the event span).
    """
    ts = np.asarray(ts, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if len(ts) < params.min_events:
        return None
    tau = ts - t_ref

    # seed the center velocity from early/late event means, then fit the
    # static conic on motion-compensated points; a zero-velocity init makes
    # the solver crawl when the window carries several pixels of motion
    order = np.argsort(tau, kind="stable")
    lo, hi = order[: len(order) // 2], order[len(order) // 2:]
    dt_mean = tau[hi].mean() - tau[lo].mean()
    v0 = np.zeros(2)
    if dt_mean > 1e-9:
        v0[0] = (xs[hi].mean() - xs[lo].mean()) / dt_mean
        v0[1] = (ys[hi].mean() - ys[lo].mean()) / dt_mean
    init = fit_conic_ellipse(xs - v0[0] * tau, ys - v0[1] * tau)
    if init is None:
        return None
    center, axes, theta = init
    if axes[0] <= params.min_axis_px or axes[1] <= params.min_axis_px:
        return None
    ct, st = math.cos(theta), math.sin(theta)
    cx0 = ct * center[0] + st * center[1]
    cy0 = -st * center[0] + ct * center[1]
    p = np.array([ct * v0[0] + st * v0[1], cx0,
                  -st * v0[0] + ct * v0[1], cy0,
                  0.0, math.log(axes[0]), 0.0, math.log(axes[1]), theta])
    t_lo, t_hi = float(tau.min()), float(tau.max())

    def axes_ok(q):
        for slope, log_off in ((q[4], q[5]), (q[6], q[7])):
            off = math.exp(min(log_off, 50.0))
            if slope * t_lo + off <= params.min_axis_px:
                return False
            if slope * t_hi + off <= params.min_axis_px:
                return False
        return True

    r, aux = _eval_residual(p, tau, xs, ys)
    w = _grad_norm_weights(aux)
    rw = w * r
    jac = w[:, None] * _eval_jacobian(tau, aux)
    cost = float(rw @ rw)
    mu = 1e-3
    for _ in range(params.max_iters):
        jtj = jac.T @ jac
        g = jac.T @ rw
        if np.max(np.abs(g)) < 1e-14:
            break
        step_ok = False
        for _ in range(12):
            damped = jtj + mu * np.diag(np.maximum(np.diag(jtj), 1e-12))
            try:
                delta = np.linalg.solve(damped, -g)
            except np.linalg.LinAlgError:
                mu *= 4.0
                continue
            q = p + delta
            q[5] = min(q[5], 50.0)
            q[7] = min(q[7], 50.0)
            if axes_ok(q):
                # trial steps compare against the frozen weights so the
                # accept test sees one consistent objective; the jacobian
                # and the reweighting wait until the step is accepted
                r_new, aux_new = _eval_residual(q, tau, xs, ys)
                rw_trial = w * r_new
                cost_trial = float(rw_trial @ rw_trial)
                if np.isfinite(cost_trial) and cost_trial < cost:
                    rel = (cost - cost_trial) / max(cost, 1e-300)
                    p = q
                    w = _grad_norm_weights(aux_new)
                    rw = w * r_new
                    jac = w[:, None] * _eval_jacobian(tau, aux_new)
                    cost = float(rw @ rw)
                    mu = max(mu / 3.0, 1e-12)
                    step_ok = True
                    break
            mu *= 4.0
            if mu > 1e12:
                break
        if not step_ok:
            break
        if rel < params.tol:
            break
    if not axes_ok(p):
        return None
    return _pack(p, t_ref)
