"""Pure-numpy implementations of the hot per-event kernels.

This module mirrors the compiled backend (``_core.pyx``) operation for
operation: same PRNG stream, same arithmetic expressions, same tie-breaking.
Both backends therefore produce bit-identical output for identical input,
which keeps results reproducible no matter which backend gets imported.
"""

from __future__ import annotations

import numpy as np

U64 = np.uint64
_GAMMA = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)

_DET_EPS = 1e-12
_FLOW_EPS = 1e-18


def _mix64(z):
    z = (z ^ (z >> U64(30))) * _MIX1
    z = (z ^ (z >> U64(27))) * _MIX2
    return z ^ (z >> U64(31))


def rng_draws(seed: int, pixel: int, count: int) -> np.ndarray:
    """The deterministic u64 draw stream for one (seed, pixel) pair.

    Draw j is a pure function of (seed, pixel, j), so per-pixel work can be
    scheduled in any order (or in parallel) without changing results.
    """
    with np.errstate(over="ignore"):
        base = U64(seed % (1 << 64)) * _MIX1 + U64(pixel + 1) * _GAMMA
        idx = np.arange(1, count + 1, dtype=np.uint64)
        return _mix64(base + idx * _GAMMA)


def build_sae_maps(t, x, y, p, width, height):
    """Last-event-wins rasterization of a time-sorted event batch."""
    time_map = np.zeros((height, width), dtype=np.float64)
    pol_map = np.zeros((height, width), dtype=np.int8)
    valid = np.zeros((height, width), dtype=bool)
    if len(t):
        lin = y.astype(np.int64) * width + x.astype(np.int64)
        _, first_rev = np.unique(lin[::-1], return_index=True)
        last = len(lin) - 1 - first_rev
        time_map[y[last], x[last]] = t[last]
        pol_map[y[last], x[last]] = p[last]
        valid[y[last], x[last]] = True
    return time_map, pol_map, valid


def label_components(occupancy) -> tuple[np.ndarray, int]:
    """8-connected component labels, numbered by raster-scan discovery.

    Returns (labels, count) with labels 1..count and 0 for background.
    """
    from scipy import ndimage

    labels, n = ndimage.label(occupancy, structure=np.ones((3, 3), dtype=np.uint8))
    labels = labels.astype(np.int32)
    if n == 0:
        return labels, 0
    # scipy's numbering is an implementation detail; renumber by the raster
    # position of each component's first pixel so both backends agree.
    flat = labels.ravel()
    occ_idx = np.flatnonzero(flat)
    labs, first_idx = np.unique(flat[occ_idx], return_index=True)
    rank = np.empty(len(labs), dtype=np.int32)
    rank[np.argsort(first_idx, kind="stable")] = np.arange(len(labs), dtype=np.int32)
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[labs] = rank + 1
    return remap[labels], int(n)


def _sample_indices(u0, u1, u2, n):
    """Three distinct indices in [0, n) from three u64 draws (vectorized)."""
    n64 = U64(n)
    i0 = (u0 % n64).astype(np.int64)
    i1 = (u1 % U64(n - 1)).astype(np.int64)
    i1 += i1 >= i0
    lo = np.minimum(i0, i1)
    hi = np.maximum(i0, i1)
    i2 = (u2 % U64(n - 2)).astype(np.int64)
    i2 += i2 >= lo
    i2 += i2 >= hi
    return i0, i1, i2


def ransac_plane(xs, ys, ts, iterations, inlier_threshold, seed, pixel):
    """RANSAC fit of a*x + b*y + t + c = 0 over one spatiotemporal patch.

    Returns (ok, a, b, c, inlier_rate). ``ok`` is False when every sampled
    triple was spatially collinear. Requires len(xs) >= 3.
    """
    n = len(xs)
    if n < 3:
        return False, 0.0, 0.0, 0.0, 0.0
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    ts = np.asarray(ts, dtype=np.float64)
    tmin = ts.min()
    tau = ts - tmin
    thr = float(inlier_threshold)

    draws = rng_draws(seed, pixel, 3 * iterations)
    u = draws.reshape(iterations, 3)
    i0, i1, i2 = _sample_indices(u[:, 0], u[:, 1], u[:, 2], n)

    x0, y0, r0 = xs[i0], ys[i0], -tau[i0]
    x1, y1, r1 = xs[i1], ys[i1], -tau[i1]
    x2, y2, r2 = xs[i2], ys[i2], -tau[i2]
    det = x0 * (y1 - y2) - y0 * (x1 - x2) + (x1 * y2 - x2 * y1)
    ok_it = np.abs(det) >= _DET_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (r0 * (y1 - y2) - y0 * (r1 - r2) + (r1 * y2 - r2 * y1)) / det
        b = (x0 * (r1 - r2) - r0 * (x1 - x2) + (x1 * r2 - x2 * r1)) / det
        c = (x0 * (y1 * r2 - y2 * r1) - y0 * (x1 * r2 - x2 * r1)
             + r0 * (x1 * y2 - x2 * y1)) / det
    with np.errstate(invalid="ignore"):
        # degenerate iterations carry NaN coefficients; they are masked out
        # below, never winning the consensus vote
        resid = (a[:, None] * xs[None, :] + b[:, None] * ys[None, :]
                 + tau[None, :] + c[:, None])
        counts = np.where(ok_it, (np.abs(resid) <= thr).sum(axis=1), -1)
    best = int(np.argmax(counts))
    if counts[best] < 0:
        return False, 0.0, 0.0, 0.0, 0.0

    a_b, b_b, c_b = float(a[best]), float(b[best]), float(c[best])
    a_f, b_f, c_f = _refine_plane(xs, ys, tau, a_b, b_b, c_b, thr)
    n_in = 0
    for k in range(n):
        r = a_f * xs[k] + b_f * ys[k] + tau[k] + c_f
        if abs(r) <= thr:
            n_in += 1
    return True, a_f, b_f, c_f - tmin, n_in / n


def _refine_plane(xs, ys, tau, a, b, c, thr):
    """Least-squares polish on the consensus set of (a, b, c).

    Accumulates the normal equations serially in index order; the compiled
    backend does the same, so the sums round identically.
    """
    sxx = sxy = sx1 = syy = sy1 = s11 = 0.0
    bx = by = b1 = 0.0
    for k in range(len(xs)):
        r = a * xs[k] + b * ys[k] + tau[k] + c
        if abs(r) <= thr:
            xk, yk, rk = xs[k], ys[k], -tau[k]
            sxx += xk * xk
            sxy += xk * yk
            sx1 += xk
            syy += yk * yk
            sy1 += yk
            s11 += 1.0
            bx += xk * rk
            by += yk * rk
            b1 += rk
    det = (sxx * (syy * s11 - sy1 * sy1)
           - sxy * (sxy * s11 - sy1 * sx1)
           + sx1 * (sxy * sy1 - syy * sx1))
    if abs(det) < _DET_EPS:
        return a, b, c
    a_n = (bx * (syy * s11 - sy1 * sy1)
           - sxy * (by * s11 - sy1 * b1)
           + sx1 * (by * sy1 - syy * b1))
    b_n = (sxx * (by * s11 - sy1 * b1)
           - bx * (sxy * s11 - sy1 * sx1)
           + sx1 * (sxy * b1 - by * sx1))
    c_n = (sxx * (syy * b1 - by * sy1)
           - sxy * (sxy * b1 - by * sx1)
           + bx * (sxy * sy1 - syy * sx1))
    return a_n / det, b_n / det, c_n / det


def estimate_flow_fields(time_map, pol_map, valid, radius, iterations,
                         thresh_frac, thresh_floor, min_points, seed):
    """Per-active-pixel plane RANSAC over the whole surface.

    Returns row-major arrays over active pixels:
    (x, y, t, p, vx, vy, inlier_rate, flow_ok).
    """
    height, width = time_map.shape
    ys_a, xs_a = np.nonzero(valid)
    n_act = len(xs_a)
    out_t = time_map[ys_a, xs_a].astype(np.float64)
    out_p = pol_map[ys_a, xs_a].astype(np.int8)
    out_vx = np.zeros(n_act)
    out_vy = np.zeros(n_act)
    out_rate = np.zeros(n_act)
    out_ok = np.zeros(n_act, dtype=np.uint8)

    for i in range(n_act):
        cx, cy = int(xs_a[i]), int(ys_a[i])
        x0, x1 = max(cx - radius, 0), min(cx + radius + 1, width)
        y0, y1 = max(cy - radius, 0), min(cy + radius + 1, height)
        sub = valid[y0:y1, x0:x1]
        ny, nx = np.nonzero(sub)
        if len(nx) < min_points or len(nx) < 3:
            continue
        nxs = (nx + x0).astype(np.float64)
        nys = (ny + y0).astype(np.float64)
        nts = time_map[ny + y0, nx + x0]
        span = nts.max() - nts.min()
        thr = thresh_frac * span
        if thr < thresh_floor:
            thr = thresh_floor
        ok, a, b, _, rate = ransac_plane(
            nxs, nys, nts, iterations, thr, seed, cy * width + cx)
        out_rate[i] = rate
        if not ok:
            continue
        den = a * a + b * b
        if den < _FLOW_EPS:
            continue
        out_vx[i] = -a / den
        out_vy[i] = -b / den
        out_ok[i] = 1
    return (xs_a.astype(np.int32), ys_a.astype(np.int32), out_t, out_p,
            out_vx, out_vy, out_rate, out_ok)
