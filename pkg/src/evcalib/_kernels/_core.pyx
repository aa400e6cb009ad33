# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for SAE construction, plane RANSAC, and labeling.

Mirrors _ref.py expression for expression. Any change here must be made in
both backends; tests/test_kernels.py asserts bit-identical output.
"""

import numpy as np

cimport numpy as cnp
from libc.stdint cimport int8_t, int32_t, int64_t, uint8_t, uint64_t
from libc.stdlib cimport free, malloc

cnp.import_array()

cdef uint64_t GAMMA = (<uint64_t>0x9E3779B9u << 32) | <uint64_t>0x7F4A7C15u
cdef uint64_t MIX1 = (<uint64_t>0xBF58476Du << 32) | <uint64_t>0x1CE4E5B9u
cdef uint64_t MIX2 = (<uint64_t>0x94D049BBu << 32) | <uint64_t>0x133111EBu

cdef double DET_EPS = 1e-12
cdef double FLOW_EPS = 1e-18


cdef inline uint64_t _mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline double _fabs(double v) nogil:
    return -v if v < 0.0 else v


cdef int _ransac_core(const double* xs, const double* ys, const double* ts, int n,
                      int iterations, double thr, uint64_t seed, uint64_t pixel,
                      double* out_a, double* out_b, double* out_c,
                      double* out_rate) nogil:
    cdef uint64_t base = seed * MIX1 + (pixel + 1) * GAMMA
    cdef uint64_t j = 0
    cdef uint64_t u0, u1, u2
    cdef int64_t i0, i1, i2, lo, hi
    cdef int it, k, cnt, best_cnt, n_in
    cdef double tmin, r
    cdef double x0, y0, r0, x1, y1, r1, x2, y2, r2, det
    cdef double a, b, c, a_b, b_b, c_b
    cdef double sxx, sxy, sx1, syy, sy1, s11, bx, by, b1
    cdef double a_n, b_n, c_n, xk, yk, rk

    tmin = ts[0]
    for k in range(1, n):
        if ts[k] < tmin:
            tmin = ts[k]

    best_cnt = -1
    a_b = b_b = c_b = 0.0
    for it in range(iterations):
        j += 1; u0 = _mix64(base + j * GAMMA)
        j += 1; u1 = _mix64(base + j * GAMMA)
        j += 1; u2 = _mix64(base + j * GAMMA)
        i0 = <int64_t>(u0 % <uint64_t>n)
        i1 = <int64_t>(u1 % <uint64_t>(n - 1))
        if i1 >= i0:
            i1 += 1
        if i0 < i1:
            lo = i0; hi = i1
        else:
            lo = i1; hi = i0
        i2 = <int64_t>(u2 % <uint64_t>(n - 2))
        if i2 >= lo:
            i2 += 1
        if i2 >= hi:
            i2 += 1

        x0 = xs[i0]; y0 = ys[i0]; r0 = -(ts[i0] - tmin)
        x1 = xs[i1]; y1 = ys[i1]; r1 = -(ts[i1] - tmin)
        x2 = xs[i2]; y2 = ys[i2]; r2 = -(ts[i2] - tmin)
        det = x0 * (y1 - y2) - y0 * (x1 - x2) + (x1 * y2 - x2 * y1)
        if _fabs(det) < DET_EPS:
            continue
        a = (r0 * (y1 - y2) - y0 * (r1 - r2) + (r1 * y2 - r2 * y1)) / det
        b = (x0 * (r1 - r2) - r0 * (x1 - x2) + (x1 * r2 - x2 * r1)) / det
        c = (x0 * (y1 * r2 - y2 * r1) - y0 * (x1 * r2 - x2 * r1)
             + r0 * (x1 * y2 - x2 * y1)) / det
        cnt = 0
        for k in range(n):
            r = a * xs[k] + b * ys[k] + (ts[k] - tmin) + c
            if _fabs(r) <= thr:
                cnt += 1
        if cnt > best_cnt:
            best_cnt = cnt
            a_b = a; b_b = b; c_b = c
    if best_cnt < 0:
        out_rate[0] = 0.0
        return 0

    # least-squares polish on the consensus set, serial accumulation
    sxx = sxy = sx1 = syy = sy1 = s11 = 0.0
    bx = by = b1 = 0.0
    for k in range(n):
        r = a_b * xs[k] + b_b * ys[k] + (ts[k] - tmin) + c_b
        if _fabs(r) <= thr:
            xk = xs[k]; yk = ys[k]; rk = -(ts[k] - tmin)
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
    if _fabs(det) >= DET_EPS:
        a_n = (bx * (syy * s11 - sy1 * sy1)
               - sxy * (by * s11 - sy1 * b1)
               + sx1 * (by * sy1 - syy * b1))
        b_n = (sxx * (by * s11 - sy1 * b1)
               - bx * (sxy * s11 - sy1 * sx1)
               + sx1 * (sxy * b1 - by * sx1))
        c_n = (sxx * (syy * b1 - by * sy1)
               - sxy * (sxy * b1 - by * sx1)
               + bx * (sxy * sy1 - syy * sx1))
        a_b = a_n / det
        b_b = b_n / det
        c_b = c_n / det

    n_in = 0
    for k in range(n):
        r = a_b * xs[k] + b_b * ys[k] + (ts[k] - tmin) + c_b
        if _fabs(r) <= thr:
            n_in += 1
    out_a[0] = a_b
    out_b[0] = b_b
    out_c[0] = c_b - tmin
    out_rate[0] = (<double>n_in) / (<double>n)
    return 1


def rng_draws(seed, pixel, count):
    """Same deterministic u64 stream as the fallback backend."""
    cdef uint64_t base = (<uint64_t>(seed % (1 << 64))) * MIX1 \
        + (<uint64_t>pixel + 1) * GAMMA
    out = np.empty(int(count), dtype=np.uint64)
    cdef uint64_t[::1] view = out
    cdef uint64_t j
    for j in range(<uint64_t>count):
        view[j] = _mix64(base + (j + 1) * GAMMA)
    return out


def ransac_plane(xs, ys, ts, iterations, inlier_threshold, seed, pixel):
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    ts = np.ascontiguousarray(ts, dtype=np.float64)
    cdef double[::1] xv = xs, yv = ys, tv = ts
    cdef int n = xv.shape[0]
    if n < 3:
        return False, 0.0, 0.0, 0.0, 0.0
    cdef double a = 0.0, b = 0.0, c = 0.0, rate = 0.0
    cdef int ok = _ransac_core(&xv[0], &yv[0], &tv[0], n, int(iterations),
                               float(inlier_threshold),
                               <uint64_t>(seed % (1 << 64)),
                               <uint64_t>pixel, &a, &b, &c, &rate)
    return bool(ok), a, b, c, rate


def build_sae_maps(t, x, y, p, width, height):
    t = np.ascontiguousarray(t, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.int32)
    y = np.ascontiguousarray(y, dtype=np.int32)
    p = np.ascontiguousarray(p, dtype=np.int8)
    time_map = np.zeros((height, width), dtype=np.float64)
    pol_map = np.zeros((height, width), dtype=np.int8)
    valid = np.zeros((height, width), dtype=np.uint8)
    cdef double[:, ::1] tm = time_map
    cdef int8_t[:, ::1] pm = pol_map
    cdef uint8_t[:, ::1] vm = valid
    cdef double[::1] tv = t
    cdef int32_t[::1] xv = x, yv = y
    cdef int8_t[::1] pv = p
    cdef Py_ssize_t i, n = tv.shape[0]
    cdef int32_t xi, yi
    with nogil:
        for i in range(n):
            xi = xv[i]; yi = yv[i]
            tm[yi, xi] = tv[i]
            pm[yi, xi] = pv[i]
            vm[yi, xi] = 1
    return time_map, pol_map, valid.view(np.bool_)


def label_components(occupancy):
    occ = np.ascontiguousarray(occupancy, dtype=np.uint8)
    cdef uint8_t[:, ::1] ov = occ
    cdef int height = ov.shape[0], width = ov.shape[1]
    labels = np.zeros((height, width), dtype=np.int32)
    cdef int32_t[:, ::1] lv = labels
    cdef int32_t* stack = <int32_t*>malloc(height * width * sizeof(int32_t))
    if stack == NULL:
        raise MemoryError
    cdef int top, count = 0
    cdef int yy, xx, cy, cx, ny, nx, dy, dx
    try:
        with nogil:
            for yy in range(height):
                for xx in range(width):
                    if ov[yy, xx] == 0 or lv[yy, xx] != 0:
                        continue
                    count += 1
                    top = 0
                    stack[top] = yy * width + xx
                    lv[yy, xx] = count
                    while top >= 0:
                        cy = stack[top] // width
                        cx = stack[top] - cy * width
                        top -= 1
                        for dy in range(-1, 2):
                            ny = cy + dy
                            if ny < 0 or ny >= height:
                                continue
                            for dx in range(-1, 2):
                                nx = cx + dx
                                if nx < 0 or nx >= width:
                                    continue
                                if ov[ny, nx] != 0 and lv[ny, nx] == 0:
                                    lv[ny, nx] = count
                                    top += 1
                                    stack[top] = ny * width + nx
    finally:
        free(stack)
    return labels, count


def estimate_flow_fields(time_map, pol_map, valid, radius, iterations,
                         thresh_frac, thresh_floor, min_points, seed):
    time_map = np.ascontiguousarray(time_map, dtype=np.float64)
    pol_map = np.ascontiguousarray(pol_map, dtype=np.int8)
    valid_u8 = np.ascontiguousarray(valid, dtype=np.uint8)
    cdef double[:, ::1] tm = time_map
    cdef int8_t[:, ::1] pm = pol_map
    cdef uint8_t[:, ::1] vm = valid_u8
    cdef int height = tm.shape[0], width = tm.shape[1]
    cdef int rad = int(radius), iters = int(iterations), minp = int(min_points)
    cdef double frac = float(thresh_frac), floor_s = float(thresh_floor)
    cdef uint64_t seed_u = <uint64_t>(seed % (1 << 64))

    cdef int n_act = int(valid_u8.sum())
    out_x = np.zeros(n_act, dtype=np.int32)
    out_y = np.zeros(n_act, dtype=np.int32)
    out_t = np.zeros(n_act, dtype=np.float64)
    out_p = np.zeros(n_act, dtype=np.int8)
    out_vx = np.zeros(n_act, dtype=np.float64)
    out_vy = np.zeros(n_act, dtype=np.float64)
    out_rate = np.zeros(n_act, dtype=np.float64)
    out_ok = np.zeros(n_act, dtype=np.uint8)
    if n_act == 0:
        return out_x, out_y, out_t, out_p, out_vx, out_vy, out_rate, out_ok
    cdef int32_t[::1] oxv = out_x, oyv = out_y
    cdef double[::1] otv = out_t, ovxv = out_vx, ovyv = out_vy, orv = out_rate
    cdef int8_t[::1] opv = out_p
    cdef uint8_t[::1] okv = out_ok

    cdef int side = 2 * rad + 1
    cdef double* nxs = <double*>malloc(3 * side * side * sizeof(double))
    if nxs == NULL:
        raise MemoryError
    cdef double* nys = nxs + side * side
    cdef double* nts = nys + side * side

    cdef int i = 0
    cdef int cy, cx, y0, y1, x0, x1, y2, x2, n, k, ok
    cdef double tmin, tmax, span, thr, a, b, c, rate, den
    with nogil:
        for cy in range(height):
            for cx in range(width):
                if vm[cy, cx] == 0:
                    continue
                oxv[i] = cx
                oyv[i] = cy
                otv[i] = tm[cy, cx]
                opv[i] = pm[cy, cx]
                y0 = cy - rad
                if y0 < 0: y0 = 0
                y1 = cy + rad + 1
                if y1 > height: y1 = height
                x0 = cx - rad
                if x0 < 0: x0 = 0
                x1 = cx + rad + 1
                if x1 > width: x1 = width
                n = 0
                for y2 in range(y0, y1):
                    for x2 in range(x0, x1):
                        if vm[y2, x2] != 0:
                            nxs[n] = <double>x2
                            nys[n] = <double>y2
                            nts[n] = tm[y2, x2]
                            n += 1
                if n < minp or n < 3:
                    i += 1
                    continue
                tmin = nts[0]; tmax = nts[0]
                for k in range(1, n):
                    if nts[k] < tmin: tmin = nts[k]
                    if nts[k] > tmax: tmax = nts[k]
                span = tmax - tmin
                thr = frac * span
                if thr < floor_s:
                    thr = floor_s
                ok = _ransac_core(nxs, nys, nts, n, iters, thr, seed_u,
                                  <uint64_t>(cy * width + cx), &a, &b, &c, &rate)
                orv[i] = rate
                if ok:
                    den = a * a + b * b
                    if den >= FLOW_EPS:
                        ovxv[i] = -a / den
                        ovyv[i] = -b / den
                        okv[i] = 1
                i += 1
    free(nxs)
    return out_x, out_y, out_t, out_p, out_vx, out_vy, out_rate, out_ok
