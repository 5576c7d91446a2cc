"""Hot numeric kernels.

Everything here is written in the subset of Python that numba compiles in
nopython mode, so the same source doubles as the pure-numpy fallback when
``RACENAV_DISABLE_NUMBA=1``. The two exceptions (piecewise polynomial
evaluation and the rasterizer) carry a vectorized numpy twin, selected at
import time, because the loop versions are painfully slow uncompiled.

State vectors are flat float64 arrays of length 13:
``[px, py, pz, vx, vy, vz, qw, qx, qy, qz, wx, wy, wz]`` with the quaternion
rotating body vectors into the world frame and body rates in the body frame.
"""

import math

import numpy as np

from racenav._jit import USE_NUMBA, jit

GRAVITY = 9.81

STATUS_OK = 0
STATUS_SINGULAR_THRUST = 1
STATUS_NONFINITE = 2
MIN_VERTICAL_FORCE = 0.25 * GRAVITY  # floor applied when a tilt limit is active


# ---------------------------------------------------------------------------
# polynomials
# ---------------------------------------------------------------------------

@jit
def poly_eval_scalar(coeffs, t, order):
    """Derivative ``order`` of ``sum c_k t**k`` at ``t`` (Horner)."""
    n = coeffs.shape[0]
    acc = 0.0
    for k in range(n - 1, order - 1, -1):
        fac = 1.0
        for m in range(k - order + 1, k + 1):
            fac *= m
        acc = acc * t + coeffs[k] * fac
    return acc


@jit
def _ppoly_eval_loops(coeffs, knots, ts, order, out):
    nseg = coeffs.shape[0]
    ndim = coeffs.shape[1]
    for i in range(ts.shape[0]):
        t = ts[i]
        seg = np.searchsorted(knots, t, side="right") - 1
        if seg < 0:
            seg = 0
        elif seg > nseg - 1:
            seg = nseg - 1
        tau = t - knots[seg]
        for d in range(ndim):
            out[i, d] = poly_eval_scalar(coeffs[seg, d], tau, order)
    return out


def _deriv_factors(ncoef, order):
    k = np.arange(ncoef)
    fac = np.ones(ncoef)
    for m in range(order):
        fac = fac * (k - m)
    return np.clip(fac, 0.0, None)


def _ppoly_eval_numpy(coeffs, knots, ts, order, out):
    nseg, _, ncoef = coeffs.shape
    seg = np.clip(np.searchsorted(knots, ts, side="right") - 1, 0, nseg - 1)
    tau = ts - knots[seg]
    fac = _deriv_factors(ncoef, order)
    powers = np.maximum(np.arange(ncoef) - order, 0)
    basis = fac[None, :] * tau[:, None] ** powers[None, :]
    out[:] = np.einsum("ndk,nk->nd", coeffs[seg], basis)
    return out


def ppoly_eval(coeffs, knots, ts, order):
    """Evaluate a piecewise polynomial at many times.

    ``coeffs`` has shape (nseg, ndim, ncoef) in ascending powers of local
    time, ``knots`` the (nseg + 1,) segment boundaries. Times outside the
    knot span extrapolate the first/last piece.
    """
    ts = np.ascontiguousarray(ts, dtype=np.float64)
    out = np.empty((ts.shape[0], coeffs.shape[1]))
    if USE_NUMBA:
        return _ppoly_eval_loops(coeffs, knots, ts, int(order), out)
    return _ppoly_eval_numpy(coeffs, knots, ts, int(order), out)


# ---------------------------------------------------------------------------
# rotations
# ---------------------------------------------------------------------------

@jit
def quat_to_rot(qw, qx, qy, qz):
    r = np.empty((3, 3))
    r[0, 0] = 1.0 - 2.0 * (qy * qy + qz * qz)
    r[0, 1] = 2.0 * (qx * qy - qw * qz)
    r[0, 2] = 2.0 * (qx * qz + qw * qy)
    r[1, 0] = 2.0 * (qx * qy + qw * qz)
    r[1, 1] = 1.0 - 2.0 * (qx * qx + qz * qz)
    r[1, 2] = 2.0 * (qy * qz - qw * qx)
    r[2, 0] = 2.0 * (qx * qz - qw * qy)
    r[2, 1] = 2.0 * (qy * qz + qw * qx)
    r[2, 2] = 1.0 - 2.0 * (qx * qx + qy * qy)
    return r


@jit
def rot_to_quat(r):
    q = np.empty(4)
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q[0] = 0.25 * s
        q[1] = (r[2, 1] - r[1, 2]) / s
        q[2] = (r[0, 2] - r[2, 0]) / s
        q[3] = (r[1, 0] - r[0, 1]) / s
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q[0] = (r[2, 1] - r[1, 2]) / s
        q[1] = 0.25 * s
        q[2] = (r[0, 1] + r[1, 0]) / s
        q[3] = (r[0, 2] + r[2, 0]) / s
    elif r[1, 1] > r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q[0] = (r[0, 2] - r[2, 0]) / s
        q[1] = (r[0, 1] + r[1, 0]) / s
        q[2] = 0.25 * s
        q[3] = (r[1, 2] + r[2, 1]) / s
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q[0] = (r[1, 0] - r[0, 1]) / s
        q[1] = (r[0, 2] + r[2, 0]) / s
        q[2] = (r[1, 2] + r[2, 1]) / s
        q[3] = 0.25 * s
    if q[0] < 0.0:
        q[0] = -q[0]
        q[1] = -q[1]
        q[2] = -q[2]
        q[3] = -q[3]
    return q


# ---------------------------------------------------------------------------
# rigid-body dynamics
# ---------------------------------------------------------------------------

@jit
def _state_deriv(s, thrust, cx, cy, cz, tau, out):
    qw, qx, qy, qz = s[6], s[7], s[8], s[9]
    wx, wy, wz = s[10], s[11], s[12]
    out[0] = s[3]
    out[1] = s[4]
    out[2] = s[5]
    # body z axis in world = third column of R(q)
    out[3] = 2.0 * (qx * qz + qw * qy) * thrust
    out[4] = 2.0 * (qy * qz - qw * qx) * thrust
    out[5] = (1.0 - 2.0 * (qx * qx + qy * qy)) * thrust - GRAVITY
    # qdot = 0.5 q (x) [0, w]
    out[6] = 0.5 * (-qx * wx - qy * wy - qz * wz)
    out[7] = 0.5 * (qw * wx + qy * wz - qz * wy)
    out[8] = 0.5 * (qw * wy - qx * wz + qz * wx)
    out[9] = 0.5 * (qw * wz + qx * wy - qy * wx)
    if tau > 0.0:
        out[10] = (cx - wx) / tau
        out[11] = (cy - wy) / tau
        out[12] = (cz - wz) / tau
    else:
        out[10] = 0.0
        out[11] = 0.0
        out[12] = 0.0


@jit
def rk4_step(s, thrust, cx, cy, cz, dt, tau):
    """One RK4 step of length ``dt`` with the command held constant.

    ``tau`` is the body-rate lag time constant; ``tau <= 0`` means rates
    follow the command instantly.
    """
    s0 = s.copy()
    if tau <= 0.0:
        s0[10] = cx
        s0[11] = cy
        s0[12] = cz
    k1 = np.empty(13)
    k2 = np.empty(13)
    k3 = np.empty(13)
    k4 = np.empty(13)
    tmp = np.empty(13)
    _state_deriv(s0, thrust, cx, cy, cz, tau, k1)
    for i in range(13):
        tmp[i] = s0[i] + 0.5 * dt * k1[i]
    _state_deriv(tmp, thrust, cx, cy, cz, tau, k2)
    for i in range(13):
        tmp[i] = s0[i] + 0.5 * dt * k2[i]
    _state_deriv(tmp, thrust, cx, cy, cz, tau, k3)
    for i in range(13):
        tmp[i] = s0[i] + dt * k3[i]
    _state_deriv(tmp, thrust, cx, cy, cz, tau, k4)
    out = np.empty(13)
    for i in range(13):
        out[i] = s0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    qn = math.sqrt(out[6] ** 2 + out[7] ** 2 + out[8] ** 2 + out[9] ** 2)
    for i in range(6, 10):
        out[i] /= qn
    return out


# ---------------------------------------------------------------------------
# control
# ---------------------------------------------------------------------------

@jit
def yaw_from_velocity(vx, vy, yaw_prev, min_speed):
    if math.sqrt(vx * vx + vy * vy) < min_speed:
        return yaw_prev
    return math.atan2(vy, vx)


@jit
def control_law(s, ref, yaw_des, kp, kd, katt, rate_limit, thrust_max, max_tilt=0.0):
    """Cascade law: PD on position plus feedforward, then attitude P.

    ``ref`` is a (4, 3) array of reference position, velocity, acceleration
    and jerk. With ``max_tilt > 0`` the desired force keeps a minimum upward
    component and its tilt from vertical is capped (horizontal part scaled
    down); otherwise the plain cascade is used. Returns
    ``(thrust, wx, wy, wz, status)``.
    """
    fx = ref[2, 0] + kp * (ref[0, 0] - s[0]) + kd * (ref[1, 0] - s[3])
    fy = ref[2, 1] + kp * (ref[0, 1] - s[1]) + kd * (ref[1, 1] - s[4])
    fz = ref[2, 2] + kp * (ref[0, 2] - s[2]) + kd * (ref[1, 2] - s[5]) + GRAVITY
    fn = math.sqrt(fx * fx + fy * fy + fz * fz)
    if not (fn >= 0.1):
        return 0.0, 0.0, 0.0, 0.0, STATUS_SINGULAR_THRUST
    if max_tilt > 0.0:
        if fz < MIN_VERTICAL_FORCE:
            fz = MIN_VERTICAL_FORCE
        h = math.sqrt(fx * fx + fy * fy)
        h_max = fz * math.tan(max_tilt)
        if h > h_max:
            fx *= h_max / h
            fy *= h_max / h
        fn = math.sqrt(fx * fx + fy * fy + fz * fz)
    zd = np.array([fx / fn, fy / fn, fz / fn])

    r = quat_to_rot(s[6], s[7], s[8], s[9])
    thrust = fx * r[0, 2] + fy * r[1, 2] + fz * r[2, 2]
    if thrust < 0.0:
        thrust = 0.0
    elif thrust > thrust_max:
        thrust = thrust_max

    xc = np.array([math.cos(yaw_des), math.sin(yaw_des), 0.0])
    yd = np.cross(zd, xc)
    yn = math.sqrt(yd[0] ** 2 + yd[1] ** 2 + yd[2] ** 2)
    if yn < 1e-6:
        # thrust axis horizontal and aligned with the heading: keep current y
        yd = r[:, 1].copy()
        yd = yd - np.dot(yd, zd) * zd
        yn = math.sqrt(yd[0] ** 2 + yd[1] ** 2 + yd[2] ** 2)
    yd = yd / yn
    xd = np.cross(yd, zd)
    rd = np.empty((3, 3))
    for i in range(3):
        rd[i, 0] = xd[i]
        rd[i, 1] = yd[i]
        rd[i, 2] = zd[i]

    qe = rot_to_quat(r.T @ rd)
    vn = math.sqrt(qe[1] ** 2 + qe[2] ** 2 + qe[3] ** 2)
    if vn > 1e-12:
        ang = 2.0 * math.atan2(vn, qe[0])
        ex = qe[1] / vn * ang
        ey = qe[2] / vn * ang
        ez = qe[3] / vn * ang
    else:
        ex = 2.0 * qe[1]
        ey = 2.0 * qe[2]
        ez = 2.0 * qe[3]

    # roll/pitch feedforward from reference jerk (flatness)
    jx, jy, jz = ref[3, 0], ref[3, 1], ref[3, 2]
    jz_par = jx * zd[0] + jy * zd[1] + jz * zd[2]
    hx = (jx - jz_par * zd[0]) / fn
    hy = (jy - jz_par * zd[1]) / fn
    hz = (jz - jz_par * zd[2]) / fn
    p_ff = -(hx * yd[0] + hy * yd[1] + hz * yd[2])
    q_ff = hx * xd[0] + hy * xd[1] + hz * xd[2]

    wx = katt * ex + p_ff
    wy = katt * ey + q_ff
    wz = katt * ez
    wn = math.sqrt(wx * wx + wy * wy + wz * wz)
    if wn > rate_limit:
        sc = rate_limit / wn
        wx *= sc
        wy *= sc
        wz *= sc
    return thrust, wx, wy, wz, STATUS_OK


@jit
def segment_reference(coeffs, t, out):
    for k in range(4):
        for d in range(3):
            out[k, d] = poly_eval_scalar(coeffs[d], t, k)
    return out


@jit
def fly_segment(s, coeffs, seg_T, t0, n_steps, dt, kp, kd, katt, rate_limit,
                thrust_max, tau, yaw_prev, yaw_min_speed, max_tilt=0.0):
    """Track one polynomial segment for ``n_steps`` simulation steps.

    Returns ``(states, commands, yaw, status, n_done)``. ``states[k]`` is the
    state after step k; ``commands[k]`` the (thrust, wx, wy, wz) applied
    during it.
    """
    states = np.empty((n_steps, 13))
    cmds = np.empty((n_steps, 4))
    ref = np.empty((4, 3))
    cur = s.copy()
    yaw = yaw_prev
    for k in range(n_steps):
        t = t0 + k * dt
        if t > seg_T:
            t = seg_T
        segment_reference(coeffs, t, ref)
        yaw = yaw_from_velocity(ref[1, 0], ref[1, 1], yaw, yaw_min_speed)
        thrust, wx, wy, wz, status = control_law(cur, ref, yaw, kp, kd, katt,
                                                 rate_limit, thrust_max, max_tilt)
        if status != STATUS_OK:
            return states, cmds, yaw, status, k
        cur = rk4_step(cur, thrust, wx, wy, wz, dt, tau)
        for i in range(13):
            if not math.isfinite(cur[i]):
                return states, cmds, yaw, STATUS_NONFINITE, k
        states[k] = cur
        cmds[k, 0] = thrust
        cmds[k, 1] = wx
        cmds[k, 2] = wy
        cmds[k, 3] = wz
    return states, cmds, yaw, STATUS_OK, n_steps


# ---------------------------------------------------------------------------
# rasterizer
# ---------------------------------------------------------------------------

@jit
def _raster_loops(segs, seg_start, seg_count, intensity, width, height, sigma):
    grid = np.zeros((height, width))
    inv2s2 = 1.0 / (2.0 * sigma * sigma)
    cutoff = 9.0 * sigma * sigma
    for g in range(seg_start.shape[0]):
        a0 = seg_start[g]
        a1 = a0 + seg_count[g]
        if a1 == a0:
            continue
        xmin = 1e30
        xmax = -1e30
        ymin = 1e30
        ymax = -1e30
        for m in range(a0, a1):
            xmin = min(xmin, segs[m, 0], segs[m, 2])
            xmax = max(xmax, segs[m, 0], segs[m, 2])
            ymin = min(ymin, segs[m, 1], segs[m, 3])
            ymax = max(ymax, segs[m, 1], segs[m, 3])
        pad = 3.0 * sigma + 1.0
        c0 = max(0, int(math.floor(xmin - pad)))
        c1 = min(width, int(math.ceil(xmax + pad)))
        r0 = max(0, int(math.floor(ymin - pad)))
        r1 = min(height, int(math.ceil(ymax + pad)))
        for row in range(r0, r1):
            py = row + 0.5
            for col in range(c0, c1):
                px = col + 0.5
                best = 1e30
                for m in range(a0, a1):
                    x0 = segs[m, 0]
                    y0 = segs[m, 1]
                    dx = segs[m, 2] - x0
                    dy = segs[m, 3] - y0
                    ll = dx * dx + dy * dy
                    if ll > 0.0:
                        u = ((px - x0) * dx + (py - y0) * dy) / ll
                        if u < 0.0:
                            u = 0.0
                        elif u > 1.0:
                            u = 1.0
                    else:
                        u = 0.0
                    ex = x0 + u * dx - px
                    ey = y0 + u * dy - py
                    d2 = ex * ex + ey * ey
                    if d2 < best:
                        best = d2
                if best < cutoff:
                    alpha = math.exp(-best * inv2s2)
                    grid[row, col] = grid[row, col] * (1.0 - alpha) + alpha * intensity[g]
    return grid


def _raster_numpy(segs, seg_start, seg_count, intensity, width, height, sigma):
    grid = np.zeros((height, width))
    cols, rows = np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5)
    px = cols.ravel()[:, None]
    py = rows.ravel()[:, None]
    flat = grid.ravel()
    for g in range(seg_start.shape[0]):
        a0 = seg_start[g]
        a1 = a0 + seg_count[g]
        if a1 == a0:
            continue
        s = segs[a0:a1]
        x0 = s[:, 0][None, :]
        y0 = s[:, 1][None, :]
        dx = (s[:, 2] - s[:, 0])[None, :]
        dy = (s[:, 3] - s[:, 1])[None, :]
        ll = dx * dx + dy * dy
        with np.errstate(invalid="ignore", divide="ignore"):
            u = np.where(ll > 0.0, ((px - x0) * dx + (py - y0) * dy) / ll, 0.0)
        u = np.clip(u, 0.0, 1.0)
        ex = x0 + u * dx - px
        ey = y0 + u * dy - py
        best = (ex * ex + ey * ey).min(axis=1)
        hit = best < 9.0 * sigma * sigma
        alpha = np.exp(-best[hit] / (2.0 * sigma * sigma))
        flat[hit] = flat[hit] * (1.0 - alpha) + alpha * intensity[g]
    return flat.reshape(height, width)


def raster_soft_lines(segs, seg_start, seg_count, intensity, width, height, sigma):
    """Composite soft 2-D line segments into a ``height x width`` grid.

    ``segs`` rows are ``(x0, y0, x1, y1)`` in pixel units. Segment groups
    (one per gate) are drawn in the given order with alpha falling off as a
    Gaussian of the distance to the nearest segment of the group.
    """
    segs = np.ascontiguousarray(segs, dtype=np.float64).reshape(-1, 4)
    seg_start = np.ascontiguousarray(seg_start, dtype=np.int64)
    seg_count = np.ascontiguousarray(seg_count, dtype=np.int64)
    intensity = np.ascontiguousarray(intensity, dtype=np.float64)
    if USE_NUMBA:
        return _raster_loops(segs, seg_start, seg_count, intensity,
                             int(width), int(height), float(sigma))
    return _raster_numpy(segs, seg_start, seg_count, intensity,
                         int(width), int(height), float(sigma))
