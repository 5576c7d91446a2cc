"""Minimum-snap global trajectory through gate waypoints.

Each axis is an independent piecewise 7th-order polynomial. The snap cost is
minimized subject to waypoint interpolation and continuity of derivatives
1-4 at every knot (wrapping around for closed loops; open trajectories start
and end at rest). Times are allocated proportionally to waypoint spacing and
then stretched uniformly until the thrust, body-rate and speed limits hold.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from racenav import kernels
from racenav.errors import DegenerateSegmentError, InfeasibleLimitsError, SingularFlatnessError
from racenav.geom import Polynomial1D

GRAVITY = kernels.GRAVITY
ORDER = 7
NCOEF = ORDER + 1
CONTINUITY = 4
SAMPLE_RATE = 1000.0
MIN_SAMPLES_PER_SEGMENT = 100
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True)
class FeasibilityLimits:
    max_thrust: float = 18.0
    max_body_rate: float = 1.5
    v_max: float = 10.0

    def __post_init__(self):
        for name in ("max_thrust", "max_body_rate", "v_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


class FeasibilityReport(NamedTuple):
    max_thrust: float
    max_body_rate: float
    max_speed: float


class NearestPoint(NamedTuple):
    t_star: float
    p_closest: np.ndarray
    distance: float


class GoalPoint(NamedTuple):
    position: np.ndarray
    t: float
    saturated: bool


class GlobalTrajectory:
    """Piecewise polynomial position trajectory.

    ``coeffs`` has shape (nseg, 3, ncoef) in ascending powers of the local
    segment time; ``durations`` has shape (nseg,). ``gate_knots`` lists the
    knot indices that correspond to gates (all knots when no shaping
    waypoints were added).
    """

    def __init__(self, coeffs, durations, closed=False, gate_knots=None):
        self.coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
        self.durations = np.asarray(durations, dtype=np.float64)
        if self.coeffs.ndim != 3 or self.coeffs.shape[1] != 3:
            raise ValueError("coeffs must have shape (nseg, 3, ncoef)")
        if self.coeffs.shape[0] != self.durations.shape[0]:
            raise ValueError("one duration per segment required")
        if np.any(self.durations <= 0):
            raise DegenerateSegmentError("segment durations must be positive")
        self.closed = bool(closed)
        self.knot_times = np.concatenate([[0.0], np.cumsum(self.durations)])
        n_knots = self.nseg if self.closed else self.nseg + 1
        self.gate_knots = np.arange(n_knots) if gate_knots is None else np.asarray(gate_knots)

    @property
    def nseg(self):
        return self.coeffs.shape[0]

    @property
    def period(self):
        return float(self.knot_times[-1])

    def segments(self):
        """Per-segment (x, y, z) Polynomial1D triples."""
        return [tuple(Polynomial1D(self.coeffs[i, d], self.durations[i]) for d in range(3))
                for i in range(self.nseg)]

    # -- evaluation -------------------------------------------------------
    def wrap(self, t):
        if self.closed:
            return np.mod(t, self.period)
        return np.clip(t, 0.0, self.period)

    def eval_many(self, ts, order=0):
        ts = self.wrap(np.asarray(ts, dtype=np.float64))
        return kernels.ppoly_eval(self.coeffs, self.knot_times, np.atleast_1d(ts), order)

    def eval(self, t, order=0):
        return self.eval_many(np.array([float(t)]), order)[0]

    def __call__(self, t, order=0):
        return self.eval(t, order)

    def knot_position(self, k):
        return self.eval(self.knot_times[k])

    def sample_times(self):
        """At least 100 samples per segment and at least 1 kHz overall."""
        parts = []
        for i in range(self.nseg):
            n = max(MIN_SAMPLES_PER_SEGMENT, int(math.ceil(self.durations[i] * SAMPLE_RATE)))
            parts.append(self.knot_times[i] + np.linspace(0.0, self.durations[i], n, endpoint=False))
        parts.append([self.period])
        return np.concatenate(parts)

    @cached_property
    def v_max_achieved(self):
        v = self.eval_many(self.sample_times(), 1)
        return float(np.linalg.norm(v, axis=1).max())

    def time_scaled(self, alpha):
        """Same path traversed ``alpha`` times slower."""
        k = np.arange(self.coeffs.shape[2])
        return GlobalTrajectory(self.coeffs / alpha ** k, self.durations * alpha,
                                self.closed, self.gate_knots)

    # -- dense tables for projections ------------------------------------
    @cached_property
    def _table(self):
        n = max(int(math.ceil(self.period * SAMPLE_RATE)), 2)
        t = np.linspace(0.0, self.period, n + 1)
        pos = self.eval_many(t, 0)
        h = t[1] - t[0]
        mids = 0.5 * (t[:-1] + t[1:])
        nodes = (mids[:, None] + 0.5 * h * _GL_NODES[None, :]).ravel()
        speed = np.linalg.norm(self.eval_many(nodes, 1), axis=1).reshape(-1, _GL_NODES.size)
        seg_len = 0.5 * h * (speed @ _GL_WEIGHTS)
        s = np.concatenate([[0.0], np.cumsum(seg_len)])
        return t, pos, s

    @property
    def length(self):
        return float(self._table[2][-1])

    def arc_length_at(self, t):
        t_tab, _, s_tab = self._table
        return float(np.interp(self.wrap(t), t_tab, s_tab))

    def time_at_arc_length(self, s):
        t_tab, _, s_tab = self._table
        return float(np.interp(s, s_tab, t_tab))


# ---------------------------------------------------------------------------
# QP assembly
# ---------------------------------------------------------------------------

def _deriv_row(t, order, ncoef=NCOEF):
    row = np.zeros(ncoef)
    for k in range(order, ncoef):
        row[k] = math.factorial(k) / math.factorial(k - order) * t ** (k - order)
    return row


def _snap_cost_matrix(T, ncoef=NCOEF, r=4):
    q = np.zeros((ncoef, ncoef))
    for i in range(r, ncoef):
        for j in range(r, ncoef):
            ci = math.factorial(i) / math.factorial(i - r)
            cj = math.factorial(j) / math.factorial(j - r)
            p = i + j - 2 * r + 1
            q[i, j] = ci * cj * T ** p / p
    return q


def solve_min_snap(waypoints, durations, closed):
    """Coefficients (nseg, 3, 8) of the min-snap solution for fixed times."""
    wp = np.asarray(waypoints, dtype=np.float64)
    T = np.asarray(durations, dtype=np.float64)
    nseg = T.size
    nvar = NCOEF * nseg

    H = np.zeros((nvar, nvar))
    for i in range(nseg):
        sl = slice(NCOEF * i, NCOEF * (i + 1))
        H[sl, sl] = _snap_cost_matrix(T[i])

    rows, rhs = [], []

    def add(entries, b):
        row = np.zeros(nvar)
        for seg, vec in entries:
            row[NCOEF * seg:NCOEF * (seg + 1)] += vec
        rows.append(row)
        rhs.append(b)

    zero3 = np.zeros(3)
    for i in range(nseg):
        nxt = (i + 1) % len(wp) if closed else i + 1
        add([(i, _deriv_row(0.0, 0))], wp[i])
        add([(i, _deriv_row(T[i], 0))], wp[nxt])
    n_joints = nseg if closed else nseg - 1
    for i in range(n_joints):
        j = (i + 1) % nseg
        for r in range(1, CONTINUITY + 1):
            add([(i, _deriv_row(T[i], r)), (j, -_deriv_row(0.0, r))], zero3)
    if not closed:
        for r in range(1, 4):
            add([(0, _deriv_row(0.0, r))], zero3)
            add([(nseg - 1, _deriv_row(T[-1], r))], zero3)

    A = np.array(rows)
    b = np.array(rhs)
    m = A.shape[0]
    kkt = np.zeros((nvar + m, nvar + m))
    kkt[:nvar, :nvar] = 2.0 * H
    kkt[:nvar, nvar:] = A.T
    kkt[nvar:, :nvar] = A
    full_rhs = np.zeros((nvar + m, 3))
    full_rhs[nvar:] = b
    sol = np.linalg.solve(kkt, full_rhs)[:nvar]
    return sol.reshape(nseg, NCOEF, 3).transpose(0, 2, 1).copy()


def snap_cost(traj: GlobalTrajectory) -> float:
    """Integral of squared snap summed over axes (exact)."""
    total = 0.0
    for i in range(traj.nseg):
        q = _snap_cost_matrix(traj.durations[i], traj.coeffs.shape[2])
        for d in range(3):
            c = traj.coeffs[i, d]
            total += c @ q @ c
    return float(total)


# ---------------------------------------------------------------------------
# feasibility via differential flatness
# ---------------------------------------------------------------------------

def flatness_profile(acc, jerk):
    """Mass-normalized thrust and roll/pitch rate magnitude along samples.

    Thrust is ``|a + g e_z|``; the rate is the jerk component orthogonal to
    the thrust axis divided by the thrust.
    """
    acc = np.atleast_2d(acc)
    jerk = np.atleast_2d(jerk)
    f = acc + np.array([0.0, 0.0, GRAVITY])
    c = np.linalg.norm(f, axis=1)
    if np.any(c < 0.1):
        raise SingularFlatnessError("thrust below 0.1 m/s^2 (free fall) on the trajectory")
    z = f / c[:, None]
    j_perp = jerk - np.sum(jerk * z, axis=1)[:, None] * z
    return c, np.linalg.norm(j_perp, axis=1) / c


def feasibility_check(traj: GlobalTrajectory) -> FeasibilityReport:
    ts = traj.sample_times()
    c, w = flatness_profile(traj.eval_many(ts, 2), traj.eval_many(ts, 3))
    speed = np.linalg.norm(traj.eval_many(ts, 1), axis=1)
    return FeasibilityReport(float(c.max()), float(w.max()), float(speed.max()))


def _scaled_limits(vel, acc, jerk, alpha):
    c, w = flatness_profile(acc / alpha ** 2, jerk / alpha ** 3)
    return c.max(), w.max(), np.linalg.norm(vel, axis=1).max() / alpha


def _satisfies(report, limits):
    return (report[0] <= limits.max_thrust and report[1] <= limits.max_body_rate
            and report[2] <= limits.v_max)


def plan_min_snap(waypoints, limits: FeasibilityLimits = FeasibilityLimits(), closed=False,
                  gate_knots=None, v_nominal=None) -> GlobalTrajectory:
    """Plan a feasible minimum-snap trajectory through ``waypoints``.

    Raises DegenerateSegmentError for repeated consecutive waypoints and
    InfeasibleLimitsError when the thrust limit cannot even hold hover.
    """
    wp = np.asarray(waypoints, dtype=np.float64).reshape(-1, 3)
    if len(wp) < (3 if closed else 2):
        raise ValueError("need >= 2 waypoints (>= 3 for a closed loop)")
    if limits.max_thrust <= GRAVITY:
        raise InfeasibleLimitsError(
            f"max_thrust {limits.max_thrust} cannot exceed gravity {GRAVITY}")
    legs = np.diff(np.vstack([wp, wp[:1]]) if closed else wp, axis=0)
    dist = np.linalg.norm(legs, axis=1)
    if np.any(dist < 1e-6):
        raise DegenerateSegmentError("consecutive waypoints coincide")

    v_nom = limits.v_max if v_nominal is None else v_nominal
    durations = dist / v_nom
    scale = durations.mean()
    unit = GlobalTrajectory(solve_min_snap(wp, durations / scale, closed), durations / scale,
                            closed, gate_knots)
    base = unit.time_scaled(scale)

    ts = base.sample_times()
    vel, acc, jerk = (base.eval_many(ts, k) for k in (1, 2, 3))

    def ok(alpha):
        try:
            return _satisfies(_scaled_limits(vel, acc, jerk, alpha), limits)
        except SingularFlatnessError:
            return False

    lo, hi = 1e-3, 1.0
    while not ok(hi):
        lo, hi = hi, hi * 2.0
        if hi > 1e6:
            raise InfeasibleLimitsError("no uniform time scaling satisfies the limits")
    if ok(lo):
        hi = lo
    else:
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                hi = mid
            else:
                lo = mid
    traj = base.time_scaled(hi)
    # final check at the output sampling; nudge past round-off
    for _ in range(50):
        try:
            if _satisfies(feasibility_check(traj), limits):
                return traj
        except SingularFlatnessError:
            pass
        hi *= 1.001
        traj = base.time_scaled(hi)
    raise InfeasibleLimitsError("time scaling failed to converge to a feasible trajectory")


# ---------------------------------------------------------------------------
# projections onto the trajectory
# ---------------------------------------------------------------------------

def _refine(traj, p, t0, lo, hi, iters=8):
    t = t0
    for _ in range(iters):
        pos = traj.eval_many(np.array([t]), 0)[0]
        vel = traj.eval_many(np.array([t]), 1)[0]
        acc = traj.eval_many(np.array([t]), 2)[0]
        e = pos - p
        g = e @ vel
        h = vel @ vel + e @ acc
        if h > 1e-12:
            step = g / h
        else:
            step = math.copysign(1e-3, g)
        t_new = min(max(t - step, lo), hi)
        if abs(t_new - t) < 1e-12:
            t = t_new
            break
        t = t_new
    return t


def nearest_point(traj: GlobalTrajectory, p, hint_t=None, window=(-0.5, 1.5)) -> NearestPoint:
    """Closest point on ``traj`` to ``p``.

    Without a hint the whole trajectory is scanned on its 1 kHz table; with
    ``hint_t`` only ``[hint_t + window[0], hint_t + window[1]]`` is searched.
    Ties (equidistant points) resolve to the earliest sample.
    """
    p = np.asarray(p, dtype=np.float64)
    t_tab, pos_tab, _ = traj._table
    h = t_tab[1] - t_tab[0]
    n = len(t_tab) - 1
    if hint_t is None or (not traj.closed and traj.period <= window[1] - window[0]):
        d2 = np.sum((pos_tab - p) ** 2, axis=1)
        k = int(np.argmin(d2))
        t0 = t_tab[k]
    else:
        k0 = int(math.floor(hint_t / h + window[0] / h))
        k1 = int(math.ceil(hint_t / h + window[1] / h))
        idx = np.arange(k0, k1 + 1)
        if traj.closed:
            idx_w = np.mod(idx, n)
            t_unwrapped = idx * h
        else:
            idx_w = np.clip(idx, 0, n)
            t_unwrapped = idx_w * h
        d2 = np.sum((pos_tab[idx_w] - p) ** 2, axis=1)
        j = int(np.argmin(d2))
        t0 = t_unwrapped[j]
    lo, hi = t0 - h, t0 + h
    if not traj.closed:
        lo, hi = max(lo, 0.0), min(hi, traj.period)
    t_star = _refine(traj, p, t0, lo, hi)
    t_star = float(traj.wrap(t_star))
    pc = traj.eval(t_star)
    return NearestPoint(t_star, pc, float(np.linalg.norm(pc - p)))


def goal_at_distance(traj: GlobalTrajectory, t_star: float, d: float) -> GoalPoint:
    """Point at arc length ``d`` ahead of ``traj(t_star)``.

    Closed trajectories wrap; on open ones the endpoint is returned with
    ``saturated=True`` when ``d`` exceeds the remaining length.
    """
    if d < 0:
        raise ValueError("d must be non-negative")
    if d == 0:
        t = float(traj.wrap(t_star))
        return GoalPoint(traj.eval(t), t, False)
    L = traj.length
    target = traj.arc_length_at(t_star) + d
    saturated = False
    if traj.closed:
        target = math.fmod(target, L)
    elif target > L:
        target, saturated = L, True
    t = traj.time_at_arc_length(target)
    return GoalPoint(traj.eval(t), t, saturated)


def export_csv(traj: GlobalTrajectory, path, rate=100.0):
    """Write t, position, velocity, acceleration samples at ``rate`` Hz."""
    n = int(math.floor(traj.period * rate)) + 1
    ts = np.arange(n) / rate
    pos, vel, acc = (traj.eval_many(ts, k) for k in (0, 1, 2))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "px", "py", "pz", "vx", "vy", "vz", "ax", "ay", "az"])
        for i in range(n):
            w.writerow([f"{ts[i]:.6f}"] + [f"{x:.9g}" for x in (*pos[i], *vel[i], *acc[i])])
