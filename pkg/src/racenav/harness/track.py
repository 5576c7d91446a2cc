"""Gates, tracks, gate motion and pass/collision geometry.

Track files are JSON with exactly these fields::

    {"name": str, "closed": bool, "v_max": float,
     "gates": [{"center": [x, y, z], "normal": [x, y, z],
                "width": float, "height": float,
                "motion": {"multiplier": [mx, my, mz], "freq_hz": f,
                           "phase": [px, py, pz]} | null}]}

The gate normal points along the direction of travel through the opening.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from racenav.errors import ConfigError
from racenav.geom import Pose, matrix_to_quat

BASE_GATE_SIZE = 1.3
FRAME_WIDTH = 0.2
FRAME_DEPTH = 0.05
CRASH_CLEARANCE = 0.1
DEFAULT_FREQ_HZ = 0.25
DEFAULT_PHASE = (0.0, math.pi / 2, math.pi)
SHIPPED_TRACKS = ("small_4gate", "large_8gate", "real_4gate")


@dataclass(frozen=True)
class GateMotion:
    multiplier: np.ndarray
    freq_hz: float = DEFAULT_FREQ_HZ
    phase: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_PHASE))

    def __post_init__(self):
        object.__setattr__(self, "multiplier", np.asarray(self.multiplier, float).reshape(3))
        object.__setattr__(self, "phase", np.asarray(self.phase, float).reshape(3))


@dataclass(frozen=True)
class Gate:
    center: np.ndarray
    normal: np.ndarray
    width: float = BASE_GATE_SIZE
    height: float = BASE_GATE_SIZE
    motion: GateMotion | None = None

    def __post_init__(self):
        c = np.asarray(self.center, float).reshape(3)
        n = np.asarray(self.normal, float).reshape(3)
        nn = np.linalg.norm(n)
        if nn == 0:
            raise ConfigError("gate normal must be nonzero")
        if abs(nn - 1.0) > 1e-9:
            n = n / nn
        if not (self.width > 0 and self.height > 0):
            raise ConfigError("gate width and height must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "normal", n)

    def axes(self):
        """(normal, lateral, vertical) unit axes; lateral is horizontal."""
        n = self.normal
        lat = np.cross([0.0, 0.0, 1.0], n)
        ln = np.linalg.norm(lat)
        lat = lat / ln if ln > 1e-9 else np.array([0.0, 1.0, 0.0])
        return n, lat, np.cross(n, lat)

    def offset_at(self, t):
        """Center displacement at time(s) ``t``; shape (3,) or (len(t), 3)."""
        if self.motion is None or not np.any(self.motion.multiplier):
            return np.zeros(np.shape(t) + (3,))
        m = self.motion
        amp = BASE_GATE_SIZE * m.multiplier
        arg = 2 * math.pi * m.freq_hz * np.asarray(t, float)[..., None] + m.phase
        return amp * np.sin(arg)

    def corners(self, center=None):
        c = self.center if center is None else center
        _, lat, up = self.axes()
        hw, hh = self.width / 2, self.height / 2
        return np.array([c + hw * lat + hh * up, c - hw * lat + hh * up,
                         c - hw * lat - hh * up, c + hw * lat - hh * up])


def gate_pose_at(g: Gate, t: float) -> Pose:
    n, lat, up = g.axes()
    rot = np.stack([n, lat, up], axis=1)
    return Pose(g.center + g.offset_at(t), matrix_to_quat(rot))


def _local(points, g_pose: Pose):
    return (np.atleast_2d(points) - g_pose.position) @ g_pose.rotation


def detect_gate_pass(prev, cur, g_pose: Pose, g: Gate) -> bool:
    """True iff prev->cur crosses the gate plane along the normal, inside the opening.

    ``prev``/``cur`` are QuadStates or positions.
    """
    a = _local(getattr(prev, "position", prev), g_pose)[0]
    b = _local(getattr(cur, "position", cur), g_pose)[0]
    if not (a[0] < 0.0 <= b[0]):
        return False
    s = -a[0] / (b[0] - a[0])
    hit = a + s * (b - a)
    return bool(abs(hit[1]) <= g.width / 2 and abs(hit[2]) <= g.height / 2)


def crossings(prev_pts, cur_pts, centers, g: Gate):
    """Vectorized pass test over a batch of steps; ``centers`` per step."""
    n, lat, up = g.axes()
    a = prev_pts - centers
    b = cur_pts - centers
    an, bn = a @ n, b @ n
    cross = (an < 0.0) & (bn >= 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(cross, -an / (bn - an), 0.0)
    hit = a + s[:, None] * (b - a)
    inside = (np.abs(hit @ lat) <= g.width / 2) & (np.abs(hit @ up) <= g.height / 2)
    return cross & inside


def frame_distance(points, centers, g: Gate):
    """Distance from points to the solid gate frame (four rectangular bars)."""
    n, lat, up = g.axes()
    d = np.atleast_2d(points) - centers
    la, lu, lw = d @ n, d @ lat, d @ up
    hw, hh, fw, fd = g.width / 2, g.height / 2, FRAME_WIDTH, FRAME_DEPTH / 2
    ea = np.maximum(np.abs(la) - fd, 0.0)
    # side bars: |u| in [hw, hw + fw], |w| <= hh + fw
    au, aw = np.abs(lu), np.abs(lw)
    eu_side = np.maximum(np.maximum(hw - au, au - hw - fw), 0.0)
    ew_side = np.maximum(aw - hh - fw, 0.0)
    side = np.sqrt(ea ** 2 + eu_side ** 2 + ew_side ** 2)
    # top/bottom bars: |u| <= hw, |w| in [hh, hh + fw]
    eu_tb = np.maximum(au - hw, 0.0)
    ew_tb = np.maximum(np.maximum(hh - aw, aw - hh - fw), 0.0)
    tb = np.sqrt(ea ** 2 + eu_tb ** 2 + ew_tb ** 2)
    return np.minimum(side, tb)


@dataclass(frozen=True)
class Track:
    name: str
    gates: tuple
    closed: bool = True
    v_max: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))

    @property
    def n_gates(self):
        return len(self.gates)

    @property
    def is_dynamic(self):
        return any(g.motion is not None and np.any(g.motion.multiplier) for g in self.gates)

    def waypoints(self):
        return np.array([g.center for g in self.gates])

    def centers_at(self, t):
        return np.array([g.center + g.offset_at(t) for g in self.gates])

    def perturbed(self, rng, scale=BASE_GATE_SIZE, min_height=1.0):
        """Static copy with each gate center shifted uniformly in [-scale, scale]^3."""
        gates = []
        for g in self.gates:
            c = g.center + rng.uniform(-scale, scale, size=3)
            c[2] = max(c[2], min_height)
            gates.append(replace(g, center=c, motion=None))
        return replace(self, gates=tuple(gates), name=f"{self.name}_perturbed")

    def with_motion(self, multiplier, freq_hz=DEFAULT_FREQ_HZ, seed=0):
        """Every gate oscillates with amplitude ``multiplier * 1.3 m`` per axis.

        Each gate gets an independent random phase offset drawn from ``seed``
        on top of the per-axis pattern.
        """
        rng = np.random.default_rng(seed)
        gates = []
        for g in self.gates:
            phase = np.array(DEFAULT_PHASE) + rng.uniform(0.0, 2 * math.pi)
            m = GateMotion(np.full(3, float(multiplier)), freq_hz, phase)
            gates.append(replace(g, motion=m))
        return replace(self, gates=tuple(gates))

    def static(self):
        return replace(self, gates=tuple(replace(g, motion=None) for g in self.gates))


def track_to_dict(track: Track) -> dict:
    gates = []
    for g in track.gates:
        motion = None
        if g.motion is not None:
            motion = {"multiplier": g.motion.multiplier.tolist(), "freq_hz": g.motion.freq_hz,
                      "phase": g.motion.phase.tolist()}
        gates.append({"center": g.center.tolist(), "normal": g.normal.tolist(),
                      "width": g.width, "height": g.height, "motion": motion})
    return {"name": track.name, "closed": track.closed, "v_max": track.v_max, "gates": gates}


def track_from_dict(d: dict) -> Track:
    expected = {"name", "closed", "v_max", "gates"}
    if set(d) != expected:
        raise ConfigError(f"track fields must be exactly {sorted(expected)}, got {sorted(d)}")
    gates = []
    for i, gd in enumerate(d["gates"]):
        if set(gd) != {"center", "normal", "width", "height", "motion"}:
            raise ConfigError(f"gate {i}: unexpected fields {sorted(gd)}")
        m = gd["motion"]
        motion = None
        if m is not None:
            motion = GateMotion(m["multiplier"], m["freq_hz"], m["phase"])
        gates.append(Gate(gd["center"], gd["normal"], gd["width"], gd["height"], motion))
    if len(gates) < 2:
        raise ConfigError("a race track needs at least 2 gates")
    return Track(str(d["name"]), tuple(gates), bool(d["closed"]), float(d["v_max"]))


def load_track(name_or_path) -> Track:
    """Load a shipped track by name or a track JSON file by path."""
    p = Path(str(name_or_path))
    try:
        if p.suffix == ".json" or p.exists():
            text = p.read_text()
        elif str(name_or_path) in SHIPPED_TRACKS:
            text = resources.files("racenav.tracks").joinpath(f"{name_or_path}.json").read_text()
        else:
            raise ConfigError(f"unknown track {name_or_path!r}")
        return track_from_dict(json.loads(text))
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot load track {name_or_path!r}: {exc}") from exc


def save_track(track: Track, path):
    Path(path).write_text(json.dumps(track_to_dict(track), indent=2))
