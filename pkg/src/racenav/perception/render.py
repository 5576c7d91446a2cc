"""Synthetic low-resolution gate views for the onboard camera."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from racenav import kernels
from racenav.geom import CameraModel, project_points_batch

NEAR_CLIP = 0.05


@dataclass(frozen=True)
class RenderConfig:
    width: int = 32
    height: int = 24
    line_sigma: float = 1.5  # pixels
    samples_per_edge: int = 6
    falloff: float = 0.05  # 1/m; intensity = 1 / (1 + falloff * distance)

    @property
    def n_pixels(self):
        return self.width * self.height


def _gate_polyline(corners, n):
    pts = []
    for k in range(4):
        a, b = corners[k], corners[(k + 1) % 4]
        s = np.linspace(0.0, 1.0, n, endpoint=False)[:, None]
        pts.append(a + s * (b - a))
    pts.append(corners[:1])
    return np.vstack(pts)


def render_observation(cam: CameraModel, s, track, time: float = 0.0,
                       cfg: RenderConfig = RenderConfig()) -> np.ndarray:
    """Grayscale ``(height, width)`` view of the gate frames, values in [0, 1].

    Each gate is a soft outline of its opening, dimmer with distance; gates
    are composited far to near so the nearest one lands on top.
    """
    pos = np.asarray(s.position, dtype=np.float64)
    r_wb = s.rotation
    r_bc = cam.body_to_camera.rotation
    t_bc = cam.body_to_camera.position
    centers = track.centers_at(time)
    dist = np.linalg.norm(centers - pos, axis=1)
    order = np.argsort(-dist, kind="stable")

    seg_list, starts, counts, inten = [], [], [], []
    n_total = 0
    for gi in order:
        g = track.gates[gi]
        poly = _gate_polyline(g.corners(centers[gi]), cfg.samples_per_edge)
        body = (poly - pos) @ r_wb
        cam_pts = (body - t_bc) @ r_bc
        ok = cam_pts[:, 0] > NEAR_CLIP
        valid = ok[:-1] & ok[1:]
        if not valid.any():
            continue
        x = project_points_batch(cam, cam_pts)
        px = (x[:, 0] + 1.0) * 0.5 * cfg.width
        py = (1.0 - x[:, 1]) * 0.5 * cfg.height
        segs = np.stack([px[:-1], py[:-1], px[1:], py[1:]], axis=1)[valid]
        seg_list.append(segs)
        starts.append(n_total)
        counts.append(len(segs))
        inten.append(1.0 / (1.0 + cfg.falloff * dist[gi]))
        n_total += len(segs)
    if not seg_list:
        return np.zeros((cfg.height, cfg.width))
    grid = kernels.raster_soft_lines(np.vstack(seg_list), np.array(starts), np.array(counts),
                                     np.array(inten), cfg.width, cfg.height, cfg.line_sigma)
    return np.clip(grid, 0.0, 1.0)
