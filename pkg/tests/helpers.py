"""Scene builders and independent oracles shared by the test modules."""

from __future__ import annotations

import numpy as np

from saproj.scene import CameraModel, PlaneTarget, ProjectorModel, Scene, look_at, make_grid_array, overhead_camera

TABLE = (1.2, 0.6)
ARRAY_HEIGHT = 1.4


def table():
    return PlaneTarget([0, 0, 0], [1, 0, 0], [0, 1, 0], TABLE)


def camera(field: float = 0.56, res: int = 128, offset=(0.0, 0.0)) -> CameraModel:
    """Camera at array height looking straight down, seeing ``field`` metres across."""
    return overhead_camera(table(), ARRAY_HEIGHT, (res, res), offset=offset, focal=res / field * ARRAY_HEIGHT)


def array_scene(res: int = 256, field: float = 0.56, cam_res: int = 128, occluders=(), rows=5, cols=5) -> Scene:
    projs = make_grid_array(rows, cols, 0.3, ARRAY_HEIGHT, table(), resolution=(res, res))
    return Scene(projs, table(), camera(field, cam_res), occluders)


def coaxial_scene(res: int = 16, shift_px=(0.0, 0.0), n: int = 1) -> Scene:
    """Projector(s) sharing the camera pose and intrinsics, optionally shifted in the image."""
    t = PlaneTarget([0, 0, 0], [1, 0, 0], [0, 1, 0], (2.0, 2.0))
    pos = np.array([0.0, 0.0, 1.0])
    rot = look_at(pos, [0, 0, 0])
    f = res / 0.5
    cam = CameraModel(rot, pos, (f, f), (res / 2, res / 2), (res, res))
    projs = [
        ProjectorModel(rot, pos, (f, f), (res / 2 + shift_px[0], res / 2 + shift_px[1]), (res, res), id=k)
        for k in range(n)
    ]
    return Scene(projs, t, cam)


# -- independent oracles -------------------------------------------------------


def rays_to_plane(device, uv, plane):
    """World points where pixel rays meet the plane (own pinhole inversion)."""
    uv = np.asarray(uv, dtype=float)
    K_inv = np.linalg.inv(device.intrinsic_matrix)
    h = np.concatenate([uv, np.ones(uv.shape[:-1] + (1,))], axis=-1)
    d = (h @ K_inv.T) @ device.rotation.T
    n = np.cross(plane.axis_u, plane.axis_v)
    t = ((plane.origin - device.position) @ n) / (d @ n)
    return device.position + t[..., None] * d


def segment_hits_sphere(p, q, center, radius):
    """Open segment p->q enters the sphere: quadratic root inside (0, 1)."""
    d = q - p
    f = p - center
    a = np.sum(d * d, axis=-1)
    b = 2 * np.sum(f * d, axis=-1)
    c = np.sum(f * f, axis=-1) - radius**2
    disc = b * b - 4 * a * c
    ok = disc > 0
    s = np.sqrt(np.where(ok, disc, 0.0))
    t0 = (-b - s) / (2 * a)
    t1 = (-b + s) / (2 * a)
    return ok & (t1 > 0) & (t0 < 1)


def segment_hits_capsule(p, q, a, b, radius):
    """Open segment p->q enters a capsule: infinite-cylinder quadratic clipped
    to the axial slab, plus the two end spheres."""
    axis = b - a
    length = np.linalg.norm(axis)
    w = axis / length
    d = q - p
    m = p - a
    dw = np.sum(d * w, axis=-1)
    mw = np.sum(m * w, axis=-1)
    d_perp = d - dw[..., None] * w
    m_perp = m - mw[..., None] * w
    A = np.sum(d_perp * d_perp, axis=-1)
    B = 2 * np.sum(m_perp * d_perp, axis=-1)
    C = np.sum(m_perp * m_perp, axis=-1) - radius**2
    disc = B * B - 4 * A * C
    ok = (disc > 0) & (A > 0)
    s = np.sqrt(np.where(ok, disc, 0.0))
    A_safe = np.where(A > 0, A, 1.0)
    t0 = (-B - s) / (2 * A_safe)
    t1 = (-B + s) / (2 * A_safe)
    # parameter range where the point lies between the two end planes
    moving = np.abs(dw) > 1e-300
    dw_safe = np.where(moving, dw, 1.0)
    ta = -mw / dw_safe
    tb = (length - mw) / dw_safe
    inside = (mw > 0) & (mw < length)
    s_lo = np.where(moving, np.minimum(ta, tb), np.where(inside, -np.inf, np.inf))
    s_hi = np.where(moving, np.maximum(ta, tb), np.where(inside, np.inf, -np.inf))
    lo = np.maximum(np.maximum(t0, s_lo), 0.0)
    hi = np.minimum(np.minimum(t1, s_hi), 1.0)
    body = ok & (lo < hi)
    return body | segment_hits_sphere(p, q, a, radius) | segment_hits_sphere(p, q, b, radius)
