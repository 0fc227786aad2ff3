"""Low-level vectorised geometry kernels shared by the scene, transport and
occlusion modules."""

from __future__ import annotations

import numpy as np

EPS = 1e-12


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(n == 0.0, 1.0, n)


def clip_halfplane(poly: np.ndarray, count: np.ndarray, axis: int, bound: np.ndarray, keep_greater: bool):
    """Clip a batch of convex polygons against ``x[axis] >= bound`` (or ``<=``).

    ``poly`` is (M, K, 2) with the first ``count[m]`` vertices valid.  Returns
    a new (M, K + 1, 2) array and counts.  One Sutherland-Hodgman pass.
    """
    m, k, _ = poly.shape
    out = np.zeros((m, k + 1, 2))
    ptr = np.zeros(m, dtype=np.int64)
    rows = np.arange(m)
    sign = 1.0 if keep_greater else -1.0
    for j in range(k):
        active = j < count
        if not active.any():
            break
        nxt = np.where(count > 0, (j + 1) % np.maximum(count, 1), 0)
        cur = poly[:, j]
        nx = poly[rows, nxt]
        dc = sign * (cur[:, axis] - bound)
        dn = sign * (nx[:, axis] - bound)
        in_c = dc >= 0.0
        in_n = dn >= 0.0

        emit = active & in_c
        out[rows[emit], ptr[emit]] = cur[emit]
        ptr += emit

        cross = active & (in_c != in_n)
        denom = np.where(cross, dc - dn, 1.0)
        t = (dc / denom)[:, None]
        inter = cur + t * (nx - cur)
        inter[:, axis] = np.where(cross, bound, inter[:, axis])
        out[rows[cross], ptr[cross]] = inter[cross]
        ptr += cross
    return out, ptr


def clip_to_boxes(quads: np.ndarray, x0: np.ndarray, y0: np.ndarray, x1: np.ndarray, y1: np.ndarray):
    """Clip convex quads (M, 4, 2) to axis-aligned boxes; returns polygons and counts."""
    poly = np.asarray(quads, dtype=float)
    count = np.full(poly.shape[0], poly.shape[1], dtype=np.int64)
    poly, count = clip_halfplane(poly, count, 0, x0, True)
    poly, count = clip_halfplane(poly, count, 0, x1, False)
    poly, count = clip_halfplane(poly, count, 1, y0, True)
    poly, count = clip_halfplane(poly, count, 1, y1, False)
    return poly, count


def polygon_area(poly: np.ndarray, count: np.ndarray | None = None) -> np.ndarray:
    """Unsigned shoelace area of padded polygons (M, K, 2)."""
    poly = np.asarray(poly, dtype=float)
    m, k, _ = poly.shape
    if count is None:
        count = np.full(m, k)
    idx = np.arange(k)
    valid = idx[None, :] < count[:, None]
    nxt = (idx[None, :] + 1) % np.maximum(count, 1)[:, None]
    rows = np.arange(m)[:, None]
    p = poly
    q = poly[rows, nxt]
    cross = p[..., 0] * q[..., 1] - q[..., 0] * p[..., 1]
    return 0.5 * np.abs(np.where(valid, cross, 0.0).sum(axis=1))


def quad_is_convex(quads: np.ndarray) -> np.ndarray:
    """True where every turn of the (M, 4, 2) quad has the same non-zero sign."""
    q = np.asarray(quads, dtype=float)
    a = q
    b = np.roll(q, -1, axis=1)
    c = np.roll(q, -2, axis=1)
    e1 = b - a
    e2 = c - b
    z = e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0]
    return np.all(z > 0, axis=1) | np.all(z < 0, axis=1)


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from points ``p`` to segments ``[a, b]`` (broadcasting over leading axes)."""
    ab = b - a
    denom = np.maximum(np.sum(ab * ab, axis=-1), EPS)
    t = np.clip(np.sum((p - a) * ab, axis=-1) / denom, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.linalg.norm(p - closest, axis=-1)


def segment_segment_distance(p0, p1, q0, q1) -> np.ndarray:
    """Minimum distance between segments ``[p0, p1]`` and ``[q0, q1]``.

    Vectorised form of the clamped closest-point construction (Ericson,
    Real-Time Collision Detection, 5.1.9), including degenerate segments.
    """
    p0, p1, q0, q1 = (np.asarray(x, dtype=float) for x in (p0, p1, q0, q1))
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = np.sum(d1 * d1, axis=-1)
    e = np.sum(d2 * d2, axis=-1)
    f = np.sum(d2 * r, axis=-1)
    c = np.sum(d1 * r, axis=-1)
    b = np.sum(d1 * d2, axis=-1)
    a_ok = a > EPS
    e_ok = e > EPS
    sa = np.where(a_ok, a, 1.0)
    se = np.where(e_ok, e, 1.0)

    denom = a * e - b * b
    general = np.where(denom > EPS * np.maximum(a * e, EPS), (b * f - c * e) / np.where(denom != 0, denom, 1.0), 0.0)
    s = np.clip(general, 0.0, 1.0)
    t = (b * s + f) / se
    s = np.where(t < 0.0, np.clip(-c / sa, 0.0, 1.0), s)
    s = np.where(t > 1.0, np.clip((b - c) / sa, 0.0, 1.0), s)
    t = np.clip(t, 0.0, 1.0)

    # second segment degenerate
    s = np.where(~e_ok, np.clip(-c / sa, 0.0, 1.0), s)
    t = np.where(~e_ok, 0.0, t)
    # first segment degenerate
    t = np.where(~a_ok, np.clip(f / se, 0.0, 1.0), t)
    s = np.where(~a_ok, 0.0, s)
    t = np.where(~a_ok & ~e_ok, 0.0, t)

    c1 = p0 + s[..., None] * d1
    c2 = q0 + t[..., None] * d2
    return np.linalg.norm(c1 - c2, axis=-1)


def ray_triangles(origins: np.ndarray, dirs: np.ndarray, v0, v1, v2, chunk: int = 4096):
    """Nearest Moller-Trumbore hit of each ray against a triangle soup.

    Returns ``(t, tri)``: hit distance (inf on miss) and triangle index (-1).
    Both faces count as hits; callers decide about facing.
    """
    origins = np.asarray(origins, dtype=float).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=float).reshape(-1, 3)
    n = origins.shape[0]
    best_t = np.full(n, np.inf)
    best_i = np.full(n, -1, dtype=np.int64)
    e1 = v1 - v0
    e2 = v2 - v0
    for start in range(0, n, chunk):
        o = origins[start:start + chunk, None, :]
        d = dirs[start:start + chunk, None, :]
        pvec = np.cross(d, e2[None])
        det = np.sum(e1[None] * pvec, axis=-1)
        ok = np.abs(det) > 1e-14
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = o - v0[None]
        u = np.sum(tvec * pvec, axis=-1) * inv
        qvec = np.cross(tvec, e1[None])
        v = np.sum(d * qvec, axis=-1) * inv
        t = np.sum(e2[None] * qvec, axis=-1) * inv
        hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > 1e-9)
        t = np.where(hit, t, np.inf)
        idx = np.argmin(t, axis=1)
        tmin = t[np.arange(t.shape[0]), idx]
        best_t[start:start + chunk] = tmin
        best_i[start:start + chunk] = np.where(np.isfinite(tmin), idx, -1)
    return best_t, best_i
