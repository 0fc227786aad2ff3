"""Sparse light-transport matrices and the linear forward model.

A transport row is a camera pixel, a column a projector pixel (``native``
space) or a content pixel on the camera grid (``aligned`` space, i.e. after
the per-projector geometric warp that registers every projector onto the
same image).  Images are 2-D arrays stacked row-major into vectors.
"""

from __future__ import annotations

import logging
import warnings
import weakref
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .geometry import clip_to_boxes, polygon_area
from .scene import Scene, cast, footprints, segments_blocked

logger = logging.getLogger(__name__)

DEFAULT_FOOTPRINT_CAP = 64
# overlap fractions below this are clipping round-off, not light
MIN_FRACTION = 1e-9


class FootprintOverflowError(RuntimeError):
    pass


class ShapeMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LightTransport:
    matrix: sp.csr_matrix
    source: int | str
    camera_shape: tuple[int, int]
    source_shape: tuple[int, int]
    space: str = "native"
    empty: bool = False

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix)
        m.sort_indices()
        object.__setattr__(self, "matrix", m)
        if m.shape != (self.camera_shape[0] * self.camera_shape[1], self.source_shape[0] * self.source_shape[1]):
            raise ShapeMismatchError("matrix shape disagrees with the declared image shapes")
        if m.nnz and m.data.min() < 0:
            raise ValueError("transport weights must be non-negative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def row_counts(self) -> np.ndarray:
        return np.diff(self.matrix.indptr)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


# -- radiometry --------------------------------------------------------------

_radiometry_cache: "weakref.WeakKeyDictionary[Scene, dict]" = weakref.WeakKeyDictionary()


def _principal_hit(scene: Scene, projector):
    pts, nrm, hit = cast(scene, projector, np.array([projector.principal]))
    if hit[0]:
        x, n = pts[0], nrm[0]
    else:
        x = scene.target.center
        n = -projector.forward
    to_proj = projector.position - x
    d = np.linalg.norm(to_proj)
    cos = max(float(np.dot(n, to_proj) / d), 0.0)
    return x, cos, d


def radiometric_factors(scene: Scene) -> dict[int, float]:
    """Per-projector scale: cos(incidence)/distance^2 along the principal ray,
    relative to the reference (centre) projector, times the factor that gives
    the reference projector's on-axis camera pixel a unit row-sum."""
    cached = _radiometry_cache.get(scene)
    if cached is not None:
        return cached
    ref = scene.reference_projector()
    x_ref, cos_ref, d_ref = _principal_hit(scene, ref)
    out = {}
    for p in scene.projectors:
        if scene.attenuation == "footprint":
            out[p.id] = 1.0
            continue
        _, cos, d = _principal_hit(scene, p)
        out[p.id] = (cos / d**2) / (cos_ref / d_ref**2) if cos_ref > 0 else 1.0

    norm = 1.0
    uv, z = scene.camera.project(x_ref)
    if z > 0 and scene.camera.in_frame(uv):
        q = int(uv[1]) * scene.camera.width + int(uv[0])
        native = _native_matrix(scene, ref, include_occluders=False, scale=1.0)
        s = native.getrow(q).sum()
        if s > 0:
            norm = 1.0 / s
    out = {k: v * norm for k, v in out.items()}
    _radiometry_cache[scene] = out
    return out


# -- construction ------------------------------------------------------------


def unblocked_fraction(scene: Scene, projector, fp=None) -> np.ndarray:
    """Per projector pixel: fraction of the centre + 4 corner rays not blocked."""
    if fp is None:
        fp = footprints(scene, projector)
    if not scene.occluders:
        return np.ones(fp.valid.shape)
    pos = projector.position
    cblk = np.zeros(fp.corner_hit.shape, dtype=bool)
    cblk[fp.corner_hit] = segments_blocked(scene.occluders, fp.corner_points[fp.corner_hit], pos)
    mblk = np.zeros(fp.valid.shape, dtype=bool)
    mblk[fp.valid] = segments_blocked(scene.occluders, fp.centers[fp.valid], pos)
    blocked = (mblk.astype(int) + cblk[:-1, :-1] + cblk[:-1, 1:] + cblk[1:, 1:] + cblk[1:, :-1])
    return (5 - blocked) / 5.0


def _native_matrix(scene: Scene, projector, include_occluders: bool, scale: float, fp=None) -> sp.csr_matrix:
    cam = scene.camera
    cw, ch = cam.resolution
    n_rows = cw * ch
    n_cols = projector.n_pixels
    if fp is None:
        fp = footprints(scene, projector)
    flat_valid = np.flatnonzero(fp.valid.ravel())
    if flat_valid.size == 0:
        return sp.csr_matrix((n_rows, n_cols))
    quads = fp.quads.reshape(-1, 4, 2)[flat_valid]
    qarea = polygon_area(quads)
    keep = qarea > 0
    flat_valid, quads, qarea = flat_valid[keep], quads[keep], qarea[keep]

    lo = np.floor(quads.min(axis=1)).astype(np.int64)
    hi = np.ceil(quads.max(axis=1)).astype(np.int64)
    lo[:, 0] = np.clip(lo[:, 0], 0, cw)
    hi[:, 0] = np.clip(hi[:, 0], 0, cw)
    lo[:, 1] = np.clip(lo[:, 1], 0, ch)
    hi[:, 1] = np.clip(hi[:, 1], 0, ch)
    nx = np.maximum(hi[:, 0] - lo[:, 0], 0)
    ny = np.maximum(hi[:, 1] - lo[:, 1], 0)
    counts = nx * ny
    owner = np.repeat(np.arange(len(flat_valid)), counts)
    if owner.size == 0:
        return sp.csr_matrix((n_rows, n_cols))
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    k = np.arange(owner.size) - starts
    cx = lo[owner, 0] + k % nx[owner]
    cy = lo[owner, 1] + k // nx[owner]

    poly, cnt = clip_to_boxes(quads[owner], cx.astype(float), cy.astype(float), cx + 1.0, cy + 1.0)
    frac = polygon_area(poly, cnt) / qarea[owner]

    weight = frac * scale
    if include_occluders and scene.occluders:
        weight = weight * unblocked_fraction(scene, projector, fp).ravel()[flat_valid[owner]]
    ok = (frac > MIN_FRACTION) & (weight > 0)
    rows = (cy * cw + cx)[ok]
    cols = flat_valid[owner][ok]
    return sp.csr_matrix((weight[ok], (rows, cols)), shape=(n_rows, n_cols))


def warp_matrix(scene: Scene, projector, fp=None) -> sp.csr_matrix:
    """Bilinear resampling (projector pixels x content pixels) registering the
    projector onto the camera-grid content image."""
    cam = scene.camera
    cw, ch = cam.resolution
    if fp is None:
        fp = footprints(scene, projector)
    idx = np.flatnonzero(fp.valid.ravel())
    pts = fp.centers.reshape(-1, 3)[idx]
    uv, z = cam.project(pts)
    idx, uv = idx[z > 0], uv[z > 0]
    # centres just outside the frame still light its border: clamp to the edge
    sx = np.clip(uv[:, 0] - 0.5, 0.0, cw - 1.0)
    sy = np.clip(uv[:, 1] - 0.5, 0.0, ch - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    rows, cols, vals = [], [], []
    for dx, dy, w in ((0, 0, (1 - fx) * (1 - fy)), (1, 0, fx * (1 - fy)), (0, 1, (1 - fx) * fy), (1, 1, fx * fy)):
        xx = np.clip(x0 + dx, 0, cw - 1)
        yy = np.clip(y0 + dy, 0, ch - 1)
        rows.append(idx)
        cols.append(yy * cw + xx)
        vals.append(w)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    ok = vals > 0
    return sp.csr_matrix((vals[ok], (rows[ok], cols[ok])), shape=(projector.n_pixels, cw * ch))


def build_transport(
    scene: Scene,
    projector_id: int,
    include_occluders: bool = False,
    *,
    aligned: bool = False,
    radiometry: dict[int, float] | None = None,
    cap: int = DEFAULT_FOOTPRINT_CAP,
) -> LightTransport:
    """Area-weighted footprint rasterisation of one projector into the camera.

    Entry ``(q, r)`` is the fraction of projector pixel ``r``'s footprint that
    lands in camera pixel ``q``, times the projector's radiometric factor and,
    with occluders, the unblocked fraction of its five probe rays.
    """
    projector = scene.projector(projector_id)
    if radiometry is None:
        radiometry = radiometric_factors(scene)
    fp = footprints(scene, projector)
    m = _native_matrix(scene, projector, include_occluders, radiometry[projector.id], fp)
    cam_shape = (scene.camera.height, scene.camera.width)
    src_shape = (projector.height, projector.width)
    space = "native"
    if aligned:
        m = (m @ warp_matrix(scene, projector, fp)).tocsr()
        m.eliminate_zeros()
        src_shape = cam_shape
        space = "aligned"
    counts = np.diff(m.indptr)
    if counts.size and counts.max() > cap:
        raise FootprintOverflowError(
            f"projector {projector_id}: {counts.max()} entries in one row exceeds the footprint cap {cap}"
        )
    empty = m.nnz == 0
    if empty:
        warnings.warn(f"projector {projector_id} does not reach the camera view of the target", RuntimeWarning)
    return LightTransport(m, projector.id, cam_shape, src_shape, space, empty)


def build_transports(scene: Scene, include_occluders: bool = False, *, aligned: bool = False, cap: int = DEFAULT_FOOTPRINT_CAP):
    rad = radiometric_factors(scene)
    return [build_transport(scene, p.id, include_occluders, aligned=aligned, radiometry=rad, cap=cap) for p in scene.projectors]


def merge_transport(parts) -> LightTransport:
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to merge")
    first = parts[0]
    for p in parts[1:]:
        if p.shape != first.shape or p.camera_shape != first.camera_shape or p.source_shape != first.source_shape:
            raise ShapeMismatchError("cannot merge transports of different shapes")
    total = first.matrix.copy()
    for p in parts[1:]:
        total = total + p.matrix
    total = sp.csr_matrix(total)
    total.eliminate_zeros()
    return LightTransport(total, "merged", first.camera_shape, first.source_shape, first.space, total.nnz == 0)


def apply_transport(L: LightTransport, p) -> np.ndarray:
    """Camera image ``L p``; accepts an image or its flattened vector."""
    p = np.asarray(p, dtype=float)
    if p.size != L.shape[1]:
        raise ShapeMismatchError(f"input has {p.size} pixels, transport expects {L.shape[1]}")
    return (L.matrix @ p.ravel()).reshape(L.camera_shape)


def forward(parts, images) -> np.ndarray:
    """Superposed camera image ``sum_i L_i p_i``."""
    out = None
    for L, p in zip(parts, images):
        c = apply_transport(L, p)
        out = c if out is None else out + c
    return out


def normalize_brightness(images, reference, L_parts, L_ref) -> float:
    """Scale ``s`` with ``mean(sum_i L_i (s p_i)) == mean(L_ref p_ref)``."""
    ref_mean = float(np.mean(apply_transport(L_ref, reference)))
    if ref_mean <= 0:
        raise ValueError("reference configuration has zero brightness")
    cur = float(np.mean(forward(L_parts, images)))
    if cur <= 0:
        raise ValueError("configuration to be scaled has zero brightness")
    return ref_mean / cur


# -- Matrix Market -----------------------------------------------------------


def save_transport(L: LightTransport, path) -> None:
    comment = (
        f" source={L.source} space={L.space}"
        f" camera_shape={L.camera_shape[0]}x{L.camera_shape[1]}"
        f" source_shape={L.source_shape[0]}x{L.source_shape[1]}"
    )
    scipy.io.mmwrite(str(path), L.matrix.tocoo(), comment=comment, field="real", precision=17)


def load_transport(path) -> LightTransport:
    path = Path(path)
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("%"):
                break
            for tok in line.lstrip("%").split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
    m = sp.csr_matrix(scipy.io.mmread(str(path)))

    def shape(key, default):
        if key not in meta:
            return default
        a, b = meta[key].split("x")
        return int(a), int(b)

    cam = shape("camera_shape", (m.shape[0], 1))
    src = shape("source_shape", (m.shape[1], 1))
    source = meta.get("source", "merged")
    if source.lstrip("-").isdigit():
        source = int(source)
    return LightTransport(m, source, cam, src, meta.get("space", "native"), m.nnz == 0)
