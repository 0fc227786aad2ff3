"""Visibility, projector coverage counts and shadow (relative illuminance) analysis."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .images import write_gray, write_png16, write_rgb
from .scene import MeshTarget, Scene, camera_pixel_areas, camera_surface, facing, segments_blocked
from .transport import build_transports, forward

NO_SURFACE = -1
DEFAULT_THRESHOLD = 0.5
# free illuminance at or below this is treated as no light at all
DARK = 1e-12


def visible(point, projector, occluders=(), normal=None, target=None) -> np.ndarray:
    """Can ``projector`` light ``point``?  Vectorised over leading axes.

    Requires the point to project inside the projector frame, the surface
    (when ``normal`` is given) to face the projector, and the open segment to
    the projector centre to miss every occluder.  A mesh ``target`` also
    shadows itself.
    """
    pts = np.asarray(point, dtype=float)
    uv, z = projector.project(pts)
    ok = (z > 0) & projector.in_frame(uv)
    if normal is not None:
        ok &= facing(pts, np.asarray(normal, dtype=float), projector.position)
    if not np.any(ok):
        return ok
    sel = pts[ok] if pts.ndim > 1 else pts[None]
    pos = np.broadcast_to(projector.position, sel.shape)
    blocked = segments_blocked(tuple(occluders), sel, pos)
    if isinstance(target, MeshTarget):
        blocked |= target.segment_blocked(sel, pos)
    if pts.ndim == 1:
        return bool(ok) and not bool(blocked[0])
    ok[ok] = ~blocked
    return ok


@dataclass
class CoverageMap:
    """Per camera pixel: number of projectors lighting the surface point, ``NO_SURFACE`` off-target."""

    counts: np.ndarray
    n_projectors: int

    @property
    def surface(self) -> np.ndarray:
        return self.counts != NO_SURFACE

    def deficit(self) -> int:
        """Sum over surface pixels of missing projectors."""
        return int(np.sum(self.n_projectors - self.counts[self.surface]))


def coverage_map(scene: Scene) -> CoverageMap:
    pts, nrm, hit = camera_surface(scene)
    counts = np.zeros(hit.shape, dtype=np.int64)
    if hit.any():
        p, n = pts[hit], nrm[hit]
        for proj in scene.projectors:
            counts[hit] += visible(p, proj, scene.occluders, n, scene.target)
    counts[~hit] = NO_SURFACE
    return CoverageMap(counts, scene.n_projectors)


@dataclass
class ShadowReport:
    """Relative illuminance (NaN where undefined) and its thresholded shadow mask."""

    illuminance: np.ndarray
    mask: np.ndarray
    defined: np.ndarray
    threshold: float
    area_pixels: int
    area_m2: float
    min_illuminance: float

    def summary(self) -> dict:
        return {
            "threshold": self.threshold,
            "min_relative_illuminance": self.min_illuminance,
            "shadow_area_pixels": self.area_pixels,
            "shadow_area_m2": self.area_m2,
            "defined_pixels": int(self.defined.sum()),
            "undefined_pixels": int((~self.defined).sum()),
        }


def camera_view_blocked(scene: Scene, points) -> np.ndarray:
    """Surface points whose line of sight to the camera crosses an occluder."""
    if not scene.occluders:
        return np.zeros(points.shape[:-1], dtype=bool)
    return segments_blocked(scene.occluders, points, np.broadcast_to(scene.camera.position, points.shape))


def render_illuminance(scene: Scene, p, threshold: float = DEFAULT_THRESHOLD, transports=None) -> ShadowReport:
    """Occluded render over the occluder-free render of the same content.

    ``p`` is one content image on the camera grid shown by every projector,
    or a list with one per projector.  ``transports`` may pass precomputed
    aligned ``(free, occluded)`` lists.  Pixels with no free light, off the
    surface, or whose camera view is itself blocked are undefined and left
    out of the statistics.
    """
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    if transports is None:
        free = build_transports(scene.with_occluders(()), aligned=True)
        occ = build_transports(scene, include_occluders=True, aligned=True) if scene.occluders else free
    else:
        free, occ = transports
    images = list(p) if isinstance(p, (list, tuple)) else [p] * len(free)
    c_free = forward(free, images)
    c_occ = forward(occ, images)

    pts, _, hit = camera_surface(scene)
    defined = hit & (c_free > DARK)
    if hit.any():
        defined[hit] &= ~camera_view_blocked(scene, pts[hit])
    rel = np.full(c_free.shape, np.nan)
    rel[defined] = np.clip(c_occ[defined] / c_free[defined], 0.0, 1.0)
    mask = defined & (np.nan_to_num(rel, nan=1.0) < threshold)
    areas = camera_pixel_areas(scene)
    return ShadowReport(
        illuminance=rel,
        mask=mask,
        defined=defined,
        threshold=float(threshold),
        area_pixels=int(mask.sum()),
        area_m2=float(areas[mask].sum()),
        min_illuminance=float(rel[defined].min()) if defined.any() else float("nan"),
    )


# -- export ------------------------------------------------------------------


def coverage_colors(n: int) -> np.ndarray:
    """(n + 1, 3) RGB in [0, 1] for counts 0..n; no-surface is drawn black."""
    from matplotlib import colormaps

    cmap = colormaps["turbo"]
    return np.array([cmap(k / max(n, 1))[:3] for k in range(n + 1)])


def save_coverage(cmap: CoverageMap, out_dir, stem: str = "coverage") -> dict:
    """16-bit count PNG (65535 = no surface), pseudo-colour PNG, legend JSON and CSV."""
    out = Path(out_dir)
    counts = cmap.counts
    raw = np.where(cmap.surface, counts, 65535).astype(np.uint16)
    write_png16(out / f"{stem}.png", raw)

    colors = coverage_colors(cmap.n_projectors)
    rgb = np.zeros(counts.shape + (3,))
    rgb[cmap.surface] = colors[counts[cmap.surface]]
    write_rgb(out / f"{stem}_color.png", rgb)
    legend = {
        "description": "projector count per camera pixel; colours are 8-bit sRGB",
        "no_surface": {"value_16bit": 65535, "rgb": [0, 0, 0]},
        "counts": {str(k): [int(np.floor(c * 255 + 0.5)) for c in colors[k]] for k in range(cmap.n_projectors + 1)},
    }
    (out / f"{stem}_legend.json").write_text(json.dumps(legend, indent=2, sort_keys=True) + "\n")

    with open(out / f"{stem}.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "count"])
        h, wd = counts.shape
        for j in range(h):
            for i in range(wd):
                w.writerow([i, j, int(counts[j, i])])
    return legend


def save_shadow(report: ShadowReport, out_dir, stem: str = "shadow", extra: dict | None = None) -> dict:
    """Illuminance PNG (undefined drawn black), mask PNG and a JSON summary."""
    out = Path(out_dir)
    write_gray(out / f"{stem}_illuminance.png", np.nan_to_num(report.illuminance, nan=0.0))
    write_gray(out / f"{stem}_mask.png", report.mask.astype(float))
    summary = report.summary()
    if extra:
        summary.update(extra)
    (out / f"{stem}.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
