"""Scene description: pinhole devices, target surfaces and occluders.

Device frames follow the usual computer-vision convention (x right, y down,
z forward).  A pose stores the device-to-world rotation (columns are the
device axes expressed in world coordinates) and the optical centre.  Pixel
``(i, j)`` covers ``[i, i + 1] x [j, j + 1]`` in continuous image coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import normalize, point_segment_distance, quad_is_convex, ray_triangles


class BehindCameraError(ValueError):
    """Raised when a point at or behind a device's optical centre is projected."""


@dataclass(frozen=True, eq=False)
class Device:
    rotation: np.ndarray
    position: np.ndarray
    focal: tuple[float, float]
    principal: tuple[float, float]
    resolution: tuple[int, int]

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "focal", tuple(float(f) for f in self.focal))
        object.__setattr__(self, "principal", tuple(float(c) for c in self.principal))
        object.__setattr__(self, "resolution", tuple(int(n) for n in self.resolution))
        if min(self.focal) <= 0:
            raise ValueError("focal lengths must be positive")
        if self.resolution[0] < 2 or self.resolution[1] < 2:
            raise ValueError("resolution must be at least 2x2")
        if np.linalg.norm(r.T @ r - np.eye(3)) >= 1e-9:
            raise ValueError("pose rotation is not orthonormal")

    @property
    def width(self) -> int:
        return self.resolution[0]

    @property
    def height(self) -> int:
        return self.resolution[1]

    @property
    def n_pixels(self) -> int:
        return self.resolution[0] * self.resolution[1]

    @property
    def intrinsic_matrix(self) -> np.ndarray:
        fx, fy = self.focal
        cx, cy = self.principal
        return np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[:, 2]

    def projection_matrix(self) -> np.ndarray:
        rt = self.rotation.T
        return self.intrinsic_matrix @ np.hstack([rt, -(rt @ self.position)[:, None]])

    def to_device(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.position) @ self.rotation

    def project(self, points):
        """Vectorised projection; returns ``(uv, depth)`` without any checks."""
        pd = self.to_device(points)
        z = pd[..., 2]
        safe = np.where(np.abs(z) > 0, z, 1.0)
        u = self.focal[0] * pd[..., 0] / safe + self.principal[0]
        v = self.focal[1] * pd[..., 1] / safe + self.principal[1]
        return np.stack([u, v], axis=-1), z

    def ray_directions(self, uv) -> np.ndarray:
        """Unit world-space directions through continuous pixel coordinates."""
        uv = np.asarray(uv, dtype=float)
        d = np.stack(
            [
                (uv[..., 0] - self.principal[0]) / self.focal[0],
                (uv[..., 1] - self.principal[1]) / self.focal[1],
                np.ones(uv.shape[:-1]),
            ],
            axis=-1,
        )
        return normalize(d @ self.rotation.T)

    def in_frame(self, uv) -> np.ndarray:
        uv = np.asarray(uv)
        return (uv[..., 0] >= 0) & (uv[..., 0] < self.width) & (uv[..., 1] >= 0) & (uv[..., 1] < self.height)

    def pixel_grid(self, corners: bool = False) -> np.ndarray:
        """(h, w, 2) pixel centres, or (h + 1, w + 1, 2) pixel corners."""
        w, h = self.resolution
        off = 0.0 if corners else 0.5
        xs = np.arange(w + (1 if corners else 0)) + off
        ys = np.arange(h + (1 if corners else 0)) + off
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)


@dataclass(frozen=True, eq=False)
class ProjectorModel(Device):
    id: int = 0
    max_output: float = 1.0
    response_gamma: float = 2.2

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 < self.max_output <= 1.0:
            raise ValueError("max_output must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class CameraModel(Device):
    pass


def project_point(device: Device, world_point) -> np.ndarray:
    """Pinhole projection of one world point to continuous pixel coordinates."""
    uv, z = device.project(np.asarray(world_point, dtype=float).reshape(3))
    if z <= 0:
        raise BehindCameraError(f"point {world_point!r} is not in front of the device")
    return uv


def back_project(device: Device, pixel, depth: float) -> np.ndarray:
    """World point on the ray through ``pixel`` at the given z-depth."""
    u, v = pixel
    d = np.array([(u - device.principal[0]) / device.focal[0], (v - device.principal[1]) / device.focal[1], 1.0])
    return device.position + device.rotation @ (d * depth)


def look_at(position, target, right_hint=(1.0, 0.0, 0.0)) -> np.ndarray:
    """Device-to-world rotation whose z axis points from ``position`` at ``target``."""
    f = normalize(np.asarray(target, dtype=float) - np.asarray(position, dtype=float))
    x = np.asarray(right_hint, dtype=float)
    x = x - np.dot(x, f) * f
    if np.linalg.norm(x) < 1e-9:
        x = np.array([0.0, 1.0, 0.0]) - f[1] * f
    x = normalize(x)
    y = np.cross(f, x)
    return np.column_stack([x, y, f])


# -- targets -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PlaneTarget:
    """Rectangular plane centred on ``origin``; the front face is ``u x v``."""

    origin: np.ndarray
    axis_u: np.ndarray
    axis_v: np.ndarray
    size: tuple[float, float]
    density: float | None = None

    def __post_init__(self):
        u = np.asarray(self.axis_u, dtype=float)
        v = np.asarray(self.axis_v, dtype=float)
        if abs(np.dot(u, v)) > 1e-9 * np.linalg.norm(u) * np.linalg.norm(v):
            raise ValueError("plane axes must be orthogonal")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))
        object.__setattr__(self, "axis_u", normalize(u))
        object.__setattr__(self, "axis_v", normalize(v))
        object.__setattr__(self, "size", (float(self.size[0]), float(self.size[1])))
        if min(self.size) <= 0:
            raise ValueError("plane extents must be positive")

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.axis_u, self.axis_v)

    @property
    def center(self) -> np.ndarray:
        return self.origin

    def corners(self) -> np.ndarray:
        hu, hv = self.size[0] / 2, self.size[1] / 2
        return np.array(
            [self.origin + su * hu * self.axis_u + sv * hv * self.axis_v for su in (-1, 1) for sv in (-1, 1)]
        )

    def local_coords(self, points) -> np.ndarray:
        d = np.asarray(points, dtype=float) - self.origin
        return np.stack([d @ self.axis_u, d @ self.axis_v], axis=-1)

    def intersect(self, origins, dirs):
        """Ray hits; returns ``(t, points, normals, hit)``."""
        origins = np.asarray(origins, dtype=float)
        dirs = np.asarray(dirs, dtype=float)
        n = self.normal
        dn = dirs @ n
        ok = np.abs(dn) > 1e-15
        t = np.where(ok, ((self.origin - origins) @ n) / np.where(ok, dn, 1.0), np.inf)
        hit = ok & (t > 0)
        pts = origins + np.where(hit, t, 0.0)[..., None] * dirs
        lc = self.local_coords(pts)
        tol = 1e-9 * max(self.size)
        hit &= (np.abs(lc[..., 0]) <= self.size[0] / 2 + tol) & (np.abs(lc[..., 1]) <= self.size[1] / 2 + tol)
        normals = np.broadcast_to(n, pts.shape).copy()
        return np.where(hit, t, np.inf), pts, normals, hit

    def sample_points(self) -> np.ndarray:
        density = self.density or 100.0
        nu = max(1, int(round(self.size[0] * density)))
        nv = max(1, int(round(self.size[1] * density)))
        su = (np.arange(nu) + 0.5) / nu - 0.5
        sv = (np.arange(nv) + 0.5) / nv - 0.5
        gu, gv = np.meshgrid(su * self.size[0], sv * self.size[1])
        return self.origin + gu[..., None] * self.axis_u + gv[..., None] * self.axis_v


@dataclass(frozen=True, eq=False)
class MeshTarget:
    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray | None = None
    density: float | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("mesh faces reference missing vertices")
        if self.normals is None:
            nrm = vertex_normals(v, f)
        else:
            nrm = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if nrm.shape != v.shape:
                raise ValueError("need one normal per vertex")
            if np.any(np.abs(np.linalg.norm(nrm, axis=1) - 1.0) > 1e-6):
                raise ValueError("vertex normals must be unit length")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "normals", nrm)

    @property
    def center(self) -> np.ndarray:
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return 0.5 * (lo + hi)

    def corners(self) -> np.ndarray:
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])

    def _tri(self):
        return self.vertices[self.faces[:, 0]], self.vertices[self.faces[:, 1]], self.vertices[self.faces[:, 2]]

    def intersect(self, origins, dirs):
        origins = np.asarray(origins, dtype=float)
        dirs = np.asarray(dirs, dtype=float)
        shape = origins.shape[:-1] if origins.ndim > 1 else dirs.shape[:-1]
        o = np.broadcast_to(origins, shape + (3,)).reshape(-1, 3)
        d = np.broadcast_to(dirs, shape + (3,)).reshape(-1, 3)
        v0, v1, v2 = self._tri()
        t, tri = ray_triangles(o, d, v0, v1, v2, chunk=_chunk(len(self.faces)))
        hit = tri >= 0
        pts = o + np.where(hit, t, 0.0)[:, None] * d
        normals = np.zeros_like(pts)
        if hit.any():
            fi = self.faces[tri[hit]]
            a, b, c = self.vertices[fi[:, 0]], self.vertices[fi[:, 1]], self.vertices[fi[:, 2]]
            w = barycentric(pts[hit], a, b, c)
            nn = (w[:, :1] * self.normals[fi[:, 0]] + w[:, 1:2] * self.normals[fi[:, 1]]
                  + w[:, 2:] * self.normals[fi[:, 2]])
            normals[hit] = normalize(nn)
        return (t.reshape(shape), pts.reshape(shape + (3,)), normals.reshape(shape + (3,)), hit.reshape(shape))

    def segment_blocked(self, p, q) -> np.ndarray:
        """True where the open segment p->q crosses any triangle."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        shape = np.broadcast_shapes(p.shape, q.shape)[:-1]
        p = np.broadcast_to(p, shape + (3,)).reshape(-1, 3)
        q = np.broadcast_to(q, shape + (3,)).reshape(-1, 3)
        d = q - p
        length = np.linalg.norm(d, axis=1)
        v0, v1, v2 = self._tri()
        # nudge the start off the surface so a point does not hit its own triangle
        start = p + 1e-7 * d / np.maximum(length, 1e-300)[:, None]
        t, _ = ray_triangles(start, normalize(d), v0, v1, v2, chunk=_chunk(len(self.faces)))
        return (t < length * (1 - 1e-9) - 1e-7).reshape(shape)

    def sample_points(self) -> np.ndarray:
        v0, v1, v2 = self._tri()
        return (v0 + v1 + v2) / 3.0


def _chunk(n_tri: int) -> int:
    return max(64, int(2_000_000 // max(n_tri, 1)))


def barycentric(p, a, b, c) -> np.ndarray:
    v0, v1, v2 = b - a, c - a, p - a
    d00 = np.sum(v0 * v0, axis=-1)
    d01 = np.sum(v0 * v1, axis=-1)
    d11 = np.sum(v1 * v1, axis=-1)
    d20 = np.sum(v2 * v0, axis=-1)
    d21 = np.sum(v2 * v1, axis=-1)
    den = d00 * d11 - d01 * d01
    den = np.where(den == 0, 1.0, den)
    v = (d11 * d20 - d01 * d21) / den
    w = (d00 * d21 - d01 * d20) / den
    return np.stack([1 - v - w, v, w], axis=-1)


def vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted per-vertex normals from counter-clockwise faces."""
    a, b, c = vertices[faces[:, 0]], vertices[faces[:, 1]], vertices[faces[:, 2]]
    fn = np.cross(b - a, c - a)
    out = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(out, faces[:, k], fn)
    return normalize(out)


TargetSurface = PlaneTarget | MeshTarget


# -- occluders ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SphereOccluder:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if self.radius <= 0:
            raise ValueError("occluder radius must be positive")

    def segment_blocked(self, p, q) -> np.ndarray:
        return point_segment_distance(self.center, np.asarray(p, float), np.asarray(q, float)) < self.radius


@dataclass(frozen=True, eq=False)
class CapsuleOccluder:
    a: np.ndarray
    b: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(3))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(3))
        if self.radius <= 0:
            raise ValueError("occluder radius must be positive")
        if np.linalg.norm(self.a - self.b) == 0:
            raise ValueError("capsule endpoints must be distinct")

    def segment_blocked(self, p, q) -> np.ndarray:
        from .geometry import segment_segment_distance

        p = np.asarray(p, float)
        q = np.asarray(q, float)
        shape = np.broadcast_shapes(p.shape, q.shape)
        return segment_segment_distance(np.broadcast_to(p, shape), np.broadcast_to(q, shape), self.a, self.b) < self.radius


@dataclass(frozen=True, eq=False)
class MeshOccluder:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float).reshape(-1, 3))
        object.__setattr__(self, "faces", np.asarray(self.faces, dtype=np.int64).reshape(-1, 3))

    def segment_blocked(self, p, q) -> np.ndarray:
        return MeshTarget(self.vertices, self.faces).segment_blocked(p, q)


Occluder = SphereOccluder | CapsuleOccluder | MeshOccluder


def segments_blocked(occluders, p, q) -> np.ndarray:
    """True where the open segment p->q meets any occluder."""
    shape = np.broadcast_shapes(np.shape(p), np.shape(q))[:-1]
    out = np.zeros(shape, dtype=bool)
    for occ in occluders:
        out |= occ.segment_blocked(p, q)
    return out


# -- scene -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Scene:
    projectors: tuple[ProjectorModel, ...]
    target: TargetSurface
    camera: CameraModel
    occluders: tuple = field(default_factory=tuple)
    attenuation: str = "footprint"

    def __post_init__(self):
        object.__setattr__(self, "projectors", tuple(self.projectors))
        object.__setattr__(self, "occluders", tuple(self.occluders))
        if not self.projectors:
            raise ValueError("a scene needs at least one projector")
        ids = [p.id for p in self.projectors]
        if len(set(ids)) != len(ids):
            raise ValueError("projector ids must be unique")
        if self.attenuation not in ("inverse_square", "footprint"):
            raise ValueError(f"unknown attenuation model {self.attenuation!r}")
        if isinstance(self.target, PlaneTarget):
            n = self.target.normal
            for dev in (self.camera, *self.projectors):
                if np.dot(dev.position - self.target.origin, n) <= 0:
                    raise ValueError("camera and projectors must sit on the front side of the plane")

    @property
    def n_projectors(self) -> int:
        return len(self.projectors)

    def projector(self, projector_id: int) -> ProjectorModel:
        for p in self.projectors:
            if p.id == projector_id:
                return p
        raise KeyError(f"no projector with id {projector_id}")

    def with_occluders(self, occluders) -> "Scene":
        return Scene(self.projectors, self.target, self.camera, tuple(occluders), self.attenuation)

    def with_projectors(self, projectors) -> "Scene":
        return Scene(tuple(projectors), self.target, self.camera, self.occluders, self.attenuation)

    def reference_projector(self) -> ProjectorModel:
        """Projector nearest the array centroid (lowest id on ties)."""
        centres = np.array([p.position for p in self.projectors])
        d = np.linalg.norm(centres - centres.mean(axis=0), axis=1)
        best = np.flatnonzero(d <= d.min() + 1e-9)
        return min((self.projectors[i] for i in best), key=lambda p: p.id)


# -- surface casting ---------------------------------------------------------


def cast(scene: Scene, device: Device, uv):
    """Cast rays through pixel coordinates onto the target.

    Returns ``(points, normals, hit)``; normals are oriented toward the front.
    """
    uv = np.asarray(uv, dtype=float)
    dirs = device.ray_directions(uv)
    origins = np.broadcast_to(device.position, dirs.shape)
    _, pts, normals, hit = scene.target.intersect(origins, dirs)
    return pts, normals, hit


def facing(points, normals, position) -> np.ndarray:
    return np.sum((np.asarray(position) - points) * normals, axis=-1) > 0


def camera_view_ok(scene: Scene, points, normals) -> np.ndarray:
    """Surface points the camera can see (front-facing, in front, not self-hidden)."""
    cam = scene.camera
    _, z = cam.project(points)
    ok = facing(points, normals, cam.position) & (z > 0)
    if isinstance(scene.target, MeshTarget):
        ok &= ~scene.target.segment_blocked(points, np.broadcast_to(cam.position, points.shape))
    return ok


@dataclass
class FootprintSet:
    """All pixel footprints of one projector, in camera pixel coordinates."""

    quads: np.ndarray  # (h, w, 4, 2)
    valid: np.ndarray  # (h, w)
    centers: np.ndarray  # (h, w, 3) surface points of pixel centres
    normals: np.ndarray
    corner_points: np.ndarray  # (h + 1, w + 1, 3)
    corner_hit: np.ndarray


def footprints(scene: Scene, projector: ProjectorModel) -> FootprintSet:
    corner_uv = projector.pixel_grid(corners=True)
    cpts, cnrm, chit = cast(scene, projector, corner_uv)
    centre_uv = projector.pixel_grid()
    pts, nrm, hit = cast(scene, projector, centre_uv)

    cam_uv, cam_z = scene.camera.project(cpts)
    cam_uv = np.where((chit & (cam_z > 0))[..., None], cam_uv, np.nan)
    quads = np.stack([cam_uv[:-1, :-1], cam_uv[:-1, 1:], cam_uv[1:, 1:], cam_uv[1:, :-1]], axis=2)
    corner_ok = chit & (cam_z > 0)
    all_corners = corner_ok[:-1, :-1] & corner_ok[:-1, 1:] & corner_ok[1:, 1:] & corner_ok[1:, :-1]

    valid = hit & all_corners & facing(pts, nrm, projector.position)
    if valid.any():
        valid[valid] &= camera_view_ok(scene, pts[valid], nrm[valid])
    if valid.any():
        valid[valid] &= quad_is_convex(quads[valid])
    return FootprintSet(quads, valid, pts, nrm, cpts, chit)


def pixel_footprint(projector: ProjectorModel, pixel, scene: Scene):
    """Quad (4, 2) in camera pixel coordinates, or ``None`` when off-target."""
    i, j = int(pixel[0]), int(pixel[1])
    if not (0 <= i < projector.width and 0 <= j < projector.height):
        raise ValueError(f"pixel {pixel!r} outside projector resolution")
    corner_uv = np.array([[i, j], [i + 1, j], [i + 1, j + 1], [i, j + 1]], dtype=float)
    cpts, _, chit = cast(scene, projector, corner_uv)
    pts, nrm, hit = cast(scene, projector, np.array([[i + 0.5, j + 0.5]]))
    if not (chit.all() and hit[0] and facing(pts, nrm, projector.position)[0]):
        return None
    if not camera_view_ok(scene, pts, nrm)[0]:
        return None
    uv, z = scene.camera.project(cpts)
    if np.any(z <= 0) or not quad_is_convex(uv[None])[0]:
        return None
    return uv


def camera_surface(scene: Scene):
    """Back-project every camera pixel centre; ``(points, normals, hit)`` on (h, w)."""
    pts, nrm, hit = cast(scene, scene.camera, scene.camera.pixel_grid())
    if hit.any():
        hit[hit] &= camera_view_ok(scene, pts[hit], nrm[hit])
    return pts, nrm, hit


def camera_pixel_areas(scene: Scene) -> np.ndarray:
    """Surface area (m^2) seen by each camera pixel; 0 where a corner misses."""
    cpts, _, chit = cast(scene, scene.camera, scene.camera.pixel_grid(corners=True))
    a, b, c, d = cpts[:-1, :-1], cpts[:-1, 1:], cpts[1:, 1:], cpts[1:, :-1]
    area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=-1) + 0.5 * np.linalg.norm(np.cross(c - a, d - a), axis=-1)
    ok = chit[:-1, :-1] & chit[:-1, 1:] & chit[1:, 1:] & chit[1:, :-1]
    return np.where(ok, area, 0.0)


# -- constructors ------------------------------------------------------------


def _right_hint(target) -> np.ndarray:
    return target.axis_u if isinstance(target, PlaneTarget) else np.array([1.0, 0.0, 0.0])


def _up(target) -> np.ndarray:
    return target.normal if isinstance(target, PlaneTarget) else np.array([0.0, 0.0, 1.0])


def fit_focal(positions, rotations, points, resolution, margin: float = 0.05) -> float:
    """Largest shared square-pixel focal length keeping ``points`` inside every frame."""
    w, h = resolution
    best = np.inf
    for pos, rot in zip(positions, rotations):
        pd = (points - pos) @ rot
        if np.any(pd[:, 2] <= 0):
            raise ValueError("target extends behind a device")
        ax = np.max(np.abs(pd[:, 0] / pd[:, 2]))
        ay = np.max(np.abs(pd[:, 1] / pd[:, 2]))
        if ax > 0:
            best = min(best, (0.5 - margin) * w / ax)
        if ay > 0:
            best = min(best, (0.5 - margin) * h / ay)
    return float(best)


def make_grid_array(
    rows: int,
    cols: int,
    spacing: float,
    height: float,
    target,
    *,
    resolution=(128, 128),
    focal: float | None = None,
    parallel: bool = False,
    max_output: float = 1.0,
    gamma: float = 2.2,
    margin: float = 0.05,
) -> list[ProjectorModel]:
    """Regular ``rows x cols`` projector grid ``height`` above the target centre.

    Projectors converge on the target centre unless ``parallel`` is set; ids
    are assigned row-major.  Without an explicit ``focal`` a shared focal
    length is chosen so the whole target fits every frame with ``margin``.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    centre = target.center
    up = _up(target)
    u = _right_hint(target)
    v = np.cross(up, u)
    positions, rotations = [], []
    for i in range(rows):
        for j in range(cols):
            off = (j - (cols - 1) / 2) * spacing * u + (i - (rows - 1) / 2) * spacing * v
            pos = centre + off + height * up
            aim = pos - up if parallel else centre
            positions.append(pos)
            rotations.append(look_at(pos, aim, u))
    if focal is None:
        focal = fit_focal(positions, rotations, target.corners(), resolution, margin)
    w, h = resolution
    return [
        ProjectorModel(rot, pos, (focal, focal), (w / 2, h / 2), (w, h), id=k, max_output=max_output, response_gamma=gamma)
        for k, (pos, rot) in enumerate(zip(positions, rotations))
    ]


def overhead_camera(target, height: float, resolution=(128, 128), *, offset=(0.0, 0.0), margin: float = 0.0,
                    focal: float | None = None) -> CameraModel:
    """Camera above the target centre (shifted by ``offset`` in-plane), aimed at it."""
    u = _right_hint(target)
    up = _up(target)
    v = np.cross(up, u)
    pos = target.center + offset[0] * u + offset[1] * v + height * up
    rot = look_at(pos, target.center, u)
    if focal is None:
        focal = fit_focal([pos], [rot], target.corners(), resolution, margin)
    w, h = resolution
    return CameraModel(rot, pos, (focal, focal), (w / 2, h / 2), (w, h))
