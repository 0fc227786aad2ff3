"""Geometric and radiometric calibration: gray-code structured light,
homographies, landmark resectioning and projector response curves."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg

from .images import read_png16, write_png16

UNSEEN = -1
# marker for unseen pixels in the 16-bit PNG export
PNG_UNSEEN = 65535


class StackShapeError(ValueError):
    pass


class RankDeficientError(ValueError):
    pass


class DegenerateLandmarksError(ValueError):
    pass


class OutOfRangeError(ValueError):
    pass


# -- gray code ---------------------------------------------------------------


def gray_encode(n):
    """Binary-reflected Gray code; works on ints and integer arrays."""
    if isinstance(n, (int, np.integer)) and not 0 <= n < 2**31:
        raise ValueError("gray code input must lie in [0, 2^31)")
    return n ^ (n >> 1)


def gray_decode(g):
    n = g
    shift = 1
    while shift < 32:
        n = n ^ (n >> shift)
        shift <<= 1
    return n


def n_bits(size: int) -> int:
    return math.ceil(math.log2(size)) if size > 1 else 0


def generate_graycode_patterns(w: int, h: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """(pattern, complement) pairs: column bits then row bits, MSB first.

    Each image is ``(h, w)`` float with values 0/1.
    """
    if w < 1 or h < 1:
        raise ValueError("pattern size must be positive")
    gx = gray_encode(np.arange(w, dtype=np.int64))
    gy = gray_encode(np.arange(h, dtype=np.int64))
    out = []
    for k in reversed(range(n_bits(w))):
        row = ((gx >> k) & 1).astype(float)
        pat = np.broadcast_to(row, (h, w)).copy()
        out.append((pat, 1.0 - pat))
    for k in reversed(range(n_bits(h))):
        col = ((gy >> k) & 1).astype(float)
        pat = np.broadcast_to(col[:, None], (h, w)).copy()
        out.append((pat, 1.0 - pat))
    return out


@dataclass
class CorrespondenceMap:
    """Per camera pixel: decoded projector column/row, ``UNSEEN`` when not decoded."""

    x: np.ndarray
    y: np.ndarray
    mask: np.ndarray
    projector_size: tuple[int, int]

    @property
    def decoded_fraction(self) -> float:
        return float(self.mask.mean())

    def pairs(self):
        """(camera pixel centres, projector pixel centres) for decoded pixels."""
        ys, xs = np.nonzero(self.mask)
        cam = np.column_stack([xs + 0.5, ys + 0.5])
        proj = np.column_stack([self.x[ys, xs] + 0.5, self.y[ys, xs] + 0.5])
        return cam, proj


def _decode_bits(pairs, margin):
    value = None
    seen = None
    for pat, comp in pairs:
        d = np.asarray(pat, dtype=float) - np.asarray(comp, dtype=float)
        bit = (d > margin).astype(np.int64)
        ok = np.abs(d) > margin
        value = bit if value is None else (value << 1) | bit
        seen = ok if seen is None else seen & ok
    return value, seen


def decode_correspondence(captured, projector_size, margin: float = 0.1) -> CorrespondenceMap:
    """Decode captured (pattern, complement) pairs into projector coordinates.

    A bit is 1 where pattern - complement > margin; a pixel with any
    |difference| <= margin, or decoding outside the projector, is unseen.
    """
    w, h = projector_size
    bx, by = n_bits(w), n_bits(h)
    captured = list(captured)
    if len(captured) != bx + by:
        raise StackShapeError(f"expected {bx + by} pattern pairs for {w}x{h}, got {len(captured)}")
    if not captured:
        raise StackShapeError("empty pattern stack")
    shape = np.shape(captured[0][0])
    for pat, comp in captured:
        if np.shape(pat) != shape or np.shape(comp) != shape:
            raise StackShapeError("captured images differ in size")
    if not 0 <= margin <= 1:
        raise ValueError("margin must lie in [0, 1]")

    mask = np.ones(shape, dtype=bool)
    x = np.zeros(shape, dtype=np.int64)
    y = np.zeros(shape, dtype=np.int64)
    if bx:
        g, ok = _decode_bits(captured[:bx], margin)
        x = gray_decode(g)
        mask &= ok
    if by:
        g, ok = _decode_bits(captured[bx:], margin)
        y = gray_decode(g)
        mask &= ok
    mask &= (x < w) & (y < h)
    return CorrespondenceMap(np.where(mask, x, UNSEEN), np.where(mask, y, UNSEEN), mask, (w, h))


def capture_patterns(scene, projector, patterns, noise: float = 0.0, rng=None):
    """Noise-free (or Gaussian-noise) camera captures of projector patterns.

    Each camera pixel sees the projector pixel whose ray hits the surface
    point behind the camera pixel centre; pixels off the surface or outside
    the projector frame stay dark.
    """
    from .scene import camera_surface, facing

    pts, nrm, hit = camera_surface(scene)
    uv, z = projector.project(pts)
    ok = hit & (z > 0) & projector.in_frame(uv) & facing(pts, nrm, projector.position)
    px = np.clip(np.floor(uv[..., 0]).astype(np.int64), 0, projector.width - 1)
    py = np.clip(np.floor(uv[..., 1]).astype(np.int64), 0, projector.height - 1)
    rng = rng if rng is not None else np.random.default_rng(0)
    out = []
    for pat, comp in patterns:
        pair = []
        for img in (pat, comp):
            cap = np.where(ok, img[py, px], 0.0)
            if noise > 0:
                cap = cap + rng.normal(0.0, noise, cap.shape)
            pair.append(cap)
        out.append(tuple(pair))
    return out


# -- homography --------------------------------------------------------------


@dataclass
class Homography:
    matrix: np.ndarray
    error: float = 0.0
    normalized: np.ndarray | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float).reshape(3, 3)
        if abs(np.linalg.det(m)) <= 1e-12 * max(np.abs(m).max() ** 3, 1e-300):
            raise RankDeficientError("homography is singular")
        self.matrix = _unit_corner(m)

    def apply(self, points) -> np.ndarray:
        return apply_homography(self.matrix, points)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self.matrix @ other.matrix)


def _unit_corner(m: np.ndarray) -> np.ndarray:
    if abs(m[2, 2]) > 1e-12 * np.abs(m).max():
        return m / m[2, 2]
    return m / np.linalg.norm(m)


def apply_homography(H, points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    ph = p @ np.asarray(H)[:, :2].T + np.asarray(H)[:, 2]
    return ph[..., :2] / ph[..., 2:3]


def _similarity(points: np.ndarray) -> np.ndarray:
    """Hartley normalisation: centroid to origin, mean distance sqrt(dim)."""
    dim = points.shape[1]
    c = points.mean(axis=0)
    d = np.linalg.norm(points - c, axis=1).mean()
    if d <= 0:
        raise RankDeficientError("all points coincide")
    s = math.sqrt(dim) / d
    T = np.eye(dim + 1)
    T[:dim, :dim] *= s
    T[:dim, dim] = -s * c
    return T


def _homog(points, T):
    ph = np.column_stack([points, np.ones(len(points))])
    return ph @ T.T


def _sign_fixed(m: np.ndarray) -> np.ndarray:
    m = m / np.linalg.norm(m)
    k = np.flatnonzero(np.abs(m.ravel()) > 1e-12)[0]
    return m if m.ravel()[k] > 0 else -m


def _collinear(p, q, r, tol) -> bool:
    area = abs((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))
    scale = max(np.linalg.norm(q - p) * np.linalg.norm(r - p), 1e-300)
    return area <= tol * scale


def estimate_homography(src, dst) -> Homography:
    """Normalised direct linear transform from >= 4 point pairs.

    Returns the homography (bottom-right 1), with the mean reprojection
    error on the inputs and the matrix in normalised coordinates (unit
    Frobenius norm, sign fixed), which does not depend on the input scale.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(src) != len(dst):
        raise ValueError("point lists differ in length")
    if len(src) < 4:
        raise ValueError("need at least 4 point pairs")
    if len(src) == 4:
        for a, b, c in combinations(range(4), 3):
            if _collinear(src[a], src[b], src[c], 1e-9) or _collinear(dst[a], dst[b], dst[c], 1e-9):
                raise RankDeficientError("three of the four points are collinear")
    Ts, Td = _similarity(src), _similarity(dst)
    s = _homog(src, Ts)
    d = _homog(dst, Td)
    n = len(s)
    A = np.zeros((2 * n, 9))
    A[0::2, 3:6] = -s
    A[0::2, 6:9] = d[:, 1:2] * s
    A[1::2, 0:3] = s
    A[1::2, 6:9] = -d[:, 0:1] * s
    _, sv, vt = np.linalg.svd(A)
    if sv[7] <= 1e-10 * sv[0]:
        raise RankDeficientError("point configuration does not determine a homography")
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    if abs(np.linalg.det(H)) <= 1e-12 * np.abs(H).max() ** 3:
        raise RankDeficientError("estimated homography is singular")
    H = _unit_corner(H)
    err = float(np.mean(np.linalg.norm(apply_homography(H, src) - dst, axis=1)))
    return Homography(H, err, _sign_fixed(Hn))


# -- resectioning ------------------------------------------------------------


@dataclass
class ProjectionMatrix:
    matrix: np.ndarray
    rms: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float).reshape(3, 4)
        if np.linalg.matrix_rank(m[:, :3]) < 3:
            raise DegenerateLandmarksError("left 3x3 block is rank deficient")
        self.matrix = m

    def project(self, points) -> np.ndarray:
        ph = np.asarray(points, dtype=float) @ self.matrix[:, :3].T + self.matrix[:, 3]
        return ph[..., :2] / ph[..., 2:3]

    def decompose(self):
        """``(K, R, t)`` with ``P ~ K [R | t]``, positive focal lengths and det R = +1."""
        K, R = scipy.linalg.rq(self.matrix[:, :3])
        D = np.diag(np.sign(np.diag(K)))
        K, R = K @ D, D @ R
        t = np.linalg.solve(K, self.matrix[:, 3])
        if np.linalg.det(R) < 0:
            R, t = -R, -t
        return K / K[2, 2], R, t


def estimate_projection_matrix(world, image) -> ProjectionMatrix:
    """Normalised DLT resectioning from >= 6 non-coplanar 3-D/2-D pairs.

    The result is scaled so the third row's rotation part has unit norm and
    the landmarks sit at positive depth.
    """
    X = np.asarray(world, dtype=float).reshape(-1, 3)
    x = np.asarray(image, dtype=float).reshape(-1, 2)
    if len(X) != len(x):
        raise ValueError("point lists differ in length")
    if len(X) < 6:
        raise ValueError("need at least 6 landmark pairs")
    centred = X - X.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[2] <= 1e-9 * sv[0]:
        raise DegenerateLandmarksError("landmarks are coplanar")
    Tw = _similarity(X)
    Ti = _similarity(x)
    Xn = _homog(X, Tw)
    xn = _homog(x, Ti)
    n = len(X)
    A = np.zeros((2 * n, 12))
    A[0::2, 0:4] = Xn
    A[0::2, 8:12] = -xn[:, 0:1] * Xn
    A[1::2, 4:8] = Xn
    A[1::2, 8:12] = -xn[:, 1:2] * Xn
    _, s, vt = np.linalg.svd(A)
    if s[10] <= 1e-10 * s[0]:
        raise DegenerateLandmarksError("landmarks do not determine a projection")
    P = np.linalg.inv(Ti) @ vt[-1].reshape(3, 4) @ Tw
    P = P / np.linalg.norm(P[2, :3])
    depth = X @ P[2, :3] + P[2, 3]
    if np.mean(depth) < 0:
        P = -P
    pm = ProjectionMatrix(P)
    pm.rms = float(np.sqrt(np.mean(np.sum((pm.project(X) - x) ** 2, axis=1))))
    return pm


# -- response curves ---------------------------------------------------------

LEVELS = 255


@dataclass(frozen=True)
class ResponseCurve:
    """Input level (0..255) to normalised luminance.

    Without a ``table`` the curve is ``max_output * (level / 255) ** gamma``.
    A table is 256 non-decreasing luminances, first 0 and last ``max_output``.
    """

    gamma: float = 2.2
    max_output: float = 1.0
    table: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not 0 < self.max_output <= 1:
            raise ValueError("max_output must lie in (0, 1]")
        if self.table is not None:
            t = np.asarray(self.table, dtype=float)
            if t.shape != (LEVELS + 1,):
                raise ValueError("response table needs 256 entries")
            if np.any(np.diff(t) < 0):
                raise ValueError("response table must be non-decreasing")
            if t[0] != 0 or not np.isclose(t[-1], self.max_output, atol=1e-12):
                raise ValueError("response table must run from 0 to max_output")
            object.__setattr__(self, "table", tuple(float(v) for v in t))

    def __call__(self, level):
        return delinearize(self, level)


def delinearize(curve: ResponseCurve, level):
    """Luminance produced by an input level (scalar or array)."""
    lv = np.asarray(level, dtype=float)
    if np.any((lv < 0) | (lv > LEVELS)):
        raise OutOfRangeError("input level outside 0..255")
    if curve.table is not None:
        out = np.interp(lv, np.arange(LEVELS + 1), np.asarray(curve.table))
    else:
        out = curve.max_output * (lv / LEVELS) ** curve.gamma
    return float(out) if np.ndim(out) == 0 else out


def linearize(curve: ResponseCurve, desired):
    """Input level whose luminance is ``desired``; rounds half up at the end."""
    d = np.asarray(desired, dtype=float)
    if np.any(d > curve.max_output * (1 + 1e-12)) or np.any(d < 0):
        raise OutOfRangeError("desired luminance outside [0, max_output]")
    d = np.minimum(d, curve.max_output)
    if curve.table is not None:
        t = np.asarray(curve.table)
        # first level reaching each luminance, interpolated within its step
        levels = np.arange(LEVELS + 1, dtype=float)
        uniq, first = np.unique(t, return_index=True)
        cont = np.interp(d, uniq, levels[first])
    else:
        cont = LEVELS * (d / curve.max_output) ** (1.0 / curve.gamma)
    out = np.floor(cont + 0.5).astype(np.int64)
    return int(out) if np.ndim(out) == 0 else out


# -- file export -------------------------------------------------------------


def save_matrix_text(path, matrix) -> None:
    """Row-major plain text, one matrix row per line."""
    np.savetxt(path, np.asarray(matrix, dtype=float), fmt="%.17g")


def load_matrix_text(path) -> np.ndarray:
    return np.loadtxt(path, ndmin=2)


def save_correspondence_csv(cmap: CorrespondenceMap, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["camera_x", "camera_y", "projector_x", "projector_y", "seen"])
        h, wd = cmap.mask.shape
        for j in range(h):
            for i in range(wd):
                w.writerow([i, j, int(cmap.x[j, i]), int(cmap.y[j, i]), int(cmap.mask[j, i])])


def save_correspondence_png(cmap: CorrespondenceMap, path) -> None:
    """Two-channel 16-bit PNG: projector x and y, 65535 where unseen."""
    if max(cmap.projector_size) >= PNG_UNSEEN:
        raise ValueError("projector too large for 16-bit export")
    data = np.stack([cmap.x, cmap.y], axis=-1)
    data = np.where(cmap.mask[..., None], data, PNG_UNSEEN).astype(np.uint16)
    write_png16(path, data)


def load_correspondence_png(path, projector_size) -> CorrespondenceMap:
    data = read_png16(path).astype(np.int64)
    mask = data[..., 0] != PNG_UNSEEN
    x = np.where(mask, data[..., 0], UNSEEN)
    y = np.where(mask, data[..., 1], UNSEEN)
    return CorrespondenceMap(x, y, mask, tuple(projector_size))
