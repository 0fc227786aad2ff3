"""TOML run configuration: scene description plus per-command sections.

Layout (all lengths in metres, file paths relative to the config file)::

    seed = 1234                      # optional, --seed overrides

    [scene]
    attenuation = "footprint"        # or "inverse_square"

    [scene.target]                   # plane ...
    type = "plane"
    origin = [0, 0, 0]
    axis_u = [1, 0, 0]
    axis_v = [0, 1, 0]
    size = [1.2, 0.6]
    # ... or mesh: type = "mesh", path = "bust.obj", scale = 1.0, offset = [0, 0, 0]

    [scene.array]                    # grid shorthand, converging unless parallel
    rows = 5
    cols = 5
    spacing = 0.3
    height = 1.4
    resolution = [256, 256]
    # focal, parallel, max_output, gamma, ids (subset to keep)

    [[scene.projectors]]             # explicit projectors (ids continue after the array)
    position = [0, 0, 1.4]
    look_at = [0, 0, 0]              # or rotation = [[...], [...], [...]]
    focal = [500, 500]
    resolution = [128, 128]
    # principal, id, max_output, gamma

    [scene.camera]
    position = [0, 0, 1.4]
    look_at = [0, 0, 0]
    resolution = [128, 128]
    field = 0.56                     # visible width at the look-at point; or focal = [fx, fy]

    [[scene.occluders]]
    type = "capsule"                 # sphere: center, radius; capsule: a, b, radius; mesh: path
    a = [0, 0, 0.01]
    b = [0, 0, 0.3]
    radius = 0.01

Command sections: ``[solver]``, ``[simulate]``, ``[compensate]``,
``[coverage]``, ``[calibrate]``, ``[bench]``; see ``SECTION_KEYS``.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .scene import (
    CameraModel,
    CapsuleOccluder,
    MeshOccluder,
    MeshTarget,
    PlaneTarget,
    ProjectorModel,
    Scene,
    SphereOccluder,
    look_at,
    make_grid_array,
)
from .solver import SolverConfig

DEFAULT_SEED = 1234

PATTERN_NAMES = ("blocks", "checker", "text", "ramp", "white")

SECTION_KEYS = {
    "solver": {"max_iterations", "residual_tolerance", "step", "fixed_step", "operator"},
    "simulate": {"content", "threshold", "reference"},
    "compensate": {"target", "low", "high", "method"},
    "coverage": set(),
    "calibrate": {"noise", "margin", "landmarks", "grid"},
    "bench": {"sweep", "grid", "repeats", "max_iterations", "residual_tolerance", "target", "low", "high"},
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    path: Path
    scene: Scene
    seed: int
    solver: SolverConfig
    sections: dict = field(default_factory=dict)
    digest: str = ""

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})


# -- OBJ ---------------------------------------------------------------------


def load_obj(path):
    """Vertices, triangle faces and per-vertex normals (or None) from an OBJ file.

    Reads ``v``, ``vn`` and ``f`` records; polygons are fan-triangulated and
    negative (relative) indices are resolved.  Corner normals are averaged
    onto their vertices.
    """
    verts, vnorms, faces, corner_normals = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            tag = parts[0]
            try:
                if tag == "v":
                    verts.append([float(x) for x in parts[1:4]])
                elif tag == "vn":
                    vnorms.append([float(x) for x in parts[1:4]])
                elif tag == "f":
                    idx, nidx = [], []
                    for tok in parts[1:]:
                        fields = tok.split("/")
                        vi = int(fields[0])
                        idx.append(vi - 1 if vi > 0 else len(verts) + vi)
                        if len(fields) == 3 and fields[2]:
                            ni = int(fields[2])
                            nidx.append(ni - 1 if ni > 0 else len(vnorms) + ni)
                    if len(idx) < 3:
                        raise ValueError("face with fewer than 3 vertices")
                    for k in range(1, len(idx) - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
                        if len(nidx) == len(idx):
                            corner_normals.append([nidx[0], nidx[k], nidx[k + 1]])
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad OBJ record: {exc}") from None
    v = np.asarray(verts, dtype=float).reshape(-1, 3)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if f.size and (f.min() < 0 or f.max() >= len(v)):
        raise ConfigError(f"{path}: face index out of range")
    normals = None
    if vnorms and len(corner_normals) == len(faces):
        vn = np.asarray(vnorms, dtype=float)
        cn = np.asarray(corner_normals, dtype=np.int64)
        if cn.min() < 0 or cn.max() >= len(vn):
            raise ConfigError(f"{path}: normal index out of range")
        acc = np.zeros_like(v)
        for k in range(3):
            np.add.at(acc, f[:, k], vn[cn[:, k]])
        norm = np.linalg.norm(acc, axis=1, keepdims=True)
        if np.all(norm > 0):
            normals = acc / norm
    return v, f, normals


# -- parsing helpers -----------------------------------------------------------


def _vec(d: dict, key: str, n: int, where: str, default=None) -> np.ndarray:
    if key not in d:
        if default is None:
            raise ConfigError(f"{where}: missing '{key}'")
        return np.asarray(default, dtype=float)
    try:
        a = np.asarray(d[key], dtype=float).reshape(n)
    except (ValueError, TypeError):
        raise ConfigError(f"{where}: '{key}' must be {n} numbers") from None
    return a


def _num(d: dict, key: str, where: str, default=None, kind=float):
    if key not in d:
        if default is None:
            raise ConfigError(f"{where}: missing '{key}'")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: '{key}' must be a number")
    if kind is int and int(v) != v:
        raise ConfigError(f"{where}: '{key}' must be an integer")
    return kind(v)


def _check_keys(d: dict, allowed: set, where: str) -> None:
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {sorted(extra)}")


def _file(base: Path, name, where: str) -> Path:
    if not isinstance(name, str):
        raise ConfigError(f"{where}: path must be a string")
    p = (base / name).resolve()
    if not p.is_file():
        raise ConfigError(f"{where}: file not found: {p}")
    return p


def _target(d: dict, base: Path):
    where = "scene.target"
    kind = d.get("type", "plane")
    if kind == "plane":
        _check_keys(d, {"type", "origin", "axis_u", "axis_v", "size", "density"}, where)
        return PlaneTarget(
            _vec(d, "origin", 3, where, [0, 0, 0]),
            _vec(d, "axis_u", 3, where, [1, 0, 0]),
            _vec(d, "axis_v", 3, where, [0, 1, 0]),
            tuple(_vec(d, "size", 2, where)),
            d.get("density"),
        )
    if kind == "mesh":
        _check_keys(d, {"type", "path", "scale", "offset", "density"}, where)
        v, f, n = load_obj(_file(base, d.get("path"), where))
        v = v * _num(d, "scale", where, 1.0) + _vec(d, "offset", 3, where, [0, 0, 0])
        return MeshTarget(v, f, n, d.get("density"))
    raise ConfigError(f"{where}: unknown target type {kind!r}")


def _rotation(d: dict, position, where: str) -> np.ndarray:
    if "rotation" in d:
        try:
            return np.asarray(d["rotation"], dtype=float).reshape(3, 3)
        except (ValueError, TypeError):
            raise ConfigError(f"{where}: rotation must be a 3x3 matrix") from None
    aim = _vec(d, "look_at", 3, where)
    return look_at(position, aim, d.get("right", (1.0, 0.0, 0.0)))


def _camera(d: dict) -> CameraModel:
    where = "scene.camera"
    _check_keys(d, {"position", "look_at", "rotation", "right", "resolution", "focal", "field", "principal"}, where)
    pos = _vec(d, "position", 3, where)
    rot = _rotation(d, pos, where)
    w, h = (int(x) for x in _vec(d, "resolution", 2, where))
    if "focal" in d:
        focal = tuple(_vec(d, "focal", 2, where))
    elif "field" in d:
        if "look_at" not in d:
            raise ConfigError(f"{where}: 'field' needs 'look_at' for the viewing distance")
        dist = float(np.linalg.norm(_vec(d, "look_at", 3, where) - pos))
        f = w * dist / _num(d, "field", where)
        focal = (f, f)
    else:
        raise ConfigError(f"{where}: give 'focal' or 'field'")
    principal = tuple(_vec(d, "principal", 2, where, [w / 2, h / 2]))
    return CameraModel(rot, pos, focal, principal, (w, h))


def _array(d: dict, target) -> list[ProjectorModel]:
    where = "scene.array"
    _check_keys(d, {"rows", "cols", "spacing", "height", "resolution", "focal", "parallel", "max_output", "gamma", "ids"}, where)
    projs = make_grid_array(
        _num(d, "rows", where, kind=int),
        _num(d, "cols", where, kind=int),
        _num(d, "spacing", where),
        _num(d, "height", where),
        target,
        resolution=tuple(int(x) for x in _vec(d, "resolution", 2, where, [128, 128])),
        focal=d.get("focal"),
        parallel=bool(d.get("parallel", False)),
        max_output=_num(d, "max_output", where, 1.0),
        gamma=_num(d, "gamma", where, 2.2),
    )
    if "ids" in d:
        keep = set(d["ids"])
        missing = keep - {p.id for p in projs}
        if missing:
            raise ConfigError(f"{where}: ids {sorted(missing)} are not in the array")
        projs = [p for p in projs if p.id in keep]
    return projs


def _projector(d: dict, k: int, default_id: int) -> ProjectorModel:
    where = f"scene.projectors[{k}]"
    _check_keys(d, {"id", "position", "look_at", "rotation", "right", "focal", "principal", "resolution", "max_output", "gamma"}, where)
    pos = _vec(d, "position", 3, where)
    rot = _rotation(d, pos, where)
    w, h = (int(x) for x in _vec(d, "resolution", 2, where))
    return ProjectorModel(
        rot,
        pos,
        tuple(_vec(d, "focal", 2, where)),
        tuple(_vec(d, "principal", 2, where, [w / 2, h / 2])),
        (w, h),
        id=int(_num(d, "id", where, default_id, int)),
        max_output=_num(d, "max_output", where, 1.0),
        response_gamma=_num(d, "gamma", where, 2.2),
    )


def _occluder(d: dict, k: int, base: Path):
    where = f"scene.occluders[{k}]"
    kind = d.get("type")
    if kind == "sphere":
        _check_keys(d, {"type", "center", "radius"}, where)
        return SphereOccluder(_vec(d, "center", 3, where), _num(d, "radius", where))
    if kind == "capsule":
        _check_keys(d, {"type", "a", "b", "radius"}, where)
        return CapsuleOccluder(_vec(d, "a", 3, where), _vec(d, "b", 3, where), _num(d, "radius", where))
    if kind == "mesh":
        _check_keys(d, {"type", "path", "scale", "offset"}, where)
        v, f, _ = load_obj(_file(base, d.get("path"), where))
        v = v * _num(d, "scale", where, 1.0) + _vec(d, "offset", 3, where, [0, 0, 0])
        return MeshOccluder(v, f)
    raise ConfigError(f"{where}: unknown occluder type {kind!r}")


def parse_scene(d: dict, base: Path) -> Scene:
    _check_keys(d, {"attenuation", "target", "array", "projectors", "camera", "occluders"}, "scene")
    if "target" not in d:
        raise ConfigError("scene: missing [scene.target]")
    if "camera" not in d:
        raise ConfigError("scene: missing [scene.camera]")
    target = _target(d["target"], base)
    projs = _array(d["array"], target) if "array" in d else []
    next_id = max((p.id for p in projs), default=-1) + 1
    for k, pd in enumerate(d.get("projectors", [])):
        projs.append(_projector(pd, k, next_id))
        next_id = max(next_id, projs[-1].id + 1)
    occ = [_occluder(od, k, base) for k, od in enumerate(d.get("occluders", []))]
    return Scene(projs, target, _camera(d["camera"]), occ, d.get("attenuation", "footprint"))


def _validate_sections(raw: dict, base: Path) -> dict:
    sections = {}
    for name, allowed in SECTION_KEYS.items():
        sec = raw.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"[{name}] must be a table")
        _check_keys(sec, allowed, name)
        sections[name] = dict(sec)
    for name in ("simulate", "compensate", "bench"):
        sec = sections[name]
        for key in ("content", "target"):
            if key in sec:
                val = sec[key]
                if not isinstance(val, str):
                    raise ConfigError(f"[{name}] {key} must be a pattern name or image path")
                if val not in PATTERN_NAMES:
                    sec[key] = str(_file(base, val, name))
    th = sections["simulate"].get("threshold", 0.5)
    if not isinstance(th, (int, float)) or not 0 <= th <= 1:
        raise ConfigError("[simulate] threshold must lie in [0, 1]")
    method = sections["compensate"].get("method", "merged")
    if method not in ("merged", "naive", "both"):
        raise ConfigError("[compensate] method must be merged, naive or both")
    sweep = sections["bench"].get("sweep", [1, 4, 9, 16, 25])
    if not isinstance(sweep, list) or not all(isinstance(n, int) and n >= 1 for n in sweep):
        raise ConfigError("[bench] sweep must be a list of positive integers")
    return sections


def _solver(d: dict) -> SolverConfig:
    try:
        return SolverConfig(
            max_iterations=int(d.get("max_iterations", 500)),
            residual_tolerance=float(d.get("residual_tolerance", 1e-6)),
            step=d.get("step", "exact"),
            fixed_step=float(d.get("fixed_step", 1.0)),
            operator=d.get("operator", "auto"),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[solver] {exc}") from None


def load_config(path, seed: int | None = None) -> RunConfig:
    """Parse and validate everything a command needs, without touching outputs."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    data = path.read_bytes()
    try:
        raw = tomllib.loads(data.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    _check_keys(raw, {"seed", "scene", *SECTION_KEYS}, "config")
    base = path.parent.resolve()
    if "scene" not in raw:
        raise ConfigError("config: missing [scene]")
    try:
        scene = parse_scene(raw["scene"], base)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"scene: {exc}") from None
    sections = _validate_sections(raw, base)
    if seed is None:
        seed = raw.get("seed", DEFAULT_SEED)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return RunConfig(path, scene, int(seed), _solver(sections["solver"]), sections, hashlib.sha256(data).hexdigest())
