"""``saproj`` command line: simulate | compensate | coverage | calibrate | bench.

Every command loads and validates the whole configuration (scene, inputs,
sections) before creating or writing anything in the output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .images import make_pattern, read_gray, write_gray
from .scene import MeshTarget

logger = logging.getLogger("saproj")

COMMANDS = ("simulate", "compensate", "coverage", "calibrate", "bench")


def _json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_plain) + "\n", encoding="utf-8")


def _plain(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _finite(x: float):
    """JSON has no infinity; identical images report PSNR as the string "inf"."""
    return x if np.isfinite(x) else "inf"


def _image(spec: str, shape, seed: int) -> np.ndarray:
    if spec == "white":
        return np.ones(shape)
    if Path(spec).is_file():
        img = read_gray(spec)
        if img.shape != tuple(shape):
            raise ConfigError(f"image {spec} is {img.shape[1]}x{img.shape[0]}, camera is {shape[1]}x{shape[0]}")
        return img
    return make_pattern(shape, spec, seed)


def _camera_shape(cfg: RunConfig):
    return cfg.scene.camera.height, cfg.scene.camera.width


# -- simulate ----------------------------------------------------------------


def prepare_simulate(cfg: RunConfig):
    from .metrics import white_level
    from .occlusion import render_illuminance, save_shadow
    from .transport import build_transports, forward, normalize_brightness

    sec = cfg.section("simulate")
    content = _image(sec.get("content", "white"), _camera_shape(cfg), cfg.seed)
    threshold = float(sec.get("threshold", 0.5))
    scene = cfg.scene
    ref_id = sec.get("reference", scene.reference_projector().id)
    try:
        scene.projector(ref_id)
    except KeyError as exc:
        raise ConfigError(f"[simulate] reference: {exc}") from None

    def run(out: Path):
        free = build_transports(scene.with_occluders(()), aligned=True)
        occ = build_transports(scene, include_occluders=True, aligned=True) if scene.occluders else free
        ids = [p.id for p in scene.projectors]
        L_ref = free[ids.index(ref_id)]
        n = len(free)
        scale = normalize_brightness([content] * n, content, free, L_ref) if n > 1 else 1.0
        shown = [scale * content] * n
        white = white_level(L_ref)
        c_free = forward(free, shown)
        c_occ = forward(occ, shown)
        write_gray(out / "render_free.png", c_free / white, bits=16)
        write_gray(out / "render_occluded.png", c_occ / white, bits=16)
        report = render_illuminance(scene, shown, threshold, transports=(free, occ))
        save_shadow(report, out, extra={
            "n_projectors": n,
            "n_occluders": len(scene.occluders),
            "brightness_scale": scale,
            "reference_projector": ref_id,
        })

    return run


# -- compensate ----------------------------------------------------------------


def _levels(report_solutions, projectors, method):
    from .calibration import ResponseCurve, linearize

    out = []
    for k, proj in enumerate(projectors):
        x = report_solutions[0] if method == "merged" else report_solutions[k]
        curve = ResponseCurve(proj.response_gamma, proj.max_output)
        out.append((proj.id, linearize(curve, np.clip(x, 0.0, proj.max_output))))
    return out


def _write_residuals(path: Path, rep) -> None:
    from .solver import residual_rows

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["projector", "iteration", "residual", "seconds"])
        for name, i, h, s in residual_rows(rep):
            w.writerow([name, i, f"{h:.12g}", f"{s:.6f}"])


def prepare_compensate(cfg: RunConfig):
    from .metrics import psnr, ssim, white_level
    from .solver import solve_merged, solve_naive
    from .transport import apply_transport, build_transports, merge_transport

    sec = cfg.section("compensate")
    img = _image(sec.get("target", "blocks"), _camera_shape(cfg), cfg.seed)
    low, high = float(sec.get("low", 0.0)), float(sec.get("high", 1.0))
    rel = low + (high - low) * img
    methods = ["merged", "naive"] if sec.get("method", "merged") == "both" else [sec.get("method", "merged")]
    scene = cfg.scene
    uppers = [min(cfg.solver.upper, p.max_output) for p in scene.projectors]

    def run(out: Path):
        parts = build_transports(scene, aligned=True)
        merged = merge_transport(parts)
        top = min(uppers)
        white = white_level(merged) * top
        if white <= 0:
            raise RuntimeError("no projector reaches the camera view")
        c = rel * white
        unc = apply_transport(merged, np.clip(rel * top, 0.0, top)) / white
        summary = {
            "target_range": [low, high],
            "white_level": white,
            "n_projectors": len(parts),
            "uncompensated": {"psnr": _finite(psnr(rel, unc)), "ssim": ssim(rel, unc)},
        }
        write_gray(out / "target.png", np.clip(rel, 0, 1), bits=16)
        write_gray(out / "uncompensated.png", unc, bits=16)
        for method in methods:
            if method == "merged":
                rep = solve_merged(merged, c, replace(cfg.solver, upper=top))
                write_gray(out / "input_merged.png", rep.solution, bits=16)
            else:
                rep = solve_naive(parts, c, cfg.solver, uppers=uppers)
                for proj, x in zip(scene.projectors, rep.solutions):
                    write_gray(out / f"input_naive_{proj.id}.png", x, bits=16)
            for pid, lv in _levels(rep.solutions, scene.projectors, method):
                write_gray(out / f"levels_{method}_{pid}.png", lv / 255.0)
            preview = rep.combined / white
            write_gray(out / f"preview_{method}.png", preview, bits=16)
            _write_residuals(out / f"residual_{method}.csv", rep)
            summary[method] = {
                "iterations": rep.iterations,
                "part_iterations": rep.part_iterations,
                "converged": rep.converged,
                "residual": rep.residual,
                "relative_residual": rep.residual / float(np.linalg.norm(c)),
                "seconds": rep.seconds,
                "fraction_at_lower": rep.at_lower,
                "fraction_at_upper": rep.at_upper,
                "saturation_fraction": rep.bound_fraction,
                "psnr": _finite(psnr(rel, preview)),
                "ssim": ssim(rel, preview),
            }
        _json(out / "report.json", summary)

    return run


# -- coverage ----------------------------------------------------------------


def prepare_coverage(cfg: RunConfig):
    from .occlusion import coverage_map, save_coverage

    def run(out: Path):
        cmap = coverage_map(cfg.scene)
        save_coverage(cmap, out)
        surf = cmap.counts[cmap.surface]
        _json(out / "coverage.json", {
            "n_projectors": cmap.n_projectors,
            "surface_pixels": int(surf.size),
            "no_surface_pixels": int((~cmap.surface).sum()),
            "min_count": int(surf.min()) if surf.size else None,
            "max_count": int(surf.max()) if surf.size else None,
            "deficit": cmap.deficit(),
            "histogram": {str(k): int((surf == k).sum()) for k in range(cmap.n_projectors + 1)},
        })

    return run


# -- calibrate ---------------------------------------------------------------


def plane_homography(device, target) -> np.ndarray:
    """Exact map from plane coordinates (metres along axis_u, axis_v) to device pixels."""
    rt = device.rotation.T
    m = np.column_stack([rt @ target.axis_u, rt @ target.axis_v, rt @ (target.origin - device.position)])
    H = device.intrinsic_matrix @ m
    return H / H[2, 2]


def _landmark_grid(scene, grid):
    """Plane points behind an inset grid of camera pixels, with their exact pixels."""
    from .scene import cast

    cam = scene.camera
    gx = np.linspace(0.1, 0.9, grid[0]) * cam.width
    gy = np.linspace(0.1, 0.9, grid[1]) * cam.height
    uv = np.stack(np.meshgrid(gx, gy), axis=-1).reshape(-1, 2)
    pts, _, hit = cast(scene, cam, uv)
    if not hit.all():
        raise RuntimeError("landmark grid leaves the target plane")
    local = scene.target.local_coords(pts)
    pix, _ = cam.project(pts)
    return local, pix


def prepare_calibrate(cfg: RunConfig):
    from . import calibration as cal

    sec = cfg.section("calibrate")
    noise = float(sec.get("noise", 0.0))
    margin = float(sec.get("margin", 0.1))
    n_land = int(sec.get("landmarks", 20))
    grid = tuple(int(g) for g in sec.get("grid", [5, 5]))
    if noise < 0 or not 0 <= margin <= 1 or n_land < 6 or min(grid) < 2:
        raise ConfigError("[calibrate] needs noise >= 0, margin in [0, 1], landmarks >= 6 and grid >= 2x2")
    scene = cfg.scene

    def run_plane(out: Path, summary: dict):
        local, pix = _landmark_grid(scene, grid)
        H_w2c = cal.estimate_homography(local, pix)
        gt = plane_homography(scene.camera, scene.target)
        cal.save_matrix_text(out / "H_w2c.txt", H_w2c.matrix)
        summary["H_w2c"] = {
            "reprojection_error_px": H_w2c.error,
            "max_abs_diff_vs_truth": float(np.abs(H_w2c.matrix - gt).max()),
        }
        rng = np.random.default_rng(cfg.seed)
        summary["projectors"] = {}
        for proj in scene.projectors:
            pats = cal.generate_graycode_patterns(proj.width, proj.height)
            caps = cal.capture_patterns(scene, proj, pats, noise, rng)
            cmap = cal.decode_correspondence(caps, proj.resolution, margin)
            cal.save_correspondence_png(cmap, out / f"correspondence_{proj.id}.png")
            cal.save_correspondence_csv(cmap, out / f"correspondence_{proj.id}.csv")
            entry = {"decoded_fraction": cmap.decoded_fraction}
            cam_pts, proj_pts = cmap.pairs()
            if len(cam_pts) >= 4:
                H_c2p = cal.estimate_homography(cam_pts, proj_pts)
                H_w2p = H_c2p @ H_w2c
                truth = plane_homography(proj, scene.target)
                err = np.linalg.norm(H_w2p.apply(local) - cal.apply_homography(truth, local), axis=1)
                cal.save_matrix_text(out / f"H_c2p_{proj.id}.txt", H_c2p.matrix)
                cal.save_matrix_text(out / f"H_w2p_{proj.id}.txt", H_w2p.matrix)
                entry.update({
                    "H_c2p_mean_error_px": H_c2p.error,
                    "H_w2p_landmark_error_px": float(err.mean()),
                })
            summary["projectors"][str(proj.id)] = entry

    def run_mesh(out: Path, summary: dict):
        from .occlusion import visible

        rng = np.random.default_rng(cfg.seed)
        verts = scene.target.vertices
        summary["projectors"] = {}
        for name, dev in [("camera", scene.camera)] + [(str(p.id), p) for p in scene.projectors]:
            ok = visible(verts, dev, (), scene.target.normals, scene.target)
            idx = np.flatnonzero(ok)
            if idx.size < n_land:
                raise RuntimeError(f"device {name} sees only {idx.size} mesh vertices")
            pick = np.sort(rng.choice(idx, n_land, replace=False))
            world = verts[pick]
            pix, _ = dev.project(world)
            P = cal.estimate_projection_matrix(world, pix)
            truth = dev.projection_matrix()
            truth = truth / np.linalg.norm(truth[2, :3])
            cal.save_matrix_text(out / f"P_{name}.txt", P.matrix)
            summary["projectors"][name] = {
                "landmarks": pick.tolist(),
                "reprojection_rms_px": P.rms,
                "max_abs_diff_vs_truth": float(np.abs(P.matrix - truth).max()),
            }

    def run(out: Path):
        summary = {"noise": noise, "margin": margin, "seed": cfg.seed}
        if isinstance(scene.target, MeshTarget):
            run_mesh(out, summary)
        else:
            run_plane(out, summary)
        _json(out / "calibration.json", summary)

    return run


# -- bench -------------------------------------------------------------------


def prepare_bench(cfg: RunConfig):
    from .metrics import bench_scaling, write_bench_csv, write_bench_svg

    sec = cfg.section("bench")
    sweep = tuple(sec.get("sweep", [1, 4, 9, 16, 25]))
    grid = tuple(int(g) for g in sec.get("grid", [5, 5]))
    if len(grid) != 2 or grid[0] * grid[1] != cfg.scene.n_projectors:
        raise ConfigError(f"[bench] grid {grid} does not match the scene's {cfg.scene.n_projectors} projectors")
    ids = sorted(p.id for p in cfg.scene.projectors)
    if ids != list(range(len(ids))):
        raise ConfigError("[bench] projector ids must be 0..N-1 in row-major grid order")
    for n in sweep:
        k = int(round(n ** 0.5))
        if k * k != n or k > min(grid):
            raise ConfigError(f"[bench] sweep value {n} is not a square sub-grid of {grid}")
    img = _image(sec.get("target", "blocks"), _camera_shape(cfg), cfg.seed)
    low, high = float(sec.get("low", 0.05)), float(sec.get("high", 0.9))
    solver = replace(
        cfg.solver,
        max_iterations=int(sec.get("max_iterations", 100)),
        residual_tolerance=float(sec.get("residual_tolerance", 0.0)),
    )
    repeats = int(sec.get("repeats", 3))

    def run(out: Path):
        recs = bench_scaling(cfg.scene, low + (high - low) * img, solver, sweep, grid, repeats)
        write_bench_csv(recs, out / "bench.csv")
        write_bench_svg(recs, out / "bench.svg")

    return run


PREPARE = {
    "simulate": prepare_simulate,
    "compensate": prepare_compensate,
    "coverage": prepare_coverage,
    "calibrate": prepare_calibrate,
    "bench": prepare_bench,
}


def manifest(cfg: RunConfig, command: str) -> dict:
    import scipy

    return {
        "command": command,
        "config": str(cfg.path.name),
        "config_sha256": cfg.digest,
        "seed": cfg.seed,
        "versions": {
            "saproj": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="saproj", description="Synthetic-aperture projection mapping toolkit.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="TOML run configuration")
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="random seed (unsigned 64-bit)")
        p.add_argument("--manifest", action="store_true", help="write manifest.json with config hash and versions")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
        run = PREPARE[args.command](cfg)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"saproj {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        run(args.out)
        if args.manifest:
            _json(args.out / "manifest.json", manifest(cfg, args.command))
    except Exception as exc:  # surfaced as a diagnostic, not a traceback
        logger.debug("command failed", exc_info=True)
        print(f"saproj {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
