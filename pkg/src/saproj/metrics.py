"""Image quality metrics and the solver-scaling benchmark."""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.signal import convolve2d

PSNR_IDENTICAL = math.inf

BENCH_FIELDS = ("N", "method", "seconds", "iterations", "nnz", "psnr", "ssim")


def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0) -> float:
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_IDENTICAL
    return 10.0 * math.log10(peak**2 / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_map(a, b, window: str = "gaussian", peak: float = 1.0) -> np.ndarray:
    """Local SSIM values.

    ``window="gaussian"`` slides an 11x11, sigma=1.5 window over every valid
    position; ``window="block"`` uses non-overlapping 8x8 blocks with plain
    (population) moments.
    """
    a, b = _pair(a, b)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    if window == "gaussian":
        w = gaussian_window()
        if a.shape[0] < w.shape[0] or a.shape[1] < w.shape[1]:
            raise ValueError("image is smaller than the 11x11 SSIM window")

        def filt(x):
            return convolve2d(x, w, mode="valid")

        mu_a, mu_b = filt(a), filt(b)
        var_a = filt(a * a) - mu_a**2
        var_b = filt(b * b) - mu_b**2
        cov = filt(a * b) - mu_a * mu_b
    elif window == "block":
        n = 8
        if a.shape[0] < n or a.shape[1] < n:
            raise ValueError("image is smaller than the 8x8 SSIM block")
        h, w_ = (a.shape[0] // n) * n, (a.shape[1] // n) * n

        def blocks(x):
            return x[:h, :w_].reshape(h // n, n, w_ // n, n).swapaxes(1, 2).reshape(h // n, w_ // n, n * n)

        ba, bb = blocks(a), blocks(b)
        mu_a, mu_b = ba.mean(-1), bb.mean(-1)
        var_a = ba.var(-1)
        var_b = bb.var(-1)
        cov = ((ba - mu_a[..., None]) * (bb - mu_b[..., None])).mean(-1)
    else:
        raise ValueError(f"unknown SSIM window {window!r}")
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, window: str = "gaussian", peak: float = 1.0) -> float:
    a, b = _pair(a, b)
    smap = ssim_map(a, b, window, peak)
    if np.array_equal(a, b):
        # exact 1 rather than 1 - round-off from the moment filters
        return 1.0
    return float(np.mean(smap))


@dataclass
class QualityScore:
    psnr: float
    ssim: float
    reference: str = ""
    test: str = ""


def quality(reference, test, peak: float = 1.0, names=("", "")) -> QualityScore:
    return QualityScore(psnr(reference, test, peak), ssim(reference, test, peak=peak), *names)


# -- benchmark ---------------------------------------------------------------


@dataclass
class BenchRecord:
    N: int
    method: str
    seconds: float
    iterations: int
    nnz: int
    psnr: float
    ssim: float

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")


def subgrid_ids(rows: int, cols: int, k: int) -> list[int]:
    """Row-major ids of the centred ``k x k`` block of a ``rows x cols`` array."""
    if k > rows or k > cols:
        raise ValueError(f"{k}x{k} sub-grid does not fit a {rows}x{cols} array")
    r0 = (rows - k) // 2
    c0 = (cols - k) // 2
    return [(r0 + i) * cols + (c0 + j) for i in range(k) for j in range(k)]


def white_level(L) -> float:
    """Camera value of a full-on input: median row-sum of a transport."""
    sums = np.asarray(L.matrix.sum(axis=1)).ravel()
    sums = sums[sums > 0]
    return float(np.median(sums)) if sums.size else 0.0


def bench_scaling(scene, target, cfg, sweep=(1, 4, 9, 16, 25), grid=(5, 5), repeats: int = 3):
    """Time merged vs naive compensation for centred sub-grids of the array.

    ``scene`` holds the full array (ids row-major over ``grid``); every N in
    ``sweep`` must be a perfect square.  ``target`` is a relative image in
    [0, 1], scaled per N by the white level of that sub-array so every N
    solves the same problem.  Seconds are the median of ``repeats`` runs;
    iteration counts and quality come from the first run.
    """
    from .solver import solve_merged, solve_naive
    from .transport import build_transports, merge_transport

    rel = np.asarray(target, dtype=float)
    records = []
    for n in sweep:
        k = math.isqrt(n)
        if k * k != n:
            raise ValueError(f"sweep value {n} is not a square sub-grid size")
        ids = set(subgrid_ids(grid[0], grid[1], k))
        sub = scene.with_projectors([p for p in scene.projectors if p.id in ids])
        parts = build_transports(sub, aligned=True)
        merged = merge_transport(parts)
        uppers = [min(cfg.upper, p.max_output) for p in sub.projectors]
        merged_cfg = replace(cfg, upper=min(uppers))
        white = white_level(merged) * min(uppers)
        c = rel * white
        for method in ("merged", "naive"):
            times = []
            first = None
            for _ in range(repeats):
                if method == "merged":
                    rep = solve_merged(merged, c, merged_cfg)
                    nnz = merged.nnz
                else:
                    rep = solve_naive(parts, c, cfg, uppers=uppers)
                    nnz = sum(p.nnz for p in parts)
                times.append(rep.seconds)
                if first is None:
                    first = rep
            shown = first.combined / white
            records.append(
                BenchRecord(
                    N=n,
                    method=method,
                    seconds=statistics.median(times),
                    iterations=first.iterations,
                    nnz=nnz,
                    psnr=psnr(rel, shown),
                    ssim=ssim(rel, shown),
                )
            )
    return records


def write_bench_csv(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_FIELDS)
        for r in records:
            w.writerow([r.N, r.method, f"{r.seconds:.6f}", r.iterations, r.nnz, f"{r.psnr:.6f}", f"{r.ssim:.6f}"])


def write_bench_svg(records, path) -> None:
    """Time-vs-N line chart on a log axis."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "saproj"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for method, marker in (("naive", "o"), ("merged", "s")):
        rs = [r for r in records if r.method == method]
        ax.plot([r.N for r in rs], [r.seconds for r in rs], marker=marker, label=method)
    ax.set_yscale("log")
    ax.set_xlabel("number of projectors N")
    ax.set_ylabel("solve time [s]")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(path), format="svg", metadata={"Date": None})
    plt.close(fig)
