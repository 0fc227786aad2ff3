"""Box-constrained blur compensation by projected steepest descent."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .transport import LightTransport, ShapeMismatchError, apply_transport

MAX_BACKTRACKS = 40
DIA_FILL = 2.5


class UnsolvableError(RuntimeError):
    pass


@dataclass
class SolverConfig:
    max_iterations: int = 500
    residual_tolerance: float = 1e-6
    upper: float = 1.0
    step: str = "exact"
    fixed_step: float = 1.0
    record_history: bool = True
    operator: str = "auto"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.residual_tolerance < 0:
            raise ValueError("residual_tolerance must be non-negative")
        if not 0 < self.upper <= 1:
            raise ValueError("box upper bound must lie in (0, 1]")
        if self.step not in ("exact", "fixed"):
            raise ValueError(f"unknown step rule {self.step!r}")
        if self.operator not in ("auto", "csr", "dia"):
            raise ValueError(f"unknown operator storage {self.operator!r}")
        if self.step == "fixed" and self.fixed_step <= 0:
            raise ValueError("fixed step must be positive")


@dataclass
class SolverReport:
    method: str
    solutions: list[np.ndarray]
    combined: np.ndarray
    iterations: int
    history: list[float]
    seconds: float
    residual: float
    converged: bool
    at_lower: float
    at_upper: float
    part_iterations: list[int] = field(default_factory=list)
    part_histories: list[list[float]] = field(default_factory=list)
    history_seconds: list[float] = field(default_factory=list)
    part_history_seconds: list[list[float]] = field(default_factory=list)

    @property
    def bound_fraction(self) -> float:
        return self.at_lower + self.at_upper

    @property
    def solution(self) -> np.ndarray:
        return self.solutions[0]


@dataclass
class _Run:
    x: np.ndarray
    history: list[float]
    stamps: list[float]
    iterations: int
    converged: bool
    seconds: float


def _check(L: LightTransport, target) -> np.ndarray:
    c = np.asarray(target, dtype=float)
    if c.size != L.shape[0]:
        raise ShapeMismatchError(f"target has {c.size} pixels, transport produces {L.shape[0]}")
    if L.nnz == 0:
        raise UnsolvableError(f"transport {L.source!r} is empty; nothing can be compensated")
    return c.ravel()


def _initial(A: sp.csr_matrix, b: np.ndarray, upper: float) -> np.ndarray:
    n = A.shape[1]
    if n == b.size:
        ab = A @ b
        s = b.mean() / ab.mean() if ab.mean() > 0 else 1.0
        return np.clip(s * b, 0.0, upper)
    a1 = (A @ np.ones(n)).mean()
    return np.full(n, np.clip(b.mean() / a1 if a1 > 0 else 0.0, 0.0, upper))


def _offsets(A: sp.csr_matrix):
    rows = np.repeat(np.arange(A.shape[0], dtype=A.indices.dtype), np.diff(A.indptr))
    off = A.indices - rows
    lo = int(off.min())
    present = np.bincount(off - lo) > 0
    offsets = np.flatnonzero(present) + lo
    return rows, off, lo, offsets


def _diagonals(A: sp.csr_matrix, rows, off, lo, offsets):
    """Diagonal-storage copies of ``A`` and ``A^T`` built straight from CSR."""
    n = A.shape[0]
    lookup = np.zeros(offsets[-1] - lo + 1, dtype=np.int64)
    lookup[offsets - lo] = np.arange(offsets.size)
    slot = lookup[off - lo]
    # dia layout stores A[i, i + k] at data[k, i + k]; canonical CSR has no duplicates
    data = np.zeros((offsets.size, n))
    data[slot, A.indices] = A.data
    fwd = sp.dia_matrix((data, offsets), shape=A.shape)
    # A^T puts the same entry on offset -k, indexed by its own column (row of A)
    data_t = np.zeros((offsets.size, n))
    data_t[offsets.size - 1 - slot, rows] = A.data
    adj = sp.dia_matrix((data_t, -offsets[::-1]), shape=A.shape)
    return fwd, adj


def _operators(A: sp.csr_matrix, mode: str):
    """Forward/adjoint operators in CSR or diagonal (stencil) storage.

    Registered transports only couple nearby pixels, so their non-zeros sit on
    a few fixed diagonals no matter how many projectors were summed.  Diagonal
    storage then costs the same per product whatever N is; ``auto`` picks it
    when its padded size stays within ``DIA_FILL`` of the CSR non-zero count.
    """
    if mode == "csr" or A.shape[0] != A.shape[1] or A.nnz == 0:
        return A, A.T.tocsr()
    A = A.tocsr()
    A.sum_duplicates()
    parts = _offsets(A)
    if mode == "auto" and parts[3].size * A.shape[0] > DIA_FILL * A.nnz:
        return A, A.T.tocsr()
    return _diagonals(A, *parts)


def _descend(A: sp.csr_matrix, b: np.ndarray, upper: float, cfg: SolverConfig) -> _Run:
    t0 = time.perf_counter()
    fwd, adj = _operators(A, cfg.operator)
    x = _initial(A, b, upper)
    ax = fwd @ x
    r = ax - b
    f = float(np.sqrt(r @ r))
    bnorm = float(np.sqrt(b @ b))
    history = [f]
    stamps = [time.perf_counter() - t0]
    converged = False
    k = 0
    for k in range(1, cfg.max_iterations + 1):
        g = adj @ r
        # drop components pushing against an active bound
        d = np.where(((x <= 0.0) & (g > 0.0)) | ((x >= upper) & (g < 0.0)), 0.0, g)
        gd = float(d @ d)
        if gd == 0.0:
            converged = True
            break
        ad = fwd @ d
        alpha = gd / float(ad @ ad) if cfg.step == "exact" else cfg.fixed_step
        for _ in range(MAX_BACKTRACKS + 1):
            y = x - alpha * d
            x_new = np.clip(y, 0.0, upper)
            # A x_new by update unless the box cut the step
            ax_new = fwd @ x_new if np.any(x_new != y) else ax - alpha * ad
            r_new = ax_new - b
            f_new = float(np.sqrt(r_new @ r_new))
            if cfg.step != "exact" or f_new <= f:
                break
            alpha *= 0.5
        else:
            x_new, ax_new, r_new, f_new = x, ax, r, f
        change = f - f_new
        x, ax, r, f = x_new, ax_new, r_new, f_new
        if cfg.record_history:
            history.append(f)
            stamps.append(time.perf_counter() - t0)
        if f <= cfg.residual_tolerance * bnorm:
            converged = True
            break
        if cfg.step == "exact" and change <= cfg.residual_tolerance * (f + change):
            converged = True
            break
    if not cfg.record_history:
        history.append(f)
        stamps.append(time.perf_counter() - t0)
    return _Run(x, history, stamps, k, converged, time.perf_counter() - t0)


def _bounds(x: np.ndarray, upper: float):
    return float(np.mean(x <= 0.0)), float(np.mean(x >= upper))


def gradient(L: LightTransport, p, target) -> np.ndarray:
    """``L^T (L p - c')`` shaped like the projector input."""
    c = _check(L, target)
    p = np.asarray(p, dtype=float)
    if p.size != L.shape[1]:
        raise ShapeMismatchError(f"input has {p.size} pixels, transport expects {L.shape[1]}")
    r = L.matrix @ p.ravel() - c
    return (L.matrix.T @ r).reshape(L.source_shape)


def solve_merged(L: LightTransport, target, cfg: SolverConfig | None = None) -> SolverReport:
    """One solve against the summed transport; the single solution drives every projector."""
    cfg = cfg or SolverConfig()
    b = _check(L, target)
    run = _descend(L.matrix, b, cfg.upper, cfg)
    x = run.x.reshape(L.source_shape)
    combined = apply_transport(L, x)
    lo, hi = _bounds(run.x, cfg.upper)
    return SolverReport(
        method="merged",
        solutions=[x],
        combined=combined,
        iterations=run.iterations,
        history=run.history,
        seconds=run.seconds,
        residual=float(np.linalg.norm(combined.ravel() - b)),
        converged=run.converged,
        at_lower=lo,
        at_upper=hi,
        part_iterations=[run.iterations],
        part_histories=[run.history],
        history_seconds=run.stamps,
        part_history_seconds=[run.stamps],
    )


def solve_naive(parts, target, cfg: SolverConfig | None = None, uppers=None) -> SolverReport:
    """Independent per-projector solves, each against ``target / N``.

    ``uppers`` optionally gives a per-projector box ceiling (defaults to
    ``cfg.upper``).  Reported time is the sum of the individual solves.
    """
    cfg = cfg or SolverConfig()
    parts = list(parts)
    if not parts:
        raise ValueError("need at least one transport")
    shape = parts[0].shape
    for p in parts:
        if p.shape != shape:
            raise ShapeMismatchError("all transports must share one shape")
    n = len(parts)
    b = _check(parts[0], target)
    uppers = [cfg.upper] * n if uppers is None else list(uppers)
    sols, iters, hists, stamps = [], [], [], []
    seconds = 0.0
    combined = np.zeros(parts[0].camera_shape)
    lo_count = hi_count = 0
    converged = True
    for L, ub in zip(parts, uppers):
        _check(L, target)
        run = _descend(L.matrix, b / n, ub, cfg)
        x = run.x.reshape(L.source_shape)
        sols.append(x)
        iters.append(run.iterations)
        hists.append(run.history)
        stamps.append(run.stamps)
        seconds += run.seconds
        converged &= run.converged
        combined = combined + apply_transport(L, x)
        lo_count += int(np.sum(run.x <= 0.0))
        hi_count += int(np.sum(run.x >= ub))
    total = sum(s.size for s in sols)
    residual = float(np.linalg.norm(combined.ravel() - b))
    return SolverReport(
        method="naive",
        solutions=sols,
        combined=combined,
        iterations=int(sum(iters)),
        history=[residual],
        seconds=seconds,
        residual=residual,
        converged=converged,
        at_lower=lo_count / total,
        at_upper=hi_count / total,
        part_iterations=iters,
        part_histories=hists,
        part_history_seconds=stamps,
    )


def residual_rows(report: SolverReport):
    """``(projector, iteration, residual, seconds)`` rows for CSV export.

    The merged report has one history (projector column ``all``); the naive
    report has one per projector, indexed by position.
    """
    rows = []
    names = ["all"] if report.method == "merged" else list(range(len(report.part_histories)))
    for name, hist, stamps in zip(names, report.part_histories, report.part_history_seconds):
        rows.extend((name, i, h, s) for i, (h, s) in enumerate(zip(hist, stamps)))
    return rows
