"""Strong convergence study on coupled Brownian paths.

Every level (coarsening factor ``k``) and the reference run (``k = 1``)
consume the same fine increments, so the endpoint differences measure
discretization error rather than sampling noise.  The reference is the
projected scheme at the finest step.
"""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..brownian import RNG_DESCRIPTION, generate_paths
from ..core import SddeProblem, build_time_grid, coarsen_grid
from ..errors import InvalidArgumentError
from ..integrator import BatchResult, SchemeConfig, integrate_batch_endpoints

THREADS_ENV = "PEMDELAY_THREADS"
CSV_COLUMNS = ("level_factor", "h", "paths", "mean_abs_err", "rms_err", "stderr_mean", "diverged")

EndpointSolver = Callable[..., BatchResult]


def thread_count(threads: Optional[int] = None) -> int:
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise InvalidArgumentError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        else:
            threads = os.cpu_count() or 1
    if threads < 1:
        raise InvalidArgumentError("thread count must be >= 1")
    return threads


def fit_loglog_slope(h: Sequence[float], err: Sequence[float]) -> Tuple[float, float, np.ndarray]:
    """Least-squares line through (log2 h, log2 err).

    Nonpositive or non-finite errors are left out; returns
    ``(slope, intercept, used_mask)`` with NaNs when fewer than two points
    remain.
    """
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    used = np.isfinite(err) & (err > 0) & (h > 0)
    if used.sum() < 2:
        return math.nan, math.nan, used
    x = np.log2(h[used])
    y = np.log2(err[used])
    xm, ym = x.mean(), y.mean()
    slope = float(np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2))
    return slope, float(ym - slope * xm), used


@dataclass(frozen=True)
class LevelResult:
    factor: int
    h: float
    paths: int
    mean_abs_err: float
    rms_err: float
    stderr_mean: float
    diverged: int
    second_moment: float


@dataclass(frozen=True)
class ConvergenceReport:
    levels: List[LevelResult]
    reference_step: float
    path_count: int
    fitted_slope: float
    fitted_slope_rms: float
    seed: int
    excluded_paths: int = 0
    degenerate: bool = False
    reference_second_moment: float = math.nan
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_COLUMNS) + "\n")
        for lv in self.levels:
            buf.write(f"{lv.factor},{lv.h!r},{lv.paths},{lv.mean_abs_err!r},"
                      f"{lv.rms_err!r},{lv.stderr_mean!r},{lv.diverged}\n")
        meta = {
            "seed": self.seed,
            "reference_step": repr(self.reference_step),
            "path_count": self.path_count,
            "excluded_paths": self.excluded_paths,
            "fitted_slope": repr(self.fitted_slope),
            "fitted_slope_rms": repr(self.fitted_slope_rms),
            "degenerate": str(self.degenerate).lower(),
        }
        meta.update(self.metadata)
        for key, value in meta.items():
            buf.write(f"# {key}={value}\n")
        return buf.getvalue()


def _stats(err: np.ndarray) -> Tuple[float, float, float]:
    n = len(err)
    if n == 0:
        return math.nan, math.nan, math.nan
    mean = math.fsum(err) / n
    rms = math.sqrt(math.fsum(err * err) / n)
    if n < 2:
        return mean, rms, math.nan
    var = math.fsum((err - mean) ** 2) / (n - 1)
    return mean, rms, math.sqrt(var / n)


def strong_convergence(problem: SddeProblem, ref_delay_steps: int, level_factors: Sequence[int],
                       path_count: int, master_seed: int, config: SchemeConfig, *,
                       threads: Optional[int] = None, chunk_size: int = 250,
                       endpoint_solver: Optional[EndpointSolver] = None) -> ConvergenceReport:
    """Mean absolute and RMS endpoint errors of each level against the reference.

    ``endpoint_solver`` replaces ``integrate_batch_endpoints`` (same
    signature), which lets tests inject exactly known errors.  Chunks of
    paths run on a thread pool; chunk boundaries and the final reductions
    do not depend on the thread count.
    """
    if path_count < 2:
        raise InvalidArgumentError("need at least 2 paths for a standard error")
    factors = [int(k) for k in level_factors]
    if not factors:
        raise InvalidArgumentError("no level factors given")
    if any(k != f or k < 1 for k, f in zip(factors, level_factors)):
        raise InvalidArgumentError("level factors must be positive integers")
    if factors != sorted(set(factors)):
        raise InvalidArgumentError("level factors must be strictly ascending")
    solver = endpoint_solver or integrate_batch_endpoints

    fine = build_time_grid(problem.delay, problem.horizon, ref_delay_steps)
    grids = [coarsen_grid(fine, k, problem.horizon) for k in factors]
    common = math.lcm(*factors)
    end_fine = (fine.node_count // common) * common
    if end_fine == 0:
        raise InvalidArgumentError(
            f"no node shared by all levels within the horizon (lcm of factors = {common})")

    chunks = [range(s, min(s + chunk_size, path_count)) for s in range(0, path_count, chunk_size)]

    def run_chunk(indices):
        inc = generate_paths(master_seed, indices, problem.dim_noise, fine.step, end_fine)
        ref = solver(problem, fine, inc, fine.step, 1, config, end_fine)
        levels = [solver(problem, g, inc, fine.step, k, config, end_fine // k)
                  for k, g in zip(factors, grids)]
        return ref, levels

    workers = min(thread_count(threads), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_chunk, chunks))
    else:
        results = [run_chunk(c) for c in chunks]

    ref_end = np.concatenate([r[0].endpoints for r in results])
    ref_bad = np.concatenate([r[0].diverged for r in results])
    lvl_end = [np.concatenate([r[1][j].endpoints for r in results]) for j in range(len(factors))]
    lvl_bad = [np.concatenate([r[1][j].diverged for r in results]) for j in range(len(factors))]
    bad = ref_bad.copy()
    for b in lvl_bad:
        bad |= b
    good = ~bad

    levels = []
    for k, g, end, b in zip(factors, grids, lvl_end, lvl_bad):
        err = np.sqrt(np.sum((end[good] - ref_end[good]) ** 2, axis=-1))
        mean, rms, se = _stats(err)
        sq = np.sum(end[good] ** 2, axis=-1)
        levels.append(LevelResult(k, g.step, int(good.sum()), mean, rms, se, int(b.sum()),
                                  math.fsum(sq) / max(len(sq), 1)))
    hs = [lv.h for lv in levels]
    slope, _, used = fit_loglog_slope(hs, [lv.mean_abs_err for lv in levels])
    slope_rms, _, _ = fit_loglog_slope(hs, [lv.rms_err for lv in levels])
    ref_sq = np.sum(ref_end[good] ** 2, axis=-1)
    meta = {
        "alpha": repr(config.alpha) if config.alpha is not None else "none",
        "q": repr(problem.assumptions.growth_exponent),
        "scheme": config.scheme.value,
        "problem": problem.name,
        "reference_delay_steps": ref_delay_steps,
        "end_time": repr(end_fine * fine.step),
        "levels_used_in_fit": int(used.sum()),
        "rng": RNG_DESCRIPTION,
    }
    return ConvergenceReport(
        levels=levels,
        reference_step=fine.step,
        path_count=int(good.sum()),
        fitted_slope=slope,
        fitted_slope_rms=slope_rms,
        seed=master_seed,
        excluded_paths=int(bad.sum()),
        degenerate=bool(used.sum() < len(levels)),
        reference_second_moment=math.fsum(ref_sq) / max(len(ref_sq), 1),
        metadata=meta,
    )
