"""Projected Euler-Maruyama recursion for single-delay SDDEs.

Each step evaluates the coefficients at projected copies of the previous
state and of the state one delay back:

    X(t_i) = P(X(t_{i-1})) + h f(P(X(t_{i-1})), P(X(t_{i-M})))
                           + g(P(X(t_{i-1})), P(X(t_{i-M}))) (W(t_i) - W(t_{i-1}))

with P the radial projection onto the ball of radius h^-alpha.  Stored
states are unprojected; history values are projected when they are used,
exactly like computed ones.  The classical scheme is the same recursion
with P the identity.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .brownian import BrownianGrid, coarsen_increments
from .core import SddeProblem, TimeGrid, TrajectoryGrid, history_sample
from .errors import IntegrationError, InvalidArgumentError
from .projection import ProjectionParams, project_radius


class Scheme(enum.Enum):
    PROJECTED_EM = "pem"
    CLASSICAL_EM = "em"


@dataclass(frozen=True)
class SchemeConfig:
    """Scheme choice.  The projection radius depends on the step, so the
    config carries ``alpha`` and builds a ``ProjectionParams`` per grid."""

    scheme: Scheme = Scheme.PROJECTED_EM
    alpha: Optional[float] = None
    divergence_guard: float = 1e10

    def __post_init__(self):
        if not self.divergence_guard > 0:
            raise InvalidArgumentError("divergence_guard must be positive")
        if self.scheme is Scheme.PROJECTED_EM:
            if self.alpha is None or not self.alpha > 0:
                raise InvalidArgumentError("projected scheme needs alpha > 0")

    @classmethod
    def projected(cls, alpha: float) -> "SchemeConfig":
        return cls(Scheme.PROJECTED_EM, alpha)

    @classmethod
    def classical(cls, divergence_guard: float = 1e10) -> "SchemeConfig":
        return cls(Scheme.CLASSICAL_EM, None, divergence_guard)

    @property
    def projected_scheme(self) -> bool:
        return self.scheme is Scheme.PROJECTED_EM

    def projection_for(self, step: float) -> Optional[ProjectionParams]:
        if not self.projected_scheme:
            return None
        return ProjectionParams(self.alpha, step)


def _noise_term(g, dw):
    if g.shape[-1] == 1:
        return g[..., 0] * dw
    return np.einsum("...ij,...j->...i", g, dw)


def pem_step(problem: SddeProblem, params: ProjectionParams, x_prev, x_delayed, dW, h,
             step_index=None):
    """One projected step; accepts single states or batches ``(..., d)``."""
    if h != params.step:
        raise InvalidArgumentError(f"step {h} differs from projection step {params.step}")
    xp = project_radius(np.asarray(x_prev, dtype=float), params.radius)
    xd = project_radius(np.asarray(x_delayed, dtype=float), params.radius)
    out = xp + h * problem.drift(xp, xd) + _noise_term(problem.diffusion(xp, xd),
                                                        np.asarray(dW, dtype=float))
    if not np.all(np.isfinite(out)):
        raise IntegrationError("non-finite state in projected step", step_index)
    return out


def advance(problem: SddeProblem, x0: np.ndarray, delayed: np.ndarray, dW: np.ndarray,
            h: float, radius: Optional[float], delay_steps: int) -> np.ndarray:
    """Run the recursion for ``len(dW)`` steps starting from ``x0`` at node 0.

    ``delayed[j]`` is the state at relative node ``j - delay_steps``; it
    must cover ``j = 0..min(n, delay_steps)``, since later delayed lookups
    read states computed here.  ``dW`` has shape ``(n, *batch, m)``; ``x0``
    and ``delayed`` entries broadcast against ``(*batch, d)``.  Returns the
    states at relative nodes 0..n, shape ``(n + 1, *batch, d)``.
    ``radius = None`` runs the classical scheme.  Non-finite values
    propagate silently; the caller inspects the result.
    """
    m_delay = int(delay_steps)
    n = dW.shape[0]
    if len(delayed) < min(n, m_delay) + 1:
        raise InvalidArgumentError(
            f"delayed window has {len(delayed)} nodes, need {min(n, m_delay) + 1}")
    batch = dW.shape[1:-1]
    states = np.empty((n + 1,) + batch + (problem.dim_state,))
    states[0] = x0
    if radius is None:
        proj = np.asarray
    else:
        def proj(v):
            return project_radius(v, radius)
    drift, diffusion = problem.drift, problem.diffusion
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, n + 1):
            xp = proj(states[i - 1])
            xd = proj(delayed[i] if i <= m_delay else states[i - m_delay])
            states[i] = xp + h * drift(xp, xd) + _noise_term(diffusion(xp, xd), dW[i - 1])
    return states


def first_bad_node(states: np.ndarray, guard: Optional[float]) -> np.ndarray:
    """Per batch entry, the first index along axis 0 whose state is non-finite
    (or above ``guard`` in absolute value); -1 where there is none."""
    with np.errstate(invalid="ignore"):
        bad = ~np.all(np.isfinite(states), axis=-1)
        if guard is not None:
            bad |= np.any(np.abs(states) > guard, axis=-1)
    hit = np.any(bad, axis=0)
    return np.where(hit, np.argmax(bad, axis=0), -1)


def _check_grid_path(problem, grid, fine_step, fine_count, coarsen_factor):
    if int(coarsen_factor) != coarsen_factor or coarsen_factor < 1:
        raise InvalidArgumentError("coarsen_factor must be a positive integer")
    if grid.step != coarsen_factor * fine_step:
        raise InvalidArgumentError(
            f"grid step {grid.step!r} != {coarsen_factor} * fine step {fine_step!r}")
    if grid.delay != problem.delay:
        raise InvalidArgumentError("grid was built for a different delay")
    if fine_count < grid.node_count * coarsen_factor:
        raise InvalidArgumentError(
            f"path has {fine_count} fine increments, grid needs {grid.node_count * coarsen_factor}")


def integrate(problem: SddeProblem, grid: TimeGrid, path: BrownianGrid,
              coarsen_factor: int, config: SchemeConfig) -> TrajectoryGrid:
    _check_grid_path(problem, grid, path.fine_step, path.fine_count, coarsen_factor)
    if path.dim_noise != problem.dim_noise:
        raise InvalidArgumentError("path noise dimension does not match the problem")
    params = config.projection_for(grid.step)
    radius = params.radius if params is not None else None
    dw = coarsen_increments(path.increments, coarsen_factor, grid.node_count)
    hist = history_sample(problem, grid)
    states = advance(problem, hist[-1], hist[:, None, :], dw[:, None, :], grid.step, radius,
                     grid.delay_steps)[:, 0, :]
    values = np.concatenate([hist, states[1:]])
    guard = None if config.projected_scheme else config.divergence_guard
    bad = int(first_bad_node(states, guard))
    meta = {"scheme": config.scheme.value, "alpha": config.alpha}
    if bad < 0:
        return TrajectoryGrid(grid, values, path.seed_info, metadata=meta)
    if config.projected_scheme:
        raise IntegrationError(f"non-finite projected state at step {bad}", bad)
    values[grid.delay_steps + bad:] = np.nan
    return TrajectoryGrid(grid, values, path.seed_info, True, bad, meta)


@dataclass(frozen=True)
class BatchResult:
    """Endpoints of a batch of paths at a chosen node.

    ``diverged_step[p]`` is the first bad node of path ``p`` or -1.
    """

    endpoints: np.ndarray  # (P, d)
    diverged_step: np.ndarray  # (P,)

    @property
    def diverged(self) -> np.ndarray:
        return self.diverged_step >= 0


def integrate_batch_endpoints(problem: SddeProblem, grid: TimeGrid, increments: np.ndarray,
                              fine_step: float, coarsen_factor: int, config: SchemeConfig,
                              end_node: Optional[int] = None) -> BatchResult:
    """Integrate many paths at once and return their states at ``end_node``.

    ``increments`` has shape ``(P, fine_count, m)``.  Path ``p`` gives the
    same arithmetic as ``integrate`` on that path alone.
    """
    n_paths, fine_count, _ = increments.shape
    _check_grid_path(problem, grid, fine_step, fine_count, coarsen_factor)
    end = grid.node_count if end_node is None else end_node
    if not 1 <= end <= grid.node_count:
        raise InvalidArgumentError(f"end node {end} outside 1..{grid.node_count}")
    params = config.projection_for(grid.step)
    radius = params.radius if params is not None else None
    dw = coarsen_increments(increments, coarsen_factor, end)
    dw = np.ascontiguousarray(np.swapaxes(dw, 0, 1))  # (n, P, m)
    hist = history_sample(problem, grid)[:, None, :]
    states = advance(problem, hist[-1], hist, dw, grid.step, radius, grid.delay_steps)
    guard = None if config.projected_scheme else config.divergence_guard
    bad = first_bad_node(states, guard)
    return BatchResult(states[-1].copy(), bad)

