"""Problem definition, time grids and trajectory containers.

Drift and diffusion callables are *vectorized*: they receive arrays whose
last axis is the state dimension ``d`` and may carry any number of leading
batch axes.  ``drift(x, xd)`` returns ``(..., d)`` and ``diffusion(x, xd)``
returns ``(..., d, m)``.  The integrators evaluate whole batches of paths in
one call, so per-path Python overhead never enters the inner loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import InvalidArgumentError

ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AssumptionParams:
    """Declared structural constants of a problem.

    ``history_holder_const`` and ``khasminskii_const`` are independent
    fields on purpose; the two constants bound different things and need
    not coincide.
    """

    growth_exponent: float
    monotonicity_const: Optional[float] = None
    monotonicity_eta: Optional[float] = None
    history_holder_const: Optional[float] = None
    history_holder_exponent: Optional[float] = None
    khasminskii_p: Optional[float] = None
    khasminskii_const: Optional[float] = None

    def __post_init__(self):
        if not self.growth_exponent > 1:
            raise InvalidArgumentError(
                f"growth exponent q must be > 1, got {self.growth_exponent}")
        if self.monotonicity_const is not None and not self.monotonicity_const > 0:
            raise InvalidArgumentError("monotonicity constant L must be > 0")
        if self.monotonicity_eta is not None and not self.monotonicity_eta > 0.5:
            raise InvalidArgumentError("monotonicity eta must be > 1/2")
        if self.history_holder_const is not None and not self.history_holder_const > 0:
            raise InvalidArgumentError("history Holder constant must be > 0")
        beta = self.history_holder_exponent
        if beta is not None and not 0.5 <= beta <= 1.0:
            raise InvalidArgumentError("history Holder exponent must lie in [1/2, 1]")
        if self.khasminskii_p is not None and not self.khasminskii_p >= 2:
            raise InvalidArgumentError("Khasminskii exponent p must be >= 2")
        if self.khasminskii_const is not None and not self.khasminskii_const > 0:
            raise InvalidArgumentError("Khasminskii constant must be > 0")


@dataclass(frozen=True)
class SddeProblem:
    """dX = f(X(t), X(t - tau)) dt + g(X(t), X(t - tau)) dW(t) on [0, T]."""

    dim_state: int
    dim_noise: int
    delay: float
    horizon: float
    drift: ArrayFn
    diffusion: ArrayFn
    history: Callable[[float], object]
    assumptions: AssumptionParams
    name: str = "problem"

    def __post_init__(self):
        if int(self.dim_state) != self.dim_state or self.dim_state < 1:
            raise InvalidArgumentError("dim_state must be a positive integer")
        if int(self.dim_noise) != self.dim_noise or self.dim_noise < 1:
            raise InvalidArgumentError("dim_noise must be a positive integer")
        if not (math.isfinite(self.delay) and self.delay > 0):
            raise InvalidArgumentError(f"delay must be positive, got {self.delay}")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise InvalidArgumentError(f"horizon must be positive, got {self.horizon}")
        zeros = np.zeros(self.dim_state)
        fd = np.shape(self.drift(zeros, zeros))
        gd = np.shape(self.diffusion(zeros, zeros))
        if fd != (self.dim_state,):
            raise InvalidArgumentError(f"drift returned shape {fd}, expected ({self.dim_state},)")
        if gd != (self.dim_state, self.dim_noise):
            raise InvalidArgumentError(
                f"diffusion returned shape {gd}, expected ({self.dim_state}, {self.dim_noise})")

    def history_at(self, theta: float) -> np.ndarray:
        value = np.asarray(self.history(theta), dtype=float).reshape(self.dim_state)
        return value

    def with_horizon(self, horizon: float) -> "SddeProblem":
        return SddeProblem(self.dim_state, self.dim_noise, self.delay, horizon,
                           self.drift, self.diffusion, self.history,
                           self.assumptions, self.name)


def scalar_problem(drift, diffusion, history, delay, horizon, assumptions,
                   name="problem") -> SddeProblem:
    """Build a d = m = 1 problem from elementwise scalar coefficient functions.

    ``drift(x, xd)`` and ``diffusion(x, xd)`` operate elementwise on arrays
    of any shape (plain numpy arithmetic does).
    """

    def f(x, xd):
        out = drift(x[..., 0], xd[..., 0])
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1])[..., None]

    def g(x, xd):
        out = diffusion(x[..., 0], xd[..., 0])
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1])[..., None, None]

    return SddeProblem(1, 1, float(delay), float(horizon), f, g, history,
                       assumptions, name)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_n = n*h, n = -M..N, with h = delay/M."""

    delay: float
    step: float
    delay_steps: int
    node_count: int

    @property
    def size(self) -> int:
        """Number of stored nodes, M + N + 1."""
        return self.delay_steps + self.node_count + 1

    def time(self, n: int) -> float:
        return n * self.step

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(-self.delay_steps, self.node_count + 1) * self.step

    @property
    def end_time(self) -> float:
        return self.node_count * self.step


def build_time_grid(delay: float, horizon: float, delay_steps: int) -> TimeGrid:
    if not (math.isfinite(delay) and delay > 0):
        raise InvalidArgumentError(f"delay must be positive, got {delay}")
    if not (math.isfinite(horizon) and horizon > 0):
        raise InvalidArgumentError(f"horizon must be positive, got {horizon}")
    if int(delay_steps) != delay_steps or delay_steps < 1:
        raise InvalidArgumentError(f"delay_steps must be a positive integer, got {delay_steps}")
    delay_steps = int(delay_steps)
    h = delay / delay_steps
    return TimeGrid(float(delay), h, delay_steps, _node_count(h, horizon))


def _node_count(h: float, horizon: float) -> int:
    n = math.floor(horizon / h)
    # keep t_N <= T < t_N + h under the same rounding used for node times
    while n > 0 and n * h > horizon:
        n -= 1
    while (n + 1) * h <= horizon:
        n += 1
    if n < 1:
        raise InvalidArgumentError(
            f"horizon {horizon} is shorter than one step h = {h}")
    return n


def coarsen_grid(grid: TimeGrid, factor: int, horizon: float) -> TimeGrid:
    """Grid with step exactly ``factor * grid.step`` over the same horizon.

    ``factor`` must divide the delay steps so the coarse grid is itself
    delay-compatible.
    """
    if int(factor) != factor or factor < 1:
        raise InvalidArgumentError(f"factor must be a positive integer, got {factor}")
    factor = int(factor)
    if grid.delay_steps % factor:
        raise InvalidArgumentError(
            f"factor {factor} is not delay-compatible: it does not divide M = "
            f"{grid.delay_steps}, so {factor} * h is not delay/M' for an integer M'")
    h = factor * grid.step
    return TimeGrid(grid.delay, h, grid.delay_steps // factor, _node_count(h, horizon))


def history_sample(problem: SddeProblem, grid: TimeGrid) -> np.ndarray:
    """History evaluated at the M + 1 nonpositive nodes; shape (M + 1, d)."""
    m = grid.delay_steps
    out = np.empty((m + 1, problem.dim_state))
    for j, n in enumerate(range(-m, 1)):
        out[j] = problem.history_at(n * grid.step)
    return out


@dataclass(frozen=True)
class TrajectoryGrid:
    """Grid function X_h(t_n), n = -M..N, stored as ``values[n + M]``.

    When ``diverged`` is set, ``diverged_step`` is the first node index
    ``n`` at which the state was non-finite or exceeded the guard; entries
    from that node on are NaN.
    """

    grid: TimeGrid
    values: np.ndarray
    seed_info: Tuple[int, int]
    diverged: bool = False
    diverged_step: Optional[int] = None
    metadata: dict = field(default_factory=dict, compare=False)

    def at(self, n: int) -> np.ndarray:
        if not -self.grid.delay_steps <= n <= self.grid.node_count:
            raise IndexError(n)
        return self.values[n + self.grid.delay_steps]

    @property
    def endpoint(self) -> np.ndarray:
        return self.values[-1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes
