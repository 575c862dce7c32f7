"""Radial projection x -> min(1, h^-alpha / |x|) x onto the ball of radius h^-alpha."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError


def default_alpha(q: float) -> float:
    """Projection exponent 1 / (2 (q - 1)) matched to the growth exponent q."""
    if not q > 1:
        raise InvalidArgumentError(f"growth exponent q must be > 1, got {q}")
    return 1.0 / (2.0 * (q - 1.0))


@dataclass(frozen=True)
class ProjectionParams:
    alpha: float
    step: float
    radius: float = field(init=False)

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise InvalidArgumentError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.step <= 1:
            raise InvalidArgumentError(
                f"projection needs a step size in (0, 1], got {self.step}")
        object.__setattr__(self, "radius", self.step ** (-self.alpha))


def euclidean_norm(x: np.ndarray) -> np.ndarray:
    """Norm over the last axis, scaled so that large entries cannot overflow."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] == 1:
        return np.abs(x[..., 0])
    big = np.max(np.abs(x), axis=-1)
    safe = np.where(big > 0, big, 1.0)
    scaled = x / safe[..., None]
    return big * np.sqrt(np.sum(scaled * scaled, axis=-1))


def project_radius(x: np.ndarray, radius: float) -> np.ndarray:
    """Project every row (last axis) of ``x`` onto the closed ball of ``radius``.

    Rows already inside the ball are returned bit-for-bit.  Rescaled rows
    are nudged so their computed norm never exceeds ``radius``; this keeps
    the map idempotent under floating point.
    """
    x = np.asarray(x, dtype=float)
    norm = euclidean_norm(x)
    outside = norm > radius
    if not np.any(outside):
        return x
    scale = radius / np.where(outside, norm, 1.0)
    y = np.where(outside[..., None], x * scale[..., None], x)
    over = outside & (euclidean_norm(y) > radius)
    while np.any(over):
        scale = np.where(over, np.nextafter(scale, 0.0), scale)
        y = np.where(outside[..., None], x * scale[..., None], x)
        over = outside & (euclidean_norm(y) > radius)
    return y


def project(params: ProjectionParams, x) -> np.ndarray:
    """Project a state vector (shape ``(d,)``) or a batch ``(..., d)``.

    A 0-d input is treated as a scalar state.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return project_radius(arr.reshape(1), params.radius).reshape(())
    return project_radius(arr, params.radius)
