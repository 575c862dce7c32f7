"""Projected Euler-Maruyama for stochastic delay differential equations."""

from .brownian import BrownianGrid, CoarsenSpec, coarsen, generate_path
from .core import (AssumptionParams, SddeProblem, TimeGrid, TrajectoryGrid, build_time_grid,
                   history_sample, scalar_problem)
from .errors import IntegrationError, InvalidArgumentError, PemError
from .integrator import Scheme, SchemeConfig, integrate, pem_step
from .problems import builtin, load_problem
from .projection import ProjectionParams, default_alpha, project

__version__ = "0.1.0"
