"""Built-in example problems and the ``key = value`` problem file format.

A problem file is UTF-8 text with one ``key = value`` pair per line.  ``#``
starts a comment.  Required keys: ``name``, ``drift``, ``diffusion``,
``delay``, ``horizon``, ``history``, ``q``.  Optional keys: ``L``, ``eta``,
``K1_history``, ``beta``, ``p``, ``K1_khasminskii``.  ``drift`` and
``diffusion`` are expressions in ``x`` (current state) and ``xd`` (delayed
state); ``history`` is an expression in ``t``.  Reals accept decimal or
hexadecimal float literals so values can be given bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import AssumptionParams, SddeProblem, scalar_problem
from .errors import (ExprError, InvalidArgumentError, MissingKeyError,
                     ProblemFileError, ProblemValidationError)
from .expr import (COEFFICIENT_VARIABLES, HISTORY_VARIABLES, Compiled, Expr,
                   parse_expr, to_source)

REQUIRED_KEYS = ("name", "drift", "diffusion", "delay", "horizon", "history", "q")
OPTIONAL_KEYS = {
    "L": "monotonicity_const",
    "eta": "monotonicity_eta",
    "K1_history": "history_holder_const",
    "beta": "history_holder_exponent",
    "p": "khasminskii_p",
    "K1_khasminskii": "khasminskii_const",
}


# --- built-in problems -----------------------------------------------------

def _ex1_drift(x, xd):
    return -2 * x + xd - x ** 5


def _ex1_diffusion(x, xd):
    return x ** 2


def _ex2_drift(x, xd):
    return -2 * x + xd - x ** 5 - xd ** 5


def _ex2_diffusion(x, xd):
    return x ** 2 + xd ** 2


def _cos_history(t):
    return np.cos(t)


_BUILTIN_ASSUMPTIONS = AssumptionParams(
    growth_exponent=5.0,
    history_holder_const=1.0,
    history_holder_exponent=1.0,
    khasminskii_p=30.0,
)

_BUILTINS = {
    "example1": (_ex1_drift, _ex1_diffusion),
    "example2": (_ex2_drift, _ex2_diffusion),
}


def builtin_names():
    return sorted(_BUILTINS)


def builtin(name: str, horizon: float = 2.0) -> SddeProblem:
    """The two scalar test equations with delay 1 and history cos(t)."""
    try:
        drift, diffusion = _BUILTINS[name]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown built-in problem {name!r}; available: {', '.join(builtin_names())}") from None
    return scalar_problem(drift, diffusion, _cos_history, 1.0, horizon,
                          _BUILTIN_ASSUMPTIONS, name=name)


# --- problem files ---------------------------------------------------------

@dataclass(frozen=True)
class ProblemFile:
    name: str
    drift: Expr
    diffusion: Expr
    delay: float
    horizon: float
    history: Expr
    q: float
    assumptions: dict
    key_lines: dict = field(default_factory=dict, compare=False)

    def to_source(self) -> str:
        lines = [
            f"name = {self.name}",
            f"drift = {to_source(self.drift)}",
            f"diffusion = {to_source(self.diffusion)}",
            f"delay = {self.delay.hex()}",
            f"horizon = {self.horizon.hex()}",
            f"history = {to_source(self.history)}",
            f"q = {self.q.hex()}",
        ]
        inverse = {v: k for k, v in OPTIONAL_KEYS.items()}
        for field_name, value in self.assumptions.items():
            lines.append(f"{inverse[field_name]} = {float(value).hex()}")
        return "\n".join(lines) + "\n"


class _Coefficient:
    """Picklable wrapper evaluating a compiled expression in (x, xd)."""

    def __init__(self, expr: Expr):
        self.compiled = Compiled(expr)

    def __call__(self, x, xd):
        return self.compiled(x=x, xd=xd)


class _History:
    def __init__(self, expr: Expr):
        self.compiled = Compiled(expr)

    def __call__(self, t):
        return float(self.compiled(t=t))


def parse_real(text: str) -> float:
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    try:
        return float.fromhex(text)
    except ValueError:
        raise ValueError(f"not a real number: {text!r}") from None


def parse_problem_text(text: str, path: Optional[str] = None) -> ProblemFile:
    entries = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ProblemFileError("expected 'key = value'", path, lineno)
        if key not in REQUIRED_KEYS and key not in OPTIONAL_KEYS:
            raise ProblemFileError(f"unknown key {key!r}", path, lineno)
        if key in entries:
            raise ProblemFileError(f"duplicate key {key!r}", path, lineno)
        entries[key] = value
        lines[key] = lineno

    for key in REQUIRED_KEYS:
        if key not in entries:
            raise MissingKeyError(f"missing required key {key!r}", path)

    def expr_of(key, variables):
        try:
            return parse_expr(entries[key], variables)
        except ExprError as exc:
            raise ProblemFileError(f"{key}: {exc}", path, lines[key]) from exc

    def real_of(key):
        try:
            return parse_real(entries[key])
        except ValueError as exc:
            raise ProblemFileError(f"{key}: {exc}", path, lines[key]) from None

    assumptions = {OPTIONAL_KEYS[k]: real_of(k) for k in OPTIONAL_KEYS if k in entries}
    return ProblemFile(
        name=entries["name"],
        drift=expr_of("drift", COEFFICIENT_VARIABLES),
        diffusion=expr_of("diffusion", COEFFICIENT_VARIABLES),
        delay=real_of("delay"),
        horizon=real_of("horizon"),
        history=expr_of("history", HISTORY_VARIABLES),
        q=real_of("q"),
        assumptions=assumptions,
        key_lines=lines,
    )


def problem_from_file(spec: ProblemFile, path=None) -> SddeProblem:
    for key in ("delay", "horizon"):
        value = getattr(spec, key)
        if not (math.isfinite(value) and value > 0):
            raise ProblemValidationError(f"{key} must be positive, got {value}",
                                         path, spec.key_lines.get(key))
    try:
        params = AssumptionParams(growth_exponent=spec.q, **spec.assumptions)
    except InvalidArgumentError as exc:
        raise ProblemValidationError(str(exc), path) from None
    try:
        return scalar_problem(_Coefficient(spec.drift), _Coefficient(spec.diffusion),
                              _History(spec.history), spec.delay, spec.horizon, params,
                              name=spec.name)
    except (InvalidArgumentError, ExprError) as exc:
        raise ProblemValidationError(str(exc), path) from None


def load_problem(path) -> SddeProblem:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot open problem file {str(path)!r}: {exc.strerror or exc}") from exc
    return problem_from_file(parse_problem_text(text, str(path)), str(path))


def resolve_problem(source: str, horizon: Optional[float] = None) -> SddeProblem:
    """A built-in name or a path to a problem file."""
    if source in _BUILTINS:
        return builtin(source) if horizon is None else builtin(source, horizon)
    problem = load_problem(source)
    return problem if horizon is None else problem.with_horizon(horizon)
