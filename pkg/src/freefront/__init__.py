"""Front-fixing solver and regularity probes for a nonlocal free boundary problem."""

from __future__ import annotations

from .core import DomainError, FrontSeries, Grid, InvalidInput, Parameters, State
from .expr import Expr, ExprSyntaxError, evaluate, parse, render
from .solver import Forcing, RunResult, Status, run, step, thomas_solve

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "Expr",
    "ExprSyntaxError",
    "Forcing",
    "FrontSeries",
    "Grid",
    "InvalidInput",
    "Parameters",
    "RunResult",
    "State",
    "Status",
    "evaluate",
    "parse",
    "render",
    "run",
    "step",
    "thomas_solve",
]
