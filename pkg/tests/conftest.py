from __future__ import annotations

import math

import pytest

from freefront.expr import parse
from freefront.verify import equilibrium_front, equilibrium_phi_text

ACCEPTANCE_LINES: list = []

S_STAR = equilibrium_front(2.0, 1.0, 1.0)
PROBE_PHI = equilibrium_phi_text(2.0, 1.0, S_STAR) + f" + 0.05*x*(x - 2*{S_STAR!r})"
SMOOTH_F = "2 + 0.1*sin(t)"
ROUGH_F = "2 + 0.1*sin(t) + piecewise(2, 0, 0.5*(t - 2)^2)"


def write_config(path, **values) -> str:
    """Write a config file; keys use config spelling (``lambda`` via lam=)."""
    lines = []
    for key, value in values.items():
        key = "lambda" if key == "lam" else key
        lines.append(f"{key} = {value!r}" if not isinstance(value, str) else f'{key} = "{value}"')
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def equilibrium_values(**overrides) -> dict:
    values = dict(
        lam=1.0,
        sigma=1.0,
        b=S_STAR,
        t_end=5.0,
        n_xi=128,
        dt=1e-3,
        f_expr="2",
        phi_expr=equilibrium_phi_text(2.0, 1.0, S_STAR),
    )
    values.update(overrides)
    return values


def probe_values(f_expr: str, **overrides) -> dict:
    values = dict(
        lam=1.0,
        sigma=1.0,
        b=S_STAR,
        t_end=4.0,
        n_xi=64,
        dt=5e-4,
        f_expr=f_expr,
        phi_expr=PROBE_PHI,
        k_max=4,
        threshold_factor=10.0,
    )
    values.update(overrides)
    return values


@pytest.fixture
def equilibrium_phi():
    return parse(equilibrium_phi_text(2.0, 1.0, S_STAR))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def close(a, b, tol):
    return math.isclose(a, b, rel_tol=0.0, abs_tol=tol)
