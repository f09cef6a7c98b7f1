import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freefront.core import Grid, InvalidInput, Parameters, State
from freefront.expr import parse
from freefront.solver import (
    Forcing,
    IncompatibleData,
    Status,
    ZeroPivot,
    _implicit_solve,
    front_velocity,
    init_state,
    run,
    s_double_prime_rhs,
    step,
    thomas_solve,
)

from conftest import S_STAR


def dense(lower, diag, upper):
    n = len(diag)
    a = np.diag(np.asarray(diag, dtype=float))
    if n > 1:
        a += np.diag(lower, -1) + np.diag(upper, 1)
    return a


def random_dominant(rng, n):
    lower = rng.uniform(-1, 1, n - 1)
    upper = rng.uniform(-1, 1, n - 1)
    off = np.zeros(n)
    off[1:] += np.abs(lower)
    off[:-1] += np.abs(upper)
    diag = (off + rng.uniform(0.1, 2.0, n)) * rng.choice([-1, 1], n)
    return lower, diag, upper, rng.uniform(-5, 5, n)


class TestThomas:
    def test_identity(self):
        rhs = np.array([3.0, -1.0, 2.5, 7.0])
        assert np.array_equal(thomas_solve(np.zeros(3), np.ones(4), np.zeros(3), rhs), rhs)

    def test_two_by_two(self):
        assert np.allclose(thomas_solve([1.0], [2.0, 2.0], [1.0], [3.0, 3.0]), [1.0, 1.0], atol=1e-15)

    def test_single(self):
        assert thomas_solve([], [4.0], [], [2.0])[0] == 0.5

    def test_random_50(self):
        rng = np.random.default_rng(50)
        lower, diag, upper, rhs = random_dominant(rng, 50)
        expected = np.linalg.solve(dense(lower, diag, upper), rhs)
        assert np.max(np.abs(thomas_solve(lower, diag, upper, rhs) - expected)) <= 1e-10

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 60), st.integers(0, 2**32 - 1))
    def test_matches_dense_oracle(self, n, seed):
        lower, diag, upper, rhs = random_dominant(np.random.default_rng(seed), n)
        expected = np.linalg.solve(dense(lower, diag, upper), rhs)
        assert np.max(np.abs(thomas_solve(lower, diag, upper, rhs) - expected)) <= 1e-10

    def test_zero_pivot(self):
        with pytest.raises(ZeroPivot):
            thomas_solve([1.0], [0.0, 1.0], [1.0], [1.0, 1.0])
        with pytest.raises(ZeroPivot):
            # second pivot 1 - 1*1 = 0
            thomas_solve([1.0], [1.0, 1.0], [1.0], [1.0, 1.0])

    def test_band_lengths(self):
        with pytest.raises(InvalidInput):
            thomas_solve([1.0, 1.0], [2.0, 2.0], [1.0], [1.0, 1.0])


PARAMS = Parameters(1.0, 1.0, 1.0, 1.0)


class TestFrontVelocity:
    def test_at_sigma(self):
        assert front_velocity(State(0, 1.5, 0, np.full(9, 1.0)), PARAMS) == 0

    def test_shifted(self):
        assert front_velocity(State(0, 2.0, 0, np.full(9, 2.0)), PARAMS) == 2

    def test_affine_exact(self):
        xi = np.linspace(0, 1, 65)
        assert abs(front_velocity(State(0, 1.0, 0, 1.0 + xi), PARAMS) - 0.5) <= 1e-12


class TestSecondDerivativeIdentity:
    def test_rest_state(self):
        lam, sigma = 2.0, 3.0
        p = Parameters(lam, sigma, 1.0, 1.0)
        assert s_double_prime_rhs(State(0, 1.0, 0.0, np.full(9, sigma)), p) == pytest.approx(-lam * sigma)

    def test_zero_field(self):
        lam, sigma = 2.0, 3.0
        p = Parameters(lam, sigma, 1.0, 1.0)
        rhs = s_double_prime_rhs(State(0, 1.0, 1.0, np.zeros(9)), p)
        assert rhs == pytest.approx(-(lam + sigma + lam * sigma))

    def test_equilibrium_near_zero(self, equilibrium_phi):
        p = Parameters(1.0, 1.0, S_STAR, 1.0)
        errors = []
        for n in (32, 64):
            state = init_state(p, equilibrium_phi, Grid(n, 1e-3))
            errors.append(abs(s_double_prime_rhs(state, p)))
        # O(dxi^2): small and shrinking by about 4
        assert errors[0] < 1e-2
        assert errors[0] / errors[1] > 3.5


class TestInitState:
    def test_at_sigma(self):
        st_ = init_state(Parameters(1, 1, 3.0, 1), parse("1"), Grid(16, 0.1))
        assert st_.s_prime == 0 and st_.s == 3.0 and st_.t == 0

    def test_shifted(self):
        st_ = init_state(Parameters(1, 1, 2.0, 1), parse("2"), Grid(16, 0.1))
        assert st_.s_prime == pytest.approx(2.0)

    def test_samples_phi_on_physical_nodes(self):
        st_ = init_state(Parameters(1, 1, 2.0, 1), parse("x"), Grid(8, 0.1))
        assert np.allclose(st_.v, np.linspace(0, 2, 9))

    def test_near_equilibrium(self, equilibrium_phi):
        st_ = init_state(Parameters(1, 1, 1.915, 1), equilibrium_phi, Grid(64, 0.1))
        assert abs(st_.s_prime) <= 1e-3

    def test_forcing_adds_to_velocity(self):
        st_ = init_state(Parameters(1, 1, 2.0, 1), parse("1"), Grid(16, 0.1), Forcing(q=lambda t: 0.25))
        assert st_.s_prime == 0.25


class TestImplicitSolve:
    def test_ghost_node_closure(self):
        # the last row must equal the full stencil with v[n+1] = v[n-1],
        # where the advection term cancels exactly
        rng = np.random.default_rng(3)
        n, dt, s, sp = 16, 0.01, 1.3, 0.7
        v_old = rng.uniform(0, 1, n + 1)
        v = _implicit_solve(v_old, dt, dt, s, sp, PARAMS, 0.5)
        dxi = 1 / n
        diff = 1 / (s * dxi) ** 2
        res = (v[n] - v_old[n]) / dt - diff * (2 * v[n - 1] - 2 * v[n]) + PARAMS.lam * v[n]
        assert abs(res) <= 1e-10 * diff

    @settings(max_examples=30, deadline=None)
    @given(
        st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(0.5, 2), st.floats(-1, 1), st.floats(1e-4, 0.1)
    )
    def test_exact_for_quadratics_symmetric_at_one(self, a, b, c, s, sp, dt):
        # v = a + b*t + c*(xi - 1)^2 solves the forced frozen-coefficient
        # equation; every stencil is exact for it
        lam = PARAMS.lam
        n = 16
        xi = np.linspace(0, 1, n + 1)
        v = lambda t: a + b * t + c * (xi - 1) ** 2  # noqa: E731
        t1 = dt
        g = b - 2 * c / s**2 - xi * sp / s * 2 * c * (xi - 1) + lam * v(t1)
        out = _implicit_solve(v(0.0), t1, dt, s, sp, PARAMS, float(v(t1)[0]), g)
        assert np.max(np.abs(out - v(t1))) <= 1e-9 * (1 + abs(a) + abs(b) + abs(c))

    def test_even_data_keeps_flat_end(self):
        n = 32
        xi = np.linspace(0, 1, n + 1)
        v_old = np.cos(np.pi * xi)
        v = _implicit_solve(v_old, 0.01, 0.01, 1.0, 0.0, PARAMS, 1.0)
        # slope at xi = 1 from the even extension is zero by construction;
        # the one-sided estimate is O(dxi^2)
        assert abs((3 * v[n] - 4 * v[n - 1] + v[n - 2]) * n / 2) < 0.05


class TestStep:
    def test_dt_zero(self, equilibrium_phi):
        p = Parameters(1, 1, S_STAR, 1)
        grid = Grid(32, 1e-3)
        s0 = init_state(p, equilibrium_phi, grid)
        assert step(s0, p, grid, parse("2"), dt=0.0) is s0

    def test_equilibrium_one_step(self, equilibrium_phi):
        p = Parameters(1, 1, S_STAR, 1)
        grid = Grid(64, 1e-3)
        s1 = step(init_state(p, equilibrium_phi, grid), p, grid, parse("2"))
        assert abs(s1.s - S_STAR) <= 10 * (grid.dxi**2 + grid.dt) * grid.dt
        assert s1.t == pytest.approx(1e-3)

    def test_manufactured_one_step(self):
        from freefront.verify import make_mms_case

        case = make_mms_case(parse("1 + 0.1*t", ("t",)), parse("cos(pi*xi)*exp(-t)", ("xi", "t")), PARAMS)
        grid = Grid(64, 1e-4)
        s0 = init_state(case.params, case.phi_derived, grid, case.forcing)
        s1 = step(s0, case.params, grid, case.f_derived, case.forcing)
        exact = np.cos(np.pi * grid.nodes) * math.exp(-grid.dt)
        assert np.max(np.abs(s1.v - exact)) <= 10 * (grid.dt**2 + grid.dxi**2)
        assert abs(s1.s - (1 + 0.1 * grid.dt)) <= 10 * grid.dt**2

    def test_negative_dt(self, equilibrium_phi):
        p = Parameters(1, 1, S_STAR, 1)
        grid = Grid(16, 1e-3)
        with pytest.raises(InvalidInput):
            step(init_state(p, equilibrium_phi, grid), p, grid, parse("2"), dt=-1.0)


class TestRun:
    def test_equilibrium_preserved(self, equilibrium_phi):
        p = Parameters(1, 1, S_STAR, 5.0)
        result = run(p, Grid(128, 1e-3), parse("2"), equilibrium_phi)
        assert result.status is Status.COMPLETED
        assert np.max(np.abs(result.series.column("s") - S_STAR)) <= 5e-3
        assert result.series.column("t")[-1] == 5.0

    def test_constant_data_front_recedes(self):
        p = Parameters(1.0, 1.0, 1.0, 0.2)
        result = run(p, Grid(32, 1e-3), parse("1"), parse("1"), waive_compat=True)
        s = result.series.column("s")
        sp = result.series.column("s_prime")
        assert sp[0] == 0
        assert result.series.column("s_dprime_rhs")[0] == pytest.approx(-1.0, abs=1e-12)
        assert s[5] < s[0] and np.all(np.diff(s[:50]) < 0)

    def test_zero_final_time(self, equilibrium_phi):
        result = run(Parameters(1, 1, S_STAR, 0.0), Grid(16, 1e-3), parse("2"), equilibrium_phi)
        assert len(result.series) == 1
        assert result.status is Status.COMPLETED

    def test_uneven_last_step(self, equilibrium_phi):
        result = run(Parameters(1, 1, S_STAR, 0.0105), Grid(16, 1e-3), parse("2"), equilibrium_phi)
        t = result.series.column("t")
        assert t[-1] == 0.0105 and len(t) == 12

    def test_incompatible_refused(self):
        with pytest.raises(IncompatibleData) as info:
            run(Parameters(1, 1, 1, 1), Grid(16, 1e-2), parse("1"), parse("1"))
        assert info.value.report.failing() == ["f'(0) = phi''(0) - lambda*phi(0)"]

    def test_waived_logs_warning(self, caplog):
        run(Parameters(1, 1, 1, 0.01), Grid(16, 1e-2), parse("1"), parse("1"), waive_compat=True)
        assert "waived" in caplog.text

    def test_collapse(self):
        p = Parameters(1.0, 20.0, 1.0, 5.0)
        result = run(p, Grid(32, 1e-3), parse("0.5"), parse("0.5*cosh(1 - x)/cosh(1)"))
        assert result.status is Status.FRONT_COLLAPSE
        assert 0 < result.event_time < 5
        assert result.final_state.s >= p.s_min

    def test_diverged(self):
        result = run(Parameters(1, 1, 1, 2.0), Grid(16, 1e-2), parse("exp(1000*t)"), parse("1"), waive_compat=True)
        assert result.status is Status.DIVERGED
        assert result.final_state.is_finite()

    def test_snapshots(self, equilibrium_phi):
        result = run(
            Parameters(1, 1, S_STAR, 0.1), Grid(16, 1e-2), parse("2"), equilibrium_phi, snapshot_times=[0.0, 0.05, 0.1]
        )
        assert [t for t, _ in result.snapshots] == [0.0, 0.05, 0.1]
        assert [round(s.t, 12) for _, s in result.snapshots] == [0.0, 0.05, 0.1]

    def test_deterministic(self):
        args = (Parameters(1, 1, 1, 0.5), Grid(32, 1e-3), parse("1 + 0.5*sin(3*t)"), parse("1 + 0.3*x*(x - 2)"))
        a, b = run(*args, waive_compat=True), run(*args, waive_compat=True)
        assert np.array_equal(a.series.as_array(), b.series.as_array(), equal_nan=True)
        assert np.array_equal(a.final_state.v, b.final_state.v)

    def test_identity_residual_filled(self, equilibrium_phi):
        result = run(Parameters(1, 1, S_STAR, 0.1), Grid(16, 1e-2), parse("2"), equilibrium_phi)
        res = result.series.column("identity_residual")
        assert math.isnan(res[0]) and math.isnan(res[-1]) and np.all(np.isfinite(res[1:-1]))
