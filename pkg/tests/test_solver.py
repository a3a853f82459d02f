import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from tvfluid import (ConfigurationError, DistributionModel, DivergenceError, DomainError, Grid, InitialCondition,
                     RateFunction, SolverConfig, renewal_function, residual, solve, time_shift)
from tvfluid.solver import (apply_operator, overloaded_prefix, overloaded_prefix_check, picard_step,
                            window_context, window_length)

from conftest import solved

EXP = DistributionModel.exponential(1.0)


def _cfg(h=0.01, T=20.0, **kw):
    return SolverConfig(Grid(h, T), **kw)


def test_pure_drain_is_the_initial_complement():
    ic = InitialCondition(z0_spec={"kind": "exponential", "mass": 1.0, "rate": 1.0})
    sol = solve(ic, RateFunction.constant(0.0, 0, 5), EXP, EXP, _cfg(T=5.0))
    assert np.max(np.abs(sol.X - np.exp(-sol.t))) < 1e-15
    assert np.all(sol.Q == 0)


def test_empty_system_without_arrivals_stays_empty():
    sol = solve(InitialCondition.empty(), RateFunction.constant(0.0, 0, 3), EXP, EXP, _cfg(T=3.0))
    assert not np.any(sol.X)


def test_infinite_server_regime_matches_closed_form():
    # X(t) = lambda (1 - e^{-t}) while X <= 1
    lam = 0.6
    sol = solve(InitialCondition.empty(), RateFunction.constant(lam, 0, 10), EXP, EXP, _cfg(T=10.0))
    assert np.max(sol.X) < 1
    assert np.max(np.abs(sol.X - lam * (1 - np.exp(-sol.t)))) < 1e-5


def test_underloaded_matches_independent_quadrature():
    G = DistributionModel.erlang(2, 2.0)
    rate = RateFunction.linear([0, 3, 6], [0.2, 0.9, 0.4])
    sol = solve(InitialCondition.empty(), rate, EXP, G, _cfg(T=6.0))
    for t in (0.5, 2.0, 3.0, 4.4, 6.0):
        ref = integrate.quad(lambda s: G.complement(t - s) * rate(s), 0, t, points=[3.0] if t > 3 else None,
                             epsabs=1e-12)[0]
        assert sol.X[sol.index(t)] == pytest.approx(ref, abs=1e-4)


def test_overloaded_equilibrium():
    sol = solved("exp_exp_overloaded")
    assert sol.X[-1] == pytest.approx(2.0, abs=1e-6)
    assert sol.omega[-1] == pytest.approx(math.log(2), abs=1e-3)


@pytest.mark.parametrize("name", ["switching_sinusoid_erlang", "uniform_patience_overloaded",
                                  "step_hyperexp_patience"])
def test_node_equations_hold(name):
    sol = solved(name)
    assert residual(sol) <= sol.config.picard_tol
    assert sol.diagnostics["residual"] == residual(sol)
    aw, gw = sol.coeffs
    rhs = apply_operator(sol.base, aw, gw, np.asarray(sol.H), np.asarray(sol.Q))
    assert np.max(np.abs(rhs - sol.X)) <= sol.config.picard_tol


def test_solution_is_read_only():
    sol = solved("exp_exp_overloaded")
    with pytest.raises(ValueError):
        sol.X[0] = 1.0


@pytest.mark.parametrize("guess", ["zero", "high"])
def test_initial_guess_does_not_change_answer(guess):
    base = solved("switching_sinusoid_erlang", 0.02)
    sc_rate, F, G = base.rate, base.F, base.G
    sol = solve(base.ic, sc_rate, F, G, SolverConfig(base.grid, initial_guess=guess))
    assert np.max(np.abs(sol.X - base.X)) < 1e-9


def test_window_length_respects_target():
    G = DistributionModel.erlang(2, 2.0)
    b, kappa, M, L = window_length(EXP, G, _cfg())
    assert kappa == pytest.approx(0.5, abs=1e-9) or b == pytest.approx(min(EXP.support_end, M) / 2)
    assert kappa <= 0.5 + 1e-9
    assert 0 < b <= min(EXP.support_end, M) / 2


def test_horizon_cap_can_be_infeasible():
    # with M = T the Lipschitz bound L_F / F^c(T/2) is too large for any usable window
    with pytest.raises(ConfigurationError):
        window_length(EXP, EXP, _cfg(window_cap="horizon"))


def test_divergence_reported():
    sc = solved("exp_exp_overloaded", 0.05)
    with pytest.raises(DivergenceError) as info:
        solve(sc.ic, sc.rate, sc.F, sc.G, SolverConfig(sc.grid, max_iters=1))
    assert info.value.last_residual > 0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), scale=st.floats(1e-4, 0.5))
def test_window_map_contracts(seed, scale):
    sol = solved("uniform_patience_overloaded")
    win = sol.diagnostics["windows"][3]
    k0, k1 = win["k0"], win["k1"]
    ctx = window_context(sol, k0, k1)
    rng = np.random.default_rng(seed)
    x = np.asarray(sol.X[k0 + 1:k1 + 1]) + scale * rng.standard_normal(k1 - k0)
    y = np.asarray(sol.X[k0 + 1:k1 + 1]) + scale * rng.standard_normal(k1 - k0)
    d_out = np.max(np.abs(picard_step(x, ctx) - picard_step(y, ctx)))
    d_in = np.max(np.abs(x - y))
    assert d_out <= win["kappa"] * d_in + 1e-14


def test_window_map_fixes_the_solution():
    sol = solved("switching_sinusoid_erlang")
    w = sol.diagnostics["windows"][5]
    ctx = window_context(sol, w["k0"], w["k1"])
    x = np.asarray(sol.X[w["k0"] + 1:w["k1"] + 1])
    assert np.max(np.abs(picard_step(x, ctx) - x)) < sol.config.picard_tol


def test_window_context_bounds():
    sol = solved("drain")
    with pytest.raises(DomainError):
        window_context(sol, 5, 5)


def test_time_shift_of_drain():
    sol = solved("drain")
    sh = time_shift(sol, 4.0)
    assert sh.t0 == pytest.approx(4.0)
    assert np.max(np.abs(sh.X - np.exp(-sh.t))) < 1e-15


@pytest.mark.parametrize("tau", [0.37, 5.0, 13.21])
def test_time_shift_reproduces_tail(tau):
    sol = solved("erlang_patience_uniform_service")
    sh = time_shift(sol, tau)
    k = sol.index(tau)
    assert np.max(np.abs(sh.X - sol.X[k:])) < 10 * sol.config.picard_tol
    assert sh.diagnostics["Q0"] == pytest.approx(sol.Q[k])


def test_time_shift_rejects_horizon():
    sol = solved("drain")
    with pytest.raises(DomainError):
        time_shift(sol, 20.0)


def test_renewal_function_of_exponential_is_linear():
    g = Grid(0.01, 5.0)
    U = renewal_function(EXP, g)
    assert np.max(np.abs(U - (1 + g.nodes))) < 10 * g.h ** 2


def test_renewal_series_term_budget():
    with pytest.raises(DivergenceError):
        renewal_function(EXP, Grid(0.1, 2.0), tol=0.0)


def test_overloaded_prefix():
    sol = solved("renewal_overloaded")
    assert overloaded_prefix(sol) == sol.X.size
    U = renewal_function(sol.G, sol.grid)
    assert overloaded_prefix_check(sol, U) < 10 * sol.h


def test_empty_prefix_gives_zero_gap():
    sol = solved("underloaded_sinusoid")
    assert overloaded_prefix(sol) == 0
    assert overloaded_prefix_check(sol, renewal_function(sol.G, sol.grid)) == 0.0


def test_queue_needs_full_service():
    ic = InitialCondition(0.5, RateFunction.constant(1.0, -0.5, 0.0),
                          {"kind": "exponential", "mass": 0.5, "rate": 1.0})
    with pytest.raises(ConfigurationError):
        ic.validate(EXP)


def test_queue_mass_exact():
    pre = RateFunction.linear([-1.0, -0.4, 0.0], [0.5, 2.0, 1.0])
    ic = InitialCondition(1.0, pre, {"kind": "exponential", "mass": 1.0, "rate": 1.0})
    F = DistributionModel.uniform(0.0, 1.5)
    want = integrate.quad(lambda s: F.complement(s) * pre(-s), 0, 1.0, points=[0.4], epsabs=1e-13)[0]
    assert ic.queue_mass(F) == pytest.approx(want, abs=1e-12)


def test_z0_table_must_end_at_zero():
    with pytest.raises(ConfigurationError):
        InitialCondition(z0_spec={"kind": "table", "t": [0, 1], "values": [0.5, 0.2]})


def test_z0_equilibrium_of_exponential():
    ic = InitialCondition(z0_spec={"kind": "equilibrium", "mass": 0.8}, G=EXP)
    t = np.linspace(0, 3, 7)
    assert np.allclose(ic.z0_complement(t), 0.8 * np.exp(-t))
