import numpy as np
import pytest

from tvfluid import (ConfigurationError, CorrespondenceError, DistributionModel, ElapsedInitialCondition, Grid,
                     RateFunction, SolverConfig, equivalence, equivalence_report, flow_ledger, to_residual_ic)
from tvfluid.elapsed import (elapsed_abandonment, elapsed_queue_measure, elapsed_service_measure)

from conftest import bundled

EXP = DistributionModel.exponential(1.0)


@pytest.fixture(scope="module")
def age_run():
    sc = bundled("elapsed_exp_exp")
    rep, sol = equivalence(sc.elapsed, sc.rate, sc.F, sc.G, sc.solver_config())
    return sc, rep, sol


def test_empty_age_state_agrees_to_quadrature_error():
    rate = RateFunction.linear([0, 5], [0.2, 1.4])
    rep, sol = equivalence(ElapsedInitialCondition(), rate, EXP, EXP, SolverConfig(Grid(0.05, 5.0)))
    # both sides are discretised, so the gap is a quadrature error rather than zero
    assert max(rep.max_Q, rep.max_Z, rep.max_L) < 1e-3
    assert rep.passed


def test_correspondence_preserves_masses(age_run):
    sc, _, sol = age_run
    eic = sc.elapsed
    ic = to_residual_ic(eic, sc.F, sc.G)
    assert ic.Z0 == pytest.approx(eic.service_mass, abs=1e-12)
    assert ic.queue_mass(sc.F) == pytest.approx(eic.queue_mass, abs=1e-5)
    assert ic.omega0 == pytest.approx(0.5)
    assert sol.X[0] == pytest.approx(eic.queue_mass + eic.service_mass, abs=1e-5)


def test_age_measures_are_monotone_and_hit_totals(age_run):
    sc, _, sol = age_run
    for t in (0.0, 4.0, 11.3):
        k = sol.index(t)
        xs = np.linspace(0, sol.omega[k], 9)
        qa = [elapsed_queue_measure(sol, t, x) for x in xs]
        za = [elapsed_service_measure(sol, sc.elapsed, t, x) for x in np.linspace(0, t + 3.5, 9)]
        assert np.all(np.diff(qa) >= -1e-14)
        assert np.all(np.diff(za) >= -1e-14)
        assert qa[-1] == pytest.approx(sol.Q[k], abs=10 * sol.h)
        assert za[-1] == pytest.approx(sol.Z[k], abs=10 * sol.h)


def test_age_abandonment_matches_ledger(age_run):
    sc, _, sol = age_run
    L = flow_ledger(sol).L
    for t in (2.0, 20.0):
        assert elapsed_abandonment(sol, sc.elapsed, t) == pytest.approx(L[sol.index(t)], abs=10 * sol.h)


def test_report_within_allowance(age_run):
    sc, rep, sol = age_run
    assert rep.passed
    assert rep.allowed == pytest.approx(10 * 0.01 * (1 + sol.sup_rate))
    assert equivalence_report(sc).as_dict() == rep.as_dict()


def test_constant_rate_report_compares_specialised_solve():
    eic = ElapsedInitialCondition(z0_x=[0, 1, 2], z0=[0.6, 0.3, 0.0])
    rate = RateFunction.constant(1.3, 0, 6)
    rep, _ = equivalence(eic, rate, EXP, DistributionModel.erlang(2, 2.0), SolverConfig(Grid(0.02, 6.0)))
    assert rep.constant_rate_gap is not None
    assert rep.constant_rate_gap <= 1e-10


def test_service_age_beyond_support_rejected():
    eic = ElapsedInitialCondition(z0_x=[0, 1, 2], z0=[0.4, 0.4, 0.0])
    with pytest.raises(CorrespondenceError):
        to_residual_ic(eic, EXP, DistributionModel.uniform(0.0, 0.8))


def test_queue_age_beyond_patience_rejected():
    eic = ElapsedInitialCondition(r0_x=[0, 1, 2], r0=[0.4, 0.4, 0.4], z0_x=[0, 5], z0=[0.2, 0.2])
    with pytest.raises(CorrespondenceError):
        to_residual_ic(eic, DistributionModel.uniform(0.0, 1.5), EXP)


def test_service_mass_capped():
    with pytest.raises(ConfigurationError):
        ElapsedInitialCondition(z0_x=[0, 1], z0=[1.5, 1.5])


def test_spec_round_trip():
    eic = ElapsedInitialCondition([0, 0.5], [1.0, 0.2], [0, 1, 3], [0.3, 0.2, 0.0])
    back = ElapsedInitialCondition.from_spec(eic.to_spec())
    assert back.to_spec() == eic.to_spec()


def test_residual_form_scenario_rejected():
    with pytest.raises(ConfigurationError):
        equivalence_report(bundled("drain"))
