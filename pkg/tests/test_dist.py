import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from tvfluid import ConfigurationError, DistributionModel, DomainError, RateFunction


def _quad(f, a, b):
    pts = [p for p in (0.5, 1.5) if a < p < b] or None
    return integrate.quad(f, a, b, points=pts, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


FAMILIES = {
    "exp": (DistributionModel.exponential(1.5), stats.expon(scale=1 / 1.5)),
    "erlang": (DistributionModel.erlang(3, 2.0), stats.gamma(3, scale=0.5)),
    "uniform": (DistributionModel.uniform(0.5, 1.5), stats.uniform(0.5, 1.0)),
    "weibull": (DistributionModel.weibull(1.7, 1.2), stats.weibull_min(1.7, scale=1.2)),
}


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_cdf_density_mean_match_scipy(name):
    d, ref = FAMILIES[name]
    x = np.linspace(0, 4, 81)
    assert np.allclose(d.cdf(x), ref.cdf(x), atol=1e-13)
    inner = x[(x > 0.01) & (np.abs(x - 0.5) > 1e-9) & (np.abs(x - 1.5) > 1e-9)]
    assert np.allclose(d.density(inner), ref.pdf(inner), atol=1e-12)
    assert d.mean == pytest.approx(ref.mean(), rel=1e-12)
    assert d.mu == pytest.approx(1 / ref.mean(), rel=1e-12)


def test_hyperexponential_mixes_exponentials():
    d = DistributionModel.hyperexponential([0.3, 0.7], [0.5, 3.0])
    x = np.linspace(0, 6, 31)
    ref = 0.3 * np.exp(-0.5 * x) + 0.7 * np.exp(-3.0 * x)
    assert np.allclose(d.complement(x), ref, atol=1e-14)
    assert d.mean == pytest.approx(0.3 / 0.5 + 0.7 / 3.0)


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_integrated_complement_and_equilibrium(name):
    d, ref = FAMILIES[name]
    for x in (0.3, 1.0, 2.7):
        want = _quad(ref.sf, 0, x)
        assert d.integrated_complement(x) == pytest.approx(want, abs=1e-10)
        assert d.equilibrium_cdf(x) == pytest.approx(want / ref.mean(), abs=1e-10)


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_cell_moments_exact(name):
    d, ref = FAMILIES[name]
    edges = np.array([0.0, 0.2, 0.55, 1.0, 1.6, 3.0])
    m0, m1 = d.cell_moments(edges)
    for i in range(edges.size - 1):
        a, b = edges[i], edges[i + 1]
        assert m0[i] == pytest.approx(_quad(ref.sf, a, b), abs=1e-12)
        assert m1[i] == pytest.approx(_quad(lambda s: (s - a) * ref.sf(s), a, b), abs=1e-12)


def test_exponential_equilibrium_is_itself():
    d = DistributionModel.exponential(0.7)
    x = np.linspace(0, 5, 11)
    assert np.allclose(d.equilibrium_cdf(x), d.cdf(x), atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(p=st.floats(1e-6, 1 - 1e-6), name=st.sampled_from(sorted(FAMILIES)))
def test_isf_inverts_complement(p, name):
    d, _ = FAMILIES[name]
    x = float(d.isf(p))
    assert d.complement(x) == pytest.approx(p, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(age=st.floats(0.0, 2.0), seed=st.integers(0, 2 ** 32 - 1))
def test_sample_beyond_exceeds_age(age, seed):
    d = DistributionModel.erlang(2, 1.0)
    draws = d.sample_beyond(np.random.default_rng(seed), np.full(50, age))
    assert np.all(draws >= age)


def test_sample_moments(rng):
    d = DistributionModel.erlang(2, 2.0)
    x = d.sample(rng, 200_000)
    assert x.mean() == pytest.approx(1.0, abs=0.01)
    assert x.var() == pytest.approx(0.5, abs=0.01)


def test_hazard_of_exponential_is_constant():
    d = DistributionModel.exponential(2.5)
    assert np.allclose(d.hazard(np.linspace(0, 3, 7)), 2.5)


def test_negative_argument_rejected():
    with pytest.raises(DomainError):
        DistributionModel.exponential(1.0).cdf(-0.1)


def test_patience_needs_bounded_density():
    d = DistributionModel.weibull(0.5, 1.0)
    with pytest.raises(ConfigurationError):
        d.validate_role("patience")
    d.validate_role("service")


def test_empirical_lipschitz_must_dominate_knot_slopes():
    with pytest.raises(ConfigurationError):
        DistributionModel.empirical([0, 1, 2], [0, 0.8, 1.0], lipschitz=0.5)
    d = DistributionModel.empirical([0, 1, 2], [0, 0.8, 1.0], lipschitz=0.8)
    assert d.cdf(0.5) == pytest.approx(0.4)
    assert d.mean == pytest.approx(0.5 * 0.8 + 1.5 * 0.2)


def test_unknown_family():
    with pytest.raises(ConfigurationError):
        DistributionModel.from_spec({"family": "lognormal", "mu": 0.0})


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_spec_round_trip(name):
    d, _ = FAMILIES[name]
    back = DistributionModel.from_spec(d.to_spec())
    assert back == d


# ---------------------------------------------------------------------------
# rates


def test_step_rate_limits_and_cumulative():
    r = RateFunction.step([0, 1, 3], [2.0, 0.5])
    assert r(1.0) == 0.5
    assert r.left_limit(1.0) == 2.0
    assert r.cumulative(0.0, 3.0) == pytest.approx(3.0)
    assert r.E(0.5) == pytest.approx(1.0)


def test_signed_cumulative_before_zero():
    r = RateFunction.constant(1.5, -2.0, 4.0)
    assert r.E(-1.0) == pytest.approx(-1.5)
    assert r.E(2.0) == pytest.approx(3.0)


@settings(max_examples=40, deadline=None)
@given(vals=st.lists(st.floats(0, 5), min_size=3, max_size=6),
       a=st.floats(0, 1), b=st.floats(0, 1))
def test_linear_cumulative_matches_quadrature(vals, a, b):
    ts = np.linspace(0, len(vals) - 1, len(vals))
    r = RateFunction.linear(ts, vals)
    lo, hi = sorted((a * ts[-1], b * ts[-1]))
    want = integrate.quad(lambda s: np.interp(s, ts, vals), lo, hi, points=ts[1:-1], limit=100)[0]
    assert r.cumulative(lo, hi) == pytest.approx(want, abs=1e-9)


def test_rate_validation():
    with pytest.raises(ConfigurationError):
        RateFunction.step([0, 1], [-1.0])
    with pytest.raises(ConfigurationError):
        RateFunction.linear([0, 1, 1], [1, 1, 1])
    with pytest.raises(DomainError):
        RateFunction.constant(1.0, 0, 1)(1.5)


def test_sup_and_constant_detection():
    r = RateFunction.linear([0, 1, 2], [0.5, 2.0, 1.0])
    assert r.sup() == 2.0
    assert r.sup(1.5, 2.0) == pytest.approx(1.5)
    assert not r.is_constant()
    assert RateFunction.constant(3.0, 0, 5).is_constant()


def test_sampled_rate_interpolates_function():
    r = RateFunction.sampled(lambda t: 1 + np.sin(t), 0.0, 6.0, 0.02)
    t = np.linspace(0, 6, 301)
    assert np.max(np.abs(r(t) - (1 + np.sin(t)))) < 0.02 ** 2 / 8 + 1e-12
    assert math.isclose(r.t_max, 6.0)
