import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from spreadtime.analysis import ratio, spread_distribution
from spreadtime.chain import alpha_count
from spreadtime.model import homogeneous_spec, two_group_spec

rates = st.floats(0.01, 2.0)


@st.composite
def specs(draw):
    """Random valid specs with K <= 2 and N <= 30, plus a non-trivial alpha."""
    if draw(st.booleans()):
        n = draw(st.integers(2, 30))
        spec = homogeneous_spec(n, draw(rates), draw(st.integers(1, n - 1)))
    else:
        n1 = draw(st.integers(1, 15))
        n2 = draw(st.integers(1, 15))
        s1 = draw(st.integers(1, n1))
        mat = [[draw(rates), draw(rates)], [draw(rates), draw(rates)]]
        spec = two_group_spec((n1, n2), mat, (s1, 0))
        if spec.population < 2 or spec.total_seeds >= spec.population:
            spec = two_group_spec((n1 + 1, n2), mat, (1, 0))
    n, s = spec.population, spec.total_seeds
    target = draw(st.integers(s + 1, n))
    alpha = target / n
    assert alpha_count(alpha, n) == target
    return spec, alpha


SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@SETTINGS
@given(specs(), st.lists(st.floats(0, 50), min_size=2, max_size=8))
def test_cdf_monotone_and_bounded(case, times):
    spec, alpha = case
    d = spread_distribution(spec, alpha)
    t = np.sort(np.array(times)) / d.decay_rate()
    f = d.cdf(t)
    assert np.all((f >= 0) & (f <= 1))
    assert np.all(np.diff(f) >= -1e-12)


@SETTINGS
@given(specs(), st.floats(0.05, 0.995))
def test_quantile_round_trip(case, beta):
    spec, alpha = case
    d = spread_distribution(spec, alpha)
    assert abs(d.cdf(d.quantile(beta)) - beta) < 1e-8


@SETTINGS
@given(specs(), st.sampled_from([0.5, 2.0, 10.0]), st.floats(0.1, 0.99))
def test_rate_scaling(case, gamma, beta):
    spec, alpha = case
    d = spread_distribution(spec, alpha)
    ds = spread_distribution(spec.scaled(gamma), alpha)
    t = np.linspace(0, 2 * d.quantile(0.999) / gamma, 50)
    assert_allclose(ds.cdf(t), d.cdf(gamma * t), atol=1e-10)
    for n in (1, 2, 3):
        assert_allclose(ds.moment(n), gamma ** -n * d.moment(n), rtol=1e-10)
    assert_allclose(ds.quantile(beta), d.quantile(beta) / gamma, rtol=3e-9)
    assert_allclose(ratio(ds, beta), ratio(d, beta), rtol=3e-9)


@SETTINGS
@given(specs())
def test_subgenerator_structure(case):
    spec, alpha = case
    d = spread_distribution(spec, alpha)
    f = d.subgen.to_dense()
    assert np.allclose(np.tril(f, -1), 0)
    assert np.all(np.diag(f) < 0)
    off = f - np.diag(np.diag(f))
    assert np.all(off >= 0)
    # exit mass plus transient outflow balances each diagonal entry
    assert_allclose(off.sum(axis=1) + d.subgen.exit, -np.diag(f), rtol=1e-12)
    assert d.uniformization_rate >= np.max(-np.diag(f))
    assert_allclose(sum(d.initial.weights), 1.0)


@SETTINGS
@given(specs())
def test_moments_positive_and_ordered(case):
    spec, alpha = case
    d = spread_distribution(spec, alpha)
    m1, m2 = d.moment(1), d.moment(2)
    assert m1 > 0 and m2 >= m1 * m1 * (1 - 1e-12)
    # more seeds (when possible) never slow completion on average
    if spec.num_groups == 1 and spec.total_seeds + 1 < alpha_count(alpha, spec.population):
        faster = spread_distribution(spec.with_seeds([spec.total_seeds + 1]), alpha)
        assert faster.mean() < m1
