import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import expm

from spreadtime import analysis
from spreadtime.analysis import (
    SpreadDistribution,
    guaranteed_time,
    mean_infected,
    min_seeds_for_bound,
    moment,
    rate_scale_for_bound,
    ratio,
    spread_distribution,
    spread_speed,
)
from spreadtime.chain import build_subgenerator
from spreadtime.closedform import homog_mean_completion, homog_variance
from spreadtime.errors import Infeasible
from spreadtime.model import homogeneous_spec, special_case_rates, two_group_spec
from spreadtime.sim import SimConfig, simulate_completion

from conftest import TABLE1_MEAN


@pytest.fixture(scope="module")
def exp1():
    return spread_distribution(homogeneous_spec(2, 1.0), 1.0)


def test_cdf_at_zero(exp1):
    assert exp1.cdf(0.0) == 0.0
    assert exp1.survival(0.0) == 1.0


@pytest.mark.parametrize("t", [0.01, 0.5, 1.0, 3.0, 20.0])
def test_two_node_closed_form(exp1, t):
    assert_allclose(exp1.cdf(t), -math.expm1(-t), atol=1e-12)
    assert_allclose(exp1.survival(t), math.exp(-t), rtol=1e-10)


def test_vectorized_cdf(exp1):
    t = np.linspace(0, 5, 11)
    assert_allclose(exp1.cdf(t), 1 - np.exp(-t), atol=1e-12)
    assert_allclose(exp1.cdf(t) + exp1.survival(t), 1.0, atol=1e-12)


def test_negative_time_rejected(exp1):
    with pytest.raises(ValueError):
        exp1.cdf(-1.0)
    with pytest.raises(ValueError):
        mean_infected(homogeneous_spec(4, 1.0), -0.5)


def test_two_node_quantile_and_moments(exp1):
    assert_allclose(guaranteed_time(exp1, 0.99), math.log(100), rtol=1e-9)
    assert_allclose(moment(exp1, 1), 1.0, rtol=1e-14)
    assert_allclose(moment(exp1, 2), 2.0, rtol=1e-14)
    assert_allclose(moment(exp1, 3), 6.0, rtol=1e-14)
    assert_allclose(ratio(exp1, 1 - math.exp(-1)), 1.0, rtol=1e-9)


def test_invalid_arguments(exp1):
    for beta in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            exp1.quantile(beta)
    with pytest.raises(ValueError):
        exp1.moment(0)


def test_trivial_completion():
    d = spread_distribution(homogeneous_spec(10, 1.0, seeds=5), 0.5)
    assert d.is_trivial
    assert d.cdf(0.0) == 1.0
    assert guaranteed_time(d, 0.9) == 0.0
    assert moment(d, 2) == 0.0
    assert ratio(d, 0.9) == 1.0
    assert rate_scale_for_bound(d, 0.9, 3.0) == 0.0


def test_paper_guaranteed_time(homog100):
    d = spread_distribution(homog100, 0.9)
    assert abs(d.quantile(0.99) / 278 - 1) < 0.10
    assert d.quantile(0.999) > d.quantile(0.99) > d.quantile(0.9)


def test_cdf_matches_dense_expm():
    spec = two_group_spec((7, 6), [[0.3, 0.1], [0.05, 0.4]], (1, 1))
    space, sub, init = build_subgenerator(spec, 0.85)
    d = SpreadDistribution(init, sub)
    F = sub.to_dense()
    h = np.array(init.weights)
    for t in (0.1, 1.0, 4.0, 12.0):
        ref = h @ expm(F * t) @ np.ones(sub.dimension)
        assert_allclose(d.survival(t), ref, atol=1e-12)
    # moment oracle via dense solve
    inv = np.linalg.inv(-F)
    assert_allclose(d.moment(1), h @ inv @ np.ones(sub.dimension), rtol=1e-12)
    assert_allclose(d.moment(2), 2 * h @ inv @ inv @ np.ones(sub.dimension), rtol=1e-12)


@pytest.mark.parametrize("size", [3, 4, 7, 20, 57, 100, 143, 200])
def test_mean_and_variance_match_closed_form(size):
    rate = 0.01
    d = spread_distribution(homogeneous_spec(size, rate), 1.0)
    assert_allclose(d.mean(), homog_mean_completion(size, 1, rate), rtol=1e-10)
    assert_allclose(d.variance(), homog_variance(size, 1, rate), rtol=1e-8)


def test_decay_rate_examples():
    assert analysis.decay_rate(spread_distribution(homogeneous_spec(4, 1.0), 1.0)) == 3.0
    size, seeds, rate, alpha = 30, 3, 0.2, 0.7
    d = spread_distribution(homogeneous_spec(size, rate, seeds), alpha)
    i = np.arange(seeds, math.ceil(alpha * size))
    assert_allclose(d.decay_rate(), np.min(i * (size - i) * rate), rtol=1e-14)


def test_tail_slope_literal_two_nodes():
    d = spread_distribution(homogeneous_spec(2, 0.7), 1.0)
    t = d.quantile(1 - 1e-6)
    assert abs(-math.log(d.survival(t)) / t / d.decay_rate() - 1) < 0.01


@pytest.mark.parametrize("spec, alpha", [
    (homogeneous_spec(10, 1.0), 0.5),
    (homogeneous_spec(30, 0.1, 2), 0.8),
    (two_group_spec((6, 5), [[0.3, 0.1], [0.05, 0.4]], (1, 0)), 0.9),
    (homogeneous_spec(10, 1.0), 1.0),
    (homogeneous_spec(25, 0.3), 1.0),
])
def test_tail_slope(spec, alpha):
    # survival ~ C t^(m-1) exp(-D t) where m is how often the minimum outflow repeats
    d = spread_distribution(spec, alpha, tolerance=1e-15)
    diag = -d.subgen.diagonal
    m = int(np.sum(np.isclose(diag, diag.min(), rtol=1e-12)))
    t_a, t_b = d.quantile(1 - 1e-9), d.quantile(1 - 1e-12)
    slope = (math.log(d.survival(t_a)) - math.log(d.survival(t_b))) / (t_b - t_a)
    slope += (m - 1) * math.log(t_b / t_a) / (t_b - t_a)
    assert abs(slope / d.decay_rate() - 1) < 0.01


def test_decay_rate_vs_vertex_formula():
    from spreadtime.hetero import decay_rate_theorem3
    for gamma in (1.0, 3.0, 6.5):
        for alpha in (0.5, 0.975, 1.0):
            spec = two_group_spec((20, 20), special_case_rates(1.0, gamma), (1, 0))
            d = spread_distribution(spec, alpha)
            assert_allclose(d.decay_rate(), decay_rate_theorem3(40, 1.0, gamma, alpha), rtol=1e-12)


def test_monte_carlo_four_nodes():
    d = spread_distribution(homogeneous_spec(4, 1.0), 1.0)
    n = 10 ** 6
    hits = simulate_completion(homogeneous_spec(4, 1.0), 1.0, SimConfig(n, rng_seed=11)).samples <= 1.0
    p = hits.mean()
    se = math.sqrt(p * (1 - p) / n)
    assert abs(d.cdf(1.0) - p) < 3 * se


@pytest.mark.parametrize("gamma", [0.5, 2.0, 10.0])
def test_distribution_scaling(gamma):
    spec = two_group_spec((8, 9), [[0.3, 0.1], [0.2, 0.05]], (1, 1))
    d = spread_distribution(spec, 0.8)
    ds = spread_distribution(spec.scaled(gamma), 0.8)
    t = np.linspace(0, 3 * d.quantile(0.999) / gamma, 50)
    assert_allclose(ds.cdf(t), d.cdf(gamma * t), atol=1e-10)
    assert_allclose(ds.moment(2), gamma ** -2 * d.moment(2), rtol=1e-10)
    assert_allclose(ds.quantile(0.95), d.quantile(0.95) / gamma, rtol=3e-9)
    assert_allclose(ratio(ds, 0.95), ratio(d, 0.95), rtol=3e-9)
    # scaling the distribution object directly gives the same law
    assert_allclose(d.scaled(gamma).cdf(t), ds.cdf(t), atol=1e-12)


def test_mean_infected_limits():
    spec = two_group_spec((5, 6), [[0.3, 0.1], [0.2, 0.05]], (1, 1))
    assert mean_infected(spec, 0.0) == pytest.approx(2.0, abs=1e-12)
    assert mean_infected(spec, 1e4) == pytest.approx(11.0, abs=1e-9)
    t = np.linspace(0, 20, 30)
    m = mean_infected(spec, t)
    assert np.all(np.diff(m) >= -1e-12)


def test_mean_infected_matches_simulation_mean_count():
    # M(t) = sum_i Pr{T_{i/N} <= t}; check the identity directly per target
    spec = homogeneous_spec(6, 0.5)
    t = 1.3
    direct = 1.0 + sum(spread_distribution(spec, target=i).cdf(t) for i in range(2, 7))
    assert_allclose(mean_infected(spec, t), direct, atol=1e-11)


@pytest.mark.parametrize("gamma", [0.5, 3.0])
def test_mean_infected_and_speed_scaling(gamma):
    spec = homogeneous_spec(12, 0.2)
    t = np.linspace(0.0, 4.0, 20)
    assert_allclose(mean_infected(spec.scaled(gamma), t), mean_infected(spec, gamma * t), atol=1e-9)
    ts = np.linspace(0.2, 4.0, 8)
    assert_allclose(spread_speed(spec.scaled(gamma), ts), gamma * spread_speed(spec, gamma * ts), rtol=1e-6)


def test_spread_speed_shape():
    spec = homogeneous_spec(12, 0.2)
    assert spread_speed(spec, 1.5) > 0
    assert spread_speed(spec, 200.0) == pytest.approx(0.0, abs=1e-8)
    # derivative at zero: only seed contacts matter, N-s susceptibles at rate s lam
    assert_allclose(spread_speed(spec, 0.0), 11 * 0.2, rtol=1e-6)


def test_min_seeds_paper(homog100):
    assert min_seeds_for_bound(homog100, 0.9, 0.99, 278.0) == (1,)
    s = min_seeds_for_bound(homog100, 0.9, 0.99, 137.0)[0]
    assert abs(s - 10) <= 2
    assert min_seeds_for_bound(homog100, 0.9, 0.99, 1e5) == (1,)


def test_min_seeds_is_minimal():
    spec = homogeneous_spec(30, 0.01)
    s = min_seeds_for_bound(spec, 0.9, 0.9, 25.0)[0]
    g = lambda k: spread_distribution(spec.with_seeds([k]), 0.9).quantile(0.9)
    assert g(s) <= 25.0 < g(s - 1)


def test_min_seeds_errors(homog100):
    with pytest.raises(Infeasible):
        min_seeds_for_bound(homog100, 0.9, 0.99, 0.01)
    with pytest.raises(ValueError):
        min_seeds_for_bound(homog100, 0.9, 0.99, -1.0)
    spec = two_group_spec((10, 10), [[0.1, 0.1], [0.1, 0.1]], (1, 0))
    with pytest.raises(ValueError):
        min_seeds_for_bound(spec, 0.9, 0.9, 10.0)
    seeds = min_seeds_for_bound(spec, 0.9, 0.9, 3.0, priority=(1, 0))
    assert seeds[0] == 0 or seeds[1] == 10


def test_rate_scale_round_trip(homog100):
    d = spread_distribution(homog100, 0.9)
    g = d.quantile(0.99)
    assert_allclose(rate_scale_for_bound(d, 0.99, g), 1.0, rtol=1e-14)
    assert_allclose(rate_scale_for_bound(d, 0.99, g / 2), 2.0, rtol=1e-14)
    gamma = rate_scale_for_bound(d, 0.99, 100.0)
    scaled = spread_distribution(homog100.scaled(gamma), 0.9)
    assert_allclose(scaled.quantile(0.99), 100.0, rtol=1e-8)


def test_population_monotonicity():
    rate = 0.01
    gs, means = [], []
    for n in (4, 8, 16, 32, 64):
        d = spread_distribution(homogeneous_spec(n, rate), 1.0)
        gs.append(d.quantile(0.99))
        means.append(d.mean())
    assert np.all(np.diff(gs) < 0)
    assert np.all(np.diff(means) < 0)


@pytest.mark.parametrize("size", [16, 32, 64, 128, 256, 512, 1024])
def test_population_scaling_order(size):
    rate = 0.37
    value = size * homog_mean_completion(size, 1, rate) * rate / math.log(size)
    assert 1 <= value <= 4


def test_concurrent_evaluation_is_consistent():
    from concurrent.futures import ThreadPoolExecutor
    spec = homogeneous_spec(40, 0.05)
    ts = np.linspace(0.1, 20, 64)
    ref = spread_distribution(spec, 0.9).cdf(ts)
    d = spread_distribution(spec, 0.9)
    with ThreadPoolExecutor(8) as pool:
        vals = list(pool.map(d.cdf, ts[::-1]))
    assert_allclose(vals[::-1], ref, rtol=0, atol=0)


def test_table1_mean_rate_guaranteed_time():
    d = spread_distribution(homogeneous_spec(100, TABLE1_MEAN), 0.9)
    assert 250 < d.quantile(0.99) < 306
