import io
import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from spreadtime import _kernels
from spreadtime.analysis import spread_distribution
from spreadtime.closedform import noncoop_ccdf, noncoop_mean, noncoop_variance
from spreadtime.errors import DegenerateReachability
from spreadtime.model import homogeneous_spec, two_group_spec
from spreadtime.sim import (
    SampleSet,
    SimConfig,
    empirical_cdf,
    ks_critical_value,
    ks_distance,
    simulate_completion,
    simulate_noncooperative,
    spec_fingerprint,
)

from conftest import TABLE1


@pytest.fixture(scope="module")
def n20():
    spec = homogeneous_spec(20, 0.05)
    return spec, simulate_completion(spec, 0.9, SimConfig(20_000, rng_seed=1))


def test_config_validation():
    for kw in ({"replications": 0}, {"replications": 2.5}, {"model": "gossip"}, {"rng_seed": -1}, {"workers": 0}):
        with pytest.raises(ValueError):
            SimConfig(**kw)


def test_exp1_mean():
    s = simulate_completion(homogeneous_spec(2, 1.0), 1.0, SimConfig(10 ** 6, rng_seed=2))
    assert abs(s.mean() - 1.0) < 0.004
    assert np.all(s.samples >= 0)


def test_ks_against_analytic(n20):
    spec, s = n20
    d = spread_distribution(spec, 0.9)
    assert ks_distance(s, d.cdf) < ks_critical_value(len(s))


def test_ks_negative_control(n20):
    spec, s = n20
    wrong = spread_distribution(spec.scaled(2.0), 0.9)
    assert ks_distance(s, wrong.cdf) > 0.1


def test_table1_mean_within_three_se(table1_spec):
    s = simulate_completion(table1_spec, 0.9, SimConfig(20_000, rng_seed=3))
    d = spread_distribution(table1_spec, 0.9)
    assert abs(s.mean() - d.mean()) < 3 * s.std_error()


def test_reproducible_and_worker_independent(table1_spec):
    cfg = SimConfig(5000, rng_seed=77)
    a = simulate_completion(table1_spec, 0.9, cfg)
    b = simulate_completion(table1_spec, 0.9, SimConfig(5000, rng_seed=77, workers=4))
    assert np.array_equal(a.samples, b.samples)
    assert a.fingerprint == b.fingerprint
    c = simulate_completion(table1_spec, 0.9, SimConfig(5000, rng_seed=78))
    assert not np.array_equal(a.samples, c.samples)


def test_replication_stream_is_index_based():
    spec = homogeneous_spec(15, 0.1)
    short = simulate_completion(spec, 0.8, SimConfig(1500, rng_seed=9)).samples
    long = simulate_completion(spec, 0.8, SimConfig(3000, rng_seed=9)).samples
    assert np.array_equal(short[:1024], long[:1024])


def test_numpy_and_numba_agree():
    if not _kernels.HAVE_NUMBA:
        pytest.skip("numba not installed")
    spec = two_group_spec((6, 7), [[0.3, 0.1], [0.05, 0.4]], (1, 1))
    u = np.random.default_rng(0).random((500, 11 - 2, 2))
    args = (u, spec.sizes.astype(float), np.asarray(spec.rates, dtype=float), spec.seeds.astype(float))
    assert_allclose(_kernels.NUMPY_KERNELS["simulate_block"](*args),
                    _kernels.NUMBA_KERNELS["simulate_block"](*args), rtol=1e-13)


def test_group_exchangeability():
    rates = np.array([[0.3, 0.1], [0.05, 0.4]])
    a = two_group_spec((6, 9), rates, (1, 0))
    b = two_group_spec((9, 6), rates[::-1, ::-1], (0, 1))
    sa = simulate_completion(a, 0.8, SimConfig(20_000, rng_seed=5))
    sb = simulate_completion(b, 0.8, SimConfig(20_000, rng_seed=6))
    d = spread_distribution(a, 0.8)
    assert ks_distance(sb, d.cdf) < ks_critical_value(len(sb))
    assert ks_distance(sa, d.cdf) < ks_critical_value(len(sa))


def test_trivial_completion_gives_zeros():
    s = simulate_completion(homogeneous_spec(10, 1.0, 5), 0.5, SimConfig(10))
    assert np.array_equal(s.samples, np.zeros(10))


def test_degenerate_reachability_detected():
    spec = two_group_spec((3, 3), [[1.0, 0.0], [1.0, 1.0]], (1, 0))
    # group 1 only infects itself and starts empty, so full completion is unreachable
    with pytest.raises(DegenerateReachability):
        simulate_completion(spec, 1.0, SimConfig(10))


def test_noncooperative():
    s = simulate_noncooperative(2, 0.5, SimConfig(50_000, rng_seed=1))
    assert ks_distance(s, lambda t: -np.expm1(-0.5 * np.asarray(t))) < ks_critical_value(len(s))
    s = simulate_noncooperative(50, 1.0, SimConfig(10 ** 5, rng_seed=2, model="non_cooperative"))
    sigma = math.sqrt(noncoop_variance(50, 1.0) / len(s))
    assert abs(s.mean() - noncoop_mean(50, 1.0)) < 3 * sigma
    assert ks_distance(s, lambda t: 1 - noncoop_ccdf(50, 1.0, t)) < 0.01
    assert s.model == "non_cooperative"


def test_empirical_cdf():
    x = np.array([3.0, 1.0, 2.0, 2.0])
    assert empirical_cdf(x, 0.5) == 0.0
    assert empirical_cdf(x, 3.0) == 1.0
    assert empirical_cdf(x, 2.0) == 0.75
    s = np.random.default_rng(1).random(1001)
    assert abs(empirical_cdf(s, np.median(s)) - 0.5) <= 1 / 1001
    with pytest.raises(ValueError):
        empirical_cdf(np.array([]), 1.0)


def test_ks_distance_properties():
    x = np.random.default_rng(4).exponential(size=10_000)
    assert ks_distance(x, lambda t: -np.expm1(-np.asarray(t))) < ks_critical_value(x.size)
    assert ks_distance(x, lambda t: empirical_cdf(x, t)) < 1e-15
    # scalar-only callables work too
    assert ks_distance(x[:50], lambda t: 1 - math.exp(-t)) >= 0
    with pytest.raises(ValueError):
        ks_distance(np.array([]), lambda t: t)


def test_ks_critical_value():
    assert_allclose(ks_critical_value(10 ** 5), 1.63 / math.sqrt(10 ** 5), rtol=2e-3)


def test_sample_set_serialization(table1_spec):
    s = simulate_completion(table1_spec, 0.9, SimConfig(20, rng_seed=3))
    buf = io.StringIO()
    s.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "completion_time_h"
    assert_allclose([float(v) for v in lines[1:]], s.samples, rtol=0)
    meta = json.loads(s.to_json())
    assert meta["fingerprint"] == spec_fingerprint(table1_spec, 0.9)
    assert meta["replications"] == 20
    assert np.all(np.diff(s.sorted()) >= 0)
    assert isinstance(s, SampleSet)


def test_fingerprint_depends_on_inputs(table1_spec):
    assert spec_fingerprint(table1_spec, 0.9) != spec_fingerprint(table1_spec, 0.8)
    assert spec_fingerprint(table1_spec, 0.9) != spec_fingerprint(table1_spec.scaled(2.0), 0.9)
