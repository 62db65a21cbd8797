import math

import numpy as np
import pytest

from dpmarket.distributions import (
    DistributionSpec,
    DpParams,
    EmpiricalSample,
    add_dp_noise,
    aggregate_euclidean,
    quantile,
    sample,
)


def test_gaussian_sample_mean():
    s = sample(DistributionSpec("gaussian", 0.0, 1.0), 100_000, seed=1)
    assert abs(s.values.mean()) < 0.02


def test_uniform_support():
    s = sample(DistributionSpec("uniform", 10.0, 3.0), 5000, seed=2)
    assert s.values.min() >= 10.0 and s.values.max() <= 13.0


def test_same_seed_same_sample():
    spec = DistributionSpec("exponential", 1.0, 2.0)
    assert sample(spec, 100, seed=7) == sample(spec, 100, seed=7)


def test_sample_is_sorted_and_read_only():
    s = sample(DistributionSpec("gaussian", 0.0, 1.0), 50, seed=3)
    assert np.all(np.diff(s.values) >= 0)
    with pytest.raises(ValueError):
        s.values[0] = 1.0


def test_exponential_mean_is_location_plus_scale():
    spec = DistributionSpec("exponential", 2.0, 3.0)
    assert spec.mean == 5.0
    assert abs(sample(spec, 200_000, seed=4).values.mean() - 5.0) < 0.05


def test_stream_isolation():
    spec = DistributionSpec("gaussian", 0.0, 1.0)
    a = sample(spec, 10, seed=np.random.default_rng(5))
    np.random.default_rng(99).normal(size=1000)
    b = sample(spec, 10, seed=np.random.default_rng(5))
    assert a == b


@pytest.mark.parametrize("bad", [
    dict(family="cauchy", location=0.0, scale=1.0),
    dict(family="gaussian", location=0.0, scale=0.0),
])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        DistributionSpec(**bad)


def test_empirical_sample_rejects_bad_input():
    with pytest.raises(ValueError):
        EmpiricalSample(np.array([]))
    with pytest.raises(ValueError):
        EmpiricalSample(np.array([1.0, np.nan]))


def test_quantiles():
    assert quantile(DistributionSpec("gaussian", 0.0, 1.0), 0.5) == 0.0
    assert quantile(DistributionSpec("uniform", 10.0, 3.0), 0.5) == 11.5
    assert quantile(DistributionSpec("exponential", 0.0, 2.0), 1 - math.exp(-1)) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ValueError):
        quantile(DistributionSpec("gaussian", 0.0, 1.0), 1.0)


def test_aggregate_identical_samples():
    s = sample(DistributionSpec("gaussian", 3.0, 1.0), 100, seed=6)
    assert aggregate_euclidean([s, s]) == s


def test_aggregate_constants():
    a = EmpiricalSample(np.full(10, 2.0))
    b = EmpiricalSample(np.full(10, 4.0))
    assert np.all(aggregate_euclidean([a, b]).values == 3.0)
    assert np.all(aggregate_euclidean([a, a, a]).values == 2.0)


def test_aggregate_moments():
    rng = np.random.default_rng(8)
    alphas = np.array([10.0, 12.0, 15.0])
    betas = np.array([1.0, 2.0, 3.0])
    samples = [sample(DistributionSpec("gaussian", a, b), 200_000, seed=rng) for a, b in zip(alphas, betas)]
    agg = aggregate_euclidean(samples).values
    assert agg.mean() == pytest.approx(alphas.mean(), abs=0.02)
    assert agg.var() == pytest.approx(np.sum(betas ** 2) / 9, rel=0.02)


def test_aggregate_uses_draw_order():
    a = EmpiricalSample(np.array([0.0, 1.0]))
    b = EmpiricalSample(np.array([1.0, 0.0]))
    assert np.all(aggregate_euclidean([a, b]).values == 0.5)


def test_aggregate_size_mismatch():
    with pytest.raises(ValueError):
        aggregate_euclidean([EmpiricalSample(np.zeros(3)), EmpiricalSample(np.zeros(4))])


def test_dp_noise_vanishes():
    s = sample(DistributionSpec("gaussian", 0.0, 1.0), 1000, seed=9)
    out = add_dp_noise(s, DpParams("laplace", 1e9), seed=10)
    assert np.max(np.abs(out.draws - s.draws)) < 1e-6


def test_laplace_noise_mean_abs():
    zeros = EmpiricalSample(np.zeros(1_000_000))
    noise = add_dp_noise(zeros, DpParams("laplace", 1.0), seed=11).draws
    assert abs(noise.mean()) < 0.01
    assert np.abs(noise).mean() == pytest.approx(1.0, rel=0.02)


def test_gaussian_noise_std():
    dp = DpParams("gaussian", 1.0, delta_dp=0.05)
    assert dp.noise_scale == pytest.approx(math.sqrt(2 * math.log(25)))
    noise = add_dp_noise(EmpiricalSample(np.zeros(400_000)), dp, seed=12).draws
    assert noise.std() == pytest.approx(2.537, rel=0.01)


def test_dp_params_validation():
    with pytest.raises(ValueError):
        DpParams("gaussian", 1.0)
    with pytest.raises(ValueError):
        DpParams("laplace", 0.0)
    with pytest.raises(ValueError):
        DpParams("exponential", 1.0)
