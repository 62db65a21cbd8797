import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpmarket.distances import wasserstein1_gaussian
from dpmarket.distributions import DistributionSpec, DpParams
from dpmarket.valuation import (
    HoeffdingParams,
    OwnerProfile,
    dp_wd_term,
    effective_wd,
    hoeffding_bound,
    hoeffding_bounds_all,
    lipschitz_loss_bound,
)

GAUSS = DistributionSpec("gaussian", 0.0, 1.0)


def owner(w_raw=1.0, dp=DpParams("laplace", 2.0), spec=GAUSS):
    return OwnerProfile(0, spec, w_raw, dp)


def test_dp_term_examples():
    assert dp_wd_term(DpParams("laplace", 4.0, sensitivity=2.0)) == 0.5
    gauss = DpParams("gaussian", 1.0, delta_dp=1.25 * math.exp(-math.pi))
    assert dp_wd_term(gauss) == pytest.approx(2.0)
    assert dp_wd_term(DpParams("laplace", 1e12)) < 1e-11


def test_dp_term_is_w1_of_the_noise():
    # W1 between the noise and a point mass at 0 is E|noise|.
    lap = DpParams("laplace", 2.0, sensitivity=3.0)
    assert dp_wd_term(lap) == pytest.approx(lap.noise_scale)
    gauss = DpParams("gaussian", 2.0, delta_dp=1e-5)
    assert dp_wd_term(gauss) == pytest.approx(gauss.noise_scale * math.sqrt(2 / math.pi))


def test_effective_wd_variants():
    assert effective_wd(owner(dp=DpParams("laplace", 0.5)), "dp_only") == 2.0
    assert effective_wd(owner(w_raw=1.3), "non_iid_only") == 1.3
    assert effective_wd(owner(w_raw=1.0, dp=DpParams("laplace", 2.0)), "upper_bound_dp") == 1.5


def test_effective_wd_exact_gaussian():
    # noise std sqrt(3): sigma_dp^2 = 2 ln(1.25/delta)/eps^2 = 3
    delta = 1.25 * math.exp(-1.5)
    o = owner(dp=DpParams("gaussian", 1.0, delta_dp=delta))
    assert o.dp.noise_scale == pytest.approx(math.sqrt(3))
    assert effective_wd(o, "exact_dp_gaussian", (0.0, 1.0)) == pytest.approx(wasserstein1_gaussian(0, 1, 0, 2))


def test_effective_wd_errors():
    uni = owner(spec=DistributionSpec("uniform", 0.0, 1.0), dp=DpParams("gaussian", 1.0, delta_dp=0.1))
    with pytest.raises(ValueError):
        effective_wd(uni, "exact_dp_gaussian", (0.0, 1.0))
    with pytest.raises(ValueError):
        effective_wd(owner(), "bogus")


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 10), st.floats(0.01, 100))
def test_upper_bound_dominates_raw(w_raw, eps):
    o = owner(w_raw=w_raw, dp=DpParams("laplace", eps))
    assert effective_wd(o, "upper_bound_dp") >= effective_wd(o, "non_iid_only")


def test_hoeffding_examples():
    w = np.zeros(8)
    w[0] = 1.0
    fin = HoeffdingParams(0.95, "finite", 8)
    inf = HoeffdingParams(0.95, "infinite", 8)
    assert hoeffding_bound(w, [0], fin) == pytest.approx(math.sqrt(7 / 8 * math.log(40) / 2), abs=1e-12)
    assert hoeffding_bound(w, [0], inf) == pytest.approx(math.sqrt(math.log(40) / 2), abs=1e-12)
    assert hoeffding_bound(np.ones(8), range(8), fin) == 0.0
    with pytest.raises(ValueError):
        hoeffding_bound(w, [], fin)


def test_hoeffding_params_validation():
    with pytest.raises(ValueError):
        HoeffdingParams(1.0)
    with pytest.raises(ValueError):
        HoeffdingParams(0.5, "bogus")
    assert HoeffdingParams(0.0).log_term == pytest.approx(math.log(2))


def test_hoeffding_monotone_in_delta():
    w = np.array([1.0, 2.0, 0.5])
    values = [hoeffding_bound(w, [0, 2], HoeffdingParams(d, "finite", 3)) for d in (0.0, 0.3, 0.6, 0.9, 0.99)]
    assert np.all(np.diff(values) > 0)


def test_finite_below_infinite_and_homogeneous():
    rng = np.random.default_rng(1)
    w = rng.uniform(0, 3, 6)
    fin, inf = HoeffdingParams(0.9, "finite", 6), HoeffdingParams(0.9, "infinite", 6)
    for k in range(1, 7):
        for sel in itertools.combinations(range(6), k):
            assert hoeffding_bound(w, sel, fin) <= hoeffding_bound(w, sel, inf)
    assert hoeffding_bound(3 * np.ones(6), [2], fin) == pytest.approx(3 * hoeffding_bound(np.ones(6), [2], fin))


def test_bounds_all_matches_single():
    rng = np.random.default_rng(2)
    w = rng.uniform(0, 3, 5)
    for pop in ("finite", "infinite"):
        params = HoeffdingParams(0.95, pop, 5)
        table = hoeffding_bounds_all(w, params)
        assert math.isnan(table[0])
        for mask in range(1, 32):
            sel = [i for i in range(5) if mask >> i & 1]
            assert table[mask] == pytest.approx(hoeffding_bound(w, sel, params), abs=1e-12)


def test_lipschitz_bound():
    assert lipschitz_loss_bound(0, 5) == 0
    assert lipschitz_loss_bound(1, 1.27) == 1.27
    assert lipschitz_loss_bound(0.9, 2) == pytest.approx(1.8)
    with pytest.raises(ValueError):
        lipschitz_loss_bound(-1, 1)
