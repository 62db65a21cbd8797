import math

import numpy as np
import pytest

from dpmarket.mechanisms import (
    CustomPrior,
    MarketInstance,
    PriorSpec,
    UniformPrior,
    bound_constant,
    check_monotonicity,
    pointwise_objective,
    reference_budget_bound,
    reference_budget_upper,
    solve,
    virtual_cost,
)
from dpmarket.valuation import HoeffdingParams


def instance(w, upper, mechanism="joint", budget=10.0, population="finite", k=1.0, delta=0.95):
    w = np.asarray(w, dtype=float)
    return MarketInstance(
        w, PriorSpec.uniform(upper, w.size), mechanism, budget=budget, k=k,
        hoeffding=HoeffdingParams(delta, population, w.size),
    )


def test_virtual_cost_uniform():
    assert virtual_cost(0.5, PriorSpec.uniform(2.0, 1), 0) == 1.0
    assert virtual_cost(0.0, PriorSpec.uniform(1.0, 1), 0) == 0.0
    assert virtual_cost(0.75, PriorSpec.uniform(1.0, 1), 0) == 1.5
    with pytest.raises(ValueError):
        virtual_cost(1.5, PriorSpec.uniform(1.0, 1), 0)


def test_point_mass_prior():
    assert UniformPrior(0.0).virtual_cost(0.0) == 0.0


def test_custom_prior_regularity():
    # F(t) = (t + t^2)/2 on [0, 1]: psi = t + (t + t^2)/(1 + 2t), regular
    ok = CustomPrior(lambda t: 0.5 * (t + t * t), lambda t: 0.5 + t, 0.0, 1.0)
    assert ok.virtual_cost(0.5) == pytest.approx(0.875)
    # a density jump from 0.5 to 1.5 makes psi drop at t = 0.5
    bad = CustomPrior(
        lambda t: 0.5 * t if t < 0.5 else 0.25 + 1.5 * (t - 0.5),
        lambda t: 0.5 if t < 0.5 else 1.5,
        0.0, 1.0,
    )
    with pytest.raises(ValueError):
        PriorSpec([bad])
    PriorSpec([ok])


def test_objective_outside_option():
    inst = instance([1.0, 2.0], [1, 1], budget=3.0)
    assert pointwise_objective([1, 0, 0], inst, [0.2, 0.3]) == 3.0


def test_objective_full_coalition():
    inst = instance([1.0, 2.0, 0.5], [1, 1, 1], budget=3.0)
    theta = np.array([0.1, 0.2, 0.3])
    assert pointwise_objective([0, 1, 1, 1], inst, theta) == pytest.approx(np.sum(2 * theta))


def test_objective_rejects_empty():
    with pytest.raises(ValueError):
        pointwise_objective([0, 0, 0], instance([1.0, 2.0], [1, 1]), [0.1, 0.1])


def test_two_owner_infinite_example():
    inst = instance([1.0, 10.0], [1, 1], budget=100.0, population="infinite")
    c = bound_constant(1.0, inst.hoeffding, 2)
    theta = [0.0, 0.0]
    assert pointwise_objective([0, 1, 0], inst, theta) == pytest.approx(c)
    assert pointwise_objective([0, 1, 1], inst, theta) == pytest.approx(c * math.sqrt(101) / 2)
    assert solve(inst, theta).selected == (0,)


def test_bound_constants():
    params = HoeffdingParams(0.95, "finite", 8)
    assert bound_constant(2.0, params, 8) == pytest.approx(2 * math.sqrt(math.log(40) / 14))
    inf = HoeffdingParams(0.95, "infinite", 8)
    assert bound_constant(2.0, inf, 8) == pytest.approx(2 * math.sqrt(math.log(40) / 2))


def test_joint_free_equal_data_buys_everything():
    res = solve(instance(np.ones(5), np.ones(5), budget=1.0), np.zeros(5))
    assert res.selected == (0, 1, 2, 3, 4)
    assert res.objective == 0.0 and res.q[0] == 0


def test_exogenous_infeasible():
    res = solve(instance([1.0, 1.0], [1, 1], "exogenous", budget=0.1), [0.3, 0.4])
    assert not res.feasible and res.selected == () and res.total_payment == 0.0 and res.q[0] == 1


def test_endogenous_fallback():
    res = solve(instance([1.0, 1.0], [1, 1], "endogenous", budget=0.01), [0.5, 0.5])
    assert res.outside_option and res.feasible and res.objective == 0.01


def test_result_invariants_on_random_instances():
    rng = np.random.default_rng(1)
    for it in range(300):
        n = int(rng.integers(1, 9))
        mech = ("exogenous", "endogenous", "joint")[it % 3]
        upper = rng.uniform(0.1, 2, n)
        theta = rng.uniform(0, 1, n) * upper
        inst = instance(rng.uniform(0, 3, n), upper, mech, float(rng.uniform(0.1, 4)), ("finite", "infinite")[it % 2])
        res = solve(inst, theta)
        psi = inst.prior.virtual_costs(theta)
        assert (res.q[0] == 1) == (res.q[1:].sum() == 0)
        assert np.all(res.t[res.q[1:] == 0] == 0)
        assert np.all(res.t >= theta * res.q[1:])  # IR
        np.testing.assert_allclose(res.t, res.q[1:] * psi)
        if mech == "exogenous" and res.feasible:
            assert res.total_payment <= inst.budget + 1e-9
        if mech != "exogenous" and not res.outside_option:
            # joint only buys when that beats B_ref, so it is budget feasible too
            assert res.v_bound + res.total_payment <= inst.budget + 1e-9


def test_scale_covariance():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = 6
        w, upper = rng.uniform(0.1, 3, n), rng.uniform(0.1, 2, n)
        theta = rng.uniform(0, 1, n) * upper
        base = instance(w, upper, "joint", 2.0)
        lam = float(rng.uniform(0.2, 5))
        scaled = instance(lam * w, lam * upper, "joint", 2.0 * lam)
        a, b = solve(base, theta), solve(scaled, lam * theta)
        assert a.selected == b.selected
        assert b.objective == pytest.approx(lam * a.objective)


def test_tie_break_prefers_fewest_then_lexicographic():
    # identical owners, exogenous with W=0: every subset ties at objective 0
    res = solve(instance(np.zeros(4), np.ones(4), "exogenous", budget=10.0), np.full(4, 0.1))
    assert res.selected == (0,)


def test_enumeration_guard():
    with pytest.raises(ValueError):
        solve(instance(np.ones(25), np.ones(25), "exogenous", budget=1.0), np.zeros(25))


def test_monotonicity_examples():
    inst = instance([1.0], [2.0], "exogenous", budget=1.0)
    assert solve(inst, [0.2]).selected == (0,)
    assert check_monotonicity(inst, [0.2], 0, 1.5)
    assert solve(inst, [1.5]).selected == ()
    with pytest.raises(ValueError):
        check_monotonicity(inst, [0.2], 0, 0.1)


def test_reference_budget_bounds():
    assert reference_budget_bound(5.0, 1.0, 0.0) == 5.0
    assert reference_budget_bound(5.0, 0.0, 1.27) == 5.0
    assert reference_budget_bound(5.0, 1.0, 1.27) == pytest.approx(3.73)
    assert reference_budget_upper(2.0, 1.5) == 3.0


def test_instance_validation():
    with pytest.raises(ValueError):
        instance([-1.0], [1.0])
    with pytest.raises(ValueError):
        instance([1.0], [1.0], "auction")
    with pytest.raises(ValueError):
        instance([1.0], [1.0], budget=-1.0)
