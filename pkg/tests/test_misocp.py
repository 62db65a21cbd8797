import itertools

import numpy as np
import pytest

from dpmarket.mechanisms import MarketInstance, PriorSpec, pointwise_objective
from dpmarket.misocp import build_misocp, check_reformulation_exactness, implied_assignment
from dpmarket.valuation import HoeffdingParams


def instance(n, mechanism="joint", population="finite", seed=0, budget=3.0):
    rng = np.random.default_rng(seed)
    return MarketInstance(
        rng.uniform(0.1, 3, n), PriorSpec.uniform(np.ones(n)), mechanism, budget=budget,
        hoeffding=HoeffdingParams(0.95, population, n),
    )


@pytest.mark.parametrize("n,population,binaries,socs", [
    (2, "finite", 5, 1), (8, "finite", 9 + 56, 1), (8, "infinite", 9, 1),
])
def test_structure(n, population, binaries, socs):
    prob = build_misocp(instance(n, population=population), np.zeros(n))
    assert prob.n_binaries == binaries
    assert len(prob.soc_rows) == socs
    if population == "infinite":
        assert not any(name.startswith("r") for name in prob.binaries)


def test_rejects_exogenous():
    with pytest.raises(ValueError):
        build_misocp(instance(3, "exogenous"), np.zeros(3))


def test_big_m_covers_s():
    for population in ("finite", "infinite"):
        inst = instance(6, population=population, seed=1)
        prob = build_misocp(inst, np.zeros(6))
        for q in itertools.product((0, 1), repeat=7):
            if 1 <= sum(q) <= 6:
                assert implied_assignment(prob, np.array(q), inst)["s"] <= prob.big_m


@pytest.mark.parametrize("mechanism", ["joint", "endogenous"])
@pytest.mark.parametrize("population", ["finite", "infinite"])
def test_exhaustive_exactness_n4(mechanism, population):
    rng = np.random.default_rng(2)
    for seed in range(5):
        inst = instance(4, mechanism, population, seed=seed, budget=float(rng.uniform(0.5, 4)))
        theta = rng.uniform(0, 1, 4)
        prob = build_misocp(inst, theta)
        admissible = [q for q in itertools.product((0, 1), repeat=5) if 1 <= sum(q) <= 4]
        assert len(admissible) == 30
        for q in admissible:
            assert check_reformulation_exactness(prob, np.array(q), inst, theta)


def test_full_and_outside_objectives():
    inst = instance(4, seed=3, budget=2.5)
    theta = np.array([0.1, 0.2, 0.3, 0.4])
    prob = build_misocp(inst, theta)
    full = np.array([0, 1, 1, 1, 1])
    assert prob.objective_value(implied_assignment(prob, full, inst)) == pytest.approx(np.sum(2 * theta))
    out = np.array([1, 0, 0, 0, 0])
    assert prob.objective_value(implied_assignment(prob, out, inst)) == 2.5
    assert pointwise_objective(out, inst, theta) == 2.5


def test_broken_assignment_is_infeasible():
    inst = instance(3, seed=4)
    prob = build_misocp(inst, np.zeros(3))
    x = implied_assignment(prob, np.array([0, 1, 0, 1]), inst)
    x["s"] *= 0.5
    x["z1"] = x["z3"] = x["s"]
    assert not prob.feasible(x)


def test_text_dump(tmp_path):
    inst = instance(3, seed=5)
    prob = build_misocp(inst, np.zeros(3))
    path = tmp_path / "p.txt"
    prob.save(path)
    lines = path.read_text().splitlines()
    tags = {line.split()[0] for line in lines}
    assert tags == {"PARAM", "VAR", "OBJ", "LIN", "SOC", "BOUND"}
    assert sum(line.startswith("VAR") for line in lines) == len(prob.variables)
    assert sum(line.startswith("LIN") for line in lines) == len(prob.lin_rows)
    with pytest.raises(OSError):
        prob.save(tmp_path / "missing" / "p.txt")
