"""Clear one market under the exogenous, endogenous and joint mechanisms.

Owners report reserve prices; the mechanism pays virtual costs and selects
the coalition minimising its modelled loss (plus payments for joint).
"""

import numpy as np

from dpmarket.mechanisms import MarketInstance, PriorSpec, check_monotonicity, solve
from dpmarket.valuation import HoeffdingParams

rng = np.random.default_rng(3)
n = 8
w = rng.uniform(0.5, 3.0, n)
theta_bar = 0.8
theta = rng.uniform(0, theta_bar, n)
prior = PriorSpec.uniform(theta_bar, n)
print("W     ", np.round(w, 2))
print("theta ", np.round(theta, 2))
print("psi   ", np.round(prior.virtual_costs(theta), 2))

for mechanism, budget in (("exogenous", 2.0), ("endogenous", 3.0), ("joint", 3.0)):
    for population in ("finite", "infinite"):
        inst = MarketInstance(w, prior, mechanism, budget=budget, hoeffding=HoeffdingParams(0.95, population, n))
        res = solve(inst, theta)
        print(
            f"{mechanism:10s} {population:8s} buys {res.selected or 'nothing'}"
            f"  paid {res.total_payment:.3f}  modelled loss {res.v_bound:.3f}  objective {res.objective:.3f}"
        )

inst = MarketInstance(w, prior, "joint", budget=3.0)
ok = all(check_monotonicity(inst, theta, i, theta_bar) for i in range(n) if theta[i] < theta_bar)
print("\nraising any single reserve to the prior's upper bound never adds that owner:", ok)
