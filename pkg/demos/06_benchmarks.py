"""Baselines on one synthetic market: central, random, SMQ, greedy knapsack and Shapley shares."""

import numpy as np

from dpmarket.benchmarks import (
    build_coalition_table,
    distance_characteristic,
    proportions,
    shapley,
    solve_central,
    solve_ptas,
    solve_random,
    solve_smq,
)

rng = np.random.default_rng(5)
n = 8
draws = rng.normal(rng.uniform(10, 16, (n, 1)), rng.uniform(1, 3, (n, 1)), (n, 5000))
table = build_coalition_table(draws)
singles = np.array([table.distances["wd"][(1 << i) - 1] for i in range(n)])
theta = rng.uniform(0, 1, n)
priced = table.priced(theta, 2 * theta)

for budget in (1.0, 2.0, 4.0):
    cen = solve_central(priced, "wd", budget)
    rand = solve_random(table.distances["wd"], priced.reserve_sum, budget)
    smq = solve_smq(1 / singles, np.ones(n), budget, theta)
    ptas = solve_ptas(theta, singles, budget)
    print(
        f"B={budget:.1f}  CEN WD {cen.metric:.3f} {cen.selected}  RAND WD {rand:.3f}"
        f"  SMQ buys {smq.accepted}  PTAS buys {ptas.accepted}"
    )

print("\nShapley proportions by distance:")
for kind in ("wd", "ks", "tvd", "jsd"):
    phi = shapley(distance_characteristic(table.distances[kind]), n)
    print(f"  {kind:4s}", np.round(proportions(phi), 3))
