"""Task losses and the Lipschitz link between WD and the loss gap.

Each coalition of four owners is scored by the WD to the aggregate and by the
excess loss of estimating the task parameter on its data instead.
"""

import numpy as np

from dpmarket.benchmarks import build_coalition_table
from dpmarket.tasks import mae, mpl, newsvendor, rmse

rng = np.random.default_rng(2)
tasks = (mae(), rmse(), mpl(0.9), newsvendor())
for family, draws in (
    ("uniform", rng.uniform(0, 1, (4, 5000)) * rng.uniform(1, 3, (4, 1)) + rng.uniform(10, 16, (4, 1))),
    ("gaussian", rng.normal(rng.uniform(10, 16, (4, 1)), rng.uniform(1, 3, (4, 1)), (4, 5000))),
):
    table = build_coalition_table(draws, tasks)
    wd = table.distances["wd"]
    print(f"{family}: {table.masks.size} coalitions")
    for task in tasks:
        gap = table.gap[task.label]
        excess = (gap - task.k_lipschitz * wd)[:-1]  # drop the grand coalition (both zero)
        print(
            f"  {task.label:6s} K={task.k_lipschitz:.1f}  corr(WD, gap)={np.corrcoef(wd, gap)[0, 1]:.3f}"
            f"  violations {int(np.sum(excess > 1e-9))}  max gap - K*WD = {excess.max():.4f}"
        )
