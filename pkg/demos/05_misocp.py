"""Build the MISOCP for a small joint market and check it against the closed form.

The problem is written as a plain-text dump that an external cone solver can
read; every binary selection is checked for objective and feasibility agreement.
"""

import itertools
import sys
import tempfile
from pathlib import Path

import numpy as np

from dpmarket.mechanisms import MarketInstance, PriorSpec
from dpmarket.misocp import build_misocp, check_reformulation_exactness
from dpmarket.valuation import HoeffdingParams

rng = np.random.default_rng(4)
n = 4
inst = MarketInstance(
    rng.uniform(0.5, 3, n), PriorSpec.uniform(1.0, n), "joint", budget=2.0,
    hoeffding=HoeffdingParams(0.95, "finite", n),
)
theta = rng.uniform(0, 1, n)
prob = build_misocp(inst, theta)
print(f"binaries {prob.n_binaries}, linear rows {len(prob.lin_rows)}, cone rows {len(prob.soc_rows)}, M = {prob.big_m:.4f}")

admissible = [np.array(q) for q in itertools.product((0, 1), repeat=n + 1) if 1 <= sum(q) <= n]
agree = sum(check_reformulation_exactness(prob, q, inst, theta) for q in admissible)
print(f"closed form and MISOCP agree on {agree}/{len(admissible)} selections")

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.gettempdir()) / "joint_n4.misocp"
prob.save(out)
print(f"dump written to {out}; first lines:")
print("".join(out.read_text().splitlines(keepends=True)[:8]))
