"""Run a small experiment through the harness and read back its CSV output.

The same run is available from the shell as ``dpmarket proc-exo --trials 5``.
"""

import csv
import sys
import tempfile
from pathlib import Path

from dpmarket.harness import ExperimentConfig, run_experiment

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp()) / "proc-exo"
config = ExperimentConfig(experiment="proc-exo", trials=5, rho=(0,), seed=7)
tables, manifest = run_experiment(config, out)
print(f"wrote {sorted(p.name for p in out.iterdir())}")

with open(out / "proc_exo_rho+0.csv") as fh:
    rows = list(csv.DictReader(fh))
print(f"{'budget':>7} " + " ".join(f"{m:>6}" for m in ("CEN", "FIN", "INF", "SMQ", "PTAS", "RAND")))
for budget in dict.fromkeys(r["budget"] for r in rows):
    wd = {r["mechanism"]: float(r["mean_wd"]) for r in rows if r["budget"] == budget}
    print(f"{float(budget):7.2f} " + " ".join(f"{wd[m]:6.3f}" for m in ("CEN", "FIN", "INF", "SMQ", "PTAS", "RAND")))
