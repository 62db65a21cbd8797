"""Task losses and the loss gap between a coalition and the target data.

The loss of a dataset X is the expected loss on the target when the task
parameter is estimated from X. The gap is therefore never negative (up to
rounding): the target-estimated parameter is loss-optimal on the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distances import wasserstein1
from .distributions import EmpiricalSample

TASK_KINDS = ("mean_rmse", "median_mae", "quantile_mpl", "newsvendor")
VIOLATION_TOL = 1e-9


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    tau: float = 0.5
    c_under: float = 0.9
    c_over: float = 0.1
    k_lipschitz: float | None = None

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task {self.kind!r}")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if not (self.c_under > 0 and self.c_over > 0):
            raise ValueError("newsvendor costs must be positive")
        if self.k_lipschitz is None:
            object.__setattr__(self, "k_lipschitz", lipschitz_constant(self))
        elif not self.k_lipschitz > 0:
            raise ValueError("k_lipschitz must be positive")

    @property
    def label(self) -> str:
        if self.kind == "quantile_mpl":
            return f"mpl{round(self.tau * 100):02d}"
        return {"mean_rmse": "rmse", "median_mae": "mae", "newsvendor": "nv"}[self.kind]

    @property
    def level(self) -> float:
        """Quantile level of the estimator (pinball asymmetry)."""
        if self.kind == "quantile_mpl":
            return self.tau
        if self.kind == "newsvendor":
            return self.c_under / (self.c_under + self.c_over)
        return 0.5


def rmse() -> TaskSpec:
    return TaskSpec("mean_rmse")


def mae() -> TaskSpec:
    return TaskSpec("median_mae")


def mpl(tau: float) -> TaskSpec:
    return TaskSpec("quantile_mpl", tau=tau)


def newsvendor(c_under: float = 0.9, c_over: float = 0.1) -> TaskSpec:
    return TaskSpec("newsvendor", c_under=c_under, c_over=c_over)


@dataclass(frozen=True)
class LossReport:
    loss_p: float
    loss_t: float
    gap: float
    lipschitz_rhs: float
    violated: bool


def lipschitz_constant(task: TaskSpec) -> float:
    if task.kind in ("median_mae", "mean_rmse"):
        return 1.0
    if task.kind == "quantile_mpl":
        return max(task.tau, 1.0 - task.tau)
    return max(task.c_under, task.c_over)


def _sorted(x) -> np.ndarray:
    if isinstance(x, EmpiricalSample):
        return x.values
    v = np.sort(np.asarray(x, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("sample must be nonempty")
    return v


def empirical_quantile(values, level: float):
    """Type-1 (inverse ECDF) quantile of sorted ``values``; works row-wise on 2-D input."""
    v = np.asarray(values)
    n = v.shape[-1]
    k = max(int(math.ceil(n * level)), 1) - 1
    return v[..., k]


def estimate_parameter(sample, task: TaskSpec) -> float:
    v = _sorted(sample)
    if task.kind == "mean_rmse":
        return float(np.mean(v))
    return float(empirical_quantile(v, task.level))


def expected_loss(target, task: TaskSpec, param: float) -> float:
    x = _sorted(target)
    if task.kind == "mean_rmse":
        return float(np.sqrt(np.mean((x - param) ** 2)))
    if task.kind == "median_mae":
        return float(np.mean(np.abs(x - param)))
    if task.kind == "quantile_mpl":
        under, over = task.tau, 1.0 - task.tau
    else:
        under, over = task.c_under, task.c_over
    return float(np.mean(under * np.maximum(x - param, 0.0) + over * np.maximum(param - x, 0.0)))


def loss_gap(coalition, target, task: TaskSpec, wd: float | None = None) -> LossReport:
    if wd is None:
        wd = wasserstein1(coalition, target)
    loss_p = expected_loss(target, task, estimate_parameter(coalition, task))
    loss_t = expected_loss(target, task, estimate_parameter(target, task))
    gap = loss_p - loss_t
    rhs = task.k_lipschitz * wd
    return LossReport(loss_p, loss_t, gap, rhs, bool(gap > rhs + VIOLATION_TOL))


class TargetLosses:
    """Vectorised expected losses on one fixed target sample.

    Prefix sums over the sorted target turn each loss evaluation into a
    binary search, which is what makes 255-coalition tables cheap.
    """

    def __init__(self, target):
        self.x = _sorted(target)
        self.n = self.x.size
        self.mean = float(np.mean(self.x))
        self.var = float(np.mean((self.x - self.mean) ** 2))
        self.csum = np.concatenate(([0.0], np.cumsum(self.x)))

    def _parts(self, p):
        p = np.asarray(p, dtype=float)
        idx = np.searchsorted(self.x, p, side="right")
        below = idx * p - self.csum[idx]
        above = (self.csum[-1] - self.csum[idx]) - (self.n - idx) * p
        return np.maximum(above, 0.0) / self.n, np.maximum(below, 0.0) / self.n

    def loss(self, task: TaskSpec, p):
        p = np.asarray(p, dtype=float)
        if task.kind == "mean_rmse":
            return np.sqrt(self.var + (p - self.mean) ** 2)
        above, below = self._parts(p)
        if task.kind == "median_mae":
            return above + below
        if task.kind == "quantile_mpl":
            return task.tau * above + (1.0 - task.tau) * below
        return task.c_under * above + task.c_over * below

    def estimate(self, task: TaskSpec):
        if task.kind == "mean_rmse":
            return self.mean
        return float(empirical_quantile(self.x, task.level))


def estimate_rows(rows: np.ndarray, task: TaskSpec) -> np.ndarray:
    """Task parameter for each sorted row."""
    if task.kind == "mean_rmse":
        return rows.mean(axis=1)
    return empirical_quantile(rows, task.level)
