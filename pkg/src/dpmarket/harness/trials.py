"""Per-trial synthetic data, correlation coupling and reproducible substreams.

Every random quantity of trial ``t`` comes from a SeedSequence keyed by
``(master seed; family, t, stream)``, so a trial's data never depends on
which other trials run, in what order, or in which process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from ..benchmarks import CoalitionTable, build_coalition_table, members
from ..distributions import FAMILIES, DistributionSpec, sample
from ..tasks import TaskSpec, mae, mpl, newsvendor, rmse

# Substream ids within a trial.
DATA, THETA, EPS, NOISE = 0, 1, 2, 3

ALL_TASKS = (
    mae(), rmse(), mpl(0.1), mpl(0.3), mpl(0.7), mpl(0.8), mpl(0.9), newsvendor(),
)


def stream(seed: int, family: str, trial: int, kind: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(FAMILIES.index(family), trial, kind))
    return np.random.default_rng(ss)


def couple_correlation(values, upper: float, rho: int, seed) -> np.ndarray:
    """Uniform(0, upper) draws arranged to have rank correlation ``rho`` with ``values``.

    +1 gives the draws the rank order of ``values``, -1 the reverse order and
    0 leaves the independent draws as drawn.
    """
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("values must be finite")
    if rho not in (-1, 0, 1):
        raise ValueError("rho must be -1, 0 or 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    draws = rng.uniform(0.0, 1.0, size=values.size) * upper
    if rho == 0:
        return draws
    ranks = np.argsort(np.argsort(values, kind="stable"), kind="stable")
    ordered = np.sort(draws)
    if rho == -1:
        ordered = ordered[::-1]
    return ordered[ranks]


@dataclass
class Trial:
    """One synthetic market: owner specs, their draws and the coalition table."""

    seed: int
    index: int
    family: str
    specs: tuple
    draws: np.ndarray
    table: CoalitionTable

    @property
    def n(self) -> int:
        return len(self.specs)

    @cached_property
    def target(self) -> np.ndarray:
        return self._rows(self.table.full_mask)

    def _rows(self, mask: int) -> np.ndarray:
        idx = list(members(mask, self.n))
        return np.sort(self.draws[idx].mean(axis=0))

    @property
    def w(self) -> np.ndarray:
        """Individual distances W(X_i, X_T)."""
        return self.table.distances["wd"][[(1 << i) - 1 for i in range(self.n)]]

    def target_moments(self) -> tuple:
        """Mean and std of the aggregate implied by the owners' parameters."""
        mean = float(np.mean([s.mean for s in self.specs]))
        std = math.sqrt(sum(s.std ** 2 for s in self.specs)) / self.n
        return mean, std

    def reference_owner(self) -> int:
        """Worst-W owner, ties to the lowest index; its data is the buyer's reference."""
        return int(np.argmax(self.w))

    def reference_budget(self, task: TaskSpec) -> float:
        """B_ref = L(X_R) - L(X_T) with X_R the reference owner's data."""
        return float(self.table.gap[task.label][(1 << self.reference_owner()) - 1])

    def gap(self, task: TaskSpec, mask: int) -> float:
        if mask == 0:
            return math.nan
        return float(self.table.gap[task.label][mask - 1])


def owner_specs(rng: np.random.Generator, family: str, n: int, alpha_range, beta_range) -> tuple:
    alpha = rng.uniform(*alpha_range, size=n)
    beta = rng.uniform(*beta_range, size=n)
    return tuple(DistributionSpec(family, float(a), float(b)) for a, b in zip(alpha, beta))


@lru_cache(maxsize=512)
def make_trial(
    seed: int,
    family: str,
    index: int,
    n_owners: int = 8,
    sample_size: int = 10_000,
    alpha_range: tuple = (10.0, 16.0),
    beta_range: tuple = (1.0, 3.0),
    bins: int = 64,
) -> Trial:
    """Build (or fetch from the per-process cache) trial ``index``."""
    rng = stream(seed, family, index, DATA)
    specs = owner_specs(rng, family, n_owners, alpha_range, beta_range)
    draws = np.stack([sample(s, sample_size, rng).draws for s in specs])
    draws.setflags(write=False)
    table = build_coalition_table(draws, ALL_TASKS, bins=bins)
    return Trial(seed, index, family, specs, draws, table)


def trial_for(config, family: str, index: int) -> Trial:
    return make_trial(
        config.seed, family, index, config.n_owners, config.sample_size,
        tuple(config.alpha_range), tuple(config.beta_range), config.bins,
    )
