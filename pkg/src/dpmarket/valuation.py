"""Individual data value: WD with DP terms, Lipschitz loss bounds, Hoeffding coalition bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .distances import wasserstein1_gaussian
from .distributions import DistributionSpec, DpParams

VARIANTS = ("dp_only", "non_iid_only", "exact_dp_gaussian", "upper_bound_dp")


@dataclass(frozen=True)
class HoeffdingParams:
    delta: float = 0.95
    population: str = "finite"
    n_total: int = 8

    def __post_init__(self):
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must lie in [0, 1)")
        if self.population not in ("finite", "infinite"):
            raise ValueError(f"unknown population {self.population!r}")
        if self.n_total < 1:
            raise ValueError("n_total must be >= 1")

    @property
    def log_term(self) -> float:
        return math.log(2.0 / (1.0 - self.delta))


@dataclass
class OwnerProfile:
    id: int
    spec: DistributionSpec
    w_raw: float
    dp: DpParams
    reserve: float = 0.0
    w_effective: Optional[float] = None

    def __post_init__(self):
        if self.w_raw < 0 or self.reserve < 0:
            raise ValueError("w_raw and reserve must be nonnegative")
        if self.w_effective is None:
            self.w_effective = self.w_raw


def dp_wd_term(dp: DpParams) -> float:
    """W1 between the additive DP noise and a point mass at zero."""
    if dp.mechanism == "laplace":
        return dp.sensitivity / dp.epsilon
    if dp.delta_dp is None:
        raise ValueError("gaussian mechanism requires delta_dp")
    return 2.0 * dp.sensitivity / dp.epsilon * math.sqrt(math.log(1.25 / dp.delta_dp) / math.pi)


def effective_wd(
    owner: OwnerProfile,
    variant: str,
    target: Optional[tuple[float, float]] = None,
) -> float:
    """Owner value W_i under one of the four valuation variants.

    ``target`` is the (mean, std) of the gaussian aggregate, required for
    ``exact_dp_gaussian``.
    """
    if variant == "dp_only":
        return 1.0 / owner.dp.epsilon
    if variant == "non_iid_only":
        return owner.w_raw
    if variant == "upper_bound_dp":
        return owner.w_raw + dp_wd_term(owner.dp)
    if variant == "exact_dp_gaussian":
        if owner.spec.family != "gaussian":
            raise ValueError("exact_dp_gaussian needs a gaussian owner")
        if owner.dp.mechanism != "gaussian":
            raise ValueError("exact_dp_gaussian needs gaussian DP noise")
        if target is None:
            raise ValueError("exact_dp_gaussian needs the target (mean, std)")
        sigma = math.hypot(owner.spec.scale, owner.dp.noise_scale)
        return wasserstein1_gaussian(owner.spec.location, sigma, target[0], target[1])
    raise ValueError(f"unknown variant {variant!r}")


def hoeffding_bound(w, selected: Iterable[int], params: HoeffdingParams) -> float:
    """Probabilistic bound on W(X_P, X_T) from the individual distances of P."""
    w = np.asarray(w, dtype=float)
    idx = np.asarray(sorted(set(selected)), dtype=int)
    if idx.size == 0:
        raise ValueError("selection must be nonempty")
    if idx.min() < 0 or idx.max() >= w.size:
        raise ValueError("selection out of range")
    k = idx.size
    n = params.n_total
    total = float(np.sum(w[idx] ** 2)) * params.log_term / (2.0 * k * k)
    if params.population == "finite":
        total *= (n - k) / n
    return math.sqrt(max(total, 0.0))


def hoeffding_bounds_all(w, params: HoeffdingParams) -> np.ndarray:
    """Bound for every mask 1..2^N-1 (bit i = owner i); entry 0 is NaN."""
    w = np.asarray(w, dtype=float)
    sq = np.zeros(1)
    cnt = np.zeros(1)
    for wi in w:
        sq = np.concatenate((sq, sq + wi * wi))
        cnt = np.concatenate((cnt, cnt + 1))
    out = np.full(sq.size, np.nan)
    k = cnt[1:]
    val = sq[1:] * params.log_term / (2.0 * k * k)
    if params.population == "finite":
        val = val * (params.n_total - k) / params.n_total
    out[1:] = np.sqrt(np.maximum(val, 0.0))
    return out


def lipschitz_loss_bound(k: float, wd: float) -> float:
    if k < 0 or wd < 0:
        raise ValueError("k and wd must be nonnegative")
    return k * wd
