"""Bayesian procurement mechanisms: virtual costs, point-wise solving, payments.

Owners are indexed 0..N-1 here; selection vectors carry the outside option
at position 0, so owner i sits at q[i + 1].

Given a binary selection the point-wise objective is closed form, so
:func:`solve` enumerates every subset exactly (bit i of a mask = owner i).
The MISOCP form lives in :mod:`dpmarket.misocp` and is checked against the
objectives defined here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .valuation import HoeffdingParams, OwnerProfile

MECHANISMS = ("exogenous", "endogenous", "joint")
MAX_ENUM_OWNERS = 24
TIE_RTOL = 1e-10
FEAS_TOL = 1e-12
REGULARITY_GRID = 1024


# -- priors -----------------------------------------------------------------


class ReservePrior:
    """Distribution of one owner's reserve price on [lower, upper].

    Subclasses (or :class:`CustomPrior`) supply ``cdf`` and ``pdf``.
    """

    lower: float
    upper: float

    def cdf(self, theta):
        raise NotImplementedError

    def pdf(self, theta):
        raise NotImplementedError

    def virtual_cost(self, theta: float) -> float:
        if not self.lower - 1e-12 <= theta <= self.upper + 1e-12:
            raise ValueError(f"reserve {theta} outside support [{self.lower}, {self.upper}]")
        dens = self.pdf(theta)
        if dens <= 0:
            raise ValueError(f"prior density vanishes at {theta}")
        return float(theta + self.cdf(theta) / dens)

    def sample(self, rng: np.random.Generator, size=None):
        # Inverse-CDF by bisection; subclasses override with something exact.
        u = rng.uniform(size=size)
        return np.vectorize(self._inverse_cdf)(u)

    def _inverse_cdf(self, u):
        lo, hi = self.lower, self.upper
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self.cdf(mid) < u:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def check_regular(self, points: int = REGULARITY_GRID) -> None:
        """Raise unless the virtual cost is nondecreasing on a grid over the support."""
        if self.upper <= self.lower:
            return
        grid = np.linspace(self.lower, self.upper, points)
        psi = np.array([self.virtual_cost(t) for t in grid])
        if np.any(np.diff(psi) < -1e-9 * max(1.0, float(np.max(np.abs(psi))))):
            raise ValueError("reserve prior is not regular (virtual cost decreases)")


class UniformPrior(ReservePrior):
    """U(lower, upper). ``upper == lower`` is a point mass whose virtual cost is the point itself."""

    def __init__(self, upper: float, lower: float = 0.0):
        if upper < lower or lower < 0:
            raise ValueError("need 0 <= lower <= upper")
        self.lower = float(lower)
        self.upper = float(upper)

    @property
    def degenerate(self) -> bool:
        return self.upper == self.lower

    def cdf(self, theta):
        if self.degenerate:
            return 1.0 if theta >= self.upper else 0.0
        return min(max((theta - self.lower) / (self.upper - self.lower), 0.0), 1.0)

    def pdf(self, theta):
        if self.degenerate:
            return math.inf
        return 1.0 / (self.upper - self.lower) if self.lower <= theta <= self.upper else 0.0

    def virtual_cost(self, theta: float) -> float:
        if self.degenerate:
            if abs(theta - self.lower) > 1e-12:
                raise ValueError(f"reserve {theta} outside point-mass support {self.lower}")
            return float(theta)
        return super().virtual_cost(theta)

    def sample(self, rng, size=None):
        return rng.uniform(self.lower, self.upper, size=size)

    def check_regular(self, points: int = REGULARITY_GRID) -> None:
        # psi = 2 theta - lower, increasing by construction.
        return None

    def __repr__(self):
        return f"UniformPrior(lower={self.lower}, upper={self.upper})"


class CustomPrior(ReservePrior):
    def __init__(self, cdf: Callable, pdf: Callable, lower: float, upper: float):
        self._cdf, self._pdf = cdf, pdf
        self.lower, self.upper = float(lower), float(upper)

    def cdf(self, theta):
        return float(self._cdf(theta))

    def pdf(self, theta):
        return float(self._pdf(theta))


@dataclass
class PriorSpec:
    """One reserve-price prior per owner, each checked for regularity."""

    priors: list

    def __post_init__(self):
        for p in self.priors:
            p.check_regular()

    @classmethod
    def uniform(cls, upper, n: Optional[int] = None) -> "PriorSpec":
        uppers = np.broadcast_to(np.asarray(upper, dtype=float), (n,) if n else np.shape(upper))
        return cls([UniformPrior(float(u)) for u in np.atleast_1d(uppers)])

    def __len__(self):
        return len(self.priors)

    def __getitem__(self, i) -> ReservePrior:
        return self.priors[i]

    def virtual_costs(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.size != len(self.priors):
            raise ValueError("one reserve price per owner required")
        return np.array([p.virtual_cost(t) for p, t in zip(self.priors, theta)])


def virtual_cost(theta: float, prior: PriorSpec, owner: int) -> float:
    return prior[owner].virtual_cost(theta)


# -- market instance and result ---------------------------------------------


@dataclass
class MarketInstance:
    """Inputs to a mechanism.

    ``budget`` is B for the exogenous mechanism and B_ref = B_M(X_R) for the
    endogenous and joint ones. ``w`` holds the owners' effective distances.
    """

    w: np.ndarray
    prior: PriorSpec
    mechanism: str = "joint"
    budget: float = 0.0
    k: float = 1.0
    hoeffding: HoeffdingParams = field(default_factory=HoeffdingParams)
    owners: Optional[Sequence[OwnerProfile]] = None

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.w.ndim != 1 or self.w.size == 0:
            raise ValueError("need a nonempty vector of owner distances")
        if np.any(self.w < 0):
            raise ValueError("owner distances must be nonnegative")
        if len(self.prior) != self.w.size:
            raise ValueError("one prior per owner required")
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")
        if self.mechanism != "exogenous" and not self.k > 0:
            raise ValueError("Lipschitz constant must be positive")
        if self.hoeffding.n_total != self.w.size:
            self.hoeffding = HoeffdingParams(self.hoeffding.delta, self.hoeffding.population, self.w.size)

    @classmethod
    def from_owners(cls, owners: Sequence[OwnerProfile], prior: PriorSpec, **kwargs) -> "MarketInstance":
        w = np.array([o.w_effective for o in owners], dtype=float)
        return cls(w=w, prior=prior, owners=list(owners), **kwargs)

    @property
    def n(self) -> int:
        return self.w.size

    @property
    def population(self) -> str:
        return self.hoeffding.population

    def replace(self, **changes) -> "MarketInstance":
        fields = dict(
            w=self.w, prior=self.prior, mechanism=self.mechanism, budget=self.budget,
            k=self.k, hoeffding=self.hoeffding, owners=self.owners,
        )
        fields.update(changes)
        return MarketInstance(**fields)


@dataclass
class MechanismResult:
    q: np.ndarray
    t: np.ndarray
    v_bound: float
    objective: float
    feasible: bool

    @property
    def selected(self) -> tuple:
        return tuple(int(i) for i in np.flatnonzero(self.q[1:]))

    @property
    def outside_option(self) -> bool:
        return bool(self.q[0])

    @property
    def total_payment(self) -> float:
        return float(np.sum(self.t))


def bound_constant(k: float, params: HoeffdingParams, n: int) -> float:
    """C^FIN = K sqrt(L / (2(N-1))) or C^INF = K sqrt(L / 2), L = ln(2/(1-delta))."""
    if params.population == "infinite":
        return k * math.sqrt(params.log_term / 2.0)
    if n <= 1:
        return 0.0
    return k * math.sqrt(params.log_term / (2.0 * (n - 1)))


def modelled_loss(sum_w2, count, n: int, c: float, population: str):
    """C * g(q) from the sum of squared distances and the number selected."""
    sum_w2 = np.asarray(sum_w2, dtype=float)
    count = np.asarray(count, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if population == "finite":
            inner = (n - count) * sum_w2
        else:
            inner = sum_w2
        out = c * np.sqrt(np.maximum(inner, 0.0)) / count
    return np.where(count > 0, out, 0.0)


def _as_selection(q, n: int) -> np.ndarray:
    q = np.asarray(q, dtype=int).ravel()
    if q.size != n + 1 or np.any((q != 0) & (q != 1)):
        raise ValueError(f"selection must be a binary vector of length {n + 1}")
    return q


def pointwise_objective(q, instance: MarketInstance, theta) -> float:
    """Point-wise objective of the instance's mechanism for a binary selection.

    Joint: q0 B_ref + C g(q) + sum q_i psi_i, with g = 0 when no owner is
    selected. Endogenous drops the payment term. Exogenous has no outside
    option and is C g(q) alone (infinite when q0 = 1).
    """
    n = instance.n
    q = _as_selection(q, n)
    if not 1 <= q.sum() <= n:
        raise ValueError("selection must satisfy 1 <= sum(q) <= N")
    sel = q[1:].astype(bool)
    if instance.mechanism == "exogenous" and q[0] == 1:
        return math.inf
    c = bound_constant(instance.k, instance.hoeffding, n)
    v = float(modelled_loss(np.sum(instance.w[sel] ** 2), sel.sum(), n, c, instance.population))
    total = q[0] * float(instance.budget) + v
    if instance.mechanism == "joint" and sel.any():
        psi = instance.prior.virtual_costs(theta)
        total += float(np.sum(psi[sel]))
    return total


def pointwise_feasible(q, instance: MarketInstance, theta) -> bool:
    """Budget feasibility of a selection (the exogenous and endogenous budget rows)."""
    n = instance.n
    q = _as_selection(q, n)
    sel = q[1:].astype(bool)
    if not 1 <= q.sum() <= n:
        return False
    if instance.mechanism == "joint":
        return True
    psi = instance.prior.virtual_costs(theta)
    spend = float(np.sum(psi[sel]))
    tol = FEAS_TOL * max(1.0, float(instance.budget))
    if instance.mechanism == "exogenous":
        return q[0] == 0 and spend <= instance.budget + tol
    c = bound_constant(instance.k, instance.hoeffding, n)
    v = float(modelled_loss(np.sum(instance.w[sel] ** 2), sel.sum(), n, c, instance.population))
    return v + spend <= instance.budget + tol


# -- exhaustive solver ------------------------------------------------------


def subset_tables(w: np.ndarray, psi: np.ndarray):
    """Popcount, sum W^2 and sum psi for every mask, built by doubling."""
    cnt = np.zeros(1, dtype=np.int64)
    sq = np.zeros(1)
    ps = np.zeros(1)
    for wi, pi in zip(w, psi):
        cnt = np.concatenate((cnt, cnt + 1))
        sq = np.concatenate((sq, sq + wi * wi))
        ps = np.concatenate((ps, ps + pi))
    return cnt, sq, ps


def pick_tie_broken(masks: np.ndarray, objective: np.ndarray, counts: np.ndarray, n: int) -> Optional[int]:
    """Lowest objective, then fewest owners, then lexicographically smallest owner set.

    Objectives within a relative 1e-10 of the minimum count as tied. Returns
    the winning mask or None when nothing is finite.
    """
    ok = np.isfinite(objective)
    if not ok.any():
        return None
    masks, objective, counts = masks[ok], objective[ok], counts[ok]
    best = objective.min()
    tied = objective <= best + TIE_RTOL * max(1.0, abs(best))
    masks, counts = masks[tied], counts[tied]
    masks = masks[counts == counts.min()]
    # Same-size sets: the lexicographically smallest sorted tuple contains the
    # smallest owner that any candidate contains, and so on.
    for i in range(n):
        has = (masks >> i) & 1 == 1
        if has.any() and not has.all():
            masks = masks[has]
        if masks.size == 1:
            break
    return int(masks[0])


def _result(n, mask, psi, v_bound, objective, feasible) -> MechanismResult:
    q = np.zeros(n + 1, dtype=int)
    if mask is None or mask == 0:
        q[0] = 1
    else:
        q[1:] = (mask >> np.arange(n)) & 1
    t = q[1:] * psi
    return MechanismResult(q=q, t=t.astype(float), v_bound=v_bound, objective=objective, feasible=feasible)


def solve(instance: MarketInstance, theta) -> MechanismResult:
    """Exact point-wise optimum by enumerating every owner subset.

    Payments are t_i = q_i psi_i(theta_i). The exogenous mechanism reports
    ``feasible=False`` with nothing bought when no subset fits the budget.
    """
    n = instance.n
    if n > MAX_ENUM_OWNERS:
        raise ValueError(f"exhaustive solve supports at most {MAX_ENUM_OWNERS} owners, got {n}")
    psi = instance.prior.virtual_costs(theta)
    c = bound_constant(instance.k, instance.hoeffding, n)
    cnt, sq, ps = subset_tables(instance.w, psi)
    masks = np.arange(1, cnt.size, dtype=np.int64)
    cnt, sq, ps = cnt[1:], sq[1:], ps[1:]
    v = modelled_loss(sq, cnt, n, c, instance.population)
    budget = float(instance.budget)
    tol = FEAS_TOL * max(1.0, budget)

    if instance.mechanism == "exogenous":
        obj = np.where(ps <= budget + tol, v, np.inf)
        mask = pick_tie_broken(masks, obj, cnt, n)
        if mask is None:
            return _result(n, None, psi, math.nan, math.inf, False)
        return _result(n, mask, psi, float(v[mask - 1]), float(obj[mask - 1]), True)

    if instance.mechanism == "endogenous":
        obj = np.where(v + ps <= budget + tol, v, np.inf)
        mask = pick_tie_broken(masks, obj, cnt, n)
        if mask is None:
            return _result(n, None, psi, 0.0, budget, True)
        return _result(n, mask, psi, float(v[mask - 1]), float(obj[mask - 1]), True)

    # joint: the outside option competes as the empty mask with objective B_ref
    obj = np.concatenate(([budget], v + ps))
    all_masks = np.concatenate(([0], masks))
    counts = np.concatenate(([0], cnt))
    mask = pick_tie_broken(all_masks, obj, counts, n)
    if mask == 0:
        return _result(n, None, psi, 0.0, budget, True)
    return _result(n, mask, psi, float(v[mask - 1]), float(obj[mask]), True)


def check_monotonicity(instance: MarketInstance, theta, owner: int, theta_increased: float) -> bool:
    """True when raising one owner's reserve never turns their selection on."""
    theta = np.asarray(theta, dtype=float)
    if not theta_increased > theta[owner]:
        raise ValueError("theta_increased must exceed the current reserve")
    before = solve(instance, theta)
    raised = theta.copy()
    raised[owner] = theta_increased
    after = solve(instance, raised)
    return bool(after.q[owner + 1] <= before.q[owner + 1])


def reference_budget_bound(loss_ref_minus_target: float, k: float, hoeffding_term: float) -> float:
    """Lower bound on the usable budget: [L(X_R) - L(X_T)] - K * bound."""
    return loss_ref_minus_target - k * hoeffding_term


def reference_budget_upper(k: float, w_ref_target: float) -> float:
    """Lipschitz over-estimate K * W(X_R, X_T) of the reference budget."""
    return k * w_ref_target
