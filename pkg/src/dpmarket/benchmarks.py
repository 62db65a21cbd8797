"""Comparison mechanisms: central and random baselines, SMQ, greedy knapsack, Shapley values.

Coalitions are encoded as bit masks over owners 0..N-1; arrays indexed by
coalition hold entry ``mask - 1`` for masks 1..2^N-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .distances import DISTANCE_KINDS, all_distances_rows
from .mechanisms import pick_tie_broken
from .tasks import TargetLosses, TaskSpec, estimate_rows

MAX_TABLE_OWNERS = 16
MAX_SHAPLEY_PLAYERS = 12
APPROXIMATION_LEVELS = ("shap", "cen_ir", "cen_ic", "cen_w", "cen_dp", "fin", "inf")


def _popcount(masks: np.ndarray) -> np.ndarray:
    cnt = np.zeros_like(masks)
    m = masks.copy()
    while np.any(m):
        cnt += m & 1
        m >>= 1
    return cnt


def subset_sums(values) -> np.ndarray:
    """Sum of ``values`` over every mask 0..2^N-1."""
    out = np.zeros(1)
    for v in np.asarray(values, dtype=float):
        out = np.concatenate((out, out + v))
    return out


def members(mask: int, n: int) -> tuple:
    return tuple(i for i in range(n) if mask >> i & 1)


# -- coalition table ---------------------------------------------------------


@dataclass
class CoalitionTable:
    """Actual distances and task losses of every nonempty coalition against the target.

    The target is the grand-coalition aggregate. ``loss`` holds L(X_P) per
    task label and ``gap`` the difference L(X_P) - L(X_T).
    """

    n: int
    masks: np.ndarray
    counts: np.ndarray
    distances: dict
    loss: dict = field(default_factory=dict)
    gap: dict = field(default_factory=dict)
    loss_target: dict = field(default_factory=dict)
    reserve_sum: Optional[np.ndarray] = None
    virtual_sum: Optional[np.ndarray] = None

    @property
    def full_mask(self) -> int:
        return (1 << self.n) - 1

    def at(self, mask: int) -> int:
        return mask - 1

    def priced(self, theta, psi) -> "CoalitionTable":
        """Copy carrying the total reserve price and total virtual cost of each coalition."""
        out = CoalitionTable(
            self.n, self.masks, self.counts, self.distances, self.loss, self.gap, self.loss_target
        )
        out.reserve_sum = subset_sums(theta)[1:]
        out.virtual_sum = subset_sums(psi)[1:]
        return out


def coalition_rows(draws: np.ndarray, masks: np.ndarray, batch: int = 256) -> np.ndarray:
    """Sorted aggregate sample (mean of member draws) for each mask."""
    draws = np.asarray(draws, dtype=float)
    n_owners = draws.shape[0]
    bits = np.arange(n_owners)
    out = np.empty((masks.size, draws.shape[1]))
    for start in range(0, masks.size, batch):
        mb = masks[start:start + batch]
        sel = ((mb[:, None] >> bits) & 1).astype(float)
        sel /= sel.sum(axis=1, keepdims=True)
        out[start:start + batch] = sel @ draws
    out.sort(axis=1)
    return out


def build_coalition_table(draws: np.ndarray, tasks: Sequence[TaskSpec] = (), bins: int = 64) -> CoalitionTable:
    """Table over all 2^N - 1 coalitions of the owners' draws (rows of ``draws``)."""
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    n = draws.shape[0]
    if n > MAX_TABLE_OWNERS:
        raise ValueError(f"coalition tables support at most {MAX_TABLE_OWNERS} owners")
    masks = np.arange(1, 1 << n, dtype=np.int64)
    rows = coalition_rows(draws, masks)
    target = rows[-1]
    dists = all_distances_rows(rows, target, bins=bins)
    table = CoalitionTable(n, masks, _popcount(masks), dists)
    losses = TargetLosses(target)
    for task in tasks:
        lp = losses.loss(task, estimate_rows(rows, task))
        lt = float(losses.loss(task, losses.estimate(task)))
        table.loss[task.label] = lp
        table.loss_target[task.label] = lt
        table.gap[task.label] = lp - lt
    return table


# -- central and random baselines -----------------------------------------


@dataclass
class CentralResult:
    mask: int
    selected: tuple
    metric: float
    payment: float
    objective: float

    @property
    def empty(self) -> bool:
        return self.mask == 0


def _metric(table: CoalitionTable, metric: str, k: float = 1.0, dp_terms=None) -> np.ndarray:
    if metric in DISTANCE_KINDS:
        return table.distances[metric]
    if metric.startswith("loss:"):
        return table.gap[metric[5:]]
    if metric == "kw":
        return k * table.distances["wd"]
    if metric == "kw_dp":
        if dp_terms is None:
            raise ValueError("kw_dp needs per-owner DP distance terms")
        avg_dp = subset_sums(dp_terms)[1:] / table.counts
        return k * (table.distances["wd"] + avg_dp)
    raise ValueError(f"unknown metric {metric!r}")


def _payments(table: CoalitionTable, rule: str) -> np.ndarray:
    if rule in ("reserve", "ir"):
        arr = table.reserve_sum
    elif rule in ("virtual", "ic"):
        arr = table.virtual_sum
    else:
        raise ValueError(f"unknown payment rule {rule!r}")
    if arr is None:
        raise ValueError("table has no prices; call CoalitionTable.priced first")
    return arr


def solve_central(
    table: CoalitionTable,
    metric: str,
    budget: float,
    payments: str = "reserve",
    mode: str = "exogenous",
    k: float = 1.0,
    dp_terms=None,
) -> CentralResult:
    """Full-information optimum over all coalitions.

    ``exogenous``: min metric s.t. sum payments <= budget. ``endogenous``:
    min metric s.t. metric + payments <= budget. ``joint``: min metric +
    payments, with buying nothing worth ``budget``. Undefined metric values
    (NaN) are never selected.
    """
    m = np.asarray(_metric(table, metric, k, dp_terms), dtype=float)
    p = _payments(table, payments)
    tol = 1e-12 * max(1.0, budget)
    defined = np.isfinite(m)
    if mode == "exogenous":
        obj = np.where(defined & (p <= budget + tol), m, np.inf)
    elif mode == "endogenous":
        obj = np.where(defined & (m + p <= budget + tol), m, np.inf)
    elif mode == "joint":
        obj = np.where(defined, m + p, np.inf)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "joint":
        masks = np.concatenate(([0], table.masks))
        counts = np.concatenate(([0], table.counts))
        mask = pick_tie_broken(masks, np.concatenate(([budget], obj)), counts, table.n)
    else:
        mask = pick_tie_broken(table.masks, obj, table.counts, table.n)
    if mask is None or mask == 0:
        return CentralResult(0, (), math.nan, 0.0, budget if mode != "exogenous" else math.nan)
    j = mask - 1
    return CentralResult(mask, members(mask, table.n), float(m[j]), float(p[j]), float(obj[j]))


def solve_random(metric_values, cost, budget: float) -> float:
    """Mean metric over all budget-feasible coalitions (NaN when none is feasible)."""
    m = np.asarray(metric_values, dtype=float)
    c = np.asarray(cost, dtype=float)
    ok = (c <= budget + 1e-12 * max(1.0, budget)) & np.isfinite(m)
    if not ok.any():
        return math.nan
    return float(np.mean(m[ok]))


# -- SMQ ---------------------------------------------------------------------


@dataclass
class OfferResult:
    offers: np.ndarray
    accepted: tuple
    payments: np.ndarray

    @property
    def total_payment(self) -> float:
        return float(np.sum(self.payments))


def smq_offers(values, upper, budget: float, tol: float = 1e-10) -> np.ndarray:
    """Take-it-or-leave-it prices maximising expected value under an expected-spend budget.

    Uniform priors U(0, upper_i): accept probability p/upper_i, expected spend
    p^2/upper_i. KKT gives p_i = min(upper_i, V_i / (2 lam)); lam is found by
    bisection so the spend meets the budget from below.
    """
    v = np.asarray(values, dtype=float)
    u = np.asarray(upper, dtype=float)
    if np.any(u <= 0):
        raise ValueError("SMQ needs uniform priors with positive upper bounds")
    if budget <= 0:
        return np.zeros_like(v)
    v = np.where(np.isfinite(v) & (v > 0), v, 0.0)

    def offers(lam):
        return np.minimum(u, v / (2.0 * lam))

    def spend(p):
        return float(np.sum(p * p / u))

    if spend(u * (v > 0)) <= budget:
        return u * (v > 0)
    lo, hi = 0.0, 1.0
    while spend(offers(hi)) > budget:
        lo, hi = hi, hi * 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if spend(offers(mid)) > budget:
            lo = mid
        else:
            hi = mid
        if budget - spend(offers(hi)) <= tol:
            break
    return offers(hi)


def solve_smq(values, upper, budget: float, theta) -> OfferResult:
    p = smq_offers(values, upper, budget)
    theta = np.asarray(theta, dtype=float)
    acc = (theta <= p) & (p > 0)
    return OfferResult(p, tuple(int(i) for i in np.flatnonzero(acc)), np.where(acc, p, 0.0))


# -- greedy knapsack ----------------------------------------------------------


def solve_ptas(theta, d, budget: float) -> OfferResult:
    """Budget-feasible greedy selection by cost per unit value g_i = theta_i d_i.

    ``offers`` holds each selected owner's threshold payment, zero elsewhere.
    """
    theta = np.asarray(theta, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distances must be positive")
    n = theta.size
    g = theta * d
    order = np.argsort(g, kind="stable")
    inv_d = np.cumsum(1.0 / d[order])
    share = budget / inv_d
    ok = g[order] <= share
    k = int(np.flatnonzero(ok)[-1] + 1) if ok.any() else 0
    pay = np.zeros(n)
    if k == 0:
        return OfferResult(pay, (), pay.copy())
    g_next = g[order[k]] if k < n else math.inf
    unit = min(share[k - 1], g_next)
    chosen = order[:k]
    pay[chosen] = unit / d[chosen]
    return OfferResult(pay.copy(), tuple(sorted(int(i) for i in chosen)), pay)


# -- Shapley -------------------------------------------------------------------


def shapley(char_fn, n: int) -> np.ndarray:
    """Exact Shapley values.

    ``char_fn`` is a callable on frozensets of players or an array indexed by
    bit mask (length 2^n, entry 0 = empty coalition).
    """
    if n > MAX_SHAPLEY_PLAYERS:
        raise ValueError(f"exact Shapley supports at most {MAX_SHAPLEY_PLAYERS} players")
    size = 1 << n
    if callable(char_fn):
        v = np.array([char_fn(frozenset(members(m, n))) for m in range(size)], dtype=float)
    else:
        v = np.asarray(char_fn, dtype=float)
        if v.shape != (size,):
            raise ValueError(f"characteristic array must have length {size}")
    masks = np.arange(size)
    counts = _popcount(masks)
    weight = np.array(
        [math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n) for s in range(n)]
    )
    phi = np.zeros(n)
    for i in range(n):
        without = masks[(masks >> i & 1) == 0]
        phi[i] = np.sum(weight[counts[without]] * (v[without | (1 << i)] - v[without]))
    return phi


def proportions(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    total = phi.sum()
    return phi / total if total != 0 else np.full_like(phi, np.nan)


def distance_characteristic(values) -> np.ndarray:
    """v(P) = max_S d(S) - d(P) over nonempty coalitions, v(empty) = 0, as a mask array."""
    values = np.asarray(values, dtype=float)
    return np.concatenate(([0.0], np.nanmax(values) - values))


@dataclass
class ShapCgResult:
    owner_shares: np.ndarray
    buyer_share: float
    total_cost: float

    @property
    def proportions(self) -> np.ndarray:
        return proportions(self.owner_shares)


def shap_cg_benchmark(owner_values, buyer_loss: float = 0.0) -> ShapCgResult:
    """Cooperative-game pricing with the buyer as an extra player.

    ``owner_values`` gives the data value of each owner coalition as a mask
    array of length 2^N (entry 0 = no data). The buyer is player N; any
    coalition without the buyer is worth nothing. Owners are paid their
    Shapley shares and the buyer's cost is ``buyer_loss`` plus those payments.
    """
    owner_values = np.asarray(owner_values, dtype=float)
    n = int(round(math.log2(owner_values.size)))
    if 1 << n != owner_values.size:
        raise ValueError("owner_values must have length 2^N")
    v = np.concatenate((np.zeros(1 << n), owner_values))
    phi = shapley(v, n + 1)
    shares = phi[:n]
    return ShapCgResult(shares, float(phi[n]), float(buyer_loss + shares.sum()))
