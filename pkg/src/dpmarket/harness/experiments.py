"""Experiment runners.

Each runner maps a per-trial function over trial indices (optionally in a
process pool), then folds the per-trial records into summary tables in trial
order. Runners return ``{table name: Table}``; :mod:`.emit` writes them out.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import stats

from ..benchmarks import (
    shap_cg_benchmark,
    shapley,
    proportions,
    distance_characteristic,
    solve_central,
    solve_ptas,
    solve_random,
    solve_smq,
)
from ..distances import DISTANCE_KINDS
from ..distributions import DpParams
from ..mechanisms import MarketInstance, MechanismResult, PriorSpec, solve
from ..tasks import VIOLATION_TOL, TargetLosses, TaskSpec, estimate_parameter, mae, mpl, rmse
from ..valuation import VARIANTS, HoeffdingParams, OwnerProfile, dp_wd_term, effective_wd, hoeffding_bounds_all
from .config import ExperimentConfig
from .trials import ALL_TASKS, EPS, NOISE, THETA, Trial, couple_correlation, stream, trial_for

Z95 = float(stats.norm.ppf(0.975))
REFERENCE_CONVENTION = "X_R = data of the owner with the largest W(X_i, X_T); lowest index on ties"
SHAPLEY_DISTANCES = ("wd", "ks", "tvd", "jsd", "kld")
EXO_MECHANISMS = ("CEN", "FIN", "INF", "SMQ", "PTAS", "RAND")
JOINT_TASKS = (mae(), rmse(), mpl(0.9), mpl(0.8))
APPROX_TASKS = (mae(), rmse(), mpl(0.8))


@dataclass
class Table:
    columns: tuple
    rows: list = field(default_factory=list)

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError("row width does not match the header")
        self.rows.append(tuple(values))


@dataclass
class TrialRecord:
    """One mechanism outcome in one trial and scenario.

    ``expected_cost`` is the modelled cost (bound plus payments) and
    ``actual_cost`` the realised loss gap plus payments; both equal the
    reference budget when the outside option is taken.
    """

    trial: int
    scenario: dict
    mechanism: str
    theta: np.ndarray
    eps: np.ndarray | None
    selected: tuple
    outside: bool
    payments: float
    bound: float
    loss_gap: float
    expected_cost: float
    actual_cost: float
    b_ref: float


def mean_ci(values) -> tuple:
    """Mean and normal-approximation 95% interval over the finite entries."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return math.nan, math.nan, math.nan
    m = float(v.mean())
    if v.size < 2:
        return m, math.nan, math.nan
    h = Z95 * float(v.std(ddof=1)) / math.sqrt(v.size)
    return m, m - h, m + h


def _nanmean(values) -> float:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    return float(v.mean()) if v.size else math.nan


def map_trials(config: ExperimentConfig, fn, keys) -> list:
    """``fn(config, *key)`` for every key, in key order, using ``config.workers`` processes."""
    keys = list(keys)
    if config.workers <= 1 or len(keys) <= 1:
        return [fn(config, *k) for k in keys]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(fn, [config] * len(keys), *zip(*keys)))


def _mask(selected) -> int:
    return sum(1 << i for i in selected)


def _ids(selected) -> str:
    return " ".join(str(i) for i in selected)


def _vec(x) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(x).ravel())


def _singletons(values, n: int) -> np.ndarray:
    return np.asarray(values)[[(1 << i) - 1 for i in range(n)]]


def _instance(w, theta_bar, mechanism, budget, k, delta, population) -> MarketInstance:
    n = len(w)
    return MarketInstance(
        w=w,
        prior=PriorSpec.uniform(theta_bar, n),
        mechanism=mechanism,
        budget=budget,
        k=k,
        hoeffding=HoeffdingParams(delta, population, n),
    )


def _corr(x, y) -> tuple:
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < 3 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return math.nan, math.nan, int(ok.sum())
    return float(np.corrcoef(x, y)[0, 1]), float(stats.spearmanr(x, y)[0]), int(ok.sum())


def _noise_base(trial: Trial, mechanism: str) -> np.ndarray:
    rng = stream(trial.seed, trial.family, trial.index, NOISE)
    if mechanism == "laplace":
        return rng.laplace(0.0, 1.0, size=trial.draws.shape)
    return rng.standard_normal(trial.draws.shape)


def noisy_gap(trial: Trial, task: TaskSpec, mask: int, noise_scale, base: np.ndarray) -> float:
    """Loss gap of coalition ``mask`` when each member adds scaled noise ``base``."""
    if mask == 0:
        return math.nan
    idx = [i for i in range(trial.n) if mask >> i & 1]
    noisy = trial.draws[idx] + base[idx] * np.asarray(noise_scale, dtype=float)[idx, None]
    agg = np.sort(noisy.mean(axis=0))
    losses = TargetLosses(trial.target)
    lp = float(losses.loss(task, estimate_parameter(agg, task)))
    return lp - float(losses.loss(task, losses.estimate(task)))


def _draw_eps(trial: Trial, eps_bar: float) -> np.ndarray:
    u = stream(trial.seed, trial.family, trial.index, EPS).uniform(size=trial.n)
    # U(0, eps_bar) with the measure-zero endpoint 0 nudged inside the support
    return np.maximum(u, np.finfo(float).tiny) * eps_bar


def _theta(trial: Trial, values, theta_bar: float, rho: int) -> np.ndarray:
    return couple_correlation(values, theta_bar, rho, stream(trial.seed, trial.family, trial.index, THETA))


def _dp(config: ExperimentConfig, eps: float) -> DpParams:
    delta_dp = config.delta_dp if config.dp_mechanism == "gaussian" else None
    return DpParams(config.dp_mechanism, float(eps), config.sensitivity, delta_dp)


def _record_mech(trial, scenario, name, res: MechanismResult, theta, eps, gap_fn, b_ref) -> TrialRecord:
    if res.outside_option:
        return TrialRecord(trial.index, scenario, name, theta, eps, (), True, 0.0, 0.0, math.nan, b_ref, b_ref, b_ref)
    mask = _mask(res.selected)
    gap = gap_fn(mask)
    pay = res.total_payment
    return TrialRecord(
        trial.index, scenario, name, theta, eps, res.selected, False, pay,
        res.v_bound, gap, res.v_bound + pay, gap + pay, b_ref,
    )


def _record_central(trial, scenario, name, cen, theta, eps, gap_fn, b_ref) -> TrialRecord:
    if cen.empty:
        return TrialRecord(trial.index, scenario, name, theta, eps, (), True, 0.0, 0.0, math.nan, b_ref, b_ref, b_ref)
    gap = gap_fn(cen.mask)
    return TrialRecord(
        trial.index, scenario, name, theta, eps, cen.selected, False, cen.payment,
        cen.metric, gap, cen.metric + cen.payment, gap + cen.payment, b_ref,
    )


RECORD_COLUMNS = (
    "trial", "mechanism", "selected", "outside", "payments", "bound", "loss_gap",
    "expected_cost", "actual_cost", "b_ref", "theta", "eps",
)


def _records_table(records, scenario_keys) -> Table:
    table = Table(tuple(scenario_keys) + RECORD_COLUMNS)
    for r in records:
        table.add(
            *(r.scenario[k] for k in scenario_keys), r.trial, r.mechanism, _ids(r.selected), int(r.outside),
            r.payments, r.bound, r.loss_gap, r.expected_cost, r.actual_cost, r.b_ref,
            _vec(r.theta), "" if r.eps is None else _vec(r.eps),
        )
    return table


def owners_table(config: ExperimentConfig, families) -> Table:
    table = Table(("family", "trial", "owner", "alpha", "beta", "w", "reference"))
    for family in families:
        for t in range(config.trials):
            trial = trial_for(config, family, t)
            ref = trial.reference_owner()
            for i, s in enumerate(trial.specs):
                table.add(family, t, i, s.location, s.scale, float(trial.w[i]), int(i == ref))
    return table


def _keys(config: ExperimentConfig, families=None):
    return [(f, t) for f in (families or config.families) for t in range(config.trials)]


# -- val-lipschitz ----------------------------------------------------------


def _lipschitz_trial(config, family, t):
    trial = trial_for(config, family, t)
    tab = trial.table
    wd = tab.distances["wd"]
    out = []
    for task in ALL_TASKS:
        gap = tab.gap[task.label]
        excess = gap - task.k_lipschitz * wd
        viol = excess > VIOLATION_TOL
        for k in range(1, trial.n + 1):
            s = tab.counts == k
            out.append((family, t, task.label, k, float(wd[s].mean()), float((gap[s] / task.k_lipschitz).mean()),
                        int(viol[s].sum()), float(excess[s].max())))
    scatter = []
    if t == 0:
        for task in ALL_TASKS:
            gap = tab.gap[task.label]
            for j, m in enumerate(tab.masks):
                scatter.append((family, task.label, int(m), int(tab.counts[j]), float(wd[j]),
                                float(gap[j] / task.k_lipschitz)))
    return out, scatter


def run_val_lipschitz(config: ExperimentConfig) -> dict:
    results = map_trials(config, _lipschitz_trial, _keys(config))
    trials = Table(("family", "trial", "task", "size", "mean_wd", "mean_gap_over_k", "violations", "max_excess"))
    scatter = Table(("family", "task", "mask", "size", "wd", "gap_over_k"))
    for rows, sc in results:
        for r in rows:
            trials.add(*r)
        for r in sc:
            scatter.add(*r)
    by_size = Table(("family", "task", "size", "mean_wd", "mean_gap_over_k", "ci_lo", "ci_hi"))
    viol = Table(("family", "task", "trials", "coalitions", "violations", "trials_with_violation", "max_excess"))
    for family in config.families:
        for task in ALL_TASKS:
            rows = [r for r in trials.rows if r[0] == family and r[2] == task.label]
            for k in range(1, config.n_owners + 1):
                sub = [r for r in rows if r[3] == k]
                m, lo, hi = mean_ci([r[5] for r in sub])
                by_size.add(family, task.label, k, _nanmean([r[4] for r in sub]), m, lo, hi)
            per_trial = {}
            for r in rows:
                per_trial[r[1]] = per_trial.get(r[1], 0) + r[6]
            viol.add(
                family, task.label, config.trials, config.trials * ((1 << config.n_owners) - 1),
                sum(per_trial.values()), sum(1 for v in per_trial.values() if v > 0),
                max((r[7] for r in rows), default=math.nan),
            )
    return {
        "lipschitz_by_size": by_size,
        "lipschitz_violations": viol,
        "lipschitz_scatter": scatter,
        "lipschitz_trials": trials,
        "owners": owners_table(config, config.families),
    }


# -- val-corr ---------------------------------------------------------------


def _corr_trial(config, family, t):
    tab = trial_for(config, family, t).table
    out = []
    for d in DISTANCE_KINDS:
        for task in ALL_TASKS:
            p, s, n = _corr(tab.distances[d], tab.gap[task.label])
            out.append((family, t, d, task.label, p, s, n))
    return out


def run_val_corr(config: ExperimentConfig) -> dict:
    results = map_trials(config, _corr_trial, _keys(config))
    trials = Table(("family", "trial", "distance", "task", "pearson", "spearman", "n_defined"))
    for rows in results:
        for r in rows:
            trials.add(*r)
    matrix = Table(("family", "distance", "task", "mean_pearson", "ci_lo", "ci_hi", "mean_spearman", "trials_defined"))
    wins = Table(("family", "task", "distance", "frac_wd_at_least", "trials_compared"))
    for family in config.families:
        for d in DISTANCE_KINDS:
            for task in ALL_TASKS:
                sub = [r for r in trials.rows if r[0] == family and r[2] == d and r[3] == task.label]
                m, lo, hi = mean_ci([r[4] for r in sub])
                matrix.add(family, d, task.label, m, lo, hi, _nanmean([r[5] for r in sub]),
                           sum(1 for r in sub if math.isfinite(r[4])))
        for task in ALL_TASKS:
            ref = {r[1]: r[4] for r in trials.rows if r[0] == family and r[2] == "wd" and r[3] == task.label}
            for d in DISTANCE_KINDS[1:]:
                other = {r[1]: r[4] for r in trials.rows if r[0] == family and r[2] == d and r[3] == task.label}
                pairs = [(ref[t], other[t]) for t in ref if math.isfinite(ref[t]) and math.isfinite(other.get(t, math.nan))]
                frac = sum(a >= b for a, b in pairs) / len(pairs) if pairs else math.nan
                wins.add(family, task.label, d, frac, len(pairs))
    return {"corr_matrix": matrix, "corr_wins": wins, "corr_trials": trials}


# -- val-shapley ------------------------------------------------------------


def _shapley_trial(config, family, t):
    trial = trial_for(config, family, t)
    tab = trial.table
    n = trial.n
    bases = []
    for d in SHAPLEY_DISTANCES:
        bases.append(("distance", d, tab.distances[d]))
    for task in ALL_TASKS:
        bases.append(("loss", task.label, tab.loss[task.label]))
    for pop in ("finite", "infinite"):
        b = hoeffding_bounds_all(trial.w, HoeffdingParams(config.delta, pop, n))[1:]
        bases.append(("hoeffding", "w" + pop[:3], b))
    out = []
    for kind, name, values in bases:
        values = np.asarray(values, dtype=float)
        if np.all(np.isfinite(values)):
            phi = shapley(distance_characteristic(values), n)
            prop = proportions(phi)
        else:
            prop = phi = np.full(n, math.nan)
        for i in range(n):
            out.append((family, t, kind, name, i, float(phi[i]), float(prop[i])))
    return out


def run_val_shapley(config: ExperimentConfig) -> dict:
    results = map_trials(config, _shapley_trial, _keys(config))
    trials = Table(("family", "trial", "basis", "name", "owner", "share", "proportion"))
    for rows in results:
        for r in rows:
            trials.add(*r)
    props = {}
    for r in trials.rows:
        props.setdefault((r[0], r[1], r[3]), np.full(config.n_owners, math.nan))[r[4]] = r[6]
    pairs = Table(("family", "a", "b", "mean_max_abs_diff", "max_max_abs_diff", "trials_defined"))
    misalloc = Table(("family", "distance", "task", "mean_abs_diff", "ci_lo", "ci_hi"))
    names = SHAPLEY_DISTANCES + ("wfin", "winf")
    for family in config.families:
        for a, b in combinations(names, 2):
            diffs = [np.max(np.abs(props[(family, t, a)] - props[(family, t, b)])) for t in range(config.trials)]
            diffs = np.asarray(diffs, dtype=float)
            ok = np.isfinite(diffs)
            pairs.add(family, a, b, _nanmean(diffs), float(diffs[ok].max()) if ok.any() else math.nan, int(ok.sum()))
        for d in names:
            for task in ALL_TASKS:
                diffs = [np.mean(np.abs(props[(family, t, d)] - props[(family, t, task.label)]))
                         for t in range(config.trials)]
                misalloc.add(family, d, task.label, *mean_ci(diffs))
    return {"shapley_distance_pairs": pairs, "shapley_misallocation": misalloc, "shapley_trials": trials}


# -- val-hoeffding ----------------------------------------------------------


def _hoeffding_trial(config, family, t):
    trial = trial_for(config, family, t)
    tab = trial.table
    actual = tab.distances["wd"]
    n = trial.n
    summary = None
    by_size = []
    minimiser = []
    for delta in sorted(set(config.deltas) | {config.delta}):
        fin = hoeffding_bounds_all(trial.w, HoeffdingParams(delta, "finite", n))[1:]
        inf = hoeffding_bounds_all(trial.w, HoeffdingParams(delta, "infinite", n))[1:]
        if delta in config.deltas:
            for k in range(1, n + 1):
                s = tab.counts == k
                by_size.append((t, delta, k, float(actual[s].mean()), float(fin[s].mean()), float(inf[s].mean())))
        if delta == config.delta:
            summary = (
                t,
                float(np.corrcoef(actual, fin)[0, 1]),
                float(np.corrcoef(actual, inf)[0, 1]),
                float(np.mean(fin >= actual)),
                float(np.mean(inf >= actual)),
            )
            for k in range(1, n + 1):
                idx = np.flatnonzero(tab.counts == k)
                minimiser.append((
                    t, k, float(actual[idx].mean()), float(actual[idx].min()),
                    float(actual[idx[np.argmin(fin[idx])]]), float(actual[idx[np.argmin(inf[idx])]]),
                ))
    return summary, by_size, minimiser


def run_val_hoeffding(config: ExperimentConfig) -> dict:
    family = config.families[0]
    results = map_trials(config, _hoeffding_trial, _keys(config, (family,)))
    trials = Table(("trial", "pearson_fin", "pearson_inf", "dominance_fin", "dominance_inf"))
    sizes = Table(("trial", "delta", "size", "mean_actual", "mean_fin", "mean_inf"))
    mins = Table(("trial", "size", "mean_w", "min_w", "w_at_fin_min", "w_at_inf_min"))
    for summary, by_size, minimiser in results:
        trials.add(*summary)
        for r in by_size:
            sizes.add(*r)
        for r in minimiser:
            mins.add(*r)
    corr = Table(("delta", "stat", "mean", "ci_lo", "ci_hi"))
    for j, stat in enumerate(trials.columns[1:], 1):
        corr.add(config.delta, stat, *mean_ci([r[j] for r in trials.rows]))
    agg_size = Table(("delta", "size", "mean_actual", "mean_fin", "mean_inf"))
    for delta in config.deltas:
        for k in range(1, config.n_owners + 1):
            sub = [r for r in sizes.rows if r[1] == delta and r[2] == k]
            agg_size.add(delta, k, *(_nanmean([r[j] for r in sub]) for j in (3, 4, 5)))
    agg_min = Table(("size", "mean_w", "min_w", "w_at_fin_min", "w_at_inf_min"))
    for k in range(1, config.n_owners + 1):
        sub = [r for r in mins.rows if r[1] == k]
        agg_min.add(k, *(_nanmean([r[j] for r in sub]) for j in (2, 3, 4, 5)))
    return {
        "hoeffding_corr": corr,
        "hoeffding_by_size": agg_size,
        "hoeffding_minimiser": agg_min,
        "hoeffding_trials": trials,
        "hoeffding_size_trials": sizes,
    }


# -- proc-exo ---------------------------------------------------------------


def _theta_bar(config: ExperimentConfig, default: float) -> float:
    return default if config.theta_bar is None else config.theta_bar


def _proc_exo_trial(config, family, t):
    trial = trial_for(config, family, t)
    n = trial.n
    theta_bar = _theta_bar(config, 1.0)
    w = trial.w
    wd = trial.table.distances["wd"]
    rows = []
    for rho in config.rhos:
        theta = _theta(trial, w, theta_bar, rho)
        psi = PriorSpec.uniform(theta_bar, n).virtual_costs(theta)
        tab = trial.table.priced(theta, psi)
        for mult in config.budget_multiples:
            budget = mult * theta_bar * n
            masks = {"CEN": solve_central(tab, "wd", budget).mask}
            for name, pop in (("FIN", "finite"), ("INF", "infinite")):
                res = solve(_instance(w, theta_bar, "exogenous", budget, 1.0, config.delta, pop), theta)
                masks[name] = _mask(res.selected)
            masks["SMQ"] = _mask(solve_smq(1.0 / w, np.full(n, theta_bar), budget, theta).accepted)
            masks["PTAS"] = _mask(solve_ptas(theta, w, budget).accepted)
            for name in EXO_MECHANISMS[:-1]:
                m = masks[name]
                rows.append((rho, mult, budget, name, float(wd[m - 1]) if m else math.nan, bin(m).count("1")))
            feas = tab.reserve_sum <= budget + 1e-12 * max(1.0, budget)
            rows.append((rho, mult, budget, "RAND", solve_random(wd, tab.reserve_sum, budget),
                         float(tab.counts[feas].mean()) if feas.any() else 0.0))
    return [(t,) + r for r in rows]


def _rho_name(prefix: str, rho: int) -> str:
    return f"{prefix}_rho{rho:+d}"


def run_proc_exo(config: ExperimentConfig) -> dict:
    family = config.families[0]
    results = map_trials(config, _proc_exo_trial, _keys(config, (family,)))
    trials = Table(("trial", "rho", "budget_multiple", "budget", "mechanism", "wd", "n_selected"))
    for rows in results:
        for r in rows:
            trials.add(*r)
    out = {}
    for rho in config.rhos:
        table = Table(("budget", "mechanism", "mean_wd", "ci_lo", "ci_hi", "mean_n_selected"))
        for mult in config.budget_multiples:
            for name in EXO_MECHANISMS:
                sub = [r for r in trials.rows if r[1] == rho and r[2] == mult and r[4] == name]
                table.add(sub[0][3], name, *mean_ci([r[5] for r in sub]), _nanmean([r[6] for r in sub]))
        out[_rho_name("proc_exo", rho)] = table
    out["proc_exo_trials"] = trials
    return out


# -- proc-exo-dist ----------------------------------------------------------


def _proc_exo_dist_trial(config, family, t):
    trial = trial_for(config, family, t)
    n = trial.n
    theta_bar = _theta_bar(config, 1.0)
    task = rmse()
    loss = trial.table.loss[task.label]
    l_max = float(np.max(loss))
    rows = []
    for rho in config.rhos:
        theta = _theta(trial, trial.w, theta_bar, rho)
        psi = PriorSpec.uniform(theta_bar, n).virtual_costs(theta)
        tab = trial.table.priced(theta, psi)
        for mult in config.budget_multiples:
            budget = mult * theta_bar * n
            for d in DISTANCE_KINDS:
                cen = solve_central(tab, d, budget)
                imp = 1.0 - loss[cen.mask - 1] / l_max if cen.mask else math.nan
                rows.append((t, rho, mult, budget, "CEN", d, float(imp)))
                w_d = _singletons(trial.table.distances[d], n)
                if np.all(np.isfinite(w_d)):
                    res = solve(_instance(w_d, theta_bar, "exogenous", budget, 1.0, config.delta, "finite"), theta)
                    m = _mask(res.selected)
                    imp = 1.0 - loss[m - 1] / l_max if m else math.nan
                else:
                    imp = math.nan
                rows.append((t, rho, mult, budget, "FIN", d, float(imp)))
    return rows


def run_proc_exo_dist(config: ExperimentConfig) -> dict:
    family = config.families[0]
    results = map_trials(config, _proc_exo_dist_trial, _keys(config, (family,)))
    trials = Table(("trial", "rho", "budget_multiple", "budget", "mechanism", "distance", "improvement"))
    for rows in results:
        for r in rows:
            trials.add(*r)
    out = {}
    for rho in config.rhos:
        table = Table(("budget", "mechanism", "distance", "mean_improvement", "ci_lo", "ci_hi", "trials_defined"))
        for mult in config.budget_multiples:
            for name in ("CEN", "FIN"):
                for d in DISTANCE_KINDS:
                    sub = [r for r in trials.rows if r[1] == rho and r[2] == mult and r[4] == name and r[5] == d]
                    vals = [r[6] for r in sub]
                    table.add(sub[0][3], name, d, *mean_ci(vals), sum(1 for v in vals if math.isfinite(v)))
        out[_rho_name("proc_exo_dist", rho)] = table
    out["proc_exo_dist_trials"] = trials
    return out


# -- proc-dp ----------------------------------------------------------------


def _proc_dp_trial(config, family, t):
    trial = trial_for(config, family, t)
    n = trial.n
    theta_bar = _theta_bar(config, 1.0)
    budget = config.dp_budget_multiple * theta_bar * n
    task = rmse()
    base = _noise_base(trial, config.dp_mechanism)
    losses = TargetLosses(trial.target)
    loss_t = float(losses.loss(task, losses.estimate(task)))
    target = trial.target_moments()
    rows = []
    for eps_bar in config.eps_bars:
        eps = _draw_eps(trial, eps_bar)
        dps = [_dp(config, e) for e in eps]
        scale = np.array([dp.noise_scale for dp in dps])
        owners = [OwnerProfile(i, trial.specs[i], float(trial.w[i]), dps[i]) for i in range(n)]
        for rho in config.rhos:
            theta = _theta(trial, eps, theta_bar, rho)
            for variant in VARIANTS:
                if variant == "exact_dp_gaussian" and (trial.family != "gaussian" or config.dp_mechanism != "gaussian"):
                    continue
                w = np.array([effective_wd(o, variant, target) for o in owners])
                res = solve(_instance(w, theta_bar, "exogenous", budget, 1.0, config.delta, "finite"), theta)
                m = _mask(res.selected)
                value = loss_t + noisy_gap(trial, task, m, scale, base) if m else math.nan
                rows.append((t, rho, eps_bar, variant, value, len(res.selected)))
    return rows


def run_proc_dp(config: ExperimentConfig) -> dict:
    family = config.families[0]
    results = map_trials(config, _proc_dp_trial, _keys(config, (family,)))
    trials = Table(("trial", "rho", "eps_bar", "variant", "rmse", "n_selected"))
    for rows in results:
        for r in rows:
            trials.add(*r)
    variants = [v for v in VARIANTS if any(r[3] == v for r in trials.rows)]
    out = {}
    for rho in config.rhos:
        table = Table(("eps_bar", "variant", "mean_rmse", "ci_lo", "ci_hi", "mean_n_selected"))
        for eps_bar in config.eps_bars:
            for v in variants:
                sub = [r for r in trials.rows if r[1] == rho and r[2] == eps_bar and r[3] == v]
                table.add(eps_bar, v, *mean_ci([r[4] for r in sub]), _nanmean([r[5] for r in sub]))
        out[_rho_name("proc_dp", rho)] = table
    out["proc_dp_trials"] = trials
    return out


# -- proc-endo --------------------------------------------------------------


def _proc_endo_trial(config, family, t):
    trial = trial_for(config, family, t)
    task = mae()
    b_ref = trial.reference_budget(task)
    records = []
    for rho in config.rhos:
        for theta_bar in config.theta_bars:
            theta = _theta(trial, trial.w, theta_bar, rho)
            for pop in config.populations:
                scenario = {"rho": rho, "theta_bar": theta_bar, "population": pop}
                for mech in ("exogenous", "endogenous", "joint"):
                    res = solve(_instance(trial.w, theta_bar, mech, b_ref, task.k_lipschitz, config.delta, pop), theta)
                    records.append(_record_mech(
                        trial, scenario, mech, res, theta, None, lambda m: trial.gap(task, m), b_ref,
                    ))
    return records


def _summarise_costs(records, keys, extra=()) -> Table:
    table = Table(tuple(keys) + ("mechanism", "mean_modelled_loss", "mean_expected_cost", "mean_actual_cost",
                                 "ci_lo", "ci_hi", "mean_b_ref", "frac_outside", "mean_n_selected",
                                 "frac_actual_over_budget") + tuple(extra))
    groups = {}
    for r in records:
        groups.setdefault(tuple(r.scenario[k] for k in keys) + (r.mechanism,), []).append(r)
    for key, rs in groups.items():
        m, lo, hi = mean_ci([r.actual_cost for r in rs])
        table.add(
            *key,
            _nanmean([r.bound for r in rs]),
            _nanmean([r.expected_cost for r in rs]),
            m, lo, hi,
            _nanmean([r.b_ref for r in rs]),
            float(np.mean([r.outside for r in rs])),
            float(np.mean([len(r.selected) for r in rs])),
            float(np.mean([r.actual_cost > r.b_ref + 1e-12 * max(1.0, r.b_ref) for r in rs])),
        )
    return table


def run_proc_endo(config: ExperimentConfig) -> dict:
    family = config.families[0]
    results = map_trials(config, _proc_endo_trial, _keys(config, (family,)))
    records = [r for rs in results for r in rs]
    keys = ("rho", "population", "theta_bar")
    return {
        "proc_endo": _summarise_costs(records, keys),
        "proc_endo_trials": _records_table(records, ("rho", "theta_bar", "population")),
    }


# -- proc-joint -------------------------------------------------------------


def _central_joint(trial: Trial, tab, task: TaskSpec, metric: str, b_ref: float, **kwargs):
    return solve_central(tab, metric, b_ref, payments="virtual", mode="joint", k=task.k_lipschitz, **kwargs)


def _proc_joint_trial(config, family, t):
    trial = trial_for(config, family, t)
    n = trial.n
    records = []
    for rho in config.rhos:
        for theta_bar in config.theta_bars:
            theta = _theta(trial, trial.w, theta_bar, rho)
            psi = PriorSpec.uniform(theta_bar, n).virtual_costs(theta)
            tab = trial.table.priced(theta, psi)
            for task in JOINT_TASKS:
                b_ref = trial.reference_budget(task)
                gap_fn = lambda m, task=task: trial.gap(task, m)  # noqa: E731
                scenario = {"rho": rho, "theta_bar": theta_bar, "task": task.label}
                for name, metric in (("CEN_M", "loss:" + task.label), ("CEN_W", "kw")):
                    cen = _central_joint(trial, tab, task, metric, b_ref)
                    records.append(_record_central(trial, scenario, name, cen, theta, None, gap_fn, b_ref))
                for pop in config.populations:
                    res = solve(_instance(trial.w, theta_bar, "joint", b_ref, task.k_lipschitz, config.delta, pop),
                                theta)
                    name = "FIN" if pop == "finite" else "INF"
                    records.append(_record_mech(trial, scenario, name, res, theta, None, gap_fn, b_ref))
    return records


def _improvement_table(records, keys) -> Table:
    table = Table(tuple(keys) + ("mechanism", "mean_improvement", "ci_lo", "ci_hi", "mean_error_vs_cen",
                                 "mean_expected_cost", "mean_actual_cost", "mean_b_ref", "frac_outside"))
    cen = {}
    for r in records:
        if r.mechanism == "CEN_M":
            cen[(r.trial,) + tuple(r.scenario[k] for k in keys)] = r.actual_cost
    groups = {}
    for r in records:
        groups.setdefault(tuple(r.scenario[k] for k in keys) + (r.mechanism,), []).append(r)
    for key, rs in groups.items():
        imp = [1.0 - r.actual_cost / r.b_ref if r.b_ref > 0 else math.nan for r in rs]
        err = [(cen[(r.trial,) + key[:-1]] - r.actual_cost) / r.b_ref if r.b_ref > 0 else math.nan for r in rs]
        table.add(
            *key, *mean_ci(imp), _nanmean(err),
            _nanmean([r.expected_cost for r in rs]), _nanmean([r.actual_cost for r in rs]),
            _nanmean([r.b_ref for r in rs]), float(np.mean([r.outside for r in rs])),
        )
    return table


def run_proc_joint(config: ExperimentConfig) -> dict:
    family = config.families[0]
    results = map_trials(config, _proc_joint_trial, _keys(config, (family,)))
    records = [r for rs in results for r in rs]
    return {
        "proc_joint": _improvement_table(records, ("rho", "task", "theta_bar")),
        "proc_joint_trials": _records_table(records, ("rho", "task", "theta_bar")),
    }


# -- proc-risk --------------------------------------------------------------


def _proc_risk_trial(config, family, t):
    trial = trial_for(config, family, t)
    n = trial.n
    task = mae()
    b_ref = trial.reference_budget(task)
    gap_fn = lambda m: trial.gap(task, m)  # noqa: E731
    theta_bars = config.theta_bars if config.theta_bar is None else (config.theta_bar,)
    records = []
    for rho in config.rhos:
        for theta_bar in theta_bars:
            theta = _theta(trial, trial.w, theta_bar, rho)
            psi = PriorSpec.uniform(theta_bar, n).virtual_costs(theta)
            tab = trial.table.priced(theta, psi)
            cen = _central_joint(trial, tab, task, "loss:" + task.label, b_ref)
            for delta in config.deltas:
                scenario = {"rho": rho, "theta_bar": theta_bar, "delta": delta}
                records.append(_record_central(trial, scenario, "CEN_M", cen, theta, None, gap_fn, b_ref))
                for pop in config.populations:
                    res = solve(_instance(trial.w, theta_bar, "joint", b_ref, task.k_lipschitz, delta, pop), theta)
                    name = "FIN" if pop == "finite" else "INF"
                    records.append(_record_mech(trial, scenario, name, res, theta, None, gap_fn, b_ref))
    return records


def run_proc_risk(config: ExperimentConfig) -> dict:
    if config.population is None:
        config = config.replace(population="finite")
    family = config.families[0]
    results = map_trials(config, _proc_risk_trial, _keys(config, (family,)))
    records = [r for rs in results for r in rs]
    keys = ("rho", "delta", "theta_bar")
    return {
        "proc_risk": _improvement_table(records, keys),
        "proc_risk_costs": _summarise_costs(records, keys),
        "proc_risk_trials": _records_table(records, keys),
    }


# -- proc-approx ------------------------------------------------------------


def _proc_approx_trial(config, family, t):
    trial = trial_for(config, family, t)
    n = trial.n
    theta_bar = _theta_bar(config, 0.8)
    eps = _draw_eps(trial, config.eps_bar)
    dps = [_dp(config, e) for e in eps]
    scale = np.array([dp.noise_scale for dp in dps])
    dp_terms = np.array([dp_wd_term(dp) for dp in dps])
    base = _noise_base(trial, config.dp_mechanism)
    w_dp = trial.w + dp_terms
    records = []
    for rho in config.rhos:
        theta = _theta(trial, eps, theta_bar, rho)
        psi = PriorSpec.uniform(theta_bar, n).virtual_costs(theta)
        tab = trial.table.priced(theta, psi)
        for task in APPROX_TASKS:
            b_ref = trial.reference_budget(task)
            scenario = {"rho": rho, "task": task.label}
            clean = lambda m, task=task: trial.gap(task, m)  # noqa: E731
            noisy = lambda m, task=task: noisy_gap(trial, task, m, scale, base)  # noqa: E731

            values = np.concatenate(([0.0], np.maximum(0.0, b_ref - trial.table.gap[task.label])))
            shap = shap_cg_benchmark(values)
            records.append(TrialRecord(
                t, scenario, "shap", theta, eps, tuple(range(n)), False, shap.total_cost, 0.0, 0.0,
                shap.total_cost, shap.total_cost, b_ref,
            ))
            levels = (
                ("cen_ir", dict(metric="loss:" + task.label, payments="reserve"), clean),
                ("cen_ic", dict(metric="loss:" + task.label, payments="virtual"), clean),
                ("cen_w", dict(metric="kw", payments="virtual"), clean),
                ("cen_dp", dict(metric="kw_dp", payments="virtual", dp_terms=dp_terms), noisy),
            )
            for name, kw, gap_fn in levels:
                cen = solve_central(tab, budget=b_ref, mode="joint", k=task.k_lipschitz, **kw)
                records.append(_record_central(trial, scenario, name, cen, theta, eps, gap_fn, b_ref))
            for name, pop in (("fin", "finite"), ("inf", "infinite")):
                res = solve(_instance(w_dp, theta_bar, "joint", b_ref, task.k_lipschitz, config.delta, pop), theta)
                records.append(_record_mech(trial, scenario, name, res, theta, eps, noisy, b_ref))
    return records


APPROX_LEVEL_ORDER = ("shap", "cen_ir", "cen_ic", "cen_w", "cen_dp", "fin", "inf")


def run_proc_approx(config: ExperimentConfig) -> dict:
    family = config.families[0]
    results = map_trials(config, _proc_approx_trial, _keys(config, (family,)))
    records = [r for rs in results for r in rs]
    table = Table(("rho", "task", "level", "mean_cost", "ci_lo", "ci_hi", "median_cost", "q25", "q75",
                   "min_cost", "max_cost", "mean_b_ref", "frac_outside"))
    for rho in config.rhos:
        for task in APPROX_TASKS:
            for level in APPROX_LEVEL_ORDER:
                rs = [r for r in records if r.scenario["rho"] == rho and r.scenario["task"] == task.label
                      and r.mechanism == level]
                cost = np.array([r.actual_cost for r in rs], dtype=float)
                q = np.quantile(cost, [0.0, 0.25, 0.5, 0.75, 1.0])
                table.add(rho, task.label, level, *mean_ci(cost), float(q[2]), float(q[1]), float(q[3]),
                          float(q[0]), float(q[4]), _nanmean([r.b_ref for r in rs]),
                          float(np.mean([r.outside for r in rs])))
    return {"proc_approx": table, "proc_approx_trials": _records_table(records, ("rho", "task"))}


RUNNERS = {
    "val-lipschitz": run_val_lipschitz,
    "val-corr": run_val_corr,
    "val-shapley": run_val_shapley,
    "val-hoeffding": run_val_hoeffding,
    "proc-exo": run_proc_exo,
    "proc-exo-dist": run_proc_exo_dist,
    "proc-dp": run_proc_dp,
    "proc-endo": run_proc_endo,
    "proc-joint": run_proc_joint,
    "proc-risk": run_proc_risk,
    "proc-approx": run_proc_approx,
}


def run(config: ExperimentConfig) -> dict:
    """Run one experiment and return its tables."""
    return RUNNERS[config.experiment](config)
