"""Mixed-integer SOCP form of the point-wise procurement problem.

Nothing here calls a cone solver. The problem is materialised as explicit
variables, objective terms and constraint rows so that it can be dumped to a
plain-text file and handed to an external solver, and so that its exactness
against the closed-form objective can be checked assignment by assignment.

Dump format, one record per line, fields separated by single spaces::

    PARAM <name> <value>
    VAR <name> BINARY|CONTINUOUS <lb> <ub>            (ub may be inf)
    OBJ <coef> <var>        |  OBJ <const> CONST
    LIN <row> <sense> <rhs> <coef> <var> [<coef> <var> ...]
    SOC <row> <m> <coef> <var> ... | <coef> <var> ...
    BOUND <var> <sense> <value>

A SOC row reads sqrt(sum_j (coef_j var_j)^2) <= sum_k coef_k var_k, with the
``m`` squared terms left of the bar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .mechanisms import MarketInstance, bound_constant, pointwise_feasible, pointwise_objective

EXACTNESS_TOL = 1e-9
ROW_TOL = 1e-9


@dataclass
class Variable:
    name: str
    kind: str
    lb: float = 0.0
    ub: float = math.inf


@dataclass
class LinRow:
    name: str
    coefs: dict
    sense: str
    rhs: float

    def activity(self, x: dict) -> float:
        return sum(c * x[v] for v, c in self.coefs.items())

    def satisfied(self, x: dict, tol: float = ROW_TOL) -> bool:
        a = self.activity(x)
        scale = tol * max(1.0, abs(self.rhs))
        if self.sense == "<=":
            return a <= self.rhs + scale
        if self.sense == ">=":
            return a >= self.rhs - scale
        return abs(a - self.rhs) <= scale


@dataclass
class SocRow:
    name: str
    lhs: list  # (coef, var) pairs inside the norm
    rhs: list  # (coef, var) pairs of the linear right-hand side

    def satisfied(self, x: dict, tol: float = ROW_TOL) -> bool:
        norm = math.sqrt(sum((c * x[v]) ** 2 for c, v in self.lhs))
        right = sum(c * x[v] for c, v in self.rhs)
        return norm <= right + tol * max(1.0, abs(right))


@dataclass
class MisocpProblem:
    population: str
    mechanism: str
    n: int
    c: float
    big_m: float
    variables: list = field(default_factory=list)
    objective: dict = field(default_factory=dict)
    constant: float = 0.0
    lin_rows: list = field(default_factory=list)
    soc_rows: list = field(default_factory=list)

    @property
    def binaries(self) -> list:
        return [v.name for v in self.variables if v.kind == "BINARY"]

    @property
    def n_binaries(self) -> int:
        return len(self.binaries)

    def objective_value(self, x: dict) -> float:
        return self.constant + sum(c * x[v] for v, c in self.objective.items())

    def _dense(self):
        """Linear rows as a matrix, rebuilt whenever rows or variables change."""
        key = (len(self.variables), len(self.lin_rows))
        cached = getattr(self, "_dense_cache", None)
        if cached is not None and cached[0] == key:
            return cached[1]
        index = {v.name: j for j, v in enumerate(self.variables)}
        a = np.zeros((len(self.lin_rows), len(self.variables)))
        for i, row in enumerate(self.lin_rows):
            for name, coef in row.coefs.items():
                a[i, index[name]] = coef
        rhs = np.array([r.rhs for r in self.lin_rows])
        sense = np.array([r.sense for r in self.lin_rows])
        lb = np.array([v.lb for v in self.variables])
        ub = np.array([v.ub for v in self.variables])
        binary = np.array([v.kind == "BINARY" for v in self.variables])
        dense = (a, rhs, sense, lb, ub, binary)
        self._dense_cache = (key, dense)
        return dense

    def feasible(self, x: dict) -> bool:
        a, rhs, sense, lb, ub, binary = self._dense()
        vals = np.array([x[v.name] for v in self.variables], dtype=float)
        if np.any(vals < lb - ROW_TOL) or np.any(vals > ub + ROW_TOL):
            return False
        if np.any(binary & (vals != 0) & (vals != 1)):
            return False
        act = a @ vals
        slack = ROW_TOL * np.maximum(1.0, np.abs(rhs))
        ok = np.where(
            sense == "<=", act <= rhs + slack,
            np.where(sense == ">=", act >= rhs - slack, np.abs(act - rhs) <= slack),
        )
        return bool(ok.all()) and all(r.satisfied(x) for r in self.soc_rows)

    def to_text(self) -> str:
        lines = [
            f"PARAM population {self.population}",
            f"PARAM mechanism {self.mechanism}",
            f"PARAM N {self.n}",
            f"PARAM C {self.c!r}",
            f"PARAM M {self.big_m!r}",
        ]
        for v in self.variables:
            lines.append(f"VAR {v.name} {v.kind} {v.lb!r} {v.ub!r}")
        if self.constant:
            lines.append(f"OBJ {self.constant!r} CONST")
        for name, c in self.objective.items():
            lines.append(f"OBJ {c!r} {name}")
        for r in self.lin_rows:
            terms = " ".join(f"{c!r} {v}" for v, c in r.coefs.items())
            lines.append(f"LIN {r.name} {r.sense} {r.rhs!r} {terms}")
        for r in self.soc_rows:
            left = " ".join(f"{c!r} {v}" for c, v in r.lhs)
            right = " ".join(f"{c!r} {v}" for c, v in r.rhs)
            lines.append(f"SOC {r.name} {len(r.lhs)} {left} | {right}")
        for v in self.variables:
            if v.kind == "CONTINUOUS":
                lines.append(f"BOUND {v.name} >= {v.lb!r}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        try:
            with open(path, "w") as fh:
                fh.write(self.to_text())
        except OSError as exc:
            raise OSError(f"cannot write MISOCP dump to {path}: {exc}") from exc


def _q(i):
    return f"q{i}"


def _r(i, j):
    return f"r{i}_{j}"


def _z(i):
    return f"z{i}"


def big_m(instance: MarketInstance, population: str) -> float:
    """Big-M for the z/s linearisation.

    Finite: K sqrt(ln(2/(1-delta))/2) max W, which meets the required lower
    bound min(B_ref, .) and never cuts an admissible selection. Infinite:
    strictly above ||W||.
    """
    w = instance.w
    if population == "finite":
        return instance.k * math.sqrt(instance.hoeffding.log_term / 2.0) * float(np.max(w))
    norm = float(np.linalg.norm(w))
    return norm * (1.0 + 1e-6) + 1e-9


def build_misocp(instance: MarketInstance, theta, population: Optional[str] = None) -> MisocpProblem:
    """Build the MISOCP for a joint or endogenous instance.

    Owners are numbered 1..N in variable names (q0 is the outside option).
    """
    if instance.mechanism not in ("joint", "endogenous"):
        raise ValueError("MISOCP form is defined for the joint and endogenous mechanisms")
    population = population or instance.population
    if population != instance.population:
        instance = instance.replace(
            hoeffding=type(instance.hoeffding)(instance.hoeffding.delta, population, instance.n)
        )
    n = instance.n
    w = instance.w
    psi = instance.prior.virtual_costs(theta)
    c = bound_constant(instance.k, instance.hoeffding, n)
    m = big_m(instance, population)
    prob = MisocpProblem(population=population, mechanism=instance.mechanism, n=n, c=c, big_m=m)
    owners = range(1, n + 1)

    prob.variables.append(Variable(_q(0), "BINARY", 0.0, 1.0))
    for i in owners:
        prob.variables.append(Variable(_q(i), "BINARY", 0.0, 1.0))
    if population == "finite":
        for i in owners:
            for j in owners:
                if i != j:
                    prob.variables.append(Variable(_r(i, j), "BINARY", 0.0, 1.0))
    prob.variables.append(Variable("s", "CONTINUOUS", 0.0, math.inf))
    for i in owners:
        prob.variables.append(Variable(_z(i), "CONTINUOUS", 0.0, math.inf))

    # objective: q0 B_ref + (s or C^INF s) + sum q_i psi_i (payments only for joint)
    prob.objective[_q(0)] = float(instance.budget)
    s_coef = 1.0 if population == "finite" else c
    prob.objective["s"] = s_coef
    if instance.mechanism == "joint":
        for i in owners:
            prob.objective[_q(i)] = float(psi[i - 1])

    # cone row
    rhs = [(1.0, _z(i)) for i in owners]
    if population == "finite":
        lhs = [(c * float(w[i - 1]), _r(i, j)) for i in owners for j in owners if i != j]
    else:
        lhs = [(float(w[i - 1]), _q(i)) for i in owners]
    prob.soc_rows.append(SocRow("cone", lhs, rhs))

    if population == "finite":
        for i in owners:
            for j in owners:
                if i == j:
                    continue
                prob.lin_rows.append(LinRow(f"r_le_q_{i}_{j}", {_r(i, j): 1.0, _q(i): -1.0}, "<=", 0.0))
                prob.lin_rows.append(LinRow(f"r_le_notq_{i}_{j}", {_r(i, j): 1.0, _q(j): 1.0}, "<=", 1.0))
                prob.lin_rows.append(
                    LinRow(f"r_ge_diff_{i}_{j}", {_r(i, j): 1.0, _q(i): -1.0, _q(j): 1.0}, ">=", 0.0)
                )

    for i in owners:
        prob.lin_rows.append(LinRow(f"z_le_Mq_{i}", {_z(i): 1.0, _q(i): -m}, "<=", 0.0))
        prob.lin_rows.append(LinRow(f"s_ge_z_{i}", {"s": 1.0, _z(i): -1.0}, ">=", 0.0))
        prob.lin_rows.append(LinRow(f"s_minus_z_le_M_{i}", {"s": 1.0, _z(i): -1.0, _q(i): m}, "<=", m))

    card = {_q(i): 1.0 for i in range(n + 1)}
    prob.lin_rows.append(LinRow("card_lo", dict(card), ">=", 1.0))
    prob.lin_rows.append(LinRow("card_hi", dict(card), "<=", float(n)))

    if instance.mechanism == "endogenous":
        budget_row = {"s": s_coef}
        for i in owners:
            budget_row[_q(i)] = float(psi[i - 1])
        prob.lin_rows.append(LinRow("budget", budget_row, "<=", float(instance.budget)))
    return prob


def implied_assignment(problem: MisocpProblem, q, instance: MarketInstance) -> dict:
    """Minimal auxiliaries for a binary selection: r = q_i(1-q_j), z = q s, cone at equality."""
    q = np.asarray(q, dtype=int)
    n = problem.n
    x = {_q(i): int(q[i]) for i in range(n + 1)}
    sel = q[1:].astype(bool)
    k = int(sel.sum())
    w = instance.w
    if problem.population == "finite":
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                if i != j:
                    x[_r(i, j)] = int(q[i] * (1 - q[j]))
        norm = math.sqrt(sum((problem.c * w[i - 1]) ** 2 * x[_r(i, j)]
                             for i in range(1, n + 1) for j in range(1, n + 1) if i != j))
    else:
        norm = math.sqrt(float(np.sum((w * q[1:]) ** 2)))
    s = norm / k if k else 0.0
    x["s"] = s
    for i in range(1, n + 1):
        x[_z(i)] = s * q[i]
    return x


def check_reformulation_exactness(problem: MisocpProblem, q, instance: MarketInstance, theta) -> bool:
    """True when the MISOCP and the closed form agree on a binary selection.

    Agreement means the implied point is feasible exactly when the selection
    is feasible for the point-wise problem, and the objectives then match
    within 1e-9.
    """
    inst = instance
    if inst.population != problem.population:
        inst = inst.replace(hoeffding=type(inst.hoeffding)(inst.hoeffding.delta, problem.population, inst.n))
    x = implied_assignment(problem, q, inst)
    ok = problem.feasible(x)
    if ok != pointwise_feasible(q, inst, theta):
        return False
    if not ok:
        return True
    return abs(problem.objective_value(x) - pointwise_objective(q, inst, theta)) <= EXACTNESS_TOL
