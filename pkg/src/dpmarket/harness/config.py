"""Experiment configuration and its flat ``key = value`` file format.

Grammar, one setting per line::

    # comment
    key = value
    list_key = 0.1, 0.2, 0.5

Blank lines and ``#`` comments are ignored; keys are the field names of
:class:`ExperimentConfig`. Tuple fields take comma-separated values and
optional fields accept ``none``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

from ..distributions import FAMILIES

EXPERIMENTS = (
    "val-lipschitz",
    "val-corr",
    "val-shapley",
    "val-hoeffding",
    "proc-exo",
    "proc-exo-dist",
    "proc-dp",
    "proc-endo",
    "proc-joint",
    "proc-risk",
    "proc-approx",
)

# Families swept by each experiment when ``family`` is left unset.
DEFAULT_FAMILIES = {
    "val-lipschitz": FAMILIES,
    "val-corr": FAMILIES,
    "val-shapley": FAMILIES,
}

DEFAULT_RHO = {
    "proc-approx": (0,),
}


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps it to exit code 2."""


def _grid(start: float, step: float, count: int) -> tuple:
    return tuple(round(start + step * i, 10) for i in range(count))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "proc-exo"
    trials: int = 50
    n_owners: int = 8
    sample_size: int = 10_000
    family: Optional[str] = None
    alpha_range: tuple = (10.0, 16.0)
    beta_range: tuple = (1.0, 3.0)
    seed: int = 0
    workers: int = 1
    rho: Optional[tuple] = None
    delta: float = 0.95
    deltas: tuple = (0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99)
    population: Optional[str] = None
    theta_bar: Optional[float] = None
    theta_bars: tuple = _grid(0.0, 0.2, 13)
    budget_multiples: tuple = _grid(0.1, 0.1, 10)
    dp_budget_multiple: float = 0.2
    eps_bar: float = 5.0
    eps_bars: tuple = tuple(10.0 ** (-1 + 0.5 * i) for i in range(7))
    dp_mechanism: str = "gaussian"
    delta_dp: float = 1e-15
    sensitivity: float = 1.0
    bins: int = 64

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        for name in ("trials", "n_owners", "sample_size", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_owners > 12:
            raise ConfigError("n_owners above 12 is not supported (exact coalition tables)")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.family is not None and self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        for name in ("alpha_range", "beta_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigError(f"{name} must be an increasing pair")
        if self.beta_range[0] <= 0:
            raise ConfigError("beta_range must be positive")
        if self.rho is not None and (not self.rho or any(r not in (-1, 0, 1) for r in self.rho)):
            raise ConfigError("rho must be a nonempty subset of -1, 0, 1")
        if not 0.0 <= self.delta < 1.0 or any(not 0.0 <= d < 1.0 for d in self.deltas):
            raise ConfigError("confidence levels must lie in [0, 1)")
        if self.population not in (None, "finite", "infinite"):
            raise ConfigError(f"unknown population {self.population!r}")
        if self.theta_bar is not None and self.theta_bar < 0:
            raise ConfigError("theta_bar must be nonnegative")
        for name in ("deltas", "theta_bars", "budget_multiples", "eps_bars"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be nonempty")
        if any(t < 0 for t in self.theta_bars):
            raise ConfigError("theta_bars must be nonnegative")
        if any(m <= 0 for m in self.budget_multiples):
            raise ConfigError("budget_multiples must be positive")
        if self.dp_budget_multiple <= 0:
            raise ConfigError("dp_budget_multiple must be positive")
        if self.eps_bar <= 0 or any(e <= 0 for e in self.eps_bars):
            raise ConfigError("eps_bar values must be positive")
        if self.dp_mechanism not in ("laplace", "gaussian"):
            raise ConfigError(f"unknown dp mechanism {self.dp_mechanism!r}")
        if not 0.0 < self.delta_dp < 1.0 or self.sensitivity <= 0:
            raise ConfigError("need 0 < delta_dp < 1 and sensitivity > 0")
        if self.bins < 2:
            raise ConfigError("bins must be >= 2")

    @property
    def families(self) -> tuple:
        if self.family is not None:
            return (self.family,)
        return DEFAULT_FAMILIES.get(self.experiment, ("gaussian",))

    @property
    def rhos(self) -> tuple:
        if self.rho is not None:
            return tuple(self.rho)
        return DEFAULT_RHO.get(self.experiment, (-1, 0, 1))

    @property
    def populations(self) -> tuple:
        return (self.population,) if self.population else ("finite", "infinite")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def echo(self) -> dict:
        out = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_INT_FIELDS = {"trials", "n_owners", "sample_size", "seed", "workers", "bins"}
_TUPLE_INT = {"rho"}
_TUPLE_FLOAT = {"alpha_range", "beta_range", "deltas", "theta_bars", "budget_multiples", "eps_bars"}
_OPTIONAL = {"family", "rho", "population", "theta_bar"}


def _parse_float(text: str, key: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{key}: value must be finite")
    return v


def _parse_int(text: str, key: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def parse_value(key: str, text: str):
    """Convert one raw string to the type of field ``key``."""
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    text = text.strip()
    if key in _OPTIONAL and text.lower() in ("none", ""):
        return None
    if key in _TUPLE_INT or key in _TUPLE_FLOAT:
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if not parts:
            raise ConfigError(f"{key}: empty list")
        conv = _parse_int if key in _TUPLE_INT else _parse_float
        return tuple(conv(p, key) for p in parts)
    if key in _INT_FIELDS:
        return _parse_int(text, key)
    if key in ("delta", "theta_bar", "dp_budget_multiple", "eps_bar", "delta_dp", "sensitivity"):
        return _parse_float(text, key)
    return text


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = parse_value(key, value)
    return values


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Read a config file (if any) and apply overrides; ``None`` overrides are skipped."""
    values = {}
    if path is not None:
        try:
            with open(path) as fh:
                values = parse_config_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
