"""Synthetic owner data: parametric families, sampling, aggregation and local DP noise."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

FAMILIES = ("gaussian", "uniform", "exponential")
DEFAULT_SAMPLE_SIZE = 10_000


@dataclass(frozen=True)
class DistributionSpec:
    """Location/scale family.

    ``uniform`` is U(location, location + scale); ``exponential`` is shifted so
    that its mean is ``location + scale``.
    """

    family: str
    location: float
    scale: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not self.scale > 0:
            raise ValueError("scale must be strictly positive")

    @property
    def mean(self) -> float:
        if self.family == "uniform":
            return self.location + 0.5 * self.scale
        return self.location + (self.scale if self.family == "exponential" else 0.0)

    @property
    def std(self) -> float:
        if self.family == "uniform":
            return self.scale / math.sqrt(12.0)
        return self.scale


@dataclass(frozen=True, eq=False)
class EmpiricalSample:
    """Equal-weight sample. ``values`` is sorted; ``draws`` keeps draw order."""

    draws: np.ndarray
    values: np.ndarray = field(init=False)

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=float).ravel()
        if draws.size < 1:
            raise ValueError("sample must be nonempty")
        if not np.all(np.isfinite(draws)):
            raise ValueError("sample entries must be finite")
        draws.setflags(write=False)
        values = np.sort(draws)
        values.setflags(write=False)
        object.__setattr__(self, "draws", draws)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, values) -> "EmpiricalSample":
        return cls(np.asarray(values, dtype=float))

    def __len__(self) -> int:
        return self.values.size

    @property
    def n(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmpiricalSample):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class DpParams:
    """Local DP noise settings for one owner. ``delta_dp`` is used by gaussian only."""

    mechanism: str
    epsilon: float
    sensitivity: float = 1.0
    delta_dp: Optional[float] = None

    def __post_init__(self):
        if self.mechanism not in ("laplace", "gaussian"):
            raise ValueError(f"unknown DP mechanism {self.mechanism!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.sensitivity > 0:
            raise ValueError("sensitivity must be > 0")
        if self.mechanism == "gaussian":
            if self.delta_dp is None:
                raise ValueError("gaussian mechanism requires delta_dp")
            if not 0 < self.delta_dp < 1:
                raise ValueError("delta_dp must lie in (0, 1)")

    @property
    def noise_scale(self) -> float:
        """Laplace scale, or gaussian standard deviation."""
        base = self.sensitivity / self.epsilon
        if self.mechanism == "laplace":
            return base
        return base * math.sqrt(2.0 * math.log(1.25 / self.delta_dp))


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample(spec: DistributionSpec, n: int = DEFAULT_SAMPLE_SIZE, seed=None) -> EmpiricalSample:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_generator(seed)
    if spec.family == "gaussian":
        draws = rng.normal(spec.location, spec.scale, size=n)
    elif spec.family == "uniform":
        draws = rng.uniform(spec.location, spec.location + spec.scale, size=n)
    else:
        draws = spec.location + rng.exponential(spec.scale, size=n)
    return EmpiricalSample(draws)


def quantile(spec: DistributionSpec, u: float) -> float:
    """Exact inverse CDF of ``spec`` at ``u`` in (0, 1)."""
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie strictly inside (0, 1)")
    if spec.family == "gaussian":
        return float(spec.location + spec.scale * special.ndtri(u))
    if spec.family == "uniform":
        return spec.location + spec.scale * u
    return float(spec.location - spec.scale * math.log1p(-u))


def aggregate_euclidean(samples: Sequence[EmpiricalSample]) -> EmpiricalSample:
    """Average of independent draws: output k is the mean of draw k across inputs."""
    if len(samples) == 0:
        raise ValueError("need at least one sample")
    sizes = {s.n for s in samples}
    if len(sizes) != 1:
        raise ValueError(f"samples must share one size, got {sorted(sizes)}")
    stacked = np.stack([s.draws for s in samples])
    return EmpiricalSample(stacked.mean(axis=0))


def add_dp_noise(sample: EmpiricalSample, dp: DpParams, seed=None) -> EmpiricalSample:
    rng = as_generator(seed)
    if dp.mechanism == "laplace":
        noise = rng.laplace(0.0, dp.noise_scale, size=sample.n)
    else:
        noise = rng.normal(0.0, dp.noise_scale, size=sample.n)
    return EmpiricalSample(sample.draws + noise)
