"""One-dimensional statistical distances between empirical samples.

WD and KS work on the empirical CDFs directly. TVD, KLD and JSD need densities
and use a shared equal-width histogram, so disjoint supports show up exactly:
KLD comes back as :data:`UNDEFINED` (NaN) rather than being floored away.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .distributions import EmpiricalSample

DISTANCE_KINDS = ("wd", "kld", "jsd", "ks", "tvd")
DEFAULT_BINS = 64
UNDEFINED = math.nan
JSD_MAX = math.sqrt(math.log(2.0))


def is_undefined(value: float) -> bool:
    return isinstance(value, float) and math.isnan(value)


def _values(x) -> np.ndarray:
    if isinstance(x, EmpiricalSample):
        return x.values
    v = np.sort(np.asarray(x, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("sample must be nonempty")
    return v


# -- Wasserstein ------------------------------------------------------------


def wasserstein1(a, b) -> float:
    """W1 between two empirical distributions.

    Equal sizes reduce to the mean absolute difference of order statistics.
    Otherwise the quantile functions are integrated exactly over the merged
    breakpoints (see :func:`wasserstein1_quantile`).
    """
    av, bv = _values(a), _values(b)
    if av.size == bv.size:
        return float(np.mean(np.abs(av - bv)))
    return wasserstein1_quantile(av, bv)


def wasserstein1_quantile(a, b) -> float:
    """Exact integral of |F_a^-1(u) - F_b^-1(u)| du over (0, 1)."""
    av, bv = _values(a), _values(b)
    n, m = av.size, bv.size
    # Breakpoints k/n and k/m, merged exactly on the integer grid of n*m.
    grid = np.union1d(np.arange(1, n + 1) * m, np.arange(1, m + 1) * n)
    widths = np.diff(np.concatenate(([0], grid))) / (n * m)
    # On the interval ending at grid[j] the quantile index is ceil(u*n) - 1.
    ia = (grid - 1) // m
    ib = (grid - 1) // n
    return float(np.sum(widths * np.abs(av[ia] - bv[ib])))


def wasserstein1_gaussian(mu1: float, sigma1: float, mu2: float, sigma2: float) -> float:
    """Closed-form W1 between N(mu1, sigma1^2) and N(mu2, sigma2^2).

    The quantile difference is d + (sigma1 - sigma2) z, so W1 is the mean of a
    folded normal with location d and scale |sigma1 - sigma2|.
    """
    if not (sigma1 > 0 and sigma2 > 0):
        raise ValueError("standard deviations must be positive")
    d = mu1 - mu2
    s = abs(sigma1 - sigma2)
    if s < 1e-12:
        return abs(d)
    return s * math.sqrt(2.0 / math.pi) * math.exp(-d * d / (2.0 * s * s)) + d * (
        1.0 - 2.0 * float(special.ndtr(-d / s))
    )


# -- Kolmogorov-Smirnov -----------------------------------------------------


def kolmogorov_smirnov(a, b) -> float:
    av, bv = _values(a), _values(b)
    pts = np.concatenate((av, bv))
    fa = np.searchsorted(av, pts, side="right") / av.size
    fb = np.searchsorted(bv, pts, side="right") / bv.size
    return float(np.max(np.abs(fa - fb)))


# -- histogram based --------------------------------------------------------


@dataclass(frozen=True)
class HistogramConfig:
    bin_count: int = DEFAULT_BINS
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.bin_count < 2:
            raise ValueError("bin_count must be >= 2")
        if not self.lo < self.hi:
            raise ValueError("need lo < hi")

    @classmethod
    def pooled(cls, a, b, bin_count: int = DEFAULT_BINS) -> "HistogramConfig":
        av, bv = _values(a), _values(b)
        lo = min(av[0], bv[0])
        hi = max(av[-1], bv[-1])
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        return cls(bin_count, float(lo), float(hi))

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.bin_count + 1)

    def probabilities(self, x) -> np.ndarray:
        v = _values(x)
        if v[0] < self.lo or v[-1] > self.hi:
            raise ValueError("sample lies outside the histogram range")
        idx = _bin_index(v, self.lo, self.hi, self.bin_count)
        return np.bincount(idx, minlength=self.bin_count) / v.size


def _bin_index(v, lo, hi, bins):
    # Right edge closed on the last bin, matching np.histogram.
    idx = np.floor((v - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def _config(a, b, cfg):
    return cfg if cfg is not None else HistogramConfig.pooled(a, b)


def tvd_from_probs(p, q) -> float:
    return float(0.5 * np.sum(np.abs(np.asarray(p) - np.asarray(q))))


def kld_from_probs(p, q) -> float:
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if np.any((q == 0) & (p > 0)):
        return UNDEFINED
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def jsd_from_probs(p, q) -> float:
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    m = 0.5 * (p + q)
    div = 0.5 * np.sum(special.rel_entr(p, m)) + 0.5 * np.sum(special.rel_entr(q, m))
    return float(math.sqrt(max(div, 0.0)))


def tvd(a, b, cfg: HistogramConfig | None = None) -> float:
    cfg = _config(a, b, cfg)
    return tvd_from_probs(cfg.probabilities(a), cfg.probabilities(b))


def kld(a, b, cfg: HistogramConfig | None = None) -> float:
    """KL(a || b) on histogram densities; NaN when b has an empty bin where a does not."""
    cfg = _config(a, b, cfg)
    return kld_from_probs(cfg.probabilities(a), cfg.probabilities(b))


def jsd(a, b, cfg: HistogramConfig | None = None) -> float:
    """Jensen-Shannon distance (square root of the divergence, natural log)."""
    cfg = _config(a, b, cfg)
    return jsd_from_probs(cfg.probabilities(a), cfg.probabilities(b))


def distance(kind: str, a, b, cfg: HistogramConfig | None = None) -> float:
    if kind == "wd":
        return wasserstein1(a, b)
    if kind == "ks":
        return kolmogorov_smirnov(a, b)
    if kind == "tvd":
        return tvd(a, b, cfg)
    if kind == "kld":
        return kld(a, b, cfg)
    if kind == "jsd":
        return jsd(a, b, cfg)
    raise ValueError(f"unknown distance {kind!r}")


# -- batched versions used for coalition tables ------------------------------


def all_distances_rows(rows: np.ndarray, target: np.ndarray, bins: int = DEFAULT_BINS) -> dict:
    """All five distances from each sorted row of ``rows`` to sorted ``target``.

    Rows and target must share the sample size. KLD is taken as
    KL(target || row), which stays defined whenever the coalition's histogram
    covers every bin the target occupies.
    """
    rows = np.atleast_2d(rows)
    m, n = rows.shape
    if target.shape != (n,):
        raise ValueError("rows and target must share the sample size")
    out = {"wd": np.mean(np.abs(rows - target), axis=1)}

    ks = np.empty(m)
    for r in range(m):
        pts = np.concatenate((rows[r], target))
        ks[r] = np.max(
            np.abs(
                np.searchsorted(rows[r], pts, side="right")
                - np.searchsorted(target, pts, side="right")
            )
        ) / n
    out["ks"] = ks

    lo = np.minimum(rows[:, 0], target[0])
    hi = np.maximum(rows[:, -1], target[-1])
    flat = hi <= lo
    lo = np.where(flat, lo - 0.5, lo)
    hi = np.where(flat, hi + 0.5, hi)
    span = (hi - lo)[:, None]
    offsets = (np.arange(m) * bins)[:, None]
    ip = np.clip(np.floor((rows - lo[:, None]) / span * bins).astype(np.int64), 0, bins - 1)
    it = np.clip(np.floor((target[None, :] - lo[:, None]) / span * bins).astype(np.int64), 0, bins - 1)
    p = np.bincount((ip + offsets).ravel(), minlength=m * bins).reshape(m, bins) / n
    q = np.bincount((it + offsets).ravel(), minlength=m * bins).reshape(m, bins) / n
    out["tvd"] = 0.5 * np.sum(np.abs(p - q), axis=1)
    mix = 0.5 * (p + q)
    div = 0.5 * special.rel_entr(p, mix).sum(axis=1) + 0.5 * special.rel_entr(q, mix).sum(axis=1)
    out["jsd"] = np.sqrt(np.maximum(div, 0.0))
    undefined = np.any((p == 0) & (q > 0), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = special.rel_entr(q, p).sum(axis=1)
    out["kld"] = np.where(undefined, np.nan, kl)
    return out
