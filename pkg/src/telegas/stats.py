"""Empirical CDFs, Kolmogorov-Smirnov tests, Monte Carlo means and tail slopes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

__all__ = [
    "EmpiricalSample",
    "KsReport",
    "MeanCI",
    "KS_CRITICAL",
    "ecdf",
    "ks_one_sample",
    "ks_two_sample",
    "mc_mean_ci",
    "tail_slope",
    "standard_error",
]

# Asymptotic Kolmogorov critical values c(level); threshold is c / sqrt(n).
KS_CRITICAL = {0.05: 1.358, 0.01: 1.628}
MIN_KS_N = 50


@dataclass(frozen=True)
class EmpiricalSample:
    """Sorted outcome values with parallel censoring flags."""

    values: np.ndarray
    censored: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        c = np.zeros(v.shape, dtype=bool) if self.censored is None else np.asarray(self.censored, dtype=bool)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("a sample needs at least one value")
        if c.shape != v.shape:
            raise ValueError("censored flags must match values in length")
        order = np.argsort(v, kind="stable")
        object.__setattr__(self, "values", v[order])
        object.__setattr__(self, "censored", c[order])

    @classmethod
    def from_values(cls, values, censored=None) -> "EmpiricalSample":
        values = np.asarray(values, dtype=float)
        return cls(values, np.zeros(values.shape, bool) if censored is None else censored)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def n_censored(self) -> int:
        return int(self.censored.sum())

    @property
    def censored_fraction(self) -> float:
        return self.n_censored / self.n

    @property
    def uncensored(self) -> np.ndarray:
        return self.values[~self.censored]

    @property
    def horizon(self) -> float:
        """Smallest censoring time, or +inf when nothing is censored."""
        c = self.values[self.censored]
        return float(c.min()) if c.size else math.inf


@dataclass(frozen=True)
class KsReport:
    statistic: float
    n_effective: float
    threshold: float
    level: float
    passed: bool
    window: Optional[float] = None

    @property
    def pass_(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "n_effective": self.n_effective,
            "threshold": self.threshold,
            "level": self.level,
            "pass": self.passed,
            "window": self.window,
        }


def _threshold(level: float, n_eff: float) -> float:
    if level not in KS_CRITICAL:
        raise ValueError(f"level must be one of {sorted(KS_CRITICAL)}")
    return KS_CRITICAL[level] / math.sqrt(n_eff)


def ecdf(sample: EmpiricalSample, x, *, denominator: str = "uncensored"):
    """Fraction of uncensored values <= x.

    ``denominator="uncensored"`` divides by the uncensored count (the
    censored values are dropped). ``"all"`` divides by n, which is the exact
    empirical estimate of P(tau <= x) for x below the censoring horizon.
    """
    u = sample.uncensored
    if u.size == 0:
        raise ValueError("all values are censored")
    denom = u.size if denominator == "uncensored" else sample.n
    out = np.searchsorted(u, np.asarray(x, dtype=float), side="right") / denom
    return float(out) if np.ndim(out) == 0 else out


def ks_one_sample(sample: EmpiricalSample, cdf: Callable, level: float = 0.01, *,
                  cdf_left: Optional[Callable] = None, window: Optional[float] = None) -> KsReport:
    """One-sample KS distance, correct for references with atoms.

    At every sample point both one-sided limits are compared:
    ``|F_n(x) - F(x)|`` and ``|F_n(x-) - F(x-)|``. ``cdf_left`` gives F(x-);
    without it F is assumed continuous.

    Censored samples are compared on ``[0, window]`` only, where the empirical
    CDF over all n values is exact; ``window`` defaults to the smallest
    censoring time.
    """
    n = sample.n
    if n < MIN_KS_N:
        raise ValueError(f"KS needs n >= {MIN_KS_N} for the asymptotic threshold (got {n})")
    if window is None:
        window = sample.horizon
    x = sample.uncensored
    x = x[x <= window]
    if x.size == 0:
        d = 0.0
    else:
        ux, first = np.unique(x, return_index=True)
        last = np.concatenate([first[1:], [x.size]])
        fn_right = last / n
        fn_left = first / n
        f_right = np.asarray(cdf(ux), dtype=float)
        f_left = np.asarray(cdf_left(ux), dtype=float) if cdf_left is not None else f_right
        d = float(max(np.max(np.abs(fn_right - f_right)), np.max(np.abs(fn_left - f_left))))
    if math.isfinite(window):
        # Between the last sample point and the window edge the empirical CDF is flat.
        fw = float(np.asarray(cdf(window)))
        d = max(d, abs(x.size / n - fw))
    thr = _threshold(level, n)
    return KsReport(d, float(n), thr, level, d <= thr, None if not math.isfinite(window) else float(window))


def ks_two_sample(a: EmpiricalSample, b: EmpiricalSample, level: float = 0.01) -> KsReport:
    """Two-sample KS distance on the common uncensored window; n_eff = nm/(n+m)."""
    n, m = a.n, b.n
    if n < MIN_KS_N or m < MIN_KS_N:
        raise ValueError(f"KS needs both n, m >= {MIN_KS_N} (got {n}, {m})")
    window = min(a.horizon, b.horizon)
    xa = a.uncensored
    xb = b.uncensored
    pts = np.concatenate([xa, xb])
    pts = pts[pts <= window]
    if pts.size == 0:
        d = 0.0
    else:
        fa = np.searchsorted(xa, pts, side="right") / n
        fb = np.searchsorted(xb, pts, side="right") / m
        d = float(np.max(np.abs(fa - fb)))
    n_eff = n * m / (n + m)
    thr = _threshold(level, n_eff)
    return KsReport(d, n_eff, thr, level, d <= thr, None if not math.isfinite(window) else float(window))


class MeanCI(NamedTuple):
    mean: float
    half_width: float
    degenerate: bool
    n: int


def mc_mean_ci(sample, level: float = 0.95) -> MeanCI:
    """Sample mean with a normal-approximation half width ``z * sd / sqrt(n)``.

    ``level`` is the coverage. Accepts an EmpiricalSample (all values used)
    or any array. A zero-variance sample returns half width 0, flagged.
    """
    x = sample.values if isinstance(sample, EmpiricalSample) else np.asarray(sample, dtype=float)
    n = x.size
    if n < 30:
        raise ValueError(f"need n >= 30 for a normal interval (got {n})")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    mean = float(np.mean(x))
    sd = float(np.std(x, ddof=1))
    if sd == 0.0:
        return MeanCI(mean, 0.0, True, n)
    z = NormalDist().inv_cdf(0.5 + level / 2.0)
    return MeanCI(mean, z * sd / math.sqrt(n), False, n)


def standard_error(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.std(x, ddof=1) / math.sqrt(x.size))


def tail_slope(sample: EmpiricalSample, t_min: float, t_max: Optional[float] = None, n_points: int = 40,
               min_tail: int = 100) -> float:
    """Least-squares slope of log empirical survival against log t.

    Survival is P(tau > t) estimated over all n values, which stays exact for
    t below the censoring horizon. ``t_max`` defaults to the smaller of that
    horizon and the 200th largest value, so the last fit point still rests on
    200 observations. The fit uses ``n_points`` log-spaced abscissae.
    """
    u = sample.uncensored
    if np.count_nonzero(u > t_min) < min_tail:
        raise ValueError(f"fewer than {min_tail} uncensored values above t_min={t_min}")
    hi = min(sample.horizon, float(u[-min(200, u.size)])) if t_max is None else t_max
    if not hi > t_min:
        raise ValueError("t_max must exceed t_min")
    grid = np.geomspace(t_min, hi, n_points)
    surv = 1.0 - np.searchsorted(u, grid, side="right") / sample.n
    keep = surv > 0
    if np.count_nonzero(keep) < 3:
        raise ValueError("too few positive survival points in the fit window")
    slope, _ = np.polyfit(np.log(grid[keep]), np.log(surv[keep]), 1)
    return float(slope)
