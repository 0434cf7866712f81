"""Closed-form collision laws for pairs and gases of telegraph particles.

Conventions
-----------
* ``tau`` is the first time the gap ``x2 - x1`` between two independent
  telegraph particles started ``z`` apart reaches zero.
* ``t0 = z / (2v)`` is the earliest possible meeting time; the approaching
  pattern (0,1) carries an atom of mass ``exp(-lam z / v)`` there (neither
  particle switches before meeting).
* The continuous part of the (0,1) law is
  ``2 z lam exp(-2 lam t) I1(lam r / v) / r`` with ``r = sqrt(4 v^2 t^2 - z^2)``.
  Patterns (0,0)/(1,1) and (1,0) are that law convolved with ``g`` and
  ``g * g`` where ``g(t) = exp(-2 lam t) I1(2 lam t) / t`` and
  ``g * g(t) = 2 exp(-2 lam t) I2(2 lam t) / t``.

``paper_literal=True`` switches to an uncorrected set of constants
(continuous coefficient ``z lam / (2 v^2)``, no atom terms in the (0,0) and
(1,0) laws, ``exp(-z c sqrt(s))`` in the diffusive limit). Those variants do
not define probability laws; they exist for side-by-side audits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numerics as nm
from .core import APPROACH, SEPARATION, Params, PatternPair, parse_pattern

__all__ = [
    "TAIL_EXPONENT",
    "phi",
    "g_density",
    "g_cdf",
    "g2_density",
    "g2_cdf",
    "renewal_kernel",
    "approach_continuous_density",
    "MixedDistribution",
    "first_meeting_distribution",
    "wiener_meeting_pdf",
    "wiener_meeting_cdf",
    "levy_identity_residual",
    "renewal_H",
    "multi_renewal",
    "order_stat_cdf",
    "uniform_order_stat_cdf",
    "ReflectingDensityParams",
    "reflecting_density",
    "reflecting_atoms",
    "reflecting_density_images",
    "telegraph_free_density",
    "moment_alpha",
    "moment_tail",
    "expected_min",
]

# Density of every first-meeting law decays like t**TAIL_EXPONENT.
TAIL_EXPONENT = -1.5


def _arr(x):
    return np.asarray(x, dtype=float)


def _out(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


# ------------------------------------------------------------------ transforms

def _root(s, lam):
    return np.sqrt(s * s + 4.0 * lam * s)


def phi(pattern, s, z: float, params: Params):
    """Laplace transform E exp(-s tau) of the first meeting time."""
    pattern = parse_pattern(pattern)
    s = _arr(s)
    if np.any(s < 0):
        raise ValueError("s must be >= 0")
    if z <= 0:
        raise ValueError("z must be > 0")
    lam, v = params.lam, params.v
    R = _root(s, lam)
    base = np.exp(-z / (2.0 * v) * R)
    # (s + 2 lam - R) / (2 lam), rewritten to avoid cancellation for large s.
    g_hat = 2.0 * lam / (s + 2.0 * lam + R)
    if pattern == APPROACH:
        res = base
    elif pattern == SEPARATION:
        res = g_hat * g_hat * base
    else:
        res = g_hat * base
    return _out(res)


def g_density(t, params: Params):
    """exp(-2 lam t) I1(2 lam t) / t, equal to lam at t = 0."""
    t = _arr(t)
    lam = params.lam
    out = np.where(t >= 0, 2.0 * lam * np.asarray(nm.bessel_i1_over_x_scaled(np.maximum(2.0 * lam * t, 0.0))), 0.0)
    return _out(out)


def g_cdf(t, params: Params):
    """Closed form 1 - exp(-x)(I0(x) + I1(x)) with x = 2 lam t."""
    t = _arr(t)
    x = 2.0 * params.lam * np.maximum(t, 0.0)
    val = 1.0 - (np.asarray(nm.bessel_i_scaled(0, x)) + np.asarray(nm.bessel_i_scaled(1, x)))
    return _out(np.where(t > 0, val, 0.0))


def g2_density(t, params: Params):
    """Self-convolution of g: 2 exp(-2 lam t) I2(2 lam t) / t."""
    t = _arr(t)
    lam = params.lam
    x = 2.0 * lam * np.maximum(t, 0.0)
    out = np.where(t >= 0, 4.0 * lam * np.asarray(nm.bessel_i2_over_x_scaled(x)), 0.0)
    return _out(out)


def g2_cdf(t, params: Params):
    """Closed form 1 - exp(-x)(I0 + 2 I1 + I2)(x) with x = 2 lam t."""
    t = _arr(t)
    x = 2.0 * params.lam * np.maximum(t, 0.0)
    i0 = np.asarray(nm.bessel_i_scaled(0, x))
    i1 = np.asarray(nm.bessel_i_scaled(1, x))
    i2 = x * np.asarray(nm.bessel_i2_over_x_scaled(x))
    return _out(np.where(t > 0, 1.0 - (i0 + 2.0 * i1 + i2), 0.0))


def renewal_kernel(u, params: Params):
    """Expected crossings after a meeting, inverse transform of (s+2lam+R)/(2sR).

    K(u) = 1/2 + exp(-2 lam u)[(1/2 + lam u) I0(2 lam u) + lam u I1(2 lam u)],
    K(0) = 1.
    """
    u = _arr(u)
    lam = params.lam
    x = 2.0 * lam * np.maximum(u, 0.0)
    i0 = np.asarray(nm.bessel_i_scaled(0, x))
    i1 = np.asarray(nm.bessel_i_scaled(1, x))
    val = 0.5 + (0.5 + 0.5 * x) * i0 + 0.5 * x * i1
    return _out(np.where(u >= 0, val, 0.0))


def approach_continuous_density(t, z: float, params: Params, coefficient: float | None = None):
    """Absolutely continuous part of the (0,1) meeting law.

    ``coefficient`` multiplies ``exp(-2 lam t) I1(lam r / v) / r``; the default
    ``2 z lam`` makes atom plus density a probability law. The value at
    ``t0`` is the removable limit ``lam^2 z / v * exp(-lam z / v)``.
    """
    t = _arr(t)
    lam, v = params.lam, params.v
    coef = 2.0 * z * lam if coefficient is None else coefficient
    t0 = z / (2.0 * v)
    tt = np.maximum(t, t0)
    r2 = np.maximum(4.0 * v * v * tt * tt - z * z, 0.0)
    r = np.sqrt(r2)
    y = lam * r / v
    # y - 2 lam t = -(lam / v) z^2 / (r + 2 v t): no overflow, no cancellation.
    expo = -(lam / v) * z * z / (r + 2.0 * v * tt)
    val = coef * (lam / v) * np.exp(expo) * np.asarray(nm.bessel_i1_over_x_scaled(y))
    return _out(np.where(t >= t0, val, 0.0))


# ------------------------------------------------------------ mixed distribution

@dataclass(frozen=True)
class MixedDistribution:
    """Law of a first meeting time: an atom at ``atom_time`` plus a density.

    Instances are immutable and cheap; ``density``, ``cdf`` and friends run
    quadrature on demand.
    """

    pattern: PatternPair
    z: float
    params: Params
    atom_time: float
    atom_mass: float
    coefficient: float
    paper_literal: bool = False
    tol: float = 1e-11
    kernel: str = "none"
    inner_atom: float = 0.0

    # -- pieces of the law ---------------------------------------------------
    def _c01(self, u):
        return approach_continuous_density(u, self.z, self.params, self.coefficient)

    def _kernel_pdf(self, s):
        if self.kernel == "g":
            return g_density(s, self.params)
        return g2_density(s, self.params)

    def _kernel_cdf(self, s):
        if self.kernel == "g":
            return g_cdf(s, self.params)
        return g2_cdf(s, self.params)

    def _h0(self) -> float:
        return 0.25 / self.params.lam

    def _convolve(self, t: float, kernel) -> float:
        """atom * kernel(t - t0) + int_{t0}^{t} c01(u) kernel(t - u) du."""
        t0 = self.atom_time
        if t <= t0:
            return 0.0
        edges = nm.geometric_edges(t0, t, self._h0())
        vals, _ = nm.integrate_pieces(lambda u: self._c01(u) * kernel(t - u), edges, self.tol)
        return self.inner_atom * float(kernel(t - t0)) + float(vals.sum())

    def _scale(self) -> float:
        lam, v = self.params.lam, self.params.v
        return max(0.5 / lam, lam * self.z * self.z / (v * v), self.atom_time)

    # -- public surface -------------------------------------------------------
    def density(self, t):
        """Density of the continuous part (zero before ``atom_time``)."""
        t = _arr(t)
        if self.kernel == "none":
            return self._c01(t)
        flat = np.array([self._convolve(float(ti), self._kernel_pdf) for ti in t.ravel()])
        return _out(flat.reshape(t.shape))

    def _continuous_cdf_sorted(self, ts: np.ndarray) -> np.ndarray:
        t0 = self.atom_time
        clipped = np.maximum(ts, t0)
        edges = np.concatenate([[t0], clipped])
        pieces, _ = nm.integrate_pieces(self._c01, edges, self.tol)
        return np.cumsum(pieces)

    def _cdf(self, t, include_atom_at_t0: bool):
        t = _arr(t)
        flat = t.ravel()
        out = np.zeros(flat.size)
        t0 = self.atom_time
        if self.kernel == "none":
            order = np.argsort(flat, kind="stable")
            cont = self._continuous_cdf_sorted(flat[order])
            res = np.empty_like(cont)
            res[order] = cont
            atom = np.where(flat > t0, self.atom_mass, 0.0)
            if include_atom_at_t0:
                atom = np.where(flat >= t0, self.atom_mass, 0.0)
            out = res + atom
        else:
            out = np.array([self._convolve(float(ti), self._kernel_cdf) for ti in flat])
        return _out(np.clip(out, 0.0, None).reshape(t.shape))

    def cdf(self, t):
        """P(tau <= t), right-continuous, atom included at ``atom_time``."""
        return self._cdf(t, include_atom_at_t0=True)

    def cdf_left(self, t):
        """P(tau < t): the left limit of :meth:`cdf`."""
        return self._cdf(t, include_atom_at_t0=False)

    def sf(self, t):
        """P(tau > t); the (0,1) tail is integrated directly for accuracy."""
        t = _arr(t)
        if self.kernel != "none":
            return _out(1.0 - np.asarray(self.cdf(t)))
        res = []
        for ti in t.ravel():
            if ti < self.atom_time:
                res.append(self.total_mass())
                continue
            q = nm.integrate(self._c01, float(ti), math.inf, self.tol, tail="inverse-square", scale=max(float(ti), self._scale()))
            res.append(q.value)
        return _out(np.asarray(res).reshape(t.shape))

    def continuous_mass(self, tol: float = 1e-9) -> float:
        """Integral of the density over (atom_time, inf)."""
        t0 = self.atom_time
        if self.kernel == "none":
            f = self._c01
        else:
            def f(t):
                return np.asarray(self.density(t))
        q = nm.integrate(f, t0, math.inf, tol, tail="inverse-square", scale=self._scale())
        return q.value

    def total_mass(self, tol: float = 1e-9) -> float:
        return self.atom_mass + self.continuous_mass(tol)

    def laplace(self, s: float, tol: float = 1e-9) -> float:
        """E exp(-s tau) computed by quadrature of the law itself."""
        t0 = self.atom_time
        if self.kernel == "none":
            f = self._c01
        else:
            def f(t):
                return np.asarray(self.density(t))
        q = nm.integrate(lambda t: np.exp(-s * t) * f(t), t0, math.inf, tol, tail="inverse-square", scale=self._scale())
        return self.atom_mass * math.exp(-s * t0) + q.value


def first_meeting_distribution(pattern, z: float, params: Params, *, paper_literal: bool = False) -> MixedDistribution:
    """Law of the first meeting time of two particles ``z`` apart."""
    pattern = parse_pattern(pattern)
    if not z > 0:
        raise ValueError(f"z must be > 0 (got {z!r})")
    lam, v = params.lam, params.v
    t0 = z / (2.0 * v)
    atom = math.exp(-lam * z / v)
    coef = z * lam / (2.0 * v * v) if paper_literal else 2.0 * z * lam
    if pattern == APPROACH:
        kernel = "none"
    elif pattern == SEPARATION:
        kernel = "g2"
    else:
        kernel = "g"
    if kernel == "none":
        return MixedDistribution(pattern, float(z), params, t0, atom, coef, paper_literal)
    # The (0,1) atom is smeared by the kernel, so the convolved law has no atom.
    inner = 0.0 if paper_literal else atom
    return MixedDistribution(pattern, float(z), params, t0, 0.0, coef, paper_literal, kernel=kernel, inner_atom=inner)


# ------------------------------------------------------------ diffusive limit

def wiener_meeting_pdf(t, z: float, c: float, *, paper_literal: bool = False):
    """Meeting-time density of two Brownian particles, each with variance c^2 t."""
    t = _arr(t)
    if np.any(t <= 0):
        raise ValueError("t must be > 0")
    if paper_literal:
        val = c * z * np.exp(-c * c * z * z / (4.0 * t)) / (2.0 * math.sqrt(math.pi) * t ** 1.5)
    else:
        val = (z / c) * np.exp(-z * z / (4.0 * c * c * t)) / (2.0 * math.sqrt(math.pi) * t ** 1.5)
    return _out(val)


_erfc = np.vectorize(math.erfc, otypes=[float])


def wiener_meeting_cdf(t, z: float, c: float, *, paper_literal: bool = False):
    """P(meeting <= t) = erfc(z / (2 c sqrt t)); zero for t <= 0."""
    t = _arr(t)
    scale = c * z if paper_literal else z / c
    safe = np.where(t > 0, t, 1.0)
    val = np.where(t > 0, _erfc(scale / (2.0 * np.sqrt(safe))), 0.0)
    return _out(val)


# ------------------------------------------------------- infinite divisibility

def levy_identity_residual(s: float, z: float, params: Params, *, paper_literal: bool = False, tol: float = 1e-12) -> float:
    """Left minus right exponent of the Levy-Khintchine form of phi_(0,1).

    Right side: ``-(z/2v) s - (z lam / v) int_0^inf (1 - e^{-s y}) g(y) dy``.
    ``paper_literal`` uses weight ``+lam/v`` instead, which is not an identity.
    """
    if not s > 0:
        raise ValueError("s must be > 0")
    lam, v = params.lam, params.v
    lhs = -(z / (2.0 * v)) * math.sqrt(s * s + 4.0 * lam * s)
    q = nm.integrate(
        lambda y: -np.expm1(-s * y) * np.asarray(g_density(y, params)),
        0.0, math.inf, tol, tail="inverse-square", scale=1.0 / lam,
    )
    if paper_literal:
        rhs = -(z / (2.0 * v)) * s + (lam / v) * q.value
    else:
        rhs = -(z / (2.0 * v)) * s - (z * lam / v) * q.value
    return lhs - rhs


# ---------------------------------------------------------------- renewal

def _renewal_kernel_for(pattern: PatternPair, params: Params):
    """Post-(0,1)-meeting kernel whose convolution with the (0,1) law gives E N.

    (0,1): K.  (0,0)/(1,1): g * K = (x/2) e^{-x}(I0 + I1).
    (1,0): g * g * K = (1/2)[x e^{-x}(I0 + I1) + e^{-x} I0 - 1].  Here x = 2 lam u.
    """
    if pattern == APPROACH:
        return lambda u: renewal_kernel(u, params)
    lam = params.lam

    def pieces(u):
        x = 2.0 * lam * np.maximum(_arr(u), 0.0)
        return x, np.asarray(nm.bessel_i_scaled(0, x)), np.asarray(nm.bessel_i_scaled(1, x))

    if pattern == SEPARATION:
        def k2(u):
            x, i0, i1 = pieces(u)
            return _out(0.5 * (x * (i0 + i1) + i0 - 1.0))
        return k2

    def k1(u):
        x, i0, i1 = pieces(u)
        return _out(0.5 * x * (i0 + i1))
    return k1


def _renewal(t, z: float, pattern: PatternPair, params: Params, tol: float):
    if not z > 0:
        raise ValueError("z must be > 0")
    t = _arr(t)
    lam, v = params.lam, params.v
    t0 = z / (2.0 * v)
    atom = math.exp(-lam * z / v)
    kern = _renewal_kernel_for(pattern, params)
    h0 = 0.25 / lam

    def one(ti: float) -> float:
        if ti < t0:
            return 0.0
        edges = nm.geometric_edges(t0, ti, h0)
        vals, _ = nm.integrate_pieces(
            lambda u: np.asarray(approach_continuous_density(u, z, params)) * np.asarray(kern(ti - u)),
            edges, tol,
        )
        return atom * float(kern(ti - t0)) + float(vals.sum())

    flat = np.array([one(float(ti)) for ti in t.ravel()])
    return _out(flat.reshape(t.shape))


def renewal_H(t, z: float, params: Params, tol: float = 1e-10, pattern=APPROACH):
    """Expected number of gap zero-crossings in (0, t].

    For the approaching pattern this is the (0,1) meeting law convolved with
    :func:`renewal_kernel`; other patterns fold their extra g factors into the
    kernel (closed forms in ``_renewal_kernel_for``).
    """
    return _renewal(t, z, parse_pattern(pattern), params, tol)


def multi_renewal(t: float, positions: Sequence[float], regimes: Sequence[int], params: Params,
                  *, pairs: str = "adjacent", tol: float = 1e-9) -> float:
    """Expected collision count of an n-particle gas.

    ``pairs="adjacent"`` sums the pair renewal functions over neighbouring
    sites only. ``pairs="all"`` sums over every pair of sites, which is the
    exact expectation: each hard collision is a crossing of two independent
    paths, and paths started at non-neighbouring sites cross too.
    """
    pos = [float(p) for p in positions]
    reg = [int(k) for k in regimes]
    if len(pos) != len(reg):
        raise ValueError(f"positions and regimes differ in length ({len(pos)} vs {len(reg)})")
    if any(b <= a for a, b in zip(pos, pos[1:])):
        raise ValueError("positions must be strictly increasing")
    if pairs == "adjacent":
        index_pairs = [(i, i + 1) for i in range(len(pos) - 1)]
    elif pairs == "all":
        index_pairs = [(i, j) for i in range(len(pos)) for j in range(i + 1, len(pos))]
    else:
        raise ValueError("pairs must be 'adjacent' or 'all'")
    total = 0.0
    for i, j in index_pairs:
        total += float(_renewal(t, pos[j] - pos[i], PatternPair(reg[i], reg[j]), params, tol))
    return total


# ----------------------------------------------------------- order statistics

def order_stat_cdf(r: int, probs: Sequence[float]) -> float:
    """P(at least r of n independent events occur), event i with prob probs[i].

    With ``probs[i] = P(S_i(t) < x)`` this is the CDF of the r-th particle of
    the gas at x. Computed by dynamic programming over the Poisson-binomial
    count distribution.
    """
    p = np.asarray(probs, dtype=float)
    n = p.size
    if not 1 <= r <= n:
        raise ValueError(f"rank r must be in [1, {n}] (got {r})")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    dist = np.zeros(n + 1)
    dist[0] = 1.0
    for k, pk in enumerate(p, start=1):
        dist[1:k + 1] = dist[1:k + 1] * (1.0 - pk) + dist[0:k] * pk
        dist[0] *= 1.0 - pk
    return float(dist[r:].sum())


def uniform_order_stat_cdf(k: int, n: int, x, b: float):
    """CDF of the k-th of n i.i.d. uniform points on [0, b]: I_{x/b}(k, n-k+1)."""
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}]")
    p = np.clip(_arr(x) / b, 0.0, 1.0)
    return nm.reg_inc_beta(p if p.ndim else float(p), k, n - k + 1)


# ---------------------------------------------------- reflecting boundaries

@dataclass(frozen=True)
class ReflectingDensityParams:
    b: float
    params: Params
    n_max: int = 400_000
    tol: float = 1e-10
    t_min: float | None = None
    chunk: int = 4096

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("b must be > 0")

    @property
    def min_time(self) -> float:
        return self.t_min if self.t_min is not None else self.b / (10.0 * self.params.v)


def _saw(theta):
    """sum_{n>=1} sin(n theta) / n."""
    th = np.mod(theta, 2.0 * np.pi)
    return np.where(th == 0.0, 0.0, 0.5 * (np.pi - th))


def _clausen_cos2(theta):
    """sum_{n>=1} cos(n theta) / n^2."""
    th = np.mod(theta, 2.0 * np.pi)
    return np.pi ** 2 / 6.0 - 0.5 * np.pi * th + 0.25 * th * th


def _mode_remainders(n: np.ndarray, t: float, lam: float, kappa: float, a1: float, a2: float) -> np.ndarray:
    """Mode amplitude minus its ballistic, 1/n and 1/n^2 parts.

    The amplitude is exp(-lam t)[cosh(theta t) + lam/theta sinh(theta t)] with
    theta^2 = lam^2 - (kappa n)^2. On the oscillatory branch the phase is
    written as n kappa t + delta with delta computed directly, so the
    remainder keeps relative accuracy instead of drowning in the rounding of
    an O(n) angle.
    """
    k = kappa * n
    na = k * t
    decay = math.exp(-lam * t)
    asym = decay * (np.cos(na) + a1 * np.sin(na) / n + a2 * np.cos(na) / (n * n))
    out = np.empty(n.shape)
    d = lam * lam - k * k
    real = d >= 0
    if np.any(real):
        th = np.sqrt(d[real])
        e_plus = np.exp((th - lam) * t)
        e_minus = np.exp(-(th + lam) * t)
        small = th * t < 1e-6
        with np.errstate(divide="ignore", invalid="ignore"):
            sinh_part = np.where(small, lam * t * decay * (1.0 + (th * t) ** 2 / 6.0),
                                 lam * 0.5 * (e_plus - e_minus) / th)
        out[real] = 0.5 * (e_plus + e_minus) + sinh_part - asym[real]
    osc = ~real
    if np.any(osc):
        kk = k[osc]
        om = np.sqrt(kk * kk - lam * lam)
        delta = -t * lam * lam / (om + kk)
        c, sn = np.cos(na[osc]), np.sin(na[osc])
        cm1 = -2.0 * np.sin(0.5 * delta) ** 2
        sd = np.sin(delta)
        nn = n[osc]
        cos_part = c * cm1 - sn * sd - a2 * c / (nn * nn)
        sin_part = sn * (lam / om * (1.0 + cm1) - a1 / nn) + (lam / om) * c * sd
        out[osc] = decay * (cos_part + sin_part)
    return out


def reflecting_density(t: float, x, y: float, rp: ReflectingDensityParams):
    """Transition density of a telegraph particle reflected at 0 and b.

    Returns the absolutely continuous part of p(t, x | y): the cosine series
    with mode amplitudes ``exp(-lam t)[cosh(theta_n t) + lam/theta_n sinh(theta_n t)]``,
    where ``theta_n = sqrt(lam^2 - (pi v n / b)^2)`` (oscillatory branch when
    negative). Paths that never switched sit on two moving atoms of total
    mass ``exp(-lam t)`` (see :func:`reflecting_atoms`); their Fourier
    coefficients do not decay, so they are removed from the series before
    summing. The two leading 1/n and 1/n^2 terms of what remains are summed
    in closed form, leaving an absolutely convergent O(n^-3) remainder.
    """
    if t < rp.min_time:
        raise ValueError(f"t={t} is below t_min={rp.min_time}; the series is not usable there")
    lam, v, b = rp.params.lam, rp.params.v, rp.b
    x = _arr(x)
    xf = x.ravel()
    kappa = math.pi * v / b
    alpha = kappa * t
    beta = math.pi * y / b
    gamma = math.pi * xf / b
    a1 = (0.5 * lam * lam * t + lam) / kappa
    a2 = -(lam ** 4 * t * t / 8.0 + lam ** 3 * t / 2.0) / kappa ** 2
    decay = math.exp(-lam * t)

    s1 = np.zeros_like(xf)
    s2 = np.zeros_like(xf)
    for delta in (beta + gamma, beta - gamma):
        s1 += 0.25 * (_saw(alpha + delta) + _saw(alpha - delta))
        s2 += 0.25 * (_clausen_cos2(alpha + delta) + _clausen_cos2(alpha - delta))

    total = np.zeros_like(xf)
    n0 = 1
    converged = False
    while n0 <= rp.n_max:
        n = np.arange(n0, min(n0 + rp.chunk, rp.n_max + 1), dtype=float)
        resid = _mode_remainders(n, t, lam, kappa, a1, a2)
        total += (np.cos(np.outer(gamma, n)) * (resid * np.cos(n * beta))).sum(axis=1)
        n0 = int(n[-1]) + 1
        # Remainder terms decay like n^-3, so the tail is about n/2 times the last term.
        envelope = np.max(np.abs(resid[-3:])) * n[-1] / 2.0
        if envelope < rp.tol:
            converged = True
            break
    value = (1.0 - decay) / b + (2.0 / b) * (decay * (a1 * s1 + a2 * s2) + total)
    if not converged:
        raise nm.SeriesBudgetError(
            f"reflecting density series did not reach tol={rp.tol} within {rp.n_max} terms",
            nm.SeriesResult(float(value[0]) if value.size else 0.0, rp.n_max),
        )
    return _out(value.reshape(x.shape))


def _fold(p, b):
    p = np.mod(p, 2.0 * b)
    return np.where(p > b, 2.0 * b - p, p)


def reflecting_atoms(t: float, y: float, rp: ReflectingDensityParams) -> tuple[tuple[float, float], tuple[float, float]]:
    """Positions and masses of the two no-switch atoms at time t."""
    v, lam, b = rp.params.v, rp.params.lam, rp.b
    m = 0.5 * math.exp(-lam * t)
    return (float(_fold(y + v * t, b)), m), (float(_fold(y - v * t, b)), m)


def telegraph_free_density(t: float, xi, params: Params):
    """Absolutely continuous part of the free telegraph density at displacement xi.

    (lam e^{-lam t} / 2v) [I0(mu) + lam t I1(mu)/mu],  mu = (lam/v) sqrt(v^2 t^2 - xi^2),
    for |xi| < v t, with symmetric initial direction.
    """
    lam, v = params.lam, params.v
    xi = _arr(xi)
    r2 = v * v * t * t - xi * xi
    inside = r2 > 0
    r = np.sqrt(np.where(inside, r2, 0.0))
    mu = lam * r / v
    expo = -(lam / v) * xi * xi / (r + v * t)
    val = lam / (2.0 * v) * (np.asarray(nm.bessel_i_scaled(0, mu)) + lam * t * np.asarray(nm.bessel_i1_over_x_scaled(mu))) * np.exp(expo)
    return _out(np.where(inside, val, 0.0))


def reflecting_density_images(t: float, x, y: float, rp: ReflectingDensityParams):
    """Same quantity as :func:`reflecting_density`, by the method of images."""
    v, b = rp.params.v, rp.b
    x = _arr(x)
    m_max = int(math.ceil(v * t / (2.0 * b))) + 1
    total = np.zeros(x.shape)
    for m in range(-m_max, m_max + 1):
        total = total + np.asarray(telegraph_free_density(t, x - y + 2 * m * b, rp.params))
        total = total + np.asarray(telegraph_free_density(t, x + y + 2 * m * b, rp.params))
    return _out(total)


# ------------------------------------------------------------------ moments

def moment_alpha(alpha: float, pattern, z: float, params: Params, t_cap: float,
                 tol: float = 1e-10) -> tuple[float, bool]:
    """Partial moment E[tau^alpha; tau <= t_cap] and a divergence flag.

    The flag is set when the full moment is infinite: the density decays like
    ``t**-1.5`` so ``E tau^alpha`` diverges exactly for ``alpha >= 1/2``.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    law = first_meeting_distribution(pattern, z, params)
    t0 = law.atom_time
    if not t_cap > t0:
        raise ValueError(f"t_cap must exceed z/(2v) = {t0}")
    atom_part = law.atom_mass * t0 ** alpha
    if law.kernel == "none":
        edges = nm.geometric_edges(t0, t_cap, 0.25 / params.lam, both_ends=False)
        vals, _ = nm.integrate_pieces(lambda t: t ** alpha * np.asarray(law.density(t)), edges, tol)
        partial = atom_part + float(vals.sum())
    else:
        q = nm.integrate(lambda t: t ** alpha * np.asarray(law.density(t)), t0, t_cap, max(tol, 1e-8))
        partial = atom_part + q.value
    diverges = alpha + TAIL_EXPONENT >= -1.0
    return partial, bool(diverges)


def moment_tail(alpha: float, pattern, z: float, params: Params, t_cap: float) -> float:
    """Extrapolated contribution of (t_cap, inf) to E tau^alpha (inf if divergent).

    Uses density ~ C t^-1.5 with C fitted at t_cap.
    """
    if alpha + TAIL_EXPONENT >= -1.0:
        return math.inf
    law = first_meeting_distribution(pattern, z, params)
    c = float(law.density(t_cap)) * t_cap ** (-TAIL_EXPONENT)
    p = alpha + TAIL_EXPONENT + 1.0
    return -c * t_cap ** p / p


def expected_min(law: MixedDistribution, T: float, tol: float = 1e-9) -> float:
    """E min(tau, T) = int_0^T P(tau > t) dt."""
    t0 = law.atom_time
    if T <= t0:
        return float(T)
    if law.kernel == "none":
        grid = np.linspace(t0, T, 65)
        surv = lambda t: law.total_mass() - np.asarray(law.cdf(t))  # noqa: E731
    else:
        surv = lambda t: 1.0 - np.asarray(law.cdf(t))  # noqa: E731
    q = nm.integrate(lambda t: surv(t), t0, T, max(tol, 1e-8))
    return t0 + q.value
