"""Domain types, parameter validation and scaling helpers."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence, Union

import numpy as np

from . import numerics

__all__ = [
    "Params",
    "VelocityState",
    "PatternPair",
    "GasConfig",
    "APPROACH",
    "SEPARATION",
    "SAME_RIGHT",
    "SAME_LEFT",
    "ALL_PATTERNS",
    "make_params",
    "kac_params",
    "collision_rate_bounds",
    "lemma3_constant",
    "lemma3_log_constant",
    "parse_pattern",
]


def _require_positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0.0) or not math.isfinite(value):
        raise ValueError(f"{name} must be > 0 (got {value!r})")
    return value


@dataclass(frozen=True)
class Params:
    """Speed ``v`` and switching intensity ``lam`` of a telegraph particle."""

    v: float
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "v", _require_positive("v", self.v))
        object.__setattr__(self, "lam", _require_positive("lambda", self.lam))

    @property
    def diffusion_speed(self) -> float:
        """sqrt(v**2 / lam), the Brownian speed reached under Kac scaling."""
        return self.v / math.sqrt(self.lam)

    def to_dict(self) -> dict:
        return {"v": self.v, "lambda": self.lam}

    @classmethod
    def from_dict(cls, d: dict) -> "Params":
        return cls(v=d["v"], lam=d["lambda"] if "lambda" in d else d["lam"])


@dataclass(frozen=True)
class VelocityState:
    """Regime label ``xi``; the signed velocity is ``v * (-1)**xi``."""

    xi: int

    def __post_init__(self):
        if self.xi not in (0, 1):
            raise ValueError(f"xi must be 0 or 1 (got {self.xi!r})")

    def velocity(self, v: float) -> float:
        return v if self.xi == 0 else -v

    def flipped(self) -> "VelocityState":
        return VelocityState(1 - self.xi)


@dataclass(frozen=True)
class PatternPair:
    """Initial regimes ``(k1, k2)`` of the left and the right particle.

    ``(0, 1)`` is the approaching pair, ``(1, 0)`` the separating pair.
    """

    k1: int
    k2: int

    def __post_init__(self):
        if self.k1 not in (0, 1) or self.k2 not in (0, 1):
            raise ValueError(f"pattern entries must be 0 or 1 (got {self.k1!r}, {self.k2!r})")

    @property
    def label(self) -> str:
        return f"{self.k1}{self.k2}"

    @property
    def gap_slope_units(self) -> int:
        """Slope of the gap x2 - x1 in units of v: -2, 0 or +2."""
        return (1 - 2 * self.k2) - (1 - 2 * self.k1)

    def __str__(self) -> str:
        return f"({self.k1},{self.k2})"


APPROACH = PatternPair(0, 1)
SEPARATION = PatternPair(1, 0)
SAME_RIGHT = PatternPair(0, 0)
SAME_LEFT = PatternPair(1, 1)
ALL_PATTERNS = (SAME_RIGHT, APPROACH, SEPARATION, SAME_LEFT)


def parse_pattern(p: Union[str, Sequence[int], PatternPair]) -> PatternPair:
    """Accept ``"01"``, ``(0, 1)`` or a PatternPair."""
    if isinstance(p, PatternPair):
        return p
    if isinstance(p, str):
        s = p.strip().strip("()").replace(",", "").replace(" ", "")
        if len(s) != 2 or any(c not in "01" for c in s):
            raise ValueError(f"pattern must be one of 00, 01, 10, 11 (got {p!r})")
        return PatternPair(int(s[0]), int(s[1]))
    k1, k2 = p
    return PatternPair(int(k1), int(k2))


EQUIPROBABLE = "equiprobable"


@dataclass(frozen=True)
class GasConfig:
    """Initial state of an n-particle telegraph gas.

    ``initial_regimes`` is either ``"equiprobable"`` (independent fair coins)
    or a tuple of n labels in {0, 1}.
    """

    positions: tuple
    params: Params
    boundary: float | None = None
    initial_regimes: Union[str, tuple] = EQUIPROBABLE

    def __post_init__(self):
        pos = tuple(float(y) for y in self.positions)
        if len(pos) < 1:
            raise ValueError("a gas needs at least one particle")
        if any(not math.isfinite(y) for y in pos):
            raise ValueError("positions must be finite")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError("positions must be strictly increasing (coincident or unsorted sites)")
        object.__setattr__(self, "positions", pos)
        if self.boundary is not None:
            b = _require_positive("boundary", self.boundary)
            if not (pos[0] > 0.0 and pos[-1] < b):
                raise ValueError(f"all positions must lie in (0, {b})")
            object.__setattr__(self, "boundary", b)
        regimes = self.initial_regimes
        if isinstance(regimes, str):
            if regimes != EQUIPROBABLE:
                raise ValueError(f"initial_regimes must be 'equiprobable' or a label vector (got {regimes!r})")
        else:
            regimes = tuple(int(k) for k in regimes)
            if len(regimes) != len(pos) or any(k not in (0, 1) for k in regimes):
                raise ValueError("initial_regimes must hold one label in {0,1} per particle")
            object.__setattr__(self, "initial_regimes", regimes)

    @property
    def n(self) -> int:
        return len(self.positions)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = self.params.to_dict()
        d["positions"] = list(self.positions)
        if not isinstance(self.initial_regimes, str):
            d["initial_regimes"] = list(self.initial_regimes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GasConfig":
        regimes = d.get("initial_regimes", EQUIPROBABLE)
        if not isinstance(regimes, str):
            regimes = tuple(regimes)
        return cls(
            positions=tuple(d["positions"]),
            params=Params.from_dict(d["params"]),
            boundary=d.get("boundary"),
            initial_regimes=regimes,
        )


def make_params(v: float, lam: float) -> Params:
    return Params(v, lam)


def kac_params(eps: float, c: float) -> Params:
    """Kac scaling: ``lam = eps**-2`` and ``v = c / eps`` so that v**2/lam = c**2."""
    eps = _require_positive("eps", eps)
    c = _require_positive("c", c)
    return Params(v=c / eps, lam=1.0 / (eps * eps))


def collision_rate_bounds(v: float, b: float) -> tuple[float, float]:
    """Bounds ``(v/b, 4v/b)`` on the pairwise crossing rate in a box of length b."""
    v = _require_positive("v", v)
    b = _require_positive("b", b)
    return v / b, 4.0 * v / b


def lemma3_log_constant(T: float, params: Params) -> float:
    """log of I0(2*T*lam) / (2v), safe for any T."""
    T = _require_positive("T", T)
    x = 2.0 * T * params.lam
    return math.log(float(numerics.bessel_i_scaled(0, x))) + x - math.log(2.0 * params.v)


def lemma3_constant(T: float, params: Params) -> float:
    """Linear bound coefficient C = I0(2*T*lam) / (2v) for E min(tau, T) <= C z.

    Raises OverflowError when the result is not representable; use
    :func:`lemma3_log_constant` instead in that range.
    """
    T = _require_positive("T", T)
    x = 2.0 * T * params.lam
    if x < 700.0:
        return float(numerics.bessel_i(0, x)) / (2.0 * params.v)
    logc = lemma3_log_constant(T, params)
    if logc > math.log(np.finfo(float).max):
        raise OverflowError(
            f"I0(2*T*lambda) overflows for T={T}, lambda={params.lam}; use lemma3_log_constant"
        )
    return math.exp(logc)
