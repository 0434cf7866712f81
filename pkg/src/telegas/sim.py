"""Exact event-driven Monte Carlo for telegraph particles.

Nothing here steps time on a grid: every switch is an exponential clock
ring, every wall hit and crossing is the root of a linear equation.

Hard collisions are never simulated by swapping velocities. The labelled
gas is read off as the sorted values of independent paths, and a collision
of ranks (k-1, k) is a crossing of the two paths that hold those ranks.

Randomness: every replica owns a generator keyed by ``(seed, stream_id)``;
particle i of a gas uses the sub-key ``(stream_id, i)``. Clocks are drawn
in fixed-size chunks so the sample path does not depend on the horizon.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import APPROACH, EQUIPROBABLE, GasConfig, Params, PatternPair, VelocityState, parse_pattern

__all__ = [
    "RngStream",
    "Trajectory",
    "MeetingOutcome",
    "GasResult",
    "SimulationBudgetError",
    "EVENT_DTYPE",
    "SWITCH",
    "REFLECT",
    "CROSSING",
    "sample_trajectory",
    "sample_reflected_trajectory",
    "simulate_first_meeting",
    "simulate_two_particle_collisions",
    "simulate_gas",
    "stationary_gas_config",
    "reflected_fold",
    "time_average",
    "sample_reflected_position",
    "replicate",
]

CHUNK = 256
SETUP_KEY = 2 ** 32 - 1  # sub-stream for initial conditions of a gas replica
DEFAULT_MAX_EVENTS = 10_000_000

SWITCH, REFLECT, CROSSING = 0, 1, 2
EVENT_DTYPE = np.dtype([
    ("time", "f8"),
    ("kind", "i1"),
    ("i", "i4"),
    ("j", "i4"),
    ("rank", "i4"),
    ("wall", "i1"),
])


class SimulationBudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class RngStream:
    """Key of an independent random stream: ``(seed, stream_id)``.

    ``prefix`` separates sample groups drawn under one seed (for example the
    two arms of a two-sample test).
    """

    seed: int
    stream_id: int = 0
    prefix: tuple = ()

    def generator(self, *sub: int) -> np.random.Generator:
        key = tuple(int(k) for k in self.prefix) + (int(self.stream_id),) + tuple(int(s) for s in sub)
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(self.seed), spawn_key=key)))

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id, self.prefix)


class _Clock:
    """Exponential inter-arrival times drawn CHUNK at a time."""

    def __init__(self, rng: np.random.Generator, rate: float):
        self.rng = rng
        self.scale = 1.0 / rate
        self.buf = np.empty(0)
        self.pos = 0

    def next(self) -> float:
        if self.pos == self.buf.size:
            self.buf = self.rng.exponential(self.scale, CHUNK)
            self.pos = 0
        x = self.buf[self.pos]
        self.pos += 1
        return float(x)

    def arrivals_until(self, T: float, max_events: int) -> np.ndarray:
        """Arrival times in (0, T), consuming whole chunks."""
        out = []
        t = 0.0
        count = 0
        while True:
            gaps = self.rng.exponential(self.scale, CHUNK)
            times = t + np.cumsum(gaps)
            out.append(times)
            count += CHUNK
            t = float(times[-1])
            if t >= T:
                break
            if count > max_events:
                raise SimulationBudgetError(
                    f"more than {max_events} switches before T={T} at rate {1.0 / self.scale}"
                )
        allt = np.concatenate(out)
        return allt[allt < T]


# ------------------------------------------------------------------ paths

@dataclass(frozen=True)
class Trajectory:
    """Piecewise-linear path: ``positions[m]`` at ``times[m]``, ``slopes[m]`` on
    ``[times[m], times[m+1])``. The last time is the horizon.

    ``kinds[m]`` labels the breakpoint at ``times[m+1]`` for m < len-2:
    SWITCH or REFLECT; ``walls`` holds 0 (lower) / 1 (upper) / -1.
    """

    times: np.ndarray
    positions: np.ndarray
    slopes: np.ndarray
    kinds: np.ndarray
    walls: np.ndarray
    origin: float
    horizon: float
    boundary: Optional[float] = None

    @property
    def n_switches(self) -> int:
        return int(np.count_nonzero(self.kinds == SWITCH))

    @property
    def n_reflections(self) -> int:
        return int(np.count_nonzero(self.kinds == REFLECT))

    def position_at(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.slopes.size - 1)
        out = self.positions[idx] + self.slopes[idx] * (t - self.times[idx])
        return float(out) if out.ndim == 0 else out

    @property
    def final_position(self) -> float:
        return float(self.positions[-1])


def _initial_xi(xi0, rng: np.random.Generator) -> int:
    if xi0 is None or (isinstance(xi0, str) and xi0 == EQUIPROBABLE):
        return int(rng.integers(2))
    if isinstance(xi0, VelocityState):
        return xi0.xi
    return VelocityState(int(xi0)).xi


def _free_trajectory(y0: float, xi: int, params: Params, T: float, clock: _Clock, max_events: int) -> Trajectory:
    sw = clock.arrivals_until(T, max_events)
    times = np.concatenate([[0.0], sw, [T]])
    m = times.size - 1
    sign = 1.0 if xi == 0 else -1.0
    slopes = sign * params.v * np.where(np.arange(m) % 2 == 0, 1.0, -1.0)
    positions = np.empty(m + 1)
    positions[0] = y0
    positions[1:] = y0 + np.cumsum(slopes * np.diff(times))
    kinds = np.full(max(m - 1, 0), SWITCH, dtype=np.int8)
    walls = np.full(max(m - 1, 0), -1, dtype=np.int8)
    return Trajectory(times, positions, slopes, kinds, walls, float(y0), float(T))


def _reflected_trajectory(y0: float, xi: int, params: Params, b: float, T: float, clock: _Clock,
                          max_events: int) -> Trajectory:
    v = params.v
    d = 1.0 if xi == 0 else -1.0
    t, p = 0.0, float(y0)
    times, pos, slopes, kinds, walls = [0.0], [p], [], [], []
    next_switch = clock.next()
    n_ev = 0
    while True:
        dist = (b - p) if d > 0 else p
        if dist <= 0.0:
            # Sitting on a wall and heading out: turn around without a new segment.
            d = -d
            continue
        t_wall = t + dist / v
        t_next = min(next_switch, t_wall, T)
        slopes.append(d * v)
        if t_next == T:
            times.append(T)
            pos.append(p + d * v * (T - t))
            break
        if t_wall <= next_switch:
            p = b if d > 0 else 0.0
            kinds.append(REFLECT)
            walls.append(1 if d > 0 else 0)
        else:
            p = p + d * v * (t_next - t)
            kinds.append(SWITCH)
            walls.append(-1)
            next_switch += clock.next()
        t = t_next
        d = -d
        times.append(t)
        pos.append(p)
        n_ev += 1
        if n_ev > max_events:
            raise SimulationBudgetError(f"more than {max_events} events before T={T} at rate {params.lam}")
    return Trajectory(np.array(times), np.array(pos), np.array(slopes), np.array(kinds, dtype=np.int8),
                      np.array(walls, dtype=np.int8), float(y0), float(T), b)


def sample_trajectory(y0: float, xi0, params: Params, T: float, rng: RngStream, *,
                      boundary: Optional[float] = None, max_events: int = DEFAULT_MAX_EVENTS) -> Trajectory:
    """One telegraph path on [0, T]; reflected at 0 and ``boundary`` if given.

    ``xi0`` may be 0, 1, a VelocityState or ``"equiprobable"``.
    """
    if not T > 0:
        raise ValueError("T must be > 0")
    g = rng.generator()
    xi = _initial_xi(xi0, g)
    clock = _Clock(g, params.lam)
    if boundary is None:
        return _free_trajectory(y0, xi, params, T, clock, max_events)
    if not 0.0 <= y0 <= boundary:
        raise ValueError(f"y0 must lie in [0, {boundary}]")
    return _reflected_trajectory(y0, xi, params, boundary, T, clock, max_events)


def sample_reflected_trajectory(y0: float, xi0, params: Params, b: float, T: float, rng: RngStream) -> Trajectory:
    return sample_trajectory(y0, xi0, params, T, rng, boundary=b)


def reflected_fold(position, b: float):
    """Fold an unbounded coordinate into [0, b] by the period-2b tent map."""
    if not b > 0:
        raise ValueError("b must be > 0")
    p = np.mod(np.asarray(position, dtype=float), 2.0 * b)
    out = np.where(p > b, 2.0 * b - p, p)
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------- two-particle gap

@dataclass(frozen=True)
class MeetingOutcome:
    time: float
    censored: bool
    at_atom: bool
    n_switches: int = 0


def _gap_chunks(pattern: PatternPair, z: float, params: Params, rng: RngStream):
    """Yield (t_start, gap_start, durations, slopes) for successive chunks of the gap path.

    Switches of the pair arrive at rate 2 lam; each flips one particle chosen
    by a fair bit. Gap slope is 2v(xi1 - xi2).
    """
    g = rng.generator()
    x1, x2 = pattern.k1, pattern.k2
    t, gap = 0.0, float(z)
    scale = 1.0 / (2.0 * params.lam)
    two_v = 2.0 * params.v
    while True:
        dur = g.exponential(scale, CHUNK)
        who = g.integers(0, 2, CHUNK)
        # State on segment j is the state after j switches.
        f1 = np.concatenate([[0], np.cumsum(who == 0)[:-1]]) & 1
        f2 = np.concatenate([[0], np.cumsum(who == 1)[:-1]]) & 1
        s1 = x1 ^ f1
        s2 = x2 ^ f2
        slopes = two_v * (s1 - s2)
        yield t, gap, dur, slopes
        t = t + float(dur.sum())
        gap = gap + float(np.dot(slopes, dur))
        x1 = int(s1[-1] ^ (who[-1] == 0))
        x2 = int(s2[-1] ^ (who[-1] == 1))


def simulate_first_meeting(pattern, z: float, params: Params, T_max: float, rng: RngStream) -> MeetingOutcome:
    """First time the gap between two particles ``z`` apart hits zero."""
    pattern = parse_pattern(pattern)
    if not (z > 0 and math.isfinite(z)):
        raise ValueError(f"z must be > 0 (got {z!r})")
    switches = 0
    for t0, gap0, dur, slopes in _gap_chunks(pattern, z, params, rng):
        ends = np.cumsum(dur)
        gaps_end = gap0 + np.cumsum(slopes * dur)
        hit = np.flatnonzero(gaps_end <= 0.0)
        if hit.size:
            j = int(hit[0])
            start_t = t0 + (ends[j - 1] if j else 0.0)
            start_gap = gaps_end[j - 1] if j else gap0
            tau = start_t + start_gap / (-slopes[j])
            if tau > T_max:
                return MeetingOutcome(float(T_max), True, False, switches + int(np.count_nonzero(t0 + ends < T_max)))
            at_atom = bool(switches + j == 0 and pattern == APPROACH)
            if at_atom:
                tau = z / (2.0 * params.v)
            return MeetingOutcome(float(tau), False, at_atom, switches + j)
        if t0 + ends[-1] > T_max:
            return MeetingOutcome(float(T_max), True, False, switches + int(np.count_nonzero(t0 + ends < T_max)))
        switches += CHUNK


def simulate_two_particle_collisions(pattern, z: float, params: Params, T: float, rng: RngStream) -> int:
    """Number of zero crossings of the gap on (0, T].

    Each crossing is a hard collision of the labelled pair.
    """
    pattern = parse_pattern(pattern)
    if not T > 0:
        raise ValueError("T must be > 0")
    if not z > 0:
        raise ValueError("z must be > 0")
    count = 0
    for t0, gap0, dur, slopes in _gap_chunks(pattern, z, params, rng):
        ends = t0 + np.cumsum(dur)
        inside = ends < T
        k = int(np.count_nonzero(inside))
        d = dur.copy()
        last = k < CHUNK
        if last:
            d[k] = T - (ends[k - 1] if k else t0)
            d = d[:k + 1]
            sl = slopes[:k + 1]
        else:
            sl = slopes
        path = np.concatenate([[gap0], gap0 + np.cumsum(sl * d)])
        sg = np.sign(path)
        nz = sg[sg != 0]
        count += int(np.count_nonzero(nz[1:] != nz[:-1]))
        if last:
            return count


# ------------------------------------------------------------------- gas

@dataclass(frozen=True)
class GasResult:
    """Outcome of one gas replica.

    ``free_path_times[k-2]`` is the first time ranks (k-1, k) touch, for
    k = 2..n (censored at T); ``pair_first_crossing[i, j]`` is the first
    crossing of the independent paths started at sites i < j (inf if none).
    """

    T: float
    n: int
    events: np.ndarray
    free_path_times: np.ndarray
    free_path_censored: np.ndarray
    pair_crossing_counts: np.ndarray
    pair_first_crossing: np.ndarray
    final_positions: np.ndarray
    trajectories: Optional[tuple] = field(default=None, repr=False)

    @property
    def total_crossings(self) -> int:
        return int(self.pair_crossing_counts.sum())

    @property
    def collisions(self) -> np.ndarray:
        return self.events[self.events["kind"] == CROSSING]

    def labelled_positions(self, t) -> np.ndarray:
        """Positions of the hard-collision gas at t (sorted independent paths)."""
        if self.trajectories is None:
            raise ValueError("run simulate_gas with keep_paths=True to reconstruct positions")
        t = np.asarray(t, dtype=float)
        vals = np.array([tr.position_at(t) for tr in self.trajectories])
        return np.sort(vals, axis=0)


def _pair_crossings(a: Trajectory, b: Trajectory) -> np.ndarray:
    """Exact crossing times of two piecewise-linear paths on a shared horizon."""
    grid = np.union1d(a.times, b.times)
    d = np.asarray(a.position_at(grid)) - np.asarray(b.position_at(grid))
    # a.position_at uses the right-hand segment, which is exact at breakpoints.
    sg = np.sign(d)
    nzi = np.flatnonzero(sg != 0)
    if nzi.size < 2:
        return np.empty(0)
    s = sg[nzi]
    change = np.flatnonzero(s[1:] != s[:-1])
    lo = nzi[change]
    hi = nzi[change + 1]
    adjacent = hi == lo + 1
    t = np.empty(lo.size)
    dl, dh = d[lo], d[hi]
    tl, th = grid[lo], grid[hi]
    t[adjacent] = (tl + (th - tl) * dl / (dl - dh))[adjacent]
    # A run of exact zeros between opposite signs: the crossing is where it starts.
    t[~adjacent] = grid[lo[~adjacent] + 1]
    return t


def stationary_gas_config(n: int, params: Params, b: float, rng: np.random.Generator) -> GasConfig:
    """n i.i.d. uniform sites on (0, b), sorted, with fair-coin directions."""
    while True:
        pos = np.sort(rng.uniform(0.0, b, n))
        if n == 1 or np.all(np.diff(pos) > 0) and pos[0] > 0:
            break
    regimes = tuple(int(k) for k in rng.integers(0, 2, n))
    return GasConfig(tuple(pos), params, b, regimes)


def simulate_gas(config: GasConfig, T: float, rng: RngStream, keep_paths: bool = False, *,
                 max_events: int = DEFAULT_MAX_EVENTS) -> GasResult:
    """Simulate n independent (optionally reflected) paths and read off the hard-collision gas."""
    if not T > 0:
        raise ValueError("T must be > 0")
    n = config.n
    trajs = []
    for i, y0 in enumerate(config.positions):
        g = rng.generator(i)
        if isinstance(config.initial_regimes, str):
            xi = int(g.integers(2))
        else:
            xi = int(config.initial_regimes[i])
        clock = _Clock(g, config.params.lam)
        if config.boundary is None:
            trajs.append(_free_trajectory(y0, xi, config.params, T, clock, max_events))
        else:
            trajs.append(_reflected_trajectory(y0, xi, config.params, config.boundary, T, clock, max_events))

    ev_parts = []
    for i, tr in enumerate(trajs):
        m = tr.kinds.size
        if m:
            e = np.empty(m, dtype=EVENT_DTYPE)
            e["time"] = tr.times[1:-1]
            e["kind"] = tr.kinds
            e["i"] = i
            e["j"] = -1
            e["rank"] = -1
            e["wall"] = tr.walls
            ev_parts.append(e)

    counts = np.zeros((n, n), dtype=np.int64)
    first = np.full((n, n), np.inf)
    cr_t, cr_i, cr_j = [], [], []
    for i in range(n):
        for j in range(i + 1, n):
            ts = _pair_crossings(trajs[i], trajs[j])
            counts[i, j] = ts.size
            if ts.size:
                first[i, j] = ts[0]
                cr_t.append(ts)
                cr_i.append(np.full(ts.size, i))
                cr_j.append(np.full(ts.size, j))

    free = np.full(max(n - 1, 0), float(T))
    censored = np.ones(max(n - 1, 0), dtype=bool)
    if cr_t:
        ct = np.concatenate(cr_t)
        ci = np.concatenate(cr_i)
        cj = np.concatenate(cr_j)
        pos = np.array([tr.position_at(ct) for tr in trajs])  # n x m
        here = 0.5 * (pos[ci, np.arange(ct.size)] + pos[cj, np.arange(ct.size)])
        below = pos < here[None, :]
        below[ci, np.arange(ct.size)] = False
        below[cj, np.arange(ct.size)] = False
        upper_rank = below.sum(axis=0) + 2  # 1-based rank of the upper member
        e = np.empty(ct.size, dtype=EVENT_DTYPE)
        e["time"] = ct
        e["kind"] = CROSSING
        e["i"] = ci
        e["j"] = cj
        e["rank"] = upper_rank
        e["wall"] = -1
        ev_parts.append(e)
        order = np.argsort(ct, kind="stable")
        for t, k in zip(ct[order], upper_rank[order]):
            if censored[k - 2]:
                free[k - 2] = t
                censored[k - 2] = False
    events = np.concatenate(ev_parts) if ev_parts else np.empty(0, dtype=EVENT_DTYPE)
    events = events[np.lexsort((events["i"], events["time"]))]
    final = np.sort(np.array([tr.final_position for tr in trajs]))
    return GasResult(float(T), n, events, free, censored, counts, first, final,
                     tuple(trajs) if keep_paths else None)


# ------------------------------------------------------ reflected motion

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


def time_average(f: Callable, y0: float, params: Params, b: float, T: float, rng: RngStream, *,
                 primitive: Optional[Callable] = None, xi0=EQUIPROBABLE) -> float:
    """(1/T) int_0^T f(S(t)) dt along one reflected path.

    With ``primitive`` (an antiderivative of f) each segment is integrated in
    closed form, since dt = dx / slope; otherwise 12-point Gauss-Legendre per
    segment, exact for polynomials of degree < 24.
    """
    tr = sample_trajectory(y0, xi0, params, T, rng, boundary=b)
    p0 = tr.positions[:-1]
    p1 = tr.positions[1:]
    if primitive is not None:
        total = np.sum((np.asarray(primitive(p1)) - np.asarray(primitive(p0))) / tr.slopes)
    else:
        dt = np.diff(tr.times)
        mid = 0.5 * (p0 + p1)
        half = 0.5 * (p1 - p0)
        x = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        total = np.sum(0.5 * dt * (np.asarray(f(x)) @ _GL_WEIGHTS))
    return float(total / T)


def sample_reflected_position(t: float, y0, params: Params, b: float, rng: RngStream) -> float:
    """S(t) of a reflected path; ``y0`` is a position or ``"uniform"``. Fair-coin direction."""
    if t < 0:
        raise ValueError("t must be >= 0")
    g = rng.generator()
    if isinstance(y0, str):
        if y0 != "uniform":
            raise ValueError("y0 must be a position or 'uniform'")
        y = float(g.uniform(0.0, b))
    else:
        y = float(y0)
    xi = int(g.integers(2))
    if t == 0:
        return y
    return _reflected_trajectory(y, xi, params, b, t, _Clock(g, params.lam), DEFAULT_MAX_EVENTS).final_position


# ------------------------------------------------------------- replication

def _run_block(fn: Callable, seed: int, prefix: tuple, lo: int, hi: int) -> list:
    return [fn(RngStream(seed, i, prefix)) for i in range(lo, hi)]


def replicate(fn: Callable[[RngStream], object], n: int, seed: int, workers: int = 1,
              block: Optional[int] = None, prefix: tuple = ()) -> list:
    """Run ``fn(RngStream(seed, i, prefix))`` for i in range(n), results in index order.

    Worker count only changes scheduling; every result depends on its index
    alone. ``fn`` must be picklable when ``workers > 1``.
    """
    if n < 1:
        raise ValueError("replicas must be >= 1")
    if workers <= 1:
        return _run_block(fn, seed, prefix, 0, n)
    block = block or max(1, math.ceil(n / (8 * workers)))
    bounds = [(lo, min(lo + block, n)) for lo in range(0, n, block)]
    out: list = []
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(_run_block, fn, seed, prefix, lo, hi) for lo, hi in bounds]
        for fut in futs:
            out.extend(fut.result())
    return out
