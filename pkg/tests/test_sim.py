import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from telegas import analytic as an
from telegas import sim
from telegas import stats as sts
from telegas.core import APPROACH, SEPARATION, SAME_RIGHT, GasConfig, Params

UNIT = Params(1.0, 1.0)
seeds = st.integers(0, 2 ** 31)


# ------------------------------------------------------------------ streams

def test_streams_are_reproducible_and_distinct():
    a = sim.RngStream(7, 3).generator().random(4)
    b = sim.RngStream(7, 3).generator().random(4)
    c = sim.RngStream(7, 4).generator().random(4)
    d = sim.RngStream(7, 3, prefix=(1,)).generator().random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    assert sim.RngStream(7, 3).child(4) == sim.RngStream(7, 4)


# ------------------------------------------------------------------ paths

def test_free_path_basic():
    tr = sim.sample_trajectory(0.0, 0, UNIT, 5.0, sim.RngStream(1))
    assert tr.times[0] == 0.0 and tr.times[-1] == 5.0
    assert np.all(np.abs(tr.slopes) == 1.0)
    assert tr.slopes[0] == 1.0
    assert np.all(tr.slopes[1:] == -tr.slopes[:-1])
    assert tr.n_switches == tr.times.size - 2
    assert tr.n_reflections == 0
    assert tr.position_at(0.0) == 0.0
    assert tr.position_at(5.0) == pytest.approx(tr.final_position)


def test_path_errors():
    with pytest.raises(ValueError):
        sim.sample_trajectory(0.0, 0, UNIT, 0.0, sim.RngStream(1))
    with pytest.raises(ValueError):
        sim.sample_trajectory(2.0, 0, UNIT, 1.0, sim.RngStream(1), boundary=1.0)
    with pytest.raises(ValueError):
        sim.sample_trajectory(0.0, 2, UNIT, 1.0, sim.RngStream(1))
    with pytest.raises(sim.SimulationBudgetError):
        sim.sample_trajectory(0.0, 0, Params(1.0, 1e6), 1.0, sim.RngStream(1), max_events=1000)


@given(seeds, st.floats(0.5, 20.0), st.floats(0.5, 20.0))
@settings(max_examples=30)
def test_path_does_not_depend_on_horizon(seed, T1, T2):
    a = sim.sample_trajectory(0.3, "equiprobable", UNIT, T1, sim.RngStream(seed))
    b = sim.sample_trajectory(0.3, "equiprobable", UNIT, T2, sim.RngStream(seed))
    t = np.linspace(0, min(T1, T2), 57)
    np.testing.assert_allclose(a.position_at(t), b.position_at(t), atol=1e-12)


@given(seeds, st.floats(0.2, 3.0), st.floats(0.0, 1.0), st.sampled_from([0, 1]))
@settings(max_examples=40)
def test_reflected_path_is_folded_free_path(seed, b, frac, xi):
    # Same switch clock: the reflected path equals the tent-map fold of the free one.
    y0 = frac * b
    P = Params(1.3, 2.0)
    free = sim.sample_trajectory(y0, xi, P, 15.0, sim.RngStream(seed))
    refl = sim.sample_trajectory(y0, xi, P, 15.0, sim.RngStream(seed), boundary=b)
    t = np.linspace(0.0, 15.0, 301)
    np.testing.assert_allclose(refl.position_at(t), sim.reflected_fold(free.position_at(t), b), atol=1e-9)
    assert refl.n_switches == free.n_switches
    assert np.all((refl.positions >= -1e-12) & (refl.positions <= b + 1e-12))
    walls = refl.walls[refl.kinds == sim.REFLECT]
    at = refl.positions[1:-1][refl.kinds == sim.REFLECT]
    np.testing.assert_array_equal(at, np.where(walls == 1, b, 0.0))


def test_fold_values():
    assert sim.reflected_fold(1.2, 1.0) == pytest.approx(0.8)
    assert sim.reflected_fold(-0.3, 1.0) == pytest.approx(0.3)
    assert sim.reflected_fold(2.5, 1.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        sim.reflected_fold(0.5, 0.0)


# ------------------------------------------------------------------ two particles

@given(seeds, st.sampled_from(["00", "01", "10", "11"]), st.floats(0.1, 3.0))
@settings(max_examples=60)
def test_meeting_outcome_invariants(seed, pattern, z):
    out = sim.simulate_first_meeting(pattern, z, UNIT, 50.0, sim.RngStream(seed))
    t0 = z / 2.0
    assert out.time >= t0 * (1 - 1e-12)
    if out.at_atom:
        assert pattern == "01" and out.time == t0 and out.n_switches == 0
    if out.censored:
        assert out.time == 50.0
    if pattern != "01" and not out.censored:
        assert out.n_switches >= 1


def test_meeting_errors():
    with pytest.raises(ValueError):
        sim.simulate_first_meeting("01", 0.0, UNIT, 1.0, sim.RngStream(0))
    with pytest.raises(ValueError):
        sim.simulate_two_particle_collisions("01", 1.0, UNIT, 0.0, sim.RngStream(0))


def test_meeting_time_ks_against_analytic():
    n = 2000
    outs = [sim.simulate_first_meeting("00", 1.0, UNIT, 100.0, sim.RngStream(11, i)) for i in range(n)]
    sample = sts.EmpiricalSample([o.time for o in outs], [o.censored for o in outs])
    law = an.first_meeting_distribution(SAME_RIGHT, 1.0, UNIT)
    rep = sts.ks_one_sample(sample, law.cdf, 0.01, cdf_left=law.cdf_left)
    assert rep.passed, rep


@given(seeds, st.sampled_from(["01", "10", "00"]), st.floats(0.1, 2.0), st.floats(0.1, 10.0))
@settings(max_examples=40)
def test_collision_count_consistent_with_first_meeting(seed, pattern, z, T):
    # Same stream: zero collisions before T exactly when the first meeting is after T.
    n = sim.simulate_two_particle_collisions(pattern, z, UNIT, T, sim.RngStream(seed))
    m = sim.simulate_first_meeting(pattern, z, UNIT, T, sim.RngStream(seed))
    assert (n == 0) == m.censored


# ------------------------------------------------------------------ gas

def _gas(seed, n=4, b=None, T=5.0, keep=True):
    g = sim.RngStream(seed).generator(sim.SETUP_KEY)
    if b is None:
        cfg = GasConfig(tuple(np.sort(g.uniform(0, 3, n)) + np.arange(n) * 1e-9), UNIT)
    else:
        cfg = sim.stationary_gas_config(n, UNIT, b, g)
    return cfg, sim.simulate_gas(cfg, T, sim.RngStream(seed), keep_paths=keep)


@given(seeds, st.integers(2, 6))
@settings(max_examples=30)
def test_gas_crossing_parity_matches_final_order(seed, n):
    cfg, res = _gas(seed, n)
    finals = np.array([tr.final_position for tr in res.trajectories])
    for i in range(n):
        for j in range(i + 1, n):
            swapped = finals[i] > finals[j]
            assert (res.pair_crossing_counts[i, j] % 2 == 1) == swapped
    np.testing.assert_allclose(res.final_positions, np.sort(finals))


@given(seeds, st.integers(2, 6), st.floats(0.0, 5.0))
@settings(max_examples=30)
def test_labelled_positions_are_ordered_and_boxed(seed, n, t):
    cfg, res = _gas(seed, n, b=1.0)
    x = res.labelled_positions(t)
    assert np.all(np.diff(x) >= 0)
    assert np.all((x >= -1e-12) & (x <= 1 + 1e-12))


@given(seeds, st.integers(2, 5))
@settings(max_examples=30)
def test_gas_events_consistent(seed, n):
    cfg, res = _gas(seed, n, b=1.0)
    ev = res.events
    assert np.all(np.diff(ev["time"]) >= 0)
    col = res.collisions
    assert col.size == res.total_crossings
    assert np.all((col["rank"] >= 2) & (col["rank"] <= n))
    for k, (t, c) in enumerate(zip(res.free_path_times, res.free_path_censored)):
        hits = col["time"][col["rank"] == k + 2]
        if c:
            assert hits.size == 0 and t == res.T
        else:
            assert t == hits.min()
    fc = res.pair_first_crossing
    for i in range(n):
        for j in range(i + 1, n):
            assert (fc[i, j] < np.inf) == (res.pair_crossing_counts[i, j] > 0)


def test_gas_pair_matches_two_particle_count_in_law():
    # Free two-particle gas vs gap simulation, mean crossings at T = 3 from distance 1.
    P = UNIT
    reps = 3000
    a = [sim.simulate_gas(GasConfig((0.0, 1.0), P, None, (0, 1)), 3.0, sim.RngStream(5, i)).total_crossings
         for i in range(reps)]
    b = [sim.simulate_two_particle_collisions(APPROACH, 1.0, P, 3.0, sim.RngStream(6, i)) for i in range(reps)]
    H = float(an.renewal_H(3.0, 1.0, P))
    se = math.sqrt(np.var(a) / reps + np.var(b) / reps)
    assert abs(np.mean(a) - np.mean(b)) < 4 * se
    assert abs(np.mean(b) - H) < 4 * math.sqrt(np.var(b) / reps)


def test_gas_without_paths():
    _, res = _gas(3, keep=False)
    with pytest.raises(ValueError):
        res.labelled_positions(1.0)


def test_single_particle_gas():
    res = sim.simulate_gas(GasConfig((0.5,), UNIT, 1.0), 2.0, sim.RngStream(0))
    assert res.free_path_times.size == 0 and res.total_crossings == 0


# ------------------------------------------------------------------ reflected motion

def test_time_average_routes_agree():
    rng = sim.RngStream(2)
    a = sim.time_average(lambda x: x ** 2, 0.5, UNIT, 1.0, 200.0, rng, primitive=lambda x: x ** 3 / 3)
    b = sim.time_average(lambda x: x ** 2, 0.5, UNIT, 1.0, 200.0, rng)
    assert a == pytest.approx(b, abs=1e-10)
    one = sim.time_average(np.ones_like, 0.5, UNIT, 1.0, 200.0, rng, primitive=lambda x: x)
    assert one == pytest.approx(1.0, abs=1e-12)


def test_reflected_position():
    assert sim.sample_reflected_position(0.0, 0.25, UNIT, 1.0, sim.RngStream(0)) == 0.25
    x = sim.sample_reflected_position(3.0, "uniform", UNIT, 1.0, sim.RngStream(0))
    assert 0.0 <= x <= 1.0
    with pytest.raises(ValueError):
        sim.sample_reflected_position(1.0, "middle", UNIT, 1.0, sim.RngStream(0))
    with pytest.raises(ValueError):
        sim.sample_reflected_position(-1.0, 0.5, UNIT, 1.0, sim.RngStream(0))


# ------------------------------------------------------------------ replication

def _draw(rng):
    return float(rng.generator().random())


def test_replicate_independent_of_workers():
    a = sim.replicate(_draw, 37, seed=9)
    b = sim.replicate(_draw, 37, seed=9, workers=2, block=5)
    assert a == b
    assert sim.replicate(_draw, 3, seed=9, prefix=(1,)) != a[:3]
    with pytest.raises(ValueError):
        sim.replicate(_draw, 0, seed=9)
