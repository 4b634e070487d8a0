import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psnet.controls import CompletePartitioning, StaticPriority, SwitchingMax
from psnet.errors import InsufficientDataError, ValidationError
from psnet.network import NetworkSpec
from psnet.sim import (
    SimConfig, check_lemma1, detect_growth, fluid_integrate, make_rng, replicate, simulate,
    uniformized_coupling,
)

from conftest import triangle, two_type


def mm1(rho=0.6):
    return NetworkSpec([[1]], [1.0], [rho], [1.0])


def test_rng_streams_are_keyed_by_seed_xor_replication():
    a = make_rng(5, 3).random(4)
    b = make_rng(6, 0).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(make_rng(5, 0).random(4), a)


@pytest.mark.parametrize("bad", [
    dict(initial_state=(0,)),
    dict(initial_state=(0,), max_events=10, max_time=1.0),
    dict(initial_state=(-1,), max_events=10),
    dict(initial_state=(0,), max_events=10, warmup_fraction=1.0),
    dict(initial_state=(0,), max_events=10, batches=0),
    dict(initial_state=(0,), max_events=10, record_every=0),
])
def test_sim_config_validation(bad):
    with pytest.raises(ValidationError):
        SimConfig(**bad)


def test_mm1_geometric_law_and_mean():
    rho = 0.6
    stats = simulate(mm1(rho), CompletePartitioning((1.0,)),
                     SimConfig((0,), max_events=400_000, seed=11))
    for k in range(6):
        mean, se = stats.batch_estimate(lambda n, k=k: float(n[0] == k))
        assert abs(mean - (1 - rho) * rho ** k) <= 4 * se + 1e-12
    mean_n = stats.occupancy_mean[0]
    assert abs(mean_n - rho / (1 - rho)) <= 4 * stats.occupancy_se[0]
    # time-average service equals the load in a stable queue
    assert abs(stats.service_mean[0] - rho) <= 4 * stats.service_se[0]


def test_counts_are_conserved():
    spec = two_type()
    stats = simulate(spec, StaticPriority(((0,), (1,))), SimConfig((3, 2), max_events=5_000, seed=1))
    np.testing.assert_array_equal(stats.end_state,
                                  np.array((3, 2)) + stats.arrivals - stats.departures)
    assert stats.events == 5_000
    assert stats.arrivals.sum() + stats.departures.sum() == 5_000


def test_same_seed_reproduces_and_seeds_differ():
    spec, ctl = two_type(), StaticPriority(((0,), (1,)))
    cfg = SimConfig((0, 0), max_events=20_000, seed=3)
    a, b = simulate(spec, ctl, cfg), simulate(spec, ctl, cfg)
    np.testing.assert_array_equal(a.service_mean, b.service_mean)
    np.testing.assert_array_equal(a.end_state, b.end_state)
    c = simulate(spec, ctl, SimConfig((0, 0), max_events=20_000, seed=4))
    assert not np.array_equal(a.service_mean, c.service_mean)


def test_replicate_independent_of_jobs():
    spec, ctl = two_type(), StaticPriority(((0,), (1,)))
    cfg = SimConfig((0, 0), max_events=10_000, seed=9)
    serial = replicate(spec, ctl, cfg, 3, jobs=1)
    parallel = replicate(spec, ctl, cfg, 3, jobs=2)
    for s, p in zip(serial, parallel):
        np.testing.assert_array_equal(s.service_mean, p.service_mean)
        np.testing.assert_array_equal(s.end_state, p.end_state)
    assert not np.array_equal(serial[0].end_state, serial[1].end_state) or \
        not np.array_equal(serial[0].service_mean, serial[1].service_mean)


def test_time_limited_run():
    stats = simulate(mm1(0.5), CompletePartitioning((1.0,)), SimConfig((0,), max_time=500.0, seed=2))
    assert stats.elapsed_time == pytest.approx(500.0)
    assert stats.total_time == pytest.approx(500.0 * 0.8)
    # about nu * t arrivals
    assert abs(stats.arrivals[0] - 250) < 6 * math.sqrt(250)


def test_zero_length_run_is_allowed():
    stats = simulate(mm1(), CompletePartitioning((1.0,)), SimConfig((2,), max_events=0))
    assert stats.events == 0 and tuple(stats.end_state) == (2,)
    assert check_lemma1(stats, mm1()).passed
    mean, se = stats.batch_estimate(lambda n: 1.0)
    assert mean == 0.0 and math.isnan(se)
    with pytest.raises(InsufficientDataError):
        detect_growth(stats)


def test_recorded_trajectory():
    stats = simulate(mm1(), CompletePartitioning((1.0,)),
                     SimConfig((0,), max_events=1_000, seed=0, record_every=10))
    assert len(stats.trajectory) == 100
    times = [t for t, _, _ in stats.trajectory]
    assert times == sorted(times)


def test_service_bound_in_stable_and_unstable_regimes():
    spec = two_type(kappa2=0.65)
    stats = simulate(spec, StaticPriority(((0,), (1,))), SimConfig((0, 0), max_events=200_000, seed=5))
    rep = check_lemma1(stats, spec)
    assert rep.passed
    # type 1 gets at most 1 - kappa_0 = 0.5 on average, strictly below its load
    assert stats.service_mean[1] < spec.kappa[1] - 0.05


def test_growth_detection():
    spec = triangle(0.4)
    grow = simulate(spec, SwitchingMax(), SimConfig((0, 0, 0), max_events=200_000, seed=1))
    assert detect_growth(grow).verdict == "growing"
    calm = simulate(triangle(0.2), SwitchingMax(), SimConfig((0, 0, 0), max_events=200_000, seed=1))
    assert detect_growth(calm).verdict == "bounded"


def test_fluid_partitioning_drains_linearly():
    spec = two_type(kappa2=0.2, nu1=0.3)
    ctl = CompletePartitioning((0.5, 0.5))
    traj = fluid_integrate(spec, ctl, (2.0, 3.0), horizon=20.0, dt=0.01)
    # slowest class drains at rate 0.3: t = 3 / 0.3 = 10
    assert traj.drain_time == pytest.approx(10.0, abs=0.05)
    assert traj.states[len(traj.times) // 4, 0] == pytest.approx(max(2.0 - 0.2 * 5.0, 0), abs=0.01)


def test_fluid_validation():
    with pytest.raises(ValidationError):
        fluid_integrate(mm1(), CompletePartitioning((1.0,)), (1.0,), 1.0, 0.0)
    with pytest.raises(ValidationError):
        fluid_integrate(mm1(), CompletePartitioning((1.0,)), (-1.0,), 1.0, 0.1)


def test_coupling_preserves_order_for_partitioning():
    spec = two_type(kappa2=0.2, nu1=0.3)
    paths = uniformized_coupling(spec, CompletePartitioning((0.5, 0.5)), [(0, 0), (3, 5)], 5_000, seed=4)
    assert paths.shape == (2, 5_001, 2)
    assert np.all(paths[1] >= paths[0])


@settings(max_examples=25)
@given(st.integers(0, 2**31), st.tuples(st.integers(0, 5), st.integers(0, 5)))
def test_states_stay_nonnegative_and_service_feasible(seed, start):
    spec = two_type()
    stats = simulate(spec, StaticPriority(((0,), (1,))), SimConfig(start, max_events=2_000, seed=seed))
    assert all(min(s) >= 0 for s in stats.allocations)
    for s, b in stats.allocations.items():
        assert b[0] + b[1] <= 1.0 + 1e-12 and b[1] <= 1.0 + 1e-12
