import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from psnet.controls import CompletePartitioning, StaticPriority, SwitchingMax, evaluate, threshold_modify
from psnet.errors import ValidationError
from psnet.fairshare import AlphaFair
from psnet.lyapunov import (
    DriftConfig, ExceptionSet, FunctionLyapunov, LinearLyapunov, SmoothedBackboneLyapunov,
    SmoothedFirstLyapunov, SmoothedSumLyapunov, boundary_term, drift, find_threshold_a, foster_scan,
    g_a, instability_evidence, smoothed_first_identity, smoothed_sum_identity,
)
from psnet.network import NetworkSpec

from conftest import shared_dedicated, triangle, two_type


@given(st.integers(1, 30), st.integers(0, 100))
def test_g_a_smooth_and_convex(a, n):
    assert g_a(a, n) >= n
    if n >= a:
        assert g_a(a, n) == n
    # second difference nonnegative, and equal to 1/a strictly below a
    second = g_a(a, n + 2) - 2 * g_a(a, n + 1) + g_a(a, n)
    assert second >= -1e-12
    if n + 2 <= a:
        assert second == pytest.approx(1 / a)


def test_g_a_rejects_bad_a():
    with pytest.raises(ValidationError):
        g_a(0, 1)


def test_mm1_linear_drift_is_nu_minus_mu_c():
    spec = NetworkSpec([[1]], [2.0], [0.7], [1.5])
    f = LinearLyapunov((1.0,))
    assert drift(spec, CompletePartitioning((2.0,)), f, (3,)) == pytest.approx(0.7 - 3.0)
    assert drift(spec, CompletePartitioning((2.0,)), f, (0,)) == pytest.approx(0.7)


def test_switching_max_triangle_drift_exact():
    # serving one type at full rate c on the triangle: drift of n_0+n_1+n_2 is 3 nu - c
    rng = np.random.default_rng(0)
    for nu in (0.25, 0.4):
        spec = triangle(nu)
        for _ in range(200):
            n = tuple(int(x) for x in rng.integers(0, 50, 3))
            if not any(n):
                continue
            assert abs(drift(spec, SwitchingMax(), LinearLyapunov((1, 1, 1)), n) - (3 * nu - 1)) <= 1e-12


def test_identity_smoothed_first_matches_generic():
    spec = two_type(kappa2=0.3)
    for a in (1, 3, 5):
        ctl = threshold_modify(StaticPriority(((0,), (1,))), "two_type", a)
        f = SmoothedFirstLyapunov(a)
        for n in itertools.product(range(15), range(15)):
            b = evaluate(ctl, spec, n)
            assert abs(drift(spec, ctl, f, n) - smoothed_first_identity(spec, b, a, n)) <= 1e-12


def test_identity_smoothed_sum_matches_generic():
    spec = shared_dedicated(3)
    ctl = AlphaFair(1.0, (1.0, 1.0, 1.0))
    for a in (2, 4):
        f = SmoothedSumLyapunov(a)
        for n in itertools.product(range(7), repeat=3):
            b = evaluate(ctl, spec, n)
            assert abs(drift(spec, ctl, f, n) - smoothed_sum_identity(spec, b, a, n)) <= 1e-12


def test_boundary_term_cases():
    assert boundary_term(0.3, 0.5, 2, 4) == pytest.approx(0.8)
    assert boundary_term(0.3, 0.5, 4, 4) == pytest.approx(0.5)
    assert boundary_term(0.3, 0.5, 5, 4) == 0.0


def test_exception_set_membership_and_size():
    ex = ExceptionSet(frozenset({(9, 9)}), (((0, 0), (2, 0)),))
    assert (1, 0) in ex and (9, 9) in ex and (1, 1) not in ex
    assert ex.size() == 4
    with pytest.raises(ValidationError):
        ExceptionSet(boxes=(((0,), (1, 1)),))


def test_drift_config_defaults():
    spec = two_type(kappa2=0.3)
    cfg = DriftConfig().resolve(spec)
    # slack: (1 - 0.8, 1 - 0.3); boost margin: min(1 - 0.5, 1 - 0.3)
    assert cfg.delta_prime == pytest.approx(0.2)
    assert cfg.delta == pytest.approx(0.5)
    assert cfg.epsilon == pytest.approx(0.1)
    with pytest.raises(ValidationError):
        DriftConfig(exception=lambda a: ExceptionSet()).exception_for(None)


def _ex3_cfg():
    return DriftConfig(delta=0.7, exception=lambda a: ExceptionSet(boxes=(((0, 0), (a - 1, 0)),)))


def test_threshold_search_two_type_regression():
    spec = two_type(kappa2=0.3)
    res = find_threshold_a(
        spec, lambda a: threshold_modify(StaticPriority(((0,), (1,))), "two_type", a),
        SmoothedFirstLyapunov, _ex3_cfg(), (60, 60), 20)
    # frozen regression value: the smallest a passing the scan
    assert res.a == 5
    assert [t["passed"] for t in res.tried] == [False] * 4 + [True]


def test_threshold_search_refuses_overloaded_network():
    spec = two_type(kappa2=0.55)
    res = find_threshold_a(spec, lambda a: StaticPriority(((0,), (1,))), SmoothedFirstLyapunov,
                           DriftConfig(epsilon=0.01), (10, 10), 5)
    assert res.a is None and "capacity" in res.reason


def test_scan_parallel_equals_serial():
    spec = two_type(kappa2=0.3)
    ctl = threshold_modify(StaticPriority(((0,), (1,))), "two_type", 4)
    cfg = _ex3_cfg()
    s = foster_scan(spec, ctl, SmoothedFirstLyapunov(4), (40, 40), cfg, a=4, jobs=1)
    p = foster_scan(spec, ctl, SmoothedFirstLyapunov(4), (40, 40), cfg, a=4, jobs=3)
    assert s.to_dict() == p.to_dict()
    assert not s.passed and s.num_violations > 0


def test_scan_validation():
    spec = two_type()
    with pytest.raises(ValidationError):
        foster_scan(spec, SwitchingMax(), LinearLyapunov((1, 1)), (5,), DriftConfig(epsilon=0.1))
    with pytest.raises(ValidationError):
        foster_scan(spec, SwitchingMax(), LinearLyapunov((1, 1)), (10, 10), DriftConfig(epsilon=0.1),
                    state_cap=50)
    with pytest.raises(ValidationError):
        foster_scan(spec, SwitchingMax(), LinearLyapunov((1, 1)), (3, 3), DriftConfig(epsilon=0.0))


def test_instability_evidence_triangle():
    f = LinearLyapunov((1, 1, 1))
    assert instability_evidence(triangle(0.4), SwitchingMax(), f, (12, 12, 12), 0.05).passed
    assert not instability_evidence(triangle(0.25), SwitchingMax(), f, (12, 12, 12), 0.05).passed
    with pytest.raises(ValidationError):
        instability_evidence(triangle(0.4), SwitchingMax(), SmoothedSumLyapunov(2), (3, 3, 3), 0.05)


def test_backbone_lyapunov_excludes_ties():
    f = SmoothedBackboneLyapunov(3)
    assert f.excluded((0, 2, 2)) and not f.excluded((0, 2, 1))
    spec = NetworkSpec([[1, 1, 0], [1, 0, 1]], [1.0, 1.0], [0.3, 0.4, 0.4], [1, 1, 1])
    ctl = threshold_modify(StaticPriority(((1, 2), (0,))), "backbone", 3)
    ex = ExceptionSet(boxes=(((0, 0, 0), (2, 2, 2)),))
    rep = foster_scan(spec, ctl, f, (30, 30, 30), DriftConfig(epsilon=0.05, exception=ex))
    assert rep.passed and rep.num_excluded > 0


def test_function_lyapunov_matches_linear():
    spec = two_type()
    ctl = StaticPriority(((0,), (1,)))
    lin = LinearLyapunov((1.0, 2.0))
    fn = FunctionLyapunov(lambda s, n: n[0] + 2.0 * n[1])
    for n in itertools.product(range(5), range(5)):
        assert drift(spec, ctl, lin, n) == pytest.approx(drift(spec, ctl, fn, n), abs=1e-12)
