import math

import numpy as np
import pytest

from psnet.classifier import (
    INDETERMINATE, STABLE, UNSTABLE, ClassifyConfig, SubsetControl, check_monotone, classify,
    confidence_from_z, critical_threshold, expected_service, limiting_control, reduced_stationary,
    theorem1_step, z_from_confidence,
)
from psnet.controls import FunctionControl, StaticPriority, SwitchingMax
from psnet.errors import LimitNotResolvedError, NotMonotoneError, ValidationError
from psnet.network import NetworkSpec

from conftest import triangle, two_type
from oracles import proportional_series

PRIORITY = StaticPriority(((0,), (1,)))
MATRIX = ClassifyConfig(method="matrix", box=(60, 60))


def order_sensitive(spec, n):
    # type 0 served while n_0 > n_1 / 8, otherwise type 1; joint and iterated limits differ
    if n[0] > n[1] / 8:
        return [1.0, 0.0]
    return [0.0, 1.0 if n[1] > 0 else 0.0]


def test_confidence_round_trip():
    assert z_from_confidence(0.9973) == pytest.approx(3.0, abs=1e-3)
    assert confidence_from_z(z_from_confidence(0.95)) == pytest.approx(0.95)
    with pytest.raises(ValidationError):
        z_from_confidence(1.0)


def test_monotone_checker_accepts_priority_and_catches_planted_violation():
    spec = two_type()
    assert check_monotone(PRIORITY, spec, (8, 8)).monotone
    # type 0 rate rises with n_1: forbidden
    planted = FunctionControl(lambda s, n: [0.0 if n[0] == 0 else (0.5 if n[1] < 3 else 0.9), 0.0])
    rep = check_monotone(planted, spec, (5, 5))
    assert not rep.monotone
    assert any(r == 0 and moved == 1 for _, r, moved, _, _ in rep.violations)
    assert rep.to_dict()["num_violations"] == rep.num_violations


def test_limiting_priority_control():
    spec = two_type()
    # outside counts to infinity: type 0 keeps full priority
    np.testing.assert_allclose(limiting_control(PRIORITY, spec, (), r_query=0), 1.0)
    assert limiting_control(PRIORITY, spec, (0,), r_query=1, n_S=(0,)) == 1.0
    assert limiting_control(PRIORITY, spec, (0,), r_query=1, n_S=(3,)) == 0.0
    np.testing.assert_allclose(limiting_control(PRIORITY, spec, (0,), n_S=(2,)), [1.0])


def test_iterated_limit_order_on_order_sensitive_control():
    spec = NetworkSpec([[1, 1]], [1.0], [0.3, 0.3], [1.0, 1.0])
    ctl = FunctionControl(order_sensitive)
    sc = SubsetControl(spec, ctl, ())
    # n_1 -> infinity first, then n_0: type 0 loses
    assert sc.query(0, ()) == 0.0
    # and with n_0 -> infinity first, type 1 loses too
    assert sc.query(1, ()) == 0.0
    # the joint limit along n_0 = n_1 would give type 0 full rate
    assert ctl(spec, (10**6, 10**6))[0] == 1.0


def test_unresolved_limit_raises():
    spec = NetworkSpec([[1, 1]], [1.0], [0.3, 0.3], [1.0, 1.0])
    # rate oscillates along the geometric sweep of the other count
    ctl = FunctionControl(lambda s, n: [0.0 if n[0] == 0 else
                                        (0.5 if n[1] == 0 or int(math.log2(n[1])) % 2 else 0.25),
                                        0.0 if n[1] == 0 else 0.5])
    with pytest.raises(LimitNotResolvedError):
        SubsetControl(spec, ctl, (0,), N_inf=2, growth=2).service((1,))


def test_subset_validation():
    with pytest.raises(ValidationError):
        SubsetControl(two_type(), PRIORITY, (0, 0))
    with pytest.raises(ValidationError):
        SubsetControl(two_type(), PRIORITY, (2,))
    with pytest.raises(ValidationError):
        SubsetControl(two_type(), PRIORITY, (), growth=1)


def test_reduced_chain_is_mm1_under_priority():
    spec = two_type()
    sc = SubsetControl(spec, PRIORITY, (0,))
    est = reduced_stationary(sc, "matrix", box=(60,))
    rho = 0.5
    for k in range(10):
        assert est.distribution[(k,)] == pytest.approx((1 - rho) * rho ** k, abs=1e-12)
    E, se = expected_service(est, sc, 1)
    assert abs(E - 0.5) <= 1e-9 and se <= 1e-9


def test_matrix_flags_unstable_reduced_chain():
    # n_0 + n_1 is an M/M/1 queue with load 2 nu = 1.1
    spec = triangle(0.55)
    sc = SubsetControl(spec, SwitchingMax(), (0, 1))
    with pytest.raises(Exception) as info:
        reduced_stationary(sc, "matrix", box=(40, 40))
    assert "unstable" in str(info.value)


@pytest.mark.parametrize("E,se,verdict", [
    (0.5, 0.01, STABLE), (0.1, 0.01, UNSTABLE), (0.3, 0.01, INDETERMINATE), (0.5, math.nan, INDETERMINATE),
])
def test_step_verdict_from_estimate(E, se, verdict):
    assert theorem1_step(two_type(kappa2=0.3), (0,), 1, E, se, 3.0).verdict == verdict


@pytest.mark.parametrize("kappa2,verdict", [(0.35, STABLE), (0.5, INDETERMINATE), (0.65, UNSTABLE)])
def test_classify_two_type_priority_matrix(kappa2, verdict):
    res = classify(two_type(kappa2=kappa2), PRIORITY, (0, 1), MATRIX)
    assert res.verdict == verdict
    assert res.trace[-1].estimate == pytest.approx(0.5, abs=1e-9)
    assert res.monotone["kind"] == "verified"


def test_classify_searches_orders():
    res = classify(two_type(kappa2=0.35), PRIORITY, None, MATRIX)
    assert res.verdict == STABLE and res.order == (0, 1)


def test_classify_rejects_non_monotone_and_bad_inputs():
    spec = two_type()
    planted = FunctionControl(lambda s, n: [0.0 if n[0] == 0 else (0.5 if n[1] < 3 else 0.9), 0.0])
    with pytest.raises(NotMonotoneError):
        classify(spec, planted, (0, 1), MATRIX)
    with pytest.raises(ValidationError):
        classify(spec, PRIORITY, (0, 0), MATRIX)
    with pytest.raises(ValidationError):
        classify(spec, PRIORITY, (0, 1), MATRIX, start=(0,))


def test_intermediate_unstable_step_is_not_a_final_verdict():
    # type 1 first: b^{1} gives type 1 the full rate only when n_0 = 0... which never
    # happens in the limit, so {1} is unstable and the full control is left open
    res = classify(two_type(kappa2=0.35), PRIORITY, (1, 0), MATRIX)
    assert res.trace[0].verdict == UNSTABLE
    assert res.verdict == INDETERMINATE
    assert any("does not settle" in n for n in res.notes)


def test_proportional_split_matches_series_oracle():
    spec = triangle(0.35)
    ctl = StaticPriority(((0, 1), (2,)), sharing="proportional")
    sc = SubsetControl(spec, ctl, (0, 1))
    est = reduced_stationary(sc, "matrix", box=(120, 120))
    E, _ = expected_service(est, sc, 2)
    assert E == pytest.approx(proportional_series(0.35), abs=1e-9)


def test_switching_triangle_closed_form():
    # b^{0,1}_2 = c only when n_0 = n_1 = 0; P = 1 - 2 nu / c
    cfg = ClassifyConfig(method="matrix", box=(80, 80, 80))
    for nu, verdict in ((0.3, STABLE), (0.36, UNSTABLE)):
        res = classify(triangle(nu), SwitchingMax(), (0, 1, 2), cfg)
        assert res.verdict == verdict
        assert res.trace[-1].estimate == pytest.approx(1 - 2 * nu, abs=1e-8)


def test_critical_threshold_validation():
    fam = lambda k: two_type(kappa2=k)
    with pytest.raises(ValidationError):
        critical_threshold(fam, PRIORITY, (0, 1), (0.6, 0.7), 0.01, MATRIX)
    with pytest.raises(ValidationError):
        critical_threshold(fam, PRIORITY, (0, 1), (0.4, 0.3), 0.01, MATRIX)


def test_critical_threshold_two_type():
    res = critical_threshold(lambda k: two_type(kappa2=k), PRIORITY, (0, 1), (0.2, 0.8), 0.01, MATRIX)
    assert res.lo <= 0.5 <= res.hi + 1e-12 and res.hi - res.lo <= 0.01
