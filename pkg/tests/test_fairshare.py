import math

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from psnet.errors import ValidationError
from psnet.fairshare import AlphaFair, AlphaFairParams, as_control, solve_alpha_fair
from psnet.classifier import check_monotone
from psnet.network import NetworkSpec, is_feasible, is_pareto_efficient

from conftest import shared_dedicated
from oracles import maxmin_bottleneck_ok, maxmin_perturbation_ok, random_instance


def cvx_oracle(spec, n, w, alpha):
    occ = [r for r in range(spec.num_types) if n[r] > 0]
    b = cp.Variable(len(occ))
    coef = np.array([w[r] * n[r] ** alpha for r in occ])
    if alpha == 1:
        obj = cp.sum(cp.multiply(coef, cp.log(b)))
    elif alpha < 1:
        obj = cp.sum(cp.multiply(coef / (1 - alpha), cp.power(b, 1 - alpha)))
    else:
        obj = cp.sum(cp.multiply(-coef / (alpha - 1), cp.power(b, 1 - alpha)))
    A = spec.incidence[:, occ]
    finite = np.isfinite(spec.capacities)
    cp.Problem(cp.Maximize(obj), [A[finite] @ b <= spec.capacities[finite], b >= 1e-9]).solve()
    out = np.zeros(spec.num_types)
    out[occ] = b.value
    return out


def test_single_resource_proportional_closed_form_100_instances():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        R = int(rng.integers(1, 7))
        c = float(rng.uniform(0.2, 5.0))
        spec = NetworkSpec([[1] * R], [c], [0.1] * R, [1.0] * R)
        n = rng.integers(0, 8, R)
        n[rng.integers(R)] += 1
        w = rng.uniform(0.1, 3.0, R)
        b = solve_alpha_fair(spec, tuple(n), AlphaFairParams(1.0, tuple(w))).allocation
        expect = c * w * n / float(w @ n)
        worst = max(worst, float(np.max(np.abs(b - expect))))
    assert worst <= 1e-6


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_kkt_residual_random_instances(alpha):
    rng = np.random.default_rng(int(alpha * 10))
    for _ in range(40):
        spec, n, w = random_instance(rng)
        rep = solve_alpha_fair(spec, n, AlphaFairParams(alpha, w), tol=1e-8)
        assert rep.kkt_residual <= 1e-6
        assert is_feasible(spec, rep.allocation, tol=1e-9)
        assert is_pareto_efficient(spec, n, rep.allocation, tol=1e-6)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_matches_convex_solver(alpha):
    rng = np.random.default_rng(100 + int(alpha * 10))
    for _ in range(10):
        spec, n, w = random_instance(rng, 5, 3)
        b = solve_alpha_fair(spec, n, AlphaFairParams(alpha, w)).allocation
        ref = cvx_oracle(spec, n, w, alpha)
        np.testing.assert_allclose(b, ref, atol=2e-4)


def test_maxmin_perturbation_check():
    rng = np.random.default_rng(3)
    for _ in range(60):
        spec, n, w = random_instance(rng, 4, 4)
        b = solve_alpha_fair(spec, n, AlphaFairParams(math.inf, w)).allocation
        assert is_feasible(spec, b)
        assert maxmin_bottleneck_ok(spec, n, b)
        assert maxmin_perturbation_ok(spec, n, b, rng)


def test_alpha_inf_ignores_weights():
    spec = shared_dedicated(3, c0=1.0, c=0.6)
    b1 = solve_alpha_fair(spec, (1, 2, 3), AlphaFairParams(math.inf, (1, 1, 1))).allocation
    b2 = solve_alpha_fair(spec, (1, 2, 3), AlphaFairParams(math.inf, (5, 1, 0.2))).allocation
    np.testing.assert_allclose(b1, b2)


def test_alpha_zero_lexicographic_lp():
    # two types on one resource, equal weights: the LP optimum face is the whole
    # segment; the lexicographic pick serves type 0 first
    spec = NetworkSpec([[1, 1]], [1.0], [0.1, 0.1], [1, 1])
    b = solve_alpha_fair(spec, (1, 1), AlphaFairParams(0.0, (1, 1))).allocation
    np.testing.assert_allclose(b, [1.0, 0.0], atol=1e-9)
    # heavier weight on type 1 wins outright
    b = solve_alpha_fair(spec, (1, 1), AlphaFairParams(0.0, (1, 2))).allocation
    np.testing.assert_allclose(b, [0.0, 1.0], atol=1e-9)


def test_single_type_gets_bottleneck_rate():
    spec = shared_dedicated(3, c0=1.0, c=0.5)
    for alpha in (0.5, 1.0, 2.0, math.inf):
        b = solve_alpha_fair(spec, (0, 4, 0), AlphaFairParams(alpha, (1, 1, 1))).allocation
        np.testing.assert_allclose(b, [0, 0.5, 0], atol=1e-8)


def test_shared_resource_saturated_when_all_present():
    spec = shared_dedicated(3, c0=1.0, c=0.5)
    rep = solve_alpha_fair(spec, (1, 1, 2), AlphaFairParams(1.0, (1, 1, 1)))
    assert 0 in rep.binding_resources


def test_empty_state_and_validation():
    spec = shared_dedicated(2)
    rep = solve_alpha_fair(spec, (0, 0), AlphaFairParams(1.0, (1, 1)))
    assert not rep.allocation.any()
    with pytest.raises(ValidationError):
        AlphaFairParams(-1.0, (1, 1))
    with pytest.raises(ValidationError):
        AlphaFairParams(1.0, (1, 0))
    with pytest.raises(ValidationError):
        solve_alpha_fair(spec, (1, 1), AlphaFairParams(1.0, (1,)))


def test_control_cache_and_pickling():
    import pickle
    spec = shared_dedicated(3)
    ctl = as_control(AlphaFairParams(1.0, (1, 1, 1)))
    b = ctl(spec, (1, 2, 3))
    b[0] = 99.0
    assert ctl(spec, (1, 2, 3))[0] != 99.0
    clone = pickle.loads(pickle.dumps(ctl))
    np.testing.assert_allclose(clone(spec, (1, 2, 3)), ctl(spec, (1, 2, 3)))
    assert ctl == AlphaFair(1.0, (1, 1, 1))


def test_alpha_fair_monotone_on_shared_box():
    spec = shared_dedicated(3)
    rep = check_monotone(AlphaFair(1.0, (1.0, 1.0, 1.0)), spec, (10, 10, 10))
    assert rep.monotone, rep.violations[:3]


@given(st.tuples(st.integers(1, 9), st.integers(1, 9), st.integers(1, 9)),
       st.sampled_from([0.5, 1.0, 2.0]))
def test_rates_ordered_like_counts_on_symmetric_network(n, alpha):
    # symmetric weights and capacities: more calls never means less bandwidth
    spec = shared_dedicated(3, c0=1.0, c=0.9)
    b = solve_alpha_fair(spec, n, AlphaFairParams(alpha, (1, 1, 1))).allocation
    for r in range(3):
        for s in range(3):
            if n[r] > n[s]:
                assert b[r] >= b[s] - 1e-8
