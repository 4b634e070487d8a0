"""Independent reference computations shared by the tests."""
import numpy as np
from scipy.stats import binom

from psnet.network import NetworkSpec, saturated_resources


def random_instance(rng, max_types=6, max_res=4):
    R = int(rng.integers(1, max_types + 1))
    J = int(rng.integers(1, max_res + 1))
    A = (rng.random((J, R)) < 0.5).astype(int)
    for r in range(R):
        if not A[:, r].any():
            A[rng.integers(J), r] = 1
    caps = rng.uniform(0.5, 3.0, J)
    spec = NetworkSpec(A, caps, np.full(R, 0.1), np.ones(R))
    n = rng.integers(0, 6, R)
    if not n.any():
        n[0] = 1
    w = rng.uniform(0.5, 2.0, R)
    return spec, tuple(int(x) for x in n), tuple(w)


def maxmin_bottleneck_ok(spec, n, b, tol=1e-7):
    """Every occupied type has a saturated resource on which its per-call rate is maximal."""
    x = {r: b[r] / n[r] for r in range(spec.num_types) if n[r] > 0}
    sat = saturated_resources(spec, b, tol)
    for r in x:
        ok = False
        for j in spec.resources_of(r):
            if j in sat and all(x[r] >= x[s] - tol for s in x if spec.incidence[j, s]):
                ok = True
        if not ok:
            return False
    return True


def maxmin_perturbation_ok(spec, n, b, rng, trials=50, step=1e-3):
    """Random feasible moves that raise a per-call rate must lower one that is no larger."""
    occ = [r for r in range(spec.num_types) if n[r] > 0]
    cnt = np.maximum(np.array(n, dtype=float), 1.0)
    x = b / cnt
    for _ in range(trials):
        d = np.zeros(spec.num_types)
        d[occ] = rng.normal(size=len(occ))
        b2 = b + step * d
        if np.any(b2[occ] <= 0) or np.any(spec.incidence @ b2 > spec.capacities):
            continue
        x2 = b2 / cnt
        for r in occ:
            if x2[r] > x[r] + 1e-12 and not any(
                    x2[s] < x[s] - 1e-12 and x[s] <= x[r] + 1e-9 for s in occ):
                return False
    return True


def proportional_series(nu, c=1.0, terms=400):
    """Mean of ``c min(n_0, n_1) / (n_0 + n_1)`` (``c`` when empty) with the total
    geometric of ratio ``2 nu / c`` and ``n_0`` binomial(total, 1/2) given the total."""
    rho = 2 * nu / c
    total = (1 - rho) * c
    for N in range(1, terms):
        k = np.arange(N + 1)
        emin = float(np.sum(binom.pmf(k, N, 0.5) * np.minimum(k, N - k)))
        total += (1 - rho) * rho ** N * c * emin / N
    return total
