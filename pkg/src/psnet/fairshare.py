"""Weighted alpha-fair bandwidth allocation.

For a state ``n`` the allocation maximises

    sum_r w_r n_r^alpha b_r^(1-alpha) / (1-alpha)      (sum_r w_r n_r log b_r at alpha=1)

over ``A b <= c``.  Only occupied types take part.  For ``0 < alpha < inf``
the problem is solved through its dual in the resource prices ``p >= 0``:
given prices, each type's optimal rate is ``b_r = n_r (w_r / q_r)^(1/alpha)``
with ``q_r = sum_j a_jr p_j``, and the dual objective is minimised by a
projected Newton method.  ``alpha = inf`` is the limit point, which is
max-min fair in the per-call rate ``b_r / n_r`` (the weights enter only
through ``w_r^(1/alpha)`` and so drop out); it is computed by progressive
filling.  ``alpha = 0`` is a linear programme; among its optimal faces the
lexicographically largest allocation (type 0 first) is returned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .controls import Control, progressive_fill
from .errors import SolverError, ValidationError
from .network import NetworkSpec, saturated_resources

DEFAULT_TOL = 1e-8
MAX_ITER = 2_000


@dataclass(frozen=True)
class AlphaFairParams:
    alpha: float
    weights: tuple[float, ...]

    def __post_init__(self):
        alpha = float(self.alpha)
        if math.isnan(alpha) or alpha < 0:
            raise ValidationError("alpha must be >= 0 (or inf)")
        w = tuple(float(x) for x in self.weights)
        if any(not math.isfinite(x) or x <= 0 for x in w):
            raise ValidationError("weights must be finite and strictly positive")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "weights", w)


@dataclass
class SolveReport:
    allocation: np.ndarray
    kkt_residual: float
    iterations: int
    binding_resources: set[int]
    prices: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "allocation": self.allocation.tolist(),
            "kkt_residual": self.kkt_residual,
            "iterations": self.iterations,
            "binding_resources": sorted(self.binding_resources),
            "prices": None if self.prices is None else self.prices.tolist(),
        }


def _reduced_problem(spec: NetworkSpec, occ: list[int]):
    """Finite-capacity resources touching an occupied type; duplicates merged."""
    A = spec.incidence[:, occ].astype(float)
    caps = spec.capacities
    rows = {}
    for j in range(spec.num_resources):
        if not math.isfinite(caps[j]) or not A[j].any():
            continue
        key = A[j].tobytes()
        if key not in rows or caps[j] < caps[rows[key]]:
            rows[key] = j
    idx = sorted(rows.values())
    return idx, A[idx], caps[idx]


def kkt_residual(G, h, u, alpha, b, p) -> float:
    """Scale-free KKT violation for ``max sum U_r(b_r)`` s.t. ``G b <= h``.

    Combines relative primal infeasibility, relative stationarity
    ``|U'(b) - q| / U'(b)``, dual sign and complementarity
    ``p_j (h_j - load_j)`` normalised by ``sum p_j h_j``.
    """
    load = G @ b
    q = G.T @ p
    primal = float(np.max(np.maximum(load - h, 0.0) / h)) if len(h) else 0.0
    if alpha == 0:
        stat_terms = np.maximum(u - q, 0.0) / u.max()
        slack_terms = b * np.abs(q - u) / max(float(u @ b), 1e-300)
        stat = float(max(stat_terms.max(), slack_terms.max()))
    else:
        marginal = u * b ** (-alpha)
        stat = float(np.max(np.abs(marginal - q) / marginal))
    dual = float(np.max(np.maximum(-p, 0.0))) if len(p) else 0.0
    revenue = float(p @ h)
    comp = float(np.max(p * np.abs(h - load)) / revenue) if revenue > 0 else 0.0
    return max(primal, stat, dual, comp)


def _armijo(fun, p, d, f, grad, tries=80, resid_fn=None, resid=None):
    if resid_fn is not None:
        # near the optimum the dual value cannot resolve the decrease in floating
        # point, so a full Newton step is also accepted when it halves the residual
        trial = np.maximum(p + d, 0.0)
        ft = fun(trial)
        if math.isfinite(ft) and ft <= f + 1e-12 * max(1.0, abs(f)) and resid_fn(trial) < 0.5 * resid:
            return trial, ft
    step = 1.0
    for _ in range(tries):
        trial = np.maximum(p + step * d, 0.0)
        ft = fun(trial)
        if ft < f - 1e-4 * float(grad @ (p - trial)) or (ft < f and step < 1e-3):
            return trial, ft
        step *= 0.5
    return None


def _dual_newton(G, h, u, alpha, tol):
    """Minimise the dual over ``p >= 0``; returns (b, p, iterations)."""
    m_res = G.shape[0]
    inv = 1.0 / alpha

    def rates(p):
        q = G.T @ p
        if np.any(q <= 0):
            return None, q
        return (u / q) ** inv, q

    def dual_value(p):
        b, q = rates(p)
        if b is None:
            return math.inf
        if alpha == 1.0:
            phi = u * np.log(b) - u
        else:
            phi = u * b ** (1.0 - alpha) * (alpha / (1.0 - alpha))
        return float(phi.sum() + h @ p)

    def resid_at(p):
        b, _ = rates(p)
        return math.inf if b is None else kkt_residual(G, h, u, alpha, b, p)

    # start with uniform prices scaled so the tightest resource is just full
    p = np.ones(m_res)
    b, _ = rates(p)
    scale = float(np.max((G @ b) / h))
    p *= scale ** alpha
    f = dual_value(p)
    best = (math.inf, None, None)
    prev = math.inf
    for it in range(1, MAX_ITER + 1):
        b, q = rates(p)
        resid = kkt_residual(G, h, u, alpha, b, p)
        if resid < best[0]:
            best = (resid, b, p)
        # stop at the target, or once below tol and no longer improving (float floor)
        if resid <= tol * 1e-3 or (resid <= tol and resid > 0.5 * prev):
            return best[1], best[2], it
        prev = resid
        grad = h - G @ b
        eps_act = min(1e-12, float(np.abs(grad).max()))
        bound = (p <= eps_act) & (grad > 0)
        free = ~bound
        d = np.zeros(m_res)
        d[bound] = -p[bound]
        if free.any():
            H = (G[free] * (b / (alpha * q))) @ G[free].T
            H += np.eye(int(free.sum())) * 1e-14 * max(1.0, float(np.trace(H)))
            try:
                d[free] = -np.linalg.solve(H, grad[free])
            except np.linalg.LinAlgError:
                d[free] = -grad[free]
        trial = _armijo(dual_value, p, d, f, grad, resid_fn=resid_at, resid=resid)
        if trial is None:
            # Newton direction failed; fall back to a projected gradient step
            trial = _armijo(dual_value, p, -grad, f, grad, tries=200)
        if trial is None:
            return best[1], best[2], it
        p, f = trial
    raise SolverError("alpha-fair dual iteration did not converge")


_HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def _lp_lexicographic(G, h, u):
    m = len(u)
    bounds = [(0, None)] * m
    first = linprog(-u, A_ub=G, b_ub=h, bounds=bounds, method="highs", options=_HIGHS)
    if first.status != 0:
        raise SolverError(f"LP solve failed: {first.message}")
    prices = -np.asarray(first.ineqlin.marginals)
    best = -first.fun
    A_ub = np.vstack([G, -u])
    b_ub = np.concatenate([h, [-(best - 1e-10 * max(1.0, abs(best)))]])
    fixed = []
    x = first.x
    its = 1
    for k in range(m):
        lb = [(v - 1e-10, None) for v in fixed] + [(0, None)] * (m - len(fixed))
        c = np.zeros(m)
        c[k] = -1.0
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=lb, method="highs", options=_HIGHS)
        its += 1
        if res.status != 0:
            break
        x = res.x
        fixed.append(x[k])
    x = np.maximum(x, 0.0)
    load = G @ x
    over = load > h
    if over.any():
        x = x * float(np.min(h[over] / load[over]))
    return x, np.maximum(prices, 0.0), its


def solve_alpha_fair(spec: NetworkSpec, n, params: AlphaFairParams, tol: float = DEFAULT_TOL) -> SolveReport:
    if tol <= 0:
        raise ValidationError("tol must be positive")
    R = spec.num_types
    if len(params.weights) != R:
        raise ValidationError(f"need {R} weights, got {len(params.weights)}")
    b_full = np.zeros(R)
    occ = [r for r in range(R) if n[r] > 0]
    if not occ:
        return SolveReport(b_full, 0.0, 0, set(), np.zeros(0))
    alpha = params.alpha
    counts = np.array([float(n[r]) for r in occ])
    w = np.array([params.weights[r] for r in occ])
    idx, G, h = _reduced_problem(spec, occ)

    if math.isinf(alpha):
        slopes = {r: float(n[r]) for r in occ}
        b_full = progressive_fill(spec, occ, slopes)
        return SolveReport(b_full, 0.0, len(occ), saturated_resources(spec, b_full), None)

    if alpha == 0:
        u = w * counts
        u = u / u.max()
        b, p, its = _lp_lexicographic(G, h, u)
    else:
        # rescale utilities; the maximiser is unchanged
        logu = np.log(w) + alpha * np.log(counts)
        u = np.exp(logu - logu.max())
        b, p, its = _dual_newton(G, h, u, alpha, tol)
        load = G @ b
        over = load > h
        if over.any():
            b = b * float(np.min(h[over] / load[over]))
    resid = kkt_residual(G, h, u, alpha, b, p)
    if not resid <= tol:
        raise SolverError(f"KKT residual {resid:.3g} above tolerance {tol:.3g}")
    b_full[occ] = b
    prices = np.zeros(spec.num_resources)
    prices[idx] = p
    return SolveReport(b_full, resid, its, saturated_resources(spec, b_full, 1e-9), prices)


@dataclass(frozen=True)
class AlphaFair(Control):
    """Control that solves the alpha-fair problem at every state (cached)."""

    alpha: float
    weights: tuple[float, ...]
    tol: float = DEFAULT_TOL
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        params = AlphaFairParams(self.alpha, self.weights)
        object.__setattr__(self, "alpha", params.alpha)
        object.__setattr__(self, "weights", params.weights)

    @property
    def pareto(self):
        return True

    @property
    def params(self) -> AlphaFairParams:
        return AlphaFairParams(self.alpha, self.weights)

    def allocate(self, spec, n):
        key = (spec, tuple(n))
        hit = self._cache.get(key)
        if hit is None:
            hit = solve_alpha_fair(spec, n, self.params, self.tol).allocation
            hit.setflags(write=False)
            self._cache[key] = hit
        return hit.copy()

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_cache"] = {}
        return state


def as_control(params: AlphaFairParams, tol: float = DEFAULT_TOL) -> AlphaFair:
    return AlphaFair(params.alpha, params.weights, tol)
