"""Stability classification of monotonic controls through limiting reduced controls.

For a subset ``S`` of types the reduced control ``b^S`` is obtained by
sending every count outside ``S`` to infinity.  For ``r`` in ``S`` the limit
is joint; for ``r`` outside ``S`` the counts in ``R \\ (S + {r})`` go to
infinity first and ``n_r`` last.  Starting from ``S = {}`` (always stable,
a point mass), types are added one at a time: if the stationary mean of
``b^S_r`` exceeds ``kappa_r`` then ``b^(S+{r})`` is stable, if it is below
then ``b^(S+{r})`` is unstable.  Means within ``z`` standard errors of
``kappa_r`` give an indeterminate verdict.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.stats import norm

from .controls import Control, evaluate
from .errors import (
    InsufficientDataError,
    LimitNotResolvedError,
    NotMonotoneError,
    ReducedChainUnstableError,
    ValidationError,
)
from .network import NetworkSpec
from .sim import SimConfig, TrajectoryStats, detect_growth, simulate

STABLE, UNSTABLE, INDETERMINATE = "stable", "unstable", "indeterminate"


def z_from_confidence(level: float) -> float:
    """Two-sided normal quantile, e.g. 0.997 -> about 2.97."""
    if not 0 < level < 1:
        raise ValidationError("confidence level must be in (0, 1)")
    return float(norm.ppf(0.5 + level / 2))


def confidence_from_z(z: float) -> float:
    return float(2 * norm.cdf(z) - 1)


# ---------------------------------------------------------------- monotonicity

@dataclass
class MonotoneReport:
    monotone: bool
    violations: list
    num_violations: int
    checked: int
    max_rates: list

    def to_dict(self):
        return {
            "monotone": self.monotone,
            "violations": [
                {"state": list(n), "type": r, "moved": s, "before": x, "after": y}
                for n, r, s, x, y in self.violations
            ],
            "num_violations": self.num_violations,
            "checked": self.checked,
            "max_rates": self.max_rates,
        }


def check_monotone(control: Control, spec: NetworkSpec, box: Sequence[int], step: int = 1,
                   tol: float = 1e-9, violation_cap: int = 100) -> MonotoneReport:
    """Check that ``b_r`` is nondecreasing in ``n_r`` and nonincreasing in every other count on a box."""
    box = tuple(int(x) for x in box)
    if len(box) != spec.num_types or step < 1:
        raise ValidationError("box must have one bound per type and step >= 1")
    R = spec.num_types
    alloc = {n: evaluate(control, spec, n) for n in itertools.product(*(range(m + 1) for m in box))}
    violations, count, checked = [], 0, 0
    for n, b in alloc.items():
        for s in range(R):
            if n[s] + step > box[s]:
                continue
            up = n[:s] + (n[s] + step,) + n[s + 1:]
            b2 = alloc[up]
            checked += 1
            for r in range(R):
                bad = b2[r] < b[r] - tol if r == s else b2[r] > b[r] + tol
                if bad:
                    count += 1
                    if len(violations) < violation_cap:
                        violations.append((n, r, s, float(b[r]), float(b2[r])))
    max_rates = np.max(np.array(list(alloc.values())), axis=0).tolist()
    return MonotoneReport(count == 0, violations, count, checked, max_rates)


# ---------------------------------------------------------------- limiting controls

@dataclass
class SubsetControl:
    """Limiting control ``b^S`` resolved numerically, cached per reduced state.

    Limits are read off by sweeping the outside counts ``N_inf, growth*N_inf, ...``
    and accepting two consecutive agreeing values.  For a type outside ``S``
    the inner counts are swept to convergence for each outer value of its own
    count, so the inner limit is taken first.
    """

    spec: NetworkSpec
    control: Control
    subset: tuple[int, ...]
    N_inf: int = 64
    growth: int = 4
    tol: float = 1e-9
    max_sweeps: int = 8
    _service: dict = field(default_factory=dict, repr=False)
    _query: dict = field(default_factory=dict, repr=False)
    _depth: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        subset = tuple(sorted(int(s) for s in self.subset))
        if len(set(subset)) != len(subset) or any(not 0 <= s < self.spec.num_types for s in subset):
            raise ValidationError(f"invalid subset {self.subset}")
        if self.N_inf < 1 or self.growth < 2:
            raise ValidationError("need N_inf >= 1 and growth >= 2")
        self.subset = subset
        self.outside = tuple(r for r in range(self.spec.num_types) if r not in subset)

    def _state(self, n_S, fill: dict) -> tuple:
        n = [0] * self.spec.num_types
        for s, v in zip(self.subset, n_S):
            n[s] = int(v)
        for r, v in fill.items():
            n[r] = int(v)
        return tuple(n)

    def _close(self, x, y) -> bool:
        return bool(np.all(np.abs(np.asarray(x) - np.asarray(y)) <= self.tol * np.maximum(1.0, np.abs(y))))

    def _b(self, n) -> np.ndarray:
        return evaluate(self.control, self.spec, n)

    def service(self, n_S) -> np.ndarray:
        """``(b^S_s(n_S), s in S)``: joint limit over all outside counts."""
        key = tuple(int(x) for x in n_S)
        hit = self._service.get(key)
        if hit is not None:
            return hit
        idx = list(self.subset)
        if not self.outside:
            val = self._b(self._state(key, {}))[idx]
            self._depth[("S", key)] = 0
        else:
            N = self.N_inf
            prev = self._b(self._state(key, {r: N for r in self.outside}))[idx]
            for sweep in range(1, self.max_sweeps + 1):
                N *= self.growth
                cur = self._b(self._state(key, {r: N for r in self.outside}))[idx]
                if self._close(prev, cur):
                    val = cur
                    self._depth[("S", key)] = N
                    break
                prev = cur
            else:
                raise LimitNotResolvedError(
                    f"limit for S={self.subset} at {key} not resolved from N_inf={self.N_inf}"
                )
        val = np.array(val, dtype=float)
        val.setflags(write=False)
        self._service[key] = val
        return val

    def _inner(self, key, r, M):
        inner = [s for s in self.outside if s != r]
        if not inner:
            return float(self._b(self._state(key, {r: M}))[r])
        K = self.growth * M
        prev = float(self._b(self._state(key, {r: M, **{s: K for s in inner}}))[r])
        for _ in range(self.max_sweeps):
            K *= self.growth
            cur = float(self._b(self._state(key, {r: M, **{s: K for s in inner}}))[r])
            if self._close(prev, cur):
                return cur
            prev = cur
        raise LimitNotResolvedError(
            f"inner limit for type {r}, S={self.subset} at {key}, n_r={M} not resolved"
        )

    def query(self, r: int, n_S) -> float:
        """``b^S_r(n_S)`` for ``r`` outside ``S`` (iterated limit, own count last)."""
        if r in self.subset:
            return float(self.service(n_S)[self.subset.index(r)])
        if not 0 <= r < self.spec.num_types:
            raise ValidationError(f"type {r} out of range")
        key = (r,) + tuple(int(x) for x in n_S)
        hit = self._query.get(key)
        if hit is not None:
            return hit
        ns = key[1:]
        M = self.N_inf
        prev = self._inner(ns, r, M)
        for _ in range(self.max_sweeps):
            M *= self.growth
            cur = self._inner(ns, r, M)
            if self._close(prev, cur):
                self._query[key] = cur
                self._depth[("r", key)] = M
                return cur
            prev = cur
        raise LimitNotResolvedError(
            f"limit for type {r}, S={self.subset} at {ns} not resolved from N_inf={self.N_inf}"
        )

    @property
    def provenance(self) -> dict:
        depths = list(self._depth.values())
        return {
            "kind": "numeric-limit",
            "N_inf": self.N_inf,
            "growth": self.growth,
            "agreement_tol": self.tol,
            "max_resolved_at": max(depths) if depths else None,
        }

    def reduced_network(self) -> NetworkSpec:
        return self.spec.subnetwork(self.subset)

    def as_control(self) -> "ReducedControl":
        return ReducedControl(self)


class ReducedControl(Control):
    """The control ``(b^S_s, s in S)`` acting on the subnetwork of types in ``S``."""

    def __init__(self, sc: SubsetControl):
        self.sc = sc

    def allocate(self, spec, n):
        return np.array(self.sc.service(n), dtype=float)


def limiting_control(control: Control, spec: NetworkSpec, S, r_query: int | None = None,
                     n_S=(), N_inf: int = 64, growth: int = 4, tol: float = 1e-9,
                     max_sweeps: int = 8):
    """``b^S`` at ``n_S``: the vector over ``S`` and, if ``r_query`` is given, ``b^S_{r_query}``."""
    sc = SubsetControl(spec, control, tuple(S), N_inf, growth, tol, max_sweeps)
    if r_query is None:
        return sc.service(n_S)
    return sc.query(r_query, n_S)


# ---------------------------------------------------------------- reduced stationary laws

@dataclass
class StationaryEstimate:
    method: str
    subset: tuple
    distribution: dict
    truncation_box: tuple | None = None
    truncation_mass: float = 0.0
    stats: TrajectoryStats | None = field(default=None, repr=False)
    growth_verdict: str | None = None

    def to_dict(self, top: int = 20):
        items = sorted(self.distribution.items(), key=lambda kv: -kv[1])[:top]
        return {
            "method": self.method,
            "subset": list(self.subset),
            "truncation_box": None if self.truncation_box is None else list(self.truncation_box),
            "truncation_mass": self.truncation_mass,
            "growth_verdict": self.growth_verdict,
            "states": len(self.distribution),
            "top_states": [{"state": list(s), "prob": p} for s, p in items],
        }


def default_box(size: int, max_states: int = 100_000, cap: int = 200) -> tuple:
    if size == 0:
        return ()
    side = int(math.floor(max_states ** (1.0 / size))) - 1
    return (max(1, min(cap, side)),) * size


def _matrix_stationary(sc: SubsetControl, box, max_states, mass_limit):
    sub = sc.reduced_network()
    k = len(sc.subset)
    box = tuple(int(x) for x in box)
    if len(box) != k:
        raise ValidationError(f"truncation box needs {k} bounds")
    dims = tuple(m + 1 for m in box)
    total = math.prod(dims)
    if total > max_states:
        raise ValidationError(f"truncated box has {total} states, above {max_states}")
    states = list(itertools.product(*(range(d) for d in dims)))
    strides = np.cumprod((1,) + dims[::-1][:-1])[::-1]
    nu, mu = sub.nu, sub.mu
    rows, cols, vals = [], [], []
    for i, n in enumerate(states):
        b = sc.service(n)
        for s in range(k):
            if n[s] < box[s]:
                rows.append(i)
                cols.append(i + int(strides[s]))
                vals.append(nu[s])
            if n[s] > 0 and b[s] > 0:
                rows.append(i)
                cols.append(i - int(strides[s]))
                vals.append(mu[s] * b[s])
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(total, total))
    Q = Q - sp.diags(np.asarray(Q.sum(axis=1)).ravel())
    A = Q.T.tolil()
    A[0, :] = np.ones(total)
    rhs = np.zeros(total)
    rhs[0] = 1.0
    pi = spla.spsolve(A.tocsc(), rhs)
    pi = np.maximum(pi, 0.0)
    pi /= pi.sum()
    edge = np.array([any(x == m for x, m in zip(n, box)) for n in states])
    mass = float(pi[edge].sum())
    if mass > mass_limit:
        raise ReducedChainUnstableError(
            f"reduced chain on S={sc.subset} puts mass {mass:.3g} on the truncation boundary "
            f"of box {box}; it appears unstable (or the box is too small)"
        )
    dist = {n: float(p) for n, p in zip(states, pi) if p > 0}
    return StationaryEstimate("matrix", sc.subset, dist, box, mass)


def reduced_stationary(sc: SubsetControl, method: str = "simulation", events: int = 2_000_000,
                       seed: int = 0, warmup_fraction: float = 0.2, batches: int = 10,
                       box=None, max_states: int = 100_000, mass_limit: float = 1e-3) -> StationaryEstimate:
    """Stationary law of the chain on ``S`` driven by ``b^S``."""
    if not sc.subset:
        return StationaryEstimate(method, (), {(): 1.0})
    if method == "matrix":
        return _matrix_stationary(sc, box if box is not None else default_box(len(sc.subset), max_states),
                                  max_states, mass_limit)
    if method != "simulation":
        raise ValidationError(f"unknown method {method!r}")
    sub = sc.reduced_network()
    cfg = SimConfig(
        initial_state=(0,) * len(sc.subset), max_events=int(events), seed=int(seed),
        warmup_fraction=warmup_fraction, batches=batches,
    )
    stats = simulate(sub, sc.as_control(), cfg)
    try:
        verdict = detect_growth(stats).verdict
    except InsufficientDataError:
        verdict = None
    if verdict == "growing":
        raise ReducedChainUnstableError(
            f"reduced chain on S={sc.subset} keeps growing; no stationary law"
        )
    return StationaryEstimate("simulation", sc.subset, stats.state_distribution(),
                              stats=stats, growth_verdict=verdict)


def expected_service(est: StationaryEstimate, sc: SubsetControl, r: int) -> tuple[float, float]:
    """Stationary mean of ``b^S_r`` and its standard error.

    For the matrix method the error is a bound from the truncation mass.
    """
    fn = (lambda n: sc.query(r, n))
    if not est.subset:
        return fn(()), 0.0
    if est.method == "simulation":
        mean, se = est.stats.batch_estimate(fn)
        return float(mean), float(se)
    mean = math.fsum(p * fn(n) for n, p in est.distribution.items())
    bound = max(fn(n) for n in est.distribution)
    return float(mean), float(est.truncation_mass * bound + 1e-12)


# ---------------------------------------------------------------- recursion

@dataclass
class StepResult:
    subset: tuple
    added: int
    estimate: float
    se: float
    kappa: float
    verdict: str
    method: str = ""
    note: str = ""

    def to_dict(self):
        return {
            "subset": list(self.subset),
            "added": self.added,
            "estimate": self.estimate,
            "se": None if not math.isfinite(self.se) else self.se,
            "kappa": self.kappa,
            "verdict": self.verdict,
            "method": self.method,
            "note": self.note,
        }


def theorem1_step(spec: NetworkSpec, S, r: int, E: float, se: float, z: float = 3.0) -> StepResult:
    """Verdict for ``b^(S+{r})`` from the stationary mean of ``b^S_r``."""
    kappa = float(spec.kappa[r])
    if not math.isfinite(se):
        verdict = INDETERMINATE
    elif E - z * se > kappa:
        verdict = STABLE
    elif E + z * se < kappa:
        verdict = UNSTABLE
    else:
        verdict = INDETERMINATE
    return StepResult(tuple(sorted(S)), int(r), float(E), float(se), kappa, verdict)


@dataclass(frozen=True)
class ClassifyConfig:
    method: str = "simulation"
    events: int = 2_000_000
    seed: int = 0
    warmup_fraction: float = 0.2
    batches: int = 10
    box: tuple | None = None  # matrix truncation, one bound per type of the full network
    max_states: int = 100_000
    z: float = 3.0
    N_inf: int = 64
    growth: int = 4
    tol: float = 1e-9
    max_sweeps: int = 8
    verify_box: tuple | None = None


@dataclass
class ClassificationResult:
    trace: list
    verdict: str
    order: tuple
    z: float
    monotone: dict
    notes: list = field(default_factory=list)
    start: tuple = ()

    @property
    def confidence(self) -> float:
        return confidence_from_z(self.z)

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "order": list(self.order),
            "z": self.z,
            "confidence": self.confidence,
            "trace": [s.to_dict() for s in self.trace],
            "monotone": self.monotone,
            "start": list(self.start),
            "notes": self.notes,
        }


def _monotone_evidence(spec, control, cfg, declared):
    if declared is not None:
        return {"kind": "declared", "provenance": str(declared)}
    box = cfg.verify_box or (6,) * spec.num_types
    rep = check_monotone(control, spec, box)
    if not rep.monotone:
        raise NotMonotoneError(
            f"control is not monotone on box {tuple(box)}; first violation {rep.violations[0]}"
        )
    return {"kind": "verified", "box": list(box), "checked": rep.checked}


def _classify_order(spec, control, order, cfg: ClassifyConfig, start=()):
    trace = []
    S: tuple = tuple(sorted(start))
    for step, r in enumerate(r for r in order if r not in S):
        sc = SubsetControl(spec, control, S, cfg.N_inf, cfg.growth, cfg.tol, cfg.max_sweeps)
        try:
            est = reduced_stationary(
                sc, cfg.method, cfg.events, cfg.seed ^ step, cfg.warmup_fraction, cfg.batches,
                None if cfg.box is None else tuple(cfg.box[s] for s in S), cfg.max_states,
            )
        except ReducedChainUnstableError as exc:
            trace.append(StepResult(S, r, math.nan, math.nan, float(spec.kappa[r]), UNSTABLE,
                                    cfg.method, f"reduced chain on S appears unstable: {exc}"))
            break
        E, se = expected_service(est, sc, r)
        res = theorem1_step(spec, S, r, E, se, cfg.z)
        res.method = est.method if S else "point-mass"
        if est.method == "matrix":
            res.note = f"truncation mass {est.truncation_mass:.3g}"
        trace.append(res)
        if res.verdict != STABLE:
            break
        S = tuple(sorted(S + (r,)))
    return trace


def _final_verdict(trace, R):
    last = trace[-1]
    full = len(last.subset) + 1 == R
    if last.verdict == STABLE and full:
        return STABLE
    if last.verdict == UNSTABLE and full and math.isfinite(last.estimate):
        return UNSTABLE
    return INDETERMINATE


def classify(spec: NetworkSpec, control: Control, order: Sequence[int] | None = None,
             cfg: ClassifyConfig = ClassifyConfig(), declared_monotone: str | None = None,
             start: Sequence[int] = (), start_reason: str | None = None) -> ClassificationResult:
    """Recursive stability classification.

    ``order`` is the sequence in which types join ``S``; ``None`` tries all
    orders (only for at most five types) and keeps the first one that reaches
    a full-network verdict.  Monotonicity is checked on ``cfg.verify_box``
    unless ``declared_monotone`` gives the reason it may be assumed.

    ``start`` begins the recursion at a subset whose reduced control is known
    to be stable for the reason given in ``start_reason``; its reduced chain
    is still solved, and an unstable-looking chain is reported as such.
    """
    R = spec.num_types
    mono = _monotone_evidence(spec, control, cfg, declared_monotone)
    notes = []
    start = tuple(sorted(int(r) for r in start))
    if start:
        if len(set(start)) != len(start) or any(not 0 <= r < R for r in start) or len(start) >= R:
            raise ValidationError(f"invalid start subset {start}")
        if not start_reason:
            raise ValidationError("a start subset needs a stated reason for its stability")
        notes.append(f"recursion starts at S={list(start)}: {start_reason}")
    if order is not None:
        order = tuple(int(r) for r in order)
        if sorted(order) != list(range(R)):
            raise ValidationError(f"order must be a permutation of 0..{R - 1}")
        trace = _classify_order(spec, control, order, cfg, start)
        verdict = _final_verdict(trace, R)
    else:
        if R > 5:
            raise ValidationError("order search is limited to at most five types; give an order")
        first = None
        for cand in itertools.permutations(range(R)):
            if list(cand[: len(start)]) != sorted(cand[: len(start)]) or set(cand[: len(start)]) != set(start):
                continue
            trace = _classify_order(spec, control, cand, cfg, start)
            verdict = _final_verdict(trace, R)
            if first is None:
                first = (cand, trace, verdict)
            if verdict != INDETERMINATE:
                order = cand
                break
        else:
            order, trace, verdict = first
            notes.append("no order reached a full-network verdict")
    last = trace[-1]
    if verdict == INDETERMINATE and len(trace) < R and last.verdict == UNSTABLE:
        notes.append(f"b^S unstable for S={sorted(last.subset + (last.added,))}; "
                     "this does not settle the full control")
    if last.verdict == INDETERMINATE:
        notes.append("mean within the confidence band of kappa; the equality case is open")
    return ClassificationResult(trace, verdict, tuple(order), cfg.z, mono, notes, start)


# ---------------------------------------------------------------- critical parameter

@dataclass
class ThresholdResult:
    lo: float
    hi: float
    lo_verdict: str
    hi_verdict: str
    probes: list

    def to_dict(self):
        return {"lo": self.lo, "hi": self.hi, "lo_verdict": self.lo_verdict,
                "hi_verdict": self.hi_verdict, "probes": self.probes}


def critical_threshold(family: Callable[[float], NetworkSpec],
                       control: Control | Callable[[float], Control],
                       order: Sequence[int] | None, bracket: tuple[float, float], tol: float,
                       cfg: ClassifyConfig = ClassifyConfig(),
                       declared_monotone: str | None = None, start: Sequence[int] = (),
                       start_reason: str | None = None) -> ThresholdResult:
    """Bisection for the parameter where the verdict switches from stable to not stable.

    ``family(theta)`` builds the network; the verdict must be stable at the
    lower end of ``bracket`` and not stable at the upper end.  Returns
    ``[lo, hi]`` with ``hi - lo <= tol``.
    """
    lo, hi = (float(x) for x in bracket)
    if not lo < hi or not tol > 0:
        raise ValidationError("need bracket lo < hi and tol > 0")
    probes = []

    def verdict(theta):
        spec = family(theta)
        ctl = control(theta) if callable(control) and not isinstance(control, Control) else control
        res = classify(spec, ctl, order, cfg, declared_monotone, start, start_reason)
        last = res.trace[-1]
        probes.append({"theta": theta, "verdict": res.verdict, "estimate": last.estimate,
                       "se": last.se if math.isfinite(last.se) else None, "kappa": last.kappa})
        return res.verdict

    v_lo, v_hi = verdict(lo), verdict(hi)
    if v_lo != STABLE or v_hi == STABLE:
        raise ValidationError(
            f"bracket does not straddle the threshold: verdict {v_lo} at {lo}, {v_hi} at {hi}; "
            f"probes {probes}"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        v = verdict(mid)
        if v == STABLE:
            lo, v_lo = mid, v
        else:
            hi, v_hi = mid, v
    return ThresholdResult(lo, hi, v_lo, v_hi, probes)
