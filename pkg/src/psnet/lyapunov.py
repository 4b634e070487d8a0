"""Generator drift of Lyapunov functions and Foster-type box scans.

The drift of ``f`` under a control ``b`` at state ``n`` is

    D f(n) = sum_r nu_r (f(n + e_r) - f(n)) + mu_r b_r(n) (f(n - e_r) - f(n)).

Scans evaluate it exactly on every state of a finite box.  A passing scan is
finite-box evidence only: nothing is claimed about states outside the box.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .controls import Control, evaluate
from .errors import ValidationError
from .network import NetworkSpec, capacity_condition

STATE_CAP = 10_000_000
VIOLATION_CAP = 100


def g_a(a: int, n: float) -> float:
    """Quadratic smoothing of ``n`` below ``a``; continuous and convex, equal to ``n`` for ``n >= a``."""
    if a < 1:
        raise ValidationError("a must be >= 1")
    return a / 2 + n * n / (2 * a) if n < a else float(n)


class Lyapunov:
    """Function of the state; ``excluded`` marks states where it is not smooth enough to scan."""

    def value(self, spec: NetworkSpec, n) -> float:
        raise NotImplementedError

    def excluded(self, n) -> bool:
        return False


@dataclass(frozen=True)
class LinearLyapunov(Lyapunov):
    coefficients: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.coefficients)
        if any(x < 0 for x in w) or not any(x > 0 for x in w):
            raise ValidationError("linear coefficients must be nonnegative and not all zero")
        object.__setattr__(self, "coefficients", w)

    def value(self, spec, n):
        return math.fsum(w * x for w, x in zip(self.coefficients, n))


@dataclass(frozen=True)
class SmoothedFirstLyapunov(Lyapunov):
    """``g_a(n_0)/mu_0 + sum_{r>=1} n_r/mu_r``."""

    a: int

    def __post_init__(self):
        if self.a < 1:
            raise ValidationError("a must be >= 1")

    def value(self, spec, n):
        mu = spec._mu
        return g_a(self.a, n[0]) / mu[0] + sum(n[r] / mu[r] for r in range(1, len(n)))


@dataclass(frozen=True)
class SmoothedSumLyapunov(Lyapunov):
    """``sum_r g_a(n_r)/mu_r``."""

    a: int

    def __post_init__(self):
        if self.a < 1:
            raise ValidationError("a must be >= 1")

    def value(self, spec, n):
        mu = spec._mu
        return sum(g_a(self.a, x) / mu[r] for r, x in enumerate(n))


@dataclass(frozen=True)
class SmoothedBackboneLyapunov(Lyapunov):
    """``n_0 + g_a(max(n_1..n_k))``; states with a tied maximum are excluded from scans."""

    a: int

    def __post_init__(self):
        if self.a < 1:
            raise ValidationError("a must be >= 1")

    def value(self, spec, n):
        return n[0] + g_a(self.a, max(n[1:]))

    def excluded(self, n):
        top = max(n[1:])
        return sum(1 for x in n[1:] if x == top) >= 2


@dataclass(frozen=True)
class FunctionLyapunov(Lyapunov):
    fn: Callable[[NetworkSpec, Sequence[int]], float]
    label: str = "function"

    def value(self, spec, n):
        return float(self.fn(spec, n))


def drift(spec: NetworkSpec, control: Control, f: Lyapunov, n) -> float:
    """Exact generator drift of ``f`` at ``n``."""
    n = tuple(n)
    b = evaluate(control, spec, n)
    return _drift_with(spec, b, f, n)


def _drift_with(spec, b, f, n):
    f0 = f.value(spec, n)
    nu, mu, b = spec._nu, spec._mu, b.tolist()
    total = 0.0
    for r in range(len(n)):
        up = n[:r] + (n[r] + 1,) + n[r + 1:]
        total += nu[r] * (f.value(spec, up) - f0)
        if n[r] > 0 and b[r] != 0:
            down = n[:r] + (n[r] - 1,) + n[r + 1:]
            total += mu[r] * b[r] * (f.value(spec, down) - f0)
    return float(total)


def boundary_term(kappa_r: float, b_r: float, n_r: int, a: int) -> float:
    """Correction from the curvature of ``g_a``: ``kappa_r + b_r`` below ``a``, ``b_r`` at ``a``, 0 above."""
    if n_r < a:
        return kappa_r + b_r
    if n_r == a:
        return b_r
    return 0.0


def smoothed_first_identity(spec: NetworkSpec, b, a: int, n) -> float:
    """Closed form of the drift of :class:`SmoothedFirstLyapunov`."""
    kappa = spec.kappa
    out = min(n[0] / a, 1.0) * (kappa[0] - b[0])
    out += sum(kappa[r] - b[r] for r in range(1, len(n)))
    return float(out + boundary_term(kappa[0], b[0], n[0], a) / (2 * a))


def smoothed_sum_identity(spec: NetworkSpec, b, a: int, n) -> float:
    """Closed form of the drift of :class:`SmoothedSumLyapunov` as a sum over levels ``a' = 1..a``."""
    kappa = spec.kappa
    levels = sum(
        sum(kappa[r] - b[r] for r in range(len(n)) if n[r] >= level)
        for level in range(1, a + 1)
    )
    h = sum(boundary_term(kappa[r], b[r], n[r], a) for r in range(len(n)))
    return float(levels / a + h / (2 * a))


@dataclass(frozen=True)
class ExceptionSet:
    """Finite set ``F``: explicit states plus boxes ``lower <= n <= upper`` (inclusive)."""

    states: frozenset = frozenset()
    boxes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "states", frozenset(tuple(int(x) for x in s) for s in self.states))
        boxes = []
        for lo, hi in self.boxes:
            lo = tuple(int(x) for x in lo)
            hi = tuple(int(x) for x in hi)
            if len(lo) != len(hi):
                raise ValidationError("exception box bounds differ in length")
            boxes.append((lo, hi))
        object.__setattr__(self, "boxes", tuple(boxes))

    def __contains__(self, n) -> bool:
        n = tuple(n)
        if n in self.states:
            return True
        return any(all(l <= x <= h for l, x, h in zip(lo, n, hi)) for lo, hi in self.boxes)

    def size(self) -> int:
        extra = sum(math.prod(max(h - l + 1, 0) for l, h in zip(lo, hi)) for lo, hi in self.boxes)
        return len(self.states) + extra


@dataclass(frozen=True)
class DriftConfig:
    """Drift margins.  Unset values are derived from the network when resolved.

    ``delta_prime`` defaults to the smallest capacity slack, ``delta`` to the
    smallest ``max_rate(r) - kappa_r`` (the best margin a priority boost can
    give), and ``epsilon`` to ``min(delta, delta_prime) / 2``.  ``exception``
    may be a callable of the threshold ``a`` returning the exception set.
    ``tol`` absorbs rounding when the drift equals ``-epsilon`` exactly.
    """

    epsilon: float | None = None
    delta: float | None = None
    delta_prime: float | None = None
    exception: ExceptionSet | Callable[[int], ExceptionSet] | None = None
    tol: float = 1e-9

    def resolve(self, spec: NetworkSpec) -> "DriftConfig":
        _, slack = capacity_condition(spec)
        dp = self.delta_prime if self.delta_prime is not None else float(np.min(slack))
        d = self.delta
        if d is None:
            d = min(spec.max_rate(r) - spec.kappa[r] for r in range(spec.num_types))
        eps = self.epsilon if self.epsilon is not None else 0.5 * min(d, dp)
        if not eps > 0:
            raise ValidationError(f"epsilon must be positive (got {eps:.6g})")
        return DriftConfig(float(eps), float(d), float(dp), self.exception, self.tol)

    def exception_for(self, a: int | None = None) -> ExceptionSet:
        ex = self.exception
        if ex is None:
            return ExceptionSet()
        if callable(ex) and not isinstance(ex, ExceptionSet):
            if a is None:
                raise ValidationError("exception set depends on a threshold that was not given")
            return ex(a)
        return ex


@dataclass
class ScanReport:
    passed: bool
    worst_state: tuple | None
    worst_drift: float
    violations: list
    num_violations: int
    scanned: int
    in_exception: int
    excluded_states: list = field(default_factory=list)
    num_excluded: int = 0
    epsilon: float = math.nan
    note: str = "finite-box evidence; states outside the box are not checked"

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_state": None if self.worst_state is None else list(self.worst_state),
            "worst_drift": None if not math.isfinite(self.worst_drift) else self.worst_drift,
            "violations": [{"state": list(s), "drift": d} for s, d in self.violations],
            "num_violations": self.num_violations,
            "scanned": self.scanned,
            "in_exception": self.in_exception,
            "excluded_states": [list(s) for s in self.excluded_states],
            "num_excluded": self.num_excluded,
            "epsilon": self.epsilon,
            "note": self.note,
        }


def _box_states(box, first_range=None) -> Iterable[tuple]:
    ranges = [range(int(m) + 1) for m in box]
    if first_range is not None:
        ranges[0] = first_range
    return itertools.product(*ranges)


def _scan_chunk(args):
    spec, control, f, box, first, exception, eps, tol, cap = args
    worst_state, worst = None, -math.inf
    violations, n_viol, scanned, in_f = [], 0, 0, 0
    excluded, n_excl = [], 0
    for n in _box_states(box, first):
        if n in exception:
            in_f += 1
            continue
        if f.excluded(n):
            n_excl += 1
            if len(excluded) < cap:
                excluded.append(n)
            continue
        d = drift(spec, control, f, n)
        scanned += 1
        if d > worst:
            worst, worst_state = d, n
        if d > -eps + tol:
            n_viol += 1
            if len(violations) < cap:
                violations.append((n, d))
    return worst_state, worst, violations, n_viol, scanned, in_f, excluded, n_excl


def _split(box, jobs):
    top = int(box[0]) + 1
    k = max(1, min(jobs, top))
    edges = np.linspace(0, top, k + 1).round().astype(int)
    return [range(lo, hi) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]


def foster_scan(
    spec: NetworkSpec,
    control: Control,
    f: Lyapunov,
    box: Sequence[int],
    cfg: DriftConfig,
    a: int | None = None,
    state_cap: int = STATE_CAP,
    violation_cap: int = VIOLATION_CAP,
    jobs: int = 1,
) -> ScanReport:
    """Check ``drift <= -epsilon`` (up to ``cfg.tol``) on every state of ``[0, box]`` outside the exception set.

    States are visited in lexicographic order; ``jobs > 1`` splits the box
    along the first coordinate and merges in order, so results do not
    depend on ``jobs``.
    """
    box = tuple(int(x) for x in box)
    if len(box) != spec.num_types or any(x < 0 for x in box):
        raise ValidationError(f"box must be {spec.num_types} nonnegative bounds")
    total = math.prod(x + 1 for x in box)
    if total > state_cap:
        raise ValidationError(f"box has {total} states, above the cap of {state_cap}")
    cfg = cfg.resolve(spec)
    exception = cfg.exception_for(a)
    chunks = [(spec, control, f, box, rng, exception, cfg.epsilon, cfg.tol, violation_cap)
              for rng in _split(box, jobs)]
    if jobs > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_scan_chunk, chunks))
    else:
        parts = [_scan_chunk(c) for c in chunks]
    worst_state, worst = None, -math.inf
    violations, excluded = [], []
    n_viol = scanned = in_f = n_excl = 0
    for ws, w, v, nv, sc, inf_, ex, ne in parts:
        if ws is not None and w > worst:
            worst, worst_state = w, ws
        violations.extend(v)
        excluded.extend(ex)
        n_viol += nv
        scanned += sc
        in_f += inf_
        n_excl += ne
    return ScanReport(
        passed=n_viol == 0,
        worst_state=worst_state,
        worst_drift=worst,
        violations=violations[:violation_cap],
        num_violations=n_viol,
        scanned=scanned,
        in_exception=in_f,
        excluded_states=excluded[:violation_cap],
        num_excluded=n_excl,
        epsilon=cfg.epsilon,
    )


@dataclass
class InstabilityReport:
    passed: bool
    min_drift: float
    min_state: tuple | None
    scanned: int
    eps: float
    note: str = "uniform positive drift on a finite box is evidence of instability, not a proof"

    def to_dict(self):
        return {
            "passed": self.passed,
            "min_drift": self.min_drift,
            "min_state": None if self.min_state is None else list(self.min_state),
            "scanned": self.scanned,
            "eps": self.eps,
            "note": self.note,
        }


def instability_evidence(spec, control, f: LinearLyapunov, box, eps: float,
                         state_cap: int = STATE_CAP) -> InstabilityReport:
    """Check ``drift >= eps`` at every nonzero state of ``[0, box]`` for a linear ``f``."""
    if not isinstance(f, LinearLyapunov):
        raise ValidationError("instability evidence needs a linear function (bounded jumps)")
    if not eps > 0:
        raise ValidationError("eps must be positive")
    box = tuple(int(x) for x in box)
    total = math.prod(x + 1 for x in box)
    if total > state_cap:
        raise ValidationError(f"box has {total} states, above the cap of {state_cap}")
    low, low_state, scanned = math.inf, None, 0
    for n in _box_states(box):
        if not any(n):
            continue
        d = drift(spec, control, f, n)
        scanned += 1
        if d < low:
            low, low_state = d, n
    return InstabilityReport(scanned > 0 and low >= eps, low, low_state, scanned, eps)


@dataclass
class ThresholdSearch:
    a: int | None
    report: ScanReport | None
    tried: list
    reason: str = ""

    def to_dict(self):
        return {
            "a": self.a,
            "report": None if self.report is None else self.report.to_dict(),
            "tried": self.tried,
            "reason": self.reason,
        }


def find_threshold_a(
    spec: NetworkSpec,
    control_family: Callable[[int], Control],
    lyapunov_family: Callable[[int], Lyapunov],
    cfg: DriftConfig,
    box: Sequence[int],
    a_max: int,
    jobs: int = 1,
) -> ThresholdSearch:
    """Smallest ``a`` in ``1..a_max`` whose scan passes, or ``a=None``."""
    ok, _ = capacity_condition(spec)
    if not ok:
        return ThresholdSearch(None, None, [], "capacity condition fails; no control is stable")
    tried = []
    for a in range(1, int(a_max) + 1):
        rep = foster_scan(spec, control_family(a), lyapunov_family(a), box, cfg, a=a, jobs=jobs)
        tried.append({"a": a, "passed": rep.passed, "worst_drift": rep.worst_drift,
                      "num_violations": rep.num_violations})
        if rep.passed:
            return ThresholdSearch(a, rep, tried)
    return ThresholdSearch(None, None, tried, f"no a <= {a_max} passes")
