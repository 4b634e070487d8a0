"""Bandwidth-sharing controls: maps from occupancy states to allocations.

Every control implements ``allocate(spec, n)`` and returns a float array of
length ``spec.num_types``.  States may have real coordinates (the fluid
integrator passes work volumes); "occupied" then means ``n_r > 0``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import InfeasibleAllocationError, TopologyError, ValidationError
from .network import DEFAULT_TOL, NetworkSpec, is_feasible

THRESHOLD_FAMILIES = ("two_type", "shared", "backbone")
FAMILY_ALIASES = {"example3": "two_type", "example4": "shared", "example5": "backbone"}


def progressive_fill(spec: NetworkSpec, types, slopes, b=None, tol=1e-12) -> np.ndarray:
    """Raise ``b_r`` at rate ``slopes[r]`` for ``r`` in ``types`` until each is blocked.

    A type stops as soon as one of its resources saturates.  Starting point ``b``
    must be feasible; the result is feasible and every filled type touches a
    saturated resource.
    """
    rows = spec._rows
    b = [0.0] * spec.num_types if b is None else [float(x) for x in b]
    residual = [max(cap - sum(b[t] for t in ts), 0.0) for cap, ts in rows]
    active = [r for r in types if slopes[r] > 0]
    while active:
        live = set(active)
        demand = [sum(slopes[t] for t in ts if t in live) for _, ts in rows]
        steps = [residual[i] / d for i, d in enumerate(demand) if d > 0]
        if not steps:
            raise ValidationError("unbounded fill: an active type has no finite resource")
        t = max(min(steps), 0.0)
        for r in active:
            b[r] += t * slopes[r]
        blocked = set()
        for i, (cap, ts) in enumerate(rows):
            if demand[i] > 0:
                left = residual[i] - t * demand[i]
                if left <= tol * max(1.0, cap):
                    left = 0.0
                    blocked.update(ts)
                residual[i] = max(left, 0.0)
        active = [r for r in active if r not in blocked]
    return np.array(b)


class Control:
    """Base class; subclasses are immutable and deterministic."""

    pareto = False

    def allocate(self, spec: NetworkSpec, n) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, spec: NetworkSpec, n) -> np.ndarray:
        return self.allocate(spec, n)


def _occupied(n) -> list[int]:
    return [r for r, v in enumerate(n) if v > 0]


@dataclass(frozen=True)
class CompletePartitioning(Control):
    """Constant reserved rate ``bhat_r`` for each occupied type."""

    bhat: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "bhat", tuple(float(x) for x in self.bhat))
        if any(x < 0 for x in self.bhat):
            raise ValidationError("bhat must be nonnegative")

    def allocate(self, spec, n):
        return np.array([self.bhat[r] if v > 0 else 0.0 for r, v in enumerate(n)])


@dataclass(frozen=True)
class StaticPriority(Control):
    """Strict priority between levels; within a level types are filled together.

    ``sharing="equal"`` raises all occupied types of a level at the same rate,
    ``"proportional"`` raises them at rate ``n_r`` (equal per-call rates).
    Types left out of ``levels`` form an implicit last level.
    """

    levels: tuple[tuple[int, ...], ...]
    sharing: str = "equal"
    pareto = True

    def __post_init__(self):
        levels = tuple(tuple(int(r) for r in lvl) for lvl in self.levels)
        flat = [r for lvl in levels for r in lvl]
        if len(flat) != len(set(flat)):
            raise ValidationError("a type appears in more than one priority level")
        if self.sharing not in ("equal", "proportional"):
            raise ValidationError(f"unknown within-level sharing rule {self.sharing!r}")
        object.__setattr__(self, "levels", levels)

    def _levels_for(self, num_types):
        listed = {r for lvl in self.levels for r in lvl}
        if any(r >= num_types or r < 0 for r in listed):
            raise TopologyError("priority levels mention a type outside the network")
        rest = tuple(r for r in range(num_types) if r not in listed)
        return self.levels + ((rest,) if rest else ())

    def allocate(self, spec, n):
        b = np.zeros(spec.num_types)
        for lvl in self._levels_for(spec.num_types):
            occ = [r for r in lvl if n[r] > 0]
            if not occ:
                continue
            slopes = {r: (1.0 if self.sharing == "equal" else float(n[r])) for r in occ}
            b = progressive_fill(spec, occ, slopes, b)
        return b


@dataclass(frozen=True)
class SwitchingMax(Control):
    """Serve a single occupied type at its full rate, everything else gets 0.

    The served type is the first occupied one in ``order`` (default: lowest
    index).  On the three-type triangle network this is Pareto efficient.
    """

    order: tuple[int, ...] | None = None
    pareto = True

    def allocate(self, spec, n):
        b = np.zeros(spec.num_types)
        for r in (self.order if self.order is not None else range(spec.num_types)):
            if n[r] > 0:
                b[r] = spec.max_rate(r)
                break
        return b


@dataclass(frozen=True)
class ReservedGreedy(Control):
    """Reserve ``bhat`` for occupied types, then hand out slack in index order."""

    bhat: tuple[float, ...]
    pareto = True

    def __post_init__(self):
        object.__setattr__(self, "bhat", tuple(float(x) for x in self.bhat))

    def allocate(self, spec, n):
        occ = _occupied(n)
        b = np.zeros(spec.num_types)
        b[occ] = [self.bhat[r] for r in occ]
        residual = spec.capacities - spec.incidence @ b
        for r in occ:
            res = spec.resources_of(r)
            inc = max(float(residual[res].min()), 0.0)
            b[r] += inc
            residual[res] -= inc
        return b


@functools.lru_cache(maxsize=256)
def _check_family_topology(family: str, spec: NetworkSpec) -> None:
    A = spec.incidence
    if family == "two_type" and spec.num_types != 2:
        raise TopologyError("two_type modification needs exactly two call types")
    if family == "shared" and not np.any(A.all(axis=1)):
        raise TopologyError("shared modification needs a resource used by all types")
    if family == "backbone":
        if spec.num_types < 2:
            raise TopologyError("backbone modification needs a backbone type and others")
        used_by_others = A[:, 1:].any(axis=1)
        if np.any(used_by_others & (A[:, 0] == 0)):
            raise TopologyError("type 0 must use every resource of the other types")


@dataclass(frozen=True)
class ThresholdPriority(Control):
    """Boundary modification of ``base`` near the edges of the state space.

    ``two_type``: two types; type 1 gets priority while ``n_0 < a``.
    ``shared``: shared resource plus dedicated ones; while ``min(n) < a``,
    types with larger (capped at ``a``) counts have priority, equal split
    inside a group.
    ``backbone``: type 0 uses every resource; it gets priority while
    ``max(n_1..n_k) < a``.
    Outside the activation region the base control applies unchanged.
    """

    base: Control
    family: str
    a: int

    def __post_init__(self):
        object.__setattr__(self, "family", FAMILY_ALIASES.get(self.family, self.family))
        if self.family not in THRESHOLD_FAMILIES:
            raise ValidationError(f"unknown threshold family {self.family!r}")
        if self.a < 1:
            raise ValidationError("threshold a must be >= 1")

    @property
    def pareto(self):
        return self.base.pareto

    def _check_topology(self, spec):
        _check_family_topology(self.family, spec)

    def active(self, n) -> bool:
        if self.family == "two_type":
            return n[0] < self.a
        if self.family == "shared":
            return min(n) < self.a
        return max(n[1:]) < self.a

    def boundary_control(self, n) -> StaticPriority:
        if self.family == "two_type":
            return StaticPriority(((1,), (0,)))
        if self.family == "backbone":
            return StaticPriority(((0,), tuple(range(1, len(n)))))
        # Types with n_r >= a' form the a'-th priority group; real counts use floor.
        by_level: dict[int, list[int]] = {}
        for r, x in enumerate(n):
            if x > 0:
                by_level.setdefault(min(math.floor(x), self.a), []).append(r)
        groups = [tuple(by_level[v]) for v in sorted(by_level, reverse=True)]
        return StaticPriority(tuple(groups))

    def allocate(self, spec, n):
        self._check_topology(spec)
        if self.active(n):
            return self.boundary_control(n).allocate(spec, n)
        return self.base.allocate(spec, n)


@dataclass(frozen=True)
class CustomTable(Control):
    """Explicit allocation table on the box ``0 <= n <= box``.

    ``tail="clamp"`` maps states outside the box to the nearest box state
    (coordinates capped, so occupancy is preserved as long as ``box >= 1``);
    ``tail="error"`` refuses them.
    """

    table: Mapping[tuple[int, ...], tuple[float, ...]]
    box: tuple[int, ...]
    tail: str = "error"

    def __post_init__(self):
        if self.tail not in ("error", "clamp"):
            raise ValidationError(f"unknown tail rule {self.tail!r}")
        table = {tuple(int(x) for x in k): tuple(float(x) for x in v)
                 for k, v in dict(self.table).items()}
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "box", tuple(int(x) for x in self.box))

    def __hash__(self):
        return hash((tuple(sorted(self.table.items())), self.box, self.tail))

    def allocate(self, spec, n):
        key = tuple(int(x) for x in n)
        if any(k != x for k, x in zip(key, n)):
            raise ValidationError("table controls are only defined on integer states")
        if any(k > m for k, m in zip(key, self.box)):
            if self.tail == "error":
                raise ValidationError(f"state {key} outside table box {self.box}")
            key = tuple(min(k, m) for k, m in zip(key, self.box))
        try:
            return np.array(self.table[key], dtype=float)
        except KeyError:
            raise ValidationError(f"table has no entry for state {key}") from None


@dataclass(frozen=True)
class FunctionControl(Control):
    """Wrap a plain callable ``fn(spec, n) -> allocation``."""

    fn: Callable[[NetworkSpec, Sequence[float]], Sequence[float]]
    label: str = "function"
    is_pareto: bool = field(default=False, compare=False)

    @property
    def pareto(self):
        return self.is_pareto

    def allocate(self, spec, n):
        return np.asarray(self.fn(spec, n), dtype=float)


def evaluate(control: Control, spec: NetworkSpec, n, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Allocation of ``control`` at ``n``, checked for shape, sign and feasibility."""
    if len(n) != spec.num_types:
        raise ValidationError(f"state must have length {spec.num_types}")
    if any(v < 0 for v in n):
        raise ValidationError("state entries must be nonnegative")
    b = np.asarray(control.allocate(spec, n), dtype=float)
    if b.shape != (spec.num_types,):
        raise ValidationError(f"control returned shape {b.shape}")
    vals = b.tolist()
    for x, v in zip(vals, n):
        if not (x >= -tol and math.isfinite(x)):
            raise ValidationError(f"control returned a negative or non-finite allocation {b}")
        if v == 0 and x != 0:
            raise ValidationError(f"control serves an empty class at {tuple(n)}")
    for cap, types in spec._rows:
        if sum(vals[t] for t in types) > cap + tol:
            raise InfeasibleAllocationError(f"control allocation {vals} infeasible at {tuple(n)}")
    return b


def partitioning_stable(spec: NetworkSpec, bhat) -> bool:
    """Complete partitioning is stable iff every reserved rate exceeds its load."""
    bhat = np.asarray(bhat, dtype=float)
    return bool(np.all(bhat > spec.kappa))


def dominate_with_pareto(spec: NetworkSpec, bhat) -> ReservedGreedy:
    """Pareto-efficient control that never gives an occupied type less than ``bhat``."""
    bhat = np.asarray(bhat, dtype=float)
    if bhat.shape != (spec.num_types,) or np.any(bhat < 0):
        raise ValidationError("bhat must be a nonnegative vector of length |R|")
    if not is_feasible(spec, bhat):
        raise InfeasibleAllocationError("bhat is infeasible when every type is present")
    return ReservedGreedy(tuple(bhat))


def threshold_modify(base: Control, family: str, a: int) -> ThresholdPriority:
    return ThresholdPriority(base, family, int(a))
