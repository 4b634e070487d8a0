"""Network data model: call types, resources, states and allocation predicates.

Types are indexed ``0 .. num_types-1`` and resources ``0 .. num_resources-1``.
A network is fixed by a 0/1 incidence matrix ``A`` (rows are resources,
columns are call types), capacities ``c`` (``inf`` allowed), arrival rates
``nu`` and service rates ``mu``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InfeasibleAllocationError, ValidationError

DEFAULT_TOL = 1e-9


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    incidence: np.ndarray
    capacities: np.ndarray
    nu: np.ndarray
    mu: np.ndarray
    kappa: np.ndarray = field(init=False, repr=False)
    _hash: int = field(init=False, repr=False, compare=False)
    _rows: tuple = field(init=False, repr=False, compare=False)
    _max_rates: tuple = field(init=False, repr=False, compare=False)
    _nu: tuple = field(init=False, repr=False, compare=False)
    _mu: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        try:
            raw = np.asarray(self.incidence, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"incidence is not numeric: {exc}") from None
        if raw.ndim != 2 or raw.size == 0:
            raise ValidationError("incidence must be a non-empty |J| x |R| matrix")
        if not np.all((raw == 0) | (raw == 1)):
            raise ValidationError("incidence entries must be exactly 0 or 1")
        n_res, n_types = raw.shape
        caps = np.asarray(self.capacities, dtype=float)
        nu = np.asarray(self.nu, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        if caps.shape != (n_res,):
            raise ValidationError(f"capacities must have length {n_res}, got {caps.shape}")
        if nu.shape != (n_types,) or mu.shape != (n_types,):
            raise ValidationError(f"nu and mu must have length {n_types}")
        if np.any(np.isnan(caps)) or np.any(caps <= 0):
            raise ValidationError("capacities must be positive (or inf)")
        for name, v in (("nu", nu), ("mu", mu)):
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise ValidationError(f"{name} must be finite and strictly positive")
        finite = np.isfinite(caps)
        for r in range(n_types):
            if not np.any((raw[:, r] == 1) & finite):
                raise ValidationError(
                    f"type {r} uses no finite-capacity resource"
                )
        object.__setattr__(self, "incidence", _frozen(raw, np.int64))
        object.__setattr__(self, "capacities", _frozen(caps, float))
        object.__setattr__(self, "nu", _frozen(nu, float))
        object.__setattr__(self, "mu", _frozen(mu, float))
        object.__setattr__(self, "kappa", _frozen(nu / mu, float))
        # plain-Python views for the per-state hot paths
        rows = tuple(
            (float(caps[j]), tuple(int(r) for r in np.flatnonzero(raw[j])))
            for j in range(n_res) if finite[j]
        )
        object.__setattr__(self, "_rows", rows)
        object.__setattr__(self, "_nu", tuple(nu.tolist()))
        object.__setattr__(self, "_mu", tuple(mu.tolist()))
        object.__setattr__(self, "_max_rates", tuple(
            min(c for c, types in rows if r in types) for r in range(n_types)
        ))
        object.__setattr__(self, "_hash", hash(
            (self.incidence.tobytes(), self.capacities.tobytes(),
             self.nu.tobytes(), self.mu.tobytes())
        ))

    @property
    def num_types(self) -> int:
        return self.incidence.shape[1]

    @property
    def num_resources(self) -> int:
        return self.incidence.shape[0]

    def resources_of(self, r: int) -> np.ndarray:
        """Indices of the resources used by type ``r``."""
        return np.flatnonzero(self.incidence[:, r])

    def max_rate(self, r: int) -> float:
        """Largest bandwidth type ``r`` can get when alone in the network."""
        return self._max_rates[r]

    def with_rates(self, nu=None, mu=None) -> "NetworkSpec":
        return NetworkSpec(
            self.incidence,
            self.capacities,
            self.nu if nu is None else nu,
            self.mu if mu is None else mu,
        )

    def subnetwork(self, types: Sequence[int]) -> "NetworkSpec":
        """Network restricted to the listed call types (all resources kept)."""
        idx = list(types)
        return NetworkSpec(
            self.incidence[:, idx], self.capacities, self.nu[idx], self.mu[idx]
        )

    def __eq__(self, other):
        if not isinstance(other, NetworkSpec):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("incidence", "capacities", "nu", "mu")
        )

    def __hash__(self):
        return self._hash


class State(tuple):
    """Occupancy vector ``n``: number of calls in progress per type."""

    def __new__(cls, counts: Iterable[int]):
        vals = tuple(counts)
        for v in vals:
            if isinstance(v, bool) or int(v) != v:
                raise ValidationError(f"state entries must be integers, got {v!r}")
            if v < 0:
                raise ValidationError(f"state entries must be nonnegative, got {v!r}")
        return super().__new__(cls, (int(v) for v in vals))

    @classmethod
    def zeros(cls, size: int) -> "State":
        return cls((0,) * size)

    def plus(self, r: int) -> "State":
        return State(self[:r] + (self[r] + 1,) + self[r + 1:])

    def minus(self, r: int) -> "State":
        if self[r] == 0:
            raise ValidationError(f"cannot remove a call of type {r} from an empty class")
        return State(self[:r] + (self[r] - 1,) + self[r + 1:])

    @property
    def total(self) -> int:
        return sum(self)

    @property
    def n_min(self) -> int:
        return min(self)

    @property
    def nhat_max(self) -> int:
        """Largest count among types ``1..k`` (the single-resource types of a backbone)."""
        return max(self[1:]) if len(self) > 1 else 0


def _check_lengths(spec: NetworkSpec, b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape != (spec.num_types,):
        raise ValidationError(
            f"allocation must have length {spec.num_types}, got shape {b.shape}"
        )
    return b


def resource_load(spec: NetworkSpec, j: int, b) -> float:
    """Total bandwidth drawn from resource ``j``."""
    if not 0 <= j < spec.num_resources:
        raise IndexError(f"resource index {j} out of range")
    b = _check_lengths(spec, b)
    return float(spec.incidence[j] @ b)


def resource_loads(spec: NetworkSpec, b) -> np.ndarray:
    return spec.incidence @ _check_lengths(spec, b)


def is_feasible(spec: NetworkSpec, b, tol: float = DEFAULT_TOL) -> bool:
    loads = resource_loads(spec, b)
    return bool(np.all(loads <= spec.capacities + tol))


def saturated_resources(spec: NetworkSpec, b, tol: float = DEFAULT_TOL) -> set[int]:
    loads = resource_loads(spec, b)
    caps = spec.capacities
    return {
        j for j in range(spec.num_resources)
        if math.isfinite(caps[j]) and abs(loads[j] - caps[j]) <= tol
    }


def is_pareto_efficient(spec: NetworkSpec, n, b, tol: float = DEFAULT_TOL) -> bool:
    """Every occupied type touches a saturated resource.

    Raises :class:`InfeasibleAllocationError` rather than returning ``False``
    when ``b`` breaks a capacity constraint.
    """
    b = _check_lengths(spec, b)
    if not is_feasible(spec, b, tol):
        raise InfeasibleAllocationError(f"allocation {b.tolist()} is infeasible")
    sat = sorted(saturated_resources(spec, b, tol))
    for r, nr in enumerate(n):
        if nr > 0 and not np.any(spec.incidence[sat, r]):
            return False
    return True


def capacity_condition(spec: NetworkSpec) -> tuple[bool, np.ndarray]:
    """Strict load condition ``sum_r a_jr kappa_r < c_j`` and per-resource slack."""
    slack = spec.capacities - spec.incidence @ spec.kappa
    return bool(np.all(slack > 0)), slack
