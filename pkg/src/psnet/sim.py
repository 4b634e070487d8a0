"""Event-driven simulation of the occupancy Markov chain and its fluid analogue.

At state ``n`` type ``r`` arrivals occur at rate ``nu_r`` and departures at
rate ``mu_r b_r(n)``.  The holding time is exponential with the total rate
and the next event is drawn in proportion to its rate (direct method; all
clocks are effectively redrawn at every jump, which is exact by
memorylessness).  Statistics are accumulated in continuous time after a
warm-up prefix and split into batches for batch-means standard errors.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import accumulate

import numpy as np

from .controls import Control, evaluate
from .errors import InsufficientDataError, ValidationError
from .network import NetworkSpec

_CHUNK = 1 << 16


def make_rng(seed: int, replication: int = 0) -> np.random.Generator:
    """Counter-based generator; replication ``i`` uses ``seed ^ i``."""
    key = (int(seed) ^ int(replication)) & 0xFFFFFFFFFFFFFFFF
    return np.random.Generator(np.random.Philox(key))


@dataclass(frozen=True)
class SimConfig:
    initial_state: tuple[int, ...]
    max_events: int | None = None
    max_time: float | None = None
    seed: int = 0
    warmup_fraction: float = 0.2
    batches: int = 10
    checkpoints: int = 200
    record_every: int | None = None
    state_cap: int = 1_000_000

    def __post_init__(self):
        object.__setattr__(self, "initial_state", tuple(int(x) for x in self.initial_state))
        if any(x < 0 for x in self.initial_state):
            raise ValidationError("initial state must be nonnegative")
        if (self.max_events is None) == (self.max_time is None):
            raise ValidationError("give exactly one of max_events / max_time")
        if self.max_events is not None and self.max_events < 0:
            raise ValidationError("max_events must be >= 0")
        if self.max_time is not None and not self.max_time >= 0:
            raise ValidationError("max_time must be >= 0")
        if not 0 <= self.warmup_fraction < 1:
            raise ValidationError("warmup_fraction must be in [0, 1)")
        if self.batches < 1 or self.checkpoints < 1:
            raise ValidationError("batches and checkpoints must be positive")
        if self.record_every is not None and self.record_every < 1:
            raise ValidationError("record_every must be positive")


@dataclass
class TrajectoryStats:
    """Continuous-time statistics of one run (post warm-up part)."""

    spec: NetworkSpec = field(repr=False)
    initial_state: tuple[int, ...]
    end_state: tuple[int, ...]
    events: int
    elapsed_time: float
    warmup_time: float
    batch_times: np.ndarray
    batch_service: np.ndarray
    batch_occupancy: np.ndarray
    batch_maps: list = field(repr=False)
    map_truncated: bool
    arrivals: np.ndarray
    departures: np.ndarray
    checkpoint_times: np.ndarray = field(repr=False)
    checkpoint_states: np.ndarray = field(repr=False)
    allocations: dict = field(repr=False)
    trajectory: list | None = field(default=None, repr=False)

    @property
    def total_time(self) -> float:
        return float(self.batch_times.sum())

    @property
    def num_batches(self) -> int:
        return len(self.batch_times)

    def _mean(self, integrals) -> np.ndarray:
        T = self.total_time
        if T <= 0:
            return np.zeros(integrals.shape[1])
        return integrals.sum(axis=0) / T

    def _se(self, integrals) -> np.ndarray:
        ok = self.batch_times > 0
        if ok.sum() < 2:
            return np.full(integrals.shape[1], np.nan)
        means = integrals[ok] / self.batch_times[ok][:, None]
        return means.std(axis=0, ddof=1) / math.sqrt(ok.sum())

    @property
    def service_mean(self) -> np.ndarray:
        """Time-average bandwidth ``(1/t) int b_r(n(u)) du`` per type."""
        return self._mean(self.batch_service)

    @property
    def service_se(self) -> np.ndarray:
        return self._se(self.batch_service)

    @property
    def occupancy_mean(self) -> np.ndarray:
        return self._mean(self.batch_occupancy)

    @property
    def occupancy_se(self) -> np.ndarray:
        return self._se(self.batch_occupancy)

    def state_distribution(self) -> dict[tuple[int, ...], float]:
        """Fraction of (post warm-up) time spent in each visited state."""
        T = self.total_time
        if T <= 0:
            return {}
        out: dict = {}
        for m in self.batch_maps:
            for s, t in m.items():
                out[s] = out.get(s, 0.0) + t
        return {s: t / T for s, t in out.items()}

    def batch_estimate(self, fn) -> tuple[float, float]:
        """Time average of ``fn(state)`` with its batch-means standard error."""
        if self.map_truncated:
            raise InsufficientDataError("state map was truncated; state functionals unavailable")
        vals = []
        total = 0.0
        for T, m in zip(self.batch_times, self.batch_maps):
            s = sum(t * fn(st) for st, t in m.items())
            total += s
            if T > 0:
                vals.append(s / T)
        if self.total_time <= 0:
            return 0.0, math.nan
        mean = total / self.total_time
        se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) >= 2 else math.nan
        return mean, se

    def window_slopes(self, windows: int):
        """Per-window growth rate of total occupancy and its sub-interval standard error."""
        t = self.checkpoint_times
        tot = self.checkpoint_states.sum(axis=1) if len(t) else np.zeros(0)
        n_int = len(t) - 1
        if windows < 1 or n_int < 2 * windows:
            raise InsufficientDataError(
                f"need at least {2 * windows} checkpoint intervals, have {max(n_int, 0)}"
            )
        edges = np.linspace(0, n_int, windows + 1).round().astype(int)
        slopes, ses = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            span = t[hi] - t[lo]
            slopes.append((tot[hi] - tot[lo]) / span if span > 0 else 0.0)
            dt = np.diff(t[lo:hi + 1])
            dn = np.diff(tot[lo:hi + 1])
            good = dt > 0
            sub = dn[good] / dt[good]
            ses.append(float(sub.std(ddof=1) / math.sqrt(len(sub))) if len(sub) >= 2 else math.inf)
        return np.array(slopes), np.array(ses)

    def summary(self) -> dict:
        return {
            "initial_state": list(self.initial_state),
            "end_state": list(self.end_state),
            "events": self.events,
            "elapsed_time": self.elapsed_time,
            "total_time": self.total_time,
            "service_mean": self.service_mean.tolist(),
            "service_se": _nan_to_none(self.service_se),
            "occupancy_mean": self.occupancy_mean.tolist(),
            "occupancy_se": _nan_to_none(self.occupancy_se),
            "kappa": self.spec.kappa.tolist(),
            "arrivals": self.arrivals.tolist(),
            "departures": self.departures.tolist(),
            "distinct_states": len(self.state_distribution()),
            "map_truncated": self.map_truncated,
        }


def _nan_to_none(arr):
    return [None if not math.isfinite(x) else float(x) for x in arr]


def simulate(spec: NetworkSpec, control: Control, cfg: SimConfig) -> TrajectoryStats:
    R = spec.num_types
    if len(cfg.initial_state) != R:
        raise ValidationError(f"initial state must have length {R}")
    nu = spec.nu.tolist()
    mu = spec.mu.tolist()
    rng = make_rng(cfg.seed)
    B = cfg.batches
    cache: dict = {}

    def rates_at(state):
        b = evaluate(control, spec, state)
        bt = tuple(float(x) for x in b)
        cum = list(accumulate(nu + [mu[r] * bt[r] for r in range(R)]))
        # last event index with positive rate guards against rounding at the top
        last = max(k for k in range(2 * R) if (cum[k] - (cum[k - 1] if k else 0.0)) > 0)
        rec = (bt, cum, cum[-1], last)
        cache[state] = rec
        return rec

    maps = [dict() for _ in range(B)]
    overflow_service = np.zeros((B, R))
    overflow_occ = np.zeros((B, R))
    overflow_time = [0.0] * B
    seen: set = set()
    truncated = False
    arrivals = [0] * R
    departures = [0] * R
    ck_t: list = []
    ck_s: list = []
    traj = [] if cfg.record_every else None

    exps = rng.standard_exponential(_CHUNK)
    us = rng.random(_CHUNK)
    pos = 0

    state = tuple(cfg.initial_state)
    t = 0.0
    events = 0

    def add(batch, st, dt):
        nonlocal truncated
        m = maps[batch]
        if st in m:
            m[st] += dt
        elif st in seen or len(seen) < cfg.state_cap:
            seen.add(st)
            m[st] = dt
        else:
            truncated = True
            overflow_time[batch] += dt
            overflow_service[batch] += np.multiply(cache[st][0], dt)
            overflow_occ[batch] += np.multiply(st, dt)

    if cfg.max_events is not None:
        total_events = cfg.max_events
        warm = int(math.floor(cfg.warmup_fraction * total_events))
        post = total_events - warm
        bsize = max(1, math.ceil(post / B))
        ck_every = max(1, post // cfg.checkpoints)
        warm_time = 0.0
        for ev in range(total_events):
            rec = cache.get(state) or rates_at(state)
            if pos == _CHUNK:
                exps = rng.standard_exponential(_CHUNK)
                us = rng.random(_CHUNK)
                pos = 0
            dt = exps[pos] / rec[2]
            x = us[pos] * rec[2]
            pos += 1
            if ev >= warm:
                k = ev - warm
                if k % ck_every == 0:
                    ck_t.append(t)
                    ck_s.append(state)
                add(k // bsize, state, dt)
            elif ev == warm - 1:
                warm_time = t + dt
            if traj is not None and ev % cfg.record_every == 0:
                traj.append((t, state, rec[0]))
            t += dt
            k = bisect_right(rec[1], x)
            if k > rec[3]:
                k = rec[3]
            if k < R:
                arrivals[k] += 1
                state = state[:k] + (state[k] + 1,) + state[k + 1:]
            else:
                k -= R
                departures[k] += 1
                state = state[:k] + (state[k] - 1,) + state[k + 1:]
            events += 1
        if warm == 0:
            warm_time = 0.0
    else:
        T_end = float(cfg.max_time)
        warm_time = cfg.warmup_fraction * T_end
        edges = [warm_time + (T_end - warm_time) * i / B for i in range(B + 1)]
        ck_dt = (T_end - warm_time) / cfg.checkpoints
        next_ck = warm_time
        while True:
            rec = cache.get(state) or rates_at(state)
            if pos == _CHUNK:
                exps = rng.standard_exponential(_CHUNK)
                us = rng.random(_CHUNK)
                pos = 0
            dt = exps[pos] / rec[2]
            x = us[pos] * rec[2]
            pos += 1
            t_next = min(t + dt, T_end)
            while next_ck < t_next and next_ck < T_end:
                ck_t.append(next_ck)
                ck_s.append(state)
                next_ck += ck_dt
            if t_next > warm_time:
                lo = max(t, warm_time)
                b = min(max(int((lo - warm_time) / (T_end - warm_time) * B), 0), B - 1)
                while lo < t_next:
                    hi = min(t_next, edges[b + 1]) if b < B - 1 else t_next
                    if hi > lo:
                        add(b, state, hi - lo)
                    lo = hi
                    b += 1
            if traj is not None and events % cfg.record_every == 0:
                traj.append((t, state, rec[0]))
            if t + dt >= T_end:
                t = T_end
                break
            t += dt
            k = bisect_right(rec[1], x)
            if k > rec[3]:
                k = rec[3]
            if k < R:
                arrivals[k] += 1
                state = state[:k] + (state[k] + 1,) + state[k + 1:]
            else:
                k -= R
                departures[k] += 1
                state = state[:k] + (state[k] - 1,) + state[k + 1:]
            events += 1

    if ck_t or t > warm_time:
        ck_t.append(t)
        ck_s.append(state)

    batch_times = np.zeros(B)
    batch_service = np.zeros((B, R))
    batch_occ = np.zeros((B, R))
    for i, m in enumerate(maps):
        if m:
            sts = list(m)
            w = np.fromiter(m.values(), float, len(m))
            batch_times[i] = w.sum()
            batch_service[i] = w @ np.array([cache[s][0] for s in sts])
            batch_occ[i] = w @ np.array(sts, dtype=float)
    batch_times += np.array(overflow_time)
    batch_service += overflow_service
    batch_occ += overflow_occ

    return TrajectoryStats(
        spec=spec,
        initial_state=tuple(cfg.initial_state),
        end_state=state,
        events=events,
        elapsed_time=t,
        warmup_time=warm_time,
        batch_times=batch_times,
        batch_service=batch_service,
        batch_occupancy=batch_occ,
        batch_maps=maps,
        map_truncated=truncated,
        arrivals=np.array(arrivals),
        departures=np.array(departures),
        checkpoint_times=np.array(ck_t, dtype=float),
        checkpoint_states=np.array(ck_s, dtype=float).reshape(len(ck_s), R),
        allocations={s: rec[0] for s, rec in cache.items()},
        trajectory=traj,
    )


def _replicate_one(args):
    spec, control, cfg, i = args
    return simulate(spec, control, _with_seed(cfg, cfg.seed ^ i))


def _with_seed(cfg: SimConfig, seed: int) -> SimConfig:
    from dataclasses import replace

    return replace(cfg, seed=seed)


def replicate(spec, control, cfg: SimConfig, replications: int, jobs: int = 1) -> list[TrajectoryStats]:
    """Independent runs with seeds ``cfg.seed ^ i``; results do not depend on ``jobs``."""
    work = [(spec, control, cfg, i) for i in range(replications)]
    if jobs <= 1 or replications <= 1:
        return [_replicate_one(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_replicate_one, work))


@dataclass
class ServiceBoundReport:
    service_mean: np.ndarray
    bound: np.ndarray
    ok: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(self.ok.all())


def check_lemma1(stats: TrajectoryStats, spec: NetworkSpec, margin=None, z: float = 3.0) -> ServiceBoundReport:
    """Finite-horizon check that time-average service stays below ``kappa_r + margin``.

    ``margin=None`` uses ``z`` batch-means standard errors per type.
    """
    kappa = spec.kappa
    mean = stats.service_mean
    if stats.total_time <= 0:
        return ServiceBoundReport(mean, kappa.copy(), np.ones(len(kappa), bool))
    if margin is None:
        se = np.nan_to_num(stats.service_se, nan=0.0)
        margin = z * se
    bound = kappa + margin
    return ServiceBoundReport(mean, bound, mean <= bound)


@dataclass
class GrowthReport:
    verdict: str
    total_slope: float
    per_type_slope: np.ndarray
    window_slopes: np.ndarray
    window_se: np.ndarray

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "total_slope": self.total_slope,
            "per_type_slope": self.per_type_slope.tolist(),
            "window_slopes": self.window_slopes.tolist(),
        }


def detect_growth(stats: TrajectoryStats, windows: int = 10, z: float = 4.0, quorum: float = 0.75) -> GrowthReport:
    """Classify the post warm-up occupancy path as growing, shrinking or bounded.

    Growing when the window slope exceeds ``z`` standard errors in at least
    ``quorum`` of the windows; shrinking symmetrically; bounded otherwise.
    """
    slopes, ses = stats.window_slopes(windows)
    t = stats.checkpoint_times
    span = t[-1] - t[0]
    per_type = (stats.checkpoint_states[-1] - stats.checkpoint_states[0]) / span
    up = np.mean(slopes > z * ses)
    down = np.mean(slopes < -z * ses)
    if up >= quorum:
        verdict = "growing"
    elif down >= quorum:
        verdict = "shrinking"
    else:
        verdict = "bounded"
    return GrowthReport(verdict, float(per_type.sum()), per_type, slopes, ses)


@dataclass
class FluidTrajectory:
    times: np.ndarray
    states: np.ndarray
    drain_time: float | None
    drain_tol: float

    @property
    def total(self) -> np.ndarray:
        return self.states.sum(axis=1)


def fluid_integrate(spec: NetworkSpec, control: Control, x0, horizon: float, dt: float) -> FluidTrajectory:
    """Explicit Euler for ``dx_r/dt = kappa_r - b_r(x)``, clamped at zero.

    The drain time is the first time total work is within one Euler step of
    zero (``dt * sum(kappa)``); exact zero is not reachable once arrivals keep
    refilling the empty state between steps.
    """
    if not dt > 0:
        raise ValidationError("dt must be positive")
    x = np.array(x0, dtype=float)
    if x.shape != (spec.num_types,) or np.any(x < 0):
        raise ValidationError("x0 must be a nonnegative vector of length |R|")
    steps = int(math.ceil(horizon / dt))
    kappa = spec.kappa
    times = np.arange(steps + 1) * dt
    states = np.empty((steps + 1, spec.num_types))
    states[0] = x
    drain_tol = dt * float(kappa.sum())
    drain = 0.0 if x.sum() <= drain_tol else None
    for i in range(1, steps + 1):
        b = evaluate(control, spec, x)
        x = np.maximum(x + dt * (kappa - b), 0.0)
        states[i] = x
        if drain is None and x.sum() <= drain_tol:
            drain = float(times[i])
    return FluidTrajectory(times, states, drain, drain_tol)


def uniformized_coupling(spec: NetworkSpec, control: Control, starts, steps: int, seed: int = 0) -> np.ndarray:
    """Run several copies of the jump chain on one shared stream of uniforms.

    The chain is uniformized at ``sum(nu) + sum(mu_r * max_rate(r))``; each
    uniform selects an arrival slot or the lower part of a departure slot of
    width ``mu_r b_r(n)``, so a copy with more calls (and a control that gives
    it at least as much service) departs whenever a smaller copy does.
    Returns an array of shape ``(len(starts), steps + 1, |R|)``.
    """
    R = spec.num_types
    nu = spec._nu
    mu = spec._mu
    caps = [mu[r] * spec.max_rate(r) for r in range(R)]
    offsets = list(accumulate([0.0] + list(nu) + caps))
    lam = offsets[-1]
    us = make_rng(seed).random(steps) * lam
    out = np.empty((len(starts), steps + 1, R), dtype=np.int64)
    for k, start in enumerate(starts):
        state = tuple(int(x) for x in start)
        cache: dict = {}
        out[k, 0] = state
        for i in range(steps):
            x = us[i]
            slot = bisect_right(offsets, x) - 1
            if slot < R:
                state = state[:slot] + (state[slot] + 1,) + state[slot + 1:]
            else:
                r = slot - R
                b = cache.get(state)
                if b is None:
                    b = cache[state] = evaluate(control, spec, state).tolist()
                if x - offsets[slot] < mu[r] * b[r]:
                    state = state[:r] + (state[r] - 1,) + state[r + 1:]
            out[k, i + 1] = state
    return out
