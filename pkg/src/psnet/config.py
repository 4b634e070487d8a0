"""JSON config documents: validation, dotted overrides and object construction.

A document has a ``network`` section (``incidence``, ``capacities`` with the
string ``"inf"`` for unbounded resources, ``nu``, ``mu``) and optional
``control``, ``sim``, ``scan``, ``classify``, ``threshold`` and ``solve``
sections.  Validation stops at the first violated rule and names its path.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from pathlib import Path

from .classifier import ClassifyConfig
from .controls import (
    CompletePartitioning,
    Control,
    CustomTable,
    StaticPriority,
    SwitchingMax,
    ThresholdPriority,
    dominate_with_pareto,
)
from .errors import PsnetError, ValidationError
from .fairshare import AlphaFair
from .lyapunov import (
    DriftConfig,
    ExceptionSet,
    LinearLyapunov,
    SmoothedBackboneLyapunov,
    SmoothedFirstLyapunov,
    SmoothedSumLyapunov,
)
from .network import NetworkSpec
from .sim import SimConfig

INF = "inf"
SECTIONS = ("name", "variant", "network", "control", "sim", "scan", "classify", "threshold", "solve", "manifest")


def _err(path: str, msg: str):
    raise ValidationError(f"{path}: {msg}")


def _number(x, path, allow_inf=False) -> float:
    if allow_inf and isinstance(x, str) and x.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        kind = 'a number or "inf"' if allow_inf else "a number"
        _err(path, f"expected {kind}, got {x!r}")
    x = float(x)
    if not allow_inf and not math.isfinite(x):
        _err(path, "must be finite")
    return x


def _int_list(x, path):
    if not isinstance(x, list) or any(isinstance(v, bool) or not isinstance(v, int) for v in x):
        _err(path, f"expected a list of integers, got {x!r}")
    return list(x)


def load(source) -> dict:
    """Read a config from a path, JSON text or dict (deep-copied)."""
    if isinstance(source, dict):
        doc = copy.deepcopy(source)
    else:
        p = Path(source)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ValidationError(f"cannot read config {source}: {exc}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{source}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object")
    for key in doc:
        if key not in SECTIONS:
            _err(key, "unknown section")
    if "network" not in doc:
        _err("network", "section is required")
    return doc


def canonical(doc: dict) -> str:
    body = {k: v for k, v in doc.items() if k != "manifest"}
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def sha256(doc: dict) -> str:
    return hashlib.sha256(canonical(doc).encode()).hexdigest()


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_path(doc: dict, dotted: str, value) -> None:
    """Set ``a.b[2].c`` style leaf paths; intermediate objects are created."""
    parts = [p for p in re.split(r"\.|\[(\d+)\]", dotted) if p]
    node = doc
    for i, part in enumerate(parts):
        last = i == len(parts) - 1
        key = int(part) if part.isdigit() else part
        if isinstance(node, list):
            if not isinstance(key, int) or key >= len(node):
                _err(dotted, "list index out of range")
        elif isinstance(node, dict):
            if isinstance(key, int):
                _err(dotted, "cannot index an object by position")
            if not last and key not in node:
                node[key] = {}
        else:
            _err(dotted, "path runs through a leaf value")
        if last:
            node[key] = value
        else:
            node = node[key]


def get_path(doc: dict, dotted: str):
    node = doc
    for part in (p for p in re.split(r"\.|\[(\d+)\]", dotted) if p):
        key = int(part) if part.isdigit() else part
        try:
            node = node[key]
        except (KeyError, IndexError, TypeError):
            _err(dotted, "path not found")
    return node


def apply_overrides(doc: dict, overrides) -> dict:
    """``overrides`` is a list of ``path=value`` strings; values are parsed as JSON when possible."""
    for item in overrides or ():
        if "=" not in item:
            raise ValidationError(f"override {item!r} must look like path=value")
        path, text = item.split("=", 1)
        set_path(doc, path.strip(), parse_value(text.strip()))
    return doc


# ---------------------------------------------------------------- builders

def build_network(doc: dict) -> NetworkSpec:
    net = doc.get("network")
    if not isinstance(net, dict):
        _err("network", "must be an object")
    for key in ("incidence", "capacities", "nu", "mu"):
        if key not in net:
            _err(f"network.{key}", "is required")
    inc = net["incidence"]
    if not isinstance(inc, list) or not inc or not all(isinstance(row, list) for row in inc):
        _err("network.incidence", "must be a non-empty array of arrays")
    width = len(inc[0])
    for j, row in enumerate(inc):
        if len(row) != width:
            _err(f"network.incidence[{j}]", f"has {len(row)} entries, expected {width}")
        for r, v in enumerate(row):
            if isinstance(v, bool) or v not in (0, 1):
                _err(f"network.incidence[{j}][{r}]", f"must be 0 or 1, got {v!r}")
    caps = net["capacities"]
    if not isinstance(caps, list):
        _err("network.capacities", "must be an array")
    caps = [_number(c, f"network.capacities[{j}]", allow_inf=True) for j, c in enumerate(caps)]
    nu = [_number(v, f"network.nu[{r}]") for r, v in enumerate(_as_list(net["nu"], "network.nu"))]
    mu = [_number(v, f"network.mu[{r}]") for r, v in enumerate(_as_list(net["mu"], "network.mu"))]
    try:
        return NetworkSpec(inc, caps, nu, mu)
    except ValidationError as exc:
        raise ValidationError(f"network: {exc}") from None


def _as_list(x, path):
    if not isinstance(x, list):
        _err(path, "must be an array")
    return x


def build_control(section: dict, spec: NetworkSpec, path: str = "control") -> Control:
    if not isinstance(section, dict) or "variant" not in section:
        _err(path, "must be an object with a 'variant'")
    v = section["variant"]
    R = spec.num_types
    try:
        if v == "complete_partitioning":
            return CompletePartitioning(tuple(_vec(section, "bhat", R, path)))
        if v in ("dominate_pareto", "reserved_greedy"):
            return dominate_with_pareto(spec, _vec(section, "bhat", R, path))
        if v == "static_priority":
            if "levels" in section:
                levels = [_int_list(lvl, f"{path}.levels") for lvl in section["levels"]]
            elif "order" in section:
                levels = [[r] for r in _int_list(section["order"], f"{path}.order")]
            else:
                _err(path, "static_priority needs 'levels' or 'order'")
            return StaticPriority(tuple(tuple(l) for l in levels), section.get("sharing", "equal"))
        if v == "switching_max":
            order = section.get("order")
            return SwitchingMax(None if order is None else tuple(_int_list(order, f"{path}.order")))
        if v == "threshold_priority":
            base = build_control(section.get("base", {}), spec, f"{path}.base")
            a = section.get("a")
            if isinstance(a, bool) or not isinstance(a, int):
                _err(f"{path}.a", "must be an integer")
            return ThresholdPriority(base, str(section.get("family", "")), a)
        if v == "alpha_fair":
            alpha = _number(section.get("alpha", 1.0), f"{path}.alpha", allow_inf=True)
            weights = section.get("weights", [1.0] * R)
            w = tuple(_number(x, f"{path}.weights[{i}]") for i, x in enumerate(_as_list(weights, f"{path}.weights")))
            if len(w) != R:
                _err(f"{path}.weights", f"needs {R} entries")
            return AlphaFair(alpha, w, float(section.get("tol", 1e-8)))
        if v == "custom_table":
            rows = _as_list(section.get("table"), f"{path}.table")
            table = {}
            for i, row in enumerate(rows):
                if not (isinstance(row, list) and len(row) == 2):
                    _err(f"{path}.table[{i}]", "must be [state, allocation]")
                table[tuple(_int_list(row[0], f"{path}.table[{i}][0]"))] = tuple(
                    _number(x, f"{path}.table[{i}][1]") for x in row[1])
            return CustomTable(table, tuple(_int_list(section.get("box"), f"{path}.box")),
                               section.get("tail", "error"))
    except ValidationError as exc:
        if str(exc).startswith(path):
            raise
        raise ValidationError(f"{path}: {exc}") from None
    _err(f"{path}.variant", f"unknown control variant {v!r}")


def _vec(section, key, k, path):
    if key not in section:
        _err(f"{path}.{key}", "is required")
    vals = [_number(x, f"{path}.{key}[{i}]") for i, x in enumerate(_as_list(section[key], f"{path}.{key}"))]
    if len(vals) != k:
        _err(f"{path}.{key}", f"needs {k} entries, got {len(vals)}")
    return vals


def build_sim(doc: dict, spec: NetworkSpec, seed=None, events=None, time=None, warmup=None) -> SimConfig:
    sec = dict(doc.get("sim") or {})
    if events is not None:
        sec["events"], sec["time"] = int(events), None
    if time is not None:
        sec["time"], sec["events"] = float(time), None
    if sec.get("events") is None and sec.get("time") is None:
        sec["events"] = 1_000_000
    init = sec.get("initial_state", [0] * spec.num_types)
    return SimConfig(
        initial_state=tuple(_int_list(init, "sim.initial_state")),
        max_events=None if sec.get("events") is None else int(sec["events"]),
        max_time=None if sec.get("time") is None else float(sec["time"]),
        seed=int(seed if seed is not None else sec.get("seed", 0)),
        warmup_fraction=float(warmup if warmup is not None else sec.get("warmup", 0.2)),
        batches=int(sec.get("batches", 10)),
        checkpoints=int(sec.get("checkpoints", 200)),
        record_every=sec.get("record_every"),
    )


def build_lyapunov(section: dict, a_override=None, path="scan.lyapunov"):
    if not isinstance(section, dict) or "variant" not in section:
        _err(path, "must be an object with a 'variant'")
    v = section["variant"]
    if v == "linear":
        return LinearLyapunov(tuple(_number(x, f"{path}.coefficients") for x in
                                    _as_list(section.get("coefficients"), f"{path}.coefficients")))
    a = a_override if a_override is not None else section.get("a")
    if isinstance(a, bool) or not isinstance(a, int):
        _err(f"{path}.a", "must be an integer")
    if v == "smoothed_first":
        return SmoothedFirstLyapunov(a)
    if v == "smoothed_sum":
        return SmoothedSumLyapunov(a)
    if v == "smoothed_backbone":
        return SmoothedBackboneLyapunov(a)
    _err(f"{path}.variant", f"unknown Lyapunov variant {v!r}")


_SYMBOLIC = re.compile(r"^\s*a\s*(?:([+-])\s*(\d+))?\s*$")


def _bound(x, a, path):
    if isinstance(x, bool):
        _err(path, "must be an integer or an 'a+k'/'a-k' expression")
    if isinstance(x, int):
        return x
    if isinstance(x, str):
        m = _SYMBOLIC.match(x)
        if m:
            if a is None:
                _err(path, "symbolic bound needs a threshold a")
            k = int(m.group(2) or 0)
            return a + k if m.group(1) != "-" else a - k
    _err(path, f"bad bound {x!r}")


def build_exception(section, a=None, path="scan.exception") -> ExceptionSet:
    if section is None:
        return ExceptionSet()
    if not isinstance(section, dict):
        _err(path, "must be an object with 'states' and/or 'boxes'")
    states = [tuple(_int_list(s, f"{path}.states[{i}]")) for i, s in enumerate(section.get("states", []))]
    boxes = []
    for i, pair in enumerate(section.get("boxes", [])):
        if not (isinstance(pair, list) and len(pair) == 2):
            _err(f"{path}.boxes[{i}]", "must be [lower, upper]")
        lo = [_bound(x, a, f"{path}.boxes[{i}][0]") for x in pair[0]]
        hi = [_bound(x, a, f"{path}.boxes[{i}][1]") for x in pair[1]]
        boxes.append((lo, hi))
    return ExceptionSet(frozenset(states), tuple(boxes))


def build_drift(doc: dict, epsilon=None) -> DriftConfig:
    sec = doc.get("scan") or {}
    ex = sec.get("exception")
    g = lambda k: None if sec.get(k) is None else _number(sec[k], f"scan.{k}")
    eps = epsilon if epsilon is not None else g("epsilon")
    return DriftConfig(eps, g("delta"), g("delta_prime"),
                       (lambda a: build_exception(ex, a)) if ex is not None else None)


def build_classify(doc: dict, seed=None, events=None, z=None) -> ClassifyConfig:
    sec = doc.get("classify") or {}
    box = sec.get("box")
    verify = sec.get("verify_box")
    return ClassifyConfig(
        method=sec.get("method", "simulation"),
        events=int(events if events is not None else sec.get("events", 2_000_000)),
        seed=int(seed if seed is not None else sec.get("seed", 0)),
        warmup_fraction=float(sec.get("warmup", 0.2)),
        batches=int(sec.get("batches", 10)),
        box=None if box is None else tuple(_int_list(box, "classify.box")),
        max_states=int(sec.get("max_states", 100_000)),
        z=float(z if z is not None else sec.get("z", 3.0)),
        N_inf=int(sec.get("N_inf", 64)),
        growth=int(sec.get("growth", 4)),
        tol=float(sec.get("tol", 1e-9)),
        max_sweeps=int(sec.get("max_sweeps", 8)),
        verify_box=None if verify is None else tuple(_int_list(verify, "classify.verify_box")),
    )


def family_from(doc: dict, target: str, index):
    """``theta -> NetworkSpec`` replacing ``target`` (all entries, or one index) by ``theta``."""
    def make(theta):
        d = copy.deepcopy(doc)
        cur = get_path(d, target)
        if isinstance(cur, list):
            if index is None:
                val = [theta] * len(cur)
            else:
                val = list(cur)
                val[int(index)] = theta
        else:
            val = theta
        set_path(d, target, val)
        return build_network(d)
    return make


__all__ = [
    "PsnetError", "load", "canonical", "sha256", "apply_overrides", "set_path", "get_path",
    "build_network", "build_control", "build_sim", "build_lyapunov", "build_exception",
    "build_drift", "build_classify", "family_from",
]
