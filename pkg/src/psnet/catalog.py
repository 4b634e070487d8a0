"""Built-in example networks as complete config documents.

Type and resource indices are 0-based throughout.

* ``ex1``: two types; type 0 uses resource 0, type 1 uses resources 0 and 1.
  Static priority to type 0 is stable iff ``kappa_1 < c_1 (1 - kappa_0 / c_0)``.
* ``ex2``: triangle; three types, each using two of three resources.
  Serving one type at full rate has linear drift ``3 nu - c``.
* ``ex3``: the ``ex1`` topology with a boundary boost of type 1 while ``n_0 < a``.
* ``ex4(k)``: a resource shared by all ``k`` types plus one dedicated resource each.
* ``ex5(k)``: backbone; type 0 uses resources ``0..k-1``, type ``r`` uses resource ``r-1``.
* ``ex6``: triangle with types 0 and 1 jointly prioritised over type 2
  (``variant`` switching / proportional / equal).
"""
from __future__ import annotations

import copy

from .errors import ValidationError

BUILTINS = ("ex1", "ex2", "ex3", "ex4", "ex5", "ex6")
TRIANGLE = [[0, 1, 1], [1, 0, 1], [1, 1, 0]]
EX6_START_REASON = (
    "types 0 and 1 always get capacity c together while either is present, so "
    "n0 + n1 is an M/M/1 queue with load 2 nu / c"
)
EX6_DECLARED = "b_0 and b_1 do not depend on n_2"


def _vec(x, k, name):
    if isinstance(x, (int, float)):
        return [float(x)] * k
    x = [float(v) for v in x]
    if len(x) != k:
        raise ValidationError(f"{name} needs {k} values, got {len(x)}")
    return x


def ex1(nu=(0.5, 0.3), mu=(1.0, 1.0), c=(1.0, 1.0)) -> dict:
    nu, mu, c = _vec(nu, 2, "nu"), _vec(mu, 2, "mu"), _vec(c, 2, "c")
    return {
        "name": "ex1",
        "network": {"incidence": [[1, 1], [0, 1]], "capacities": c, "nu": nu, "mu": mu},
        "control": {"variant": "static_priority", "levels": [[0], [1]], "sharing": "equal"},
        "sim": {"initial_state": [0, 0], "events": 2_000_000, "seed": 0, "warmup": 0.2, "batches": 10},
        "classify": {"order": [0, 1], "method": "simulation", "events": 2_000_000, "z": 3.0,
                     "box": [60, 60]},
        "threshold": {"target": "network.nu", "index": 1, "bracket": [0.2, 0.8], "tol": 0.01},
        "scan": {"mode": "foster", "lyapunov": {"variant": "linear", "coefficients": [1, 1]},
                 "box": [50, 50]},
    }


def ex2(nu=0.4, mu=1.0, c=1.0) -> dict:
    nu, mu, c = _vec(nu, 3, "nu"), _vec(mu, 3, "mu"), _vec(c, 3, "c")
    return {
        "name": "ex2",
        "network": {"incidence": copy.deepcopy(TRIANGLE), "capacities": c, "nu": nu, "mu": mu},
        "control": {"variant": "switching_max"},
        "sim": {"initial_state": [0, 0, 0], "events": 1_000_000, "seed": 0, "warmup": 0.2, "batches": 10},
        "scan": {"mode": "instability", "lyapunov": {"variant": "linear", "coefficients": [1, 1, 1]},
                 "box": [12, 12, 12], "epsilon": 0.05},
    }


def ex3(nu=(0.5, 0.3), mu=(1.0, 1.0), c=(1.0, 1.0), a=5) -> dict:
    cfg = ex1(nu, mu, c)
    cfg["name"] = "ex3"
    cfg["control"] = {
        "variant": "threshold_priority", "family": "two_type", "a": int(a),
        "base": {"variant": "static_priority", "levels": [[0], [1]]},
    }
    cfg["scan"] = {
        "mode": "search", "lyapunov": {"variant": "smoothed_first", "a": int(a)},
        "box": [200, 200], "delta": 0.7, "a_max": 50,
        "exception": {"boxes": [[[0, 0], ["a-1", 0]]]},
    }
    cfg.pop("threshold")
    cfg.pop("classify")
    return cfg


def ex4(k=3, nu=0.25, mu=1.0, c0=1.0, c=0.5, alpha=1.0) -> dict:
    k = int(k)
    if k < 1:
        raise ValidationError("k must be >= 1")
    inc = [[1] * k] + [[1 if r == j else 0 for r in range(k)] for j in range(k)]
    return {
        "name": "ex4",
        "network": {"incidence": inc, "capacities": [float(c0)] + _vec(c, k, "c"),
                    "nu": _vec(nu, k, "nu"), "mu": _vec(mu, k, "mu")},
        "control": {"variant": "alpha_fair", "alpha": alpha, "weights": [1.0] * k},
        "sim": {"initial_state": [0] * k, "events": 1_000_000, "seed": 0, "warmup": 0.2, "batches": 10},
        # the drift bound covers the boundary-modified control, not plain alpha-fair
        "scan": {"mode": "search", "lyapunov": {"variant": "smoothed_sum", "a": 1},
                 "box": [30] * k, "a_max": 15,
                 "exception": {"boxes": [[[0] * k, ["a-1"] * k]]},
                 "control": {"variant": "threshold_priority", "family": "shared", "a": 1,
                             "base": {"variant": "alpha_fair", "alpha": "inf", "weights": [1.0] * k}}},
        "classify": {"verify_box": [10] * k},
    }


def ex5(k=2, nu=(0.3, 0.4), mu=1.0, c=1.0, a=3) -> dict:
    k = int(k)
    if k < 1:
        raise ValidationError("k must be >= 1")
    nu = list(nu) if not isinstance(nu, (int, float)) else [float(nu)] * 2
    if len(nu) == 2 and k != 1:
        nu = [float(nu[0])] + [float(nu[1])] * k
    inc = [[1] + [1 if r == j else 0 for r in range(k)] for j in range(k)]
    return {
        "name": "ex5",
        "network": {"incidence": inc, "capacities": _vec(c, k, "c"),
                    "nu": _vec(nu, k + 1, "nu"), "mu": _vec(mu, k + 1, "mu")},
        "control": {
            "variant": "threshold_priority", "family": "backbone", "a": int(a),
            "base": {"variant": "static_priority", "levels": [list(range(1, k + 1)), [0]]},
        },
        "sim": {"initial_state": [0] * (k + 1), "events": 1_000_000, "seed": 0, "warmup": 0.2, "batches": 10},
        "scan": {"mode": "foster", "lyapunov": {"variant": "smoothed_backbone", "a": int(a)},
                 "box": [30] * (k + 1), "epsilon": 0.05,
                 "exception": {"boxes": [[[0] * (k + 1), ["a-1"] * (k + 1)]]}},
    }


def ex6(variant="switching", nu=0.3, mu=1.0, c=1.0) -> dict:
    if variant == "switching":
        control = {"variant": "switching_max"}
        declared = None
    elif variant in ("proportional", "equal"):
        control = {"variant": "static_priority", "levels": [[0, 1], [2]], "sharing": variant}
        declared = EX6_DECLARED
    else:
        raise ValidationError(f"unknown ex6 variant {variant!r} (switching, proportional, equal)")
    cfg = ex2(nu, mu, c)
    cfg["name"] = "ex6"
    cfg["variant"] = variant
    cfg["control"] = control
    cfg["classify"] = {
        "order": [0, 1, 2], "method": "matrix", "box": [120, 120, 120], "z": 3.0,
        "start": [0, 1], "start_reason": EX6_START_REASON, "declared_monotone": declared,
    }
    cfg["threshold"] = {"target": "network.nu", "index": None, "bracket": [0.3, 0.5], "tol": 0.005}
    cfg.pop("scan")
    return cfg


def builtin(name: str, **params) -> dict:
    makers = {"ex1": ex1, "ex2": ex2, "ex3": ex3, "ex4": ex4, "ex5": ex5, "ex6": ex6}
    if name not in makers:
        raise ValidationError(f"unknown example {name!r}; choose from {', '.join(BUILTINS)}")
    try:
        return makers[name](**{k: v for k, v in params.items() if v is not None})
    except TypeError as exc:
        raise ValidationError(f"bad parameter for {name}: {exc}") from None
