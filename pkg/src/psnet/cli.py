"""Command-line front end.

JSON results go to stdout, a short human summary to stderr.  Exit codes:
0 success (or a verdict was reached), 1 capacity condition fails,
2 indeterminate verdict, 3 validation error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, catalog
from . import config as C
from .classifier import INDETERMINATE, classify, critical_threshold, z_from_confidence
from .errors import (
    InfeasibleAllocationError,
    InsufficientDataError,
    LimitNotResolvedError,
    NotMonotoneError,
    ReducedChainUnstableError,
    SolverError,
    ValidationError,
)
from .fairshare import AlphaFairParams, solve_alpha_fair
from .lyapunov import find_threshold_a, foster_scan, instability_evidence
from .network import capacity_condition
from .sim import check_lemma1, detect_growth, replicate

EXIT_OK, EXIT_FAIL, EXIT_INDETERMINATE, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2, 3, 4


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (set, frozenset)):
        return sorted(_jsonable(v) for v in x)
    return x


def _int_tuple(text):
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v != "")


def _float_list(text):
    return [float(v) for v in str(text).replace(" ", "").split(",") if v != ""]


class Run:
    """Loaded config plus the manifest that is embedded in every output."""

    def __init__(self, args, subcommand):
        self.args = args
        self.subcommand = subcommand
        self.t0 = time.time()
        if getattr(args, "config", None):
            self.doc = C.load(args.config)
            self.path = str(args.config)
        elif getattr(args, "builtin", None):
            self.doc = catalog.builtin(args.builtin)
            self.path = f"builtin:{args.builtin}"
        else:
            raise ValidationError("give --config PATH or --builtin NAME")
        self.overrides = list(getattr(args, "set", None) or [])
        C.apply_overrides(self.doc, self.overrides)
        seed = getattr(args, "seed", None)
        if seed is None and os.environ.get("PSNET_SEED"):
            try:
                seed = int(os.environ["PSNET_SEED"])
            except ValueError:
                raise ValidationError("PSNET_SEED must be an integer") from None
        self.seed = seed
        self.spec = C.build_network(self.doc)

    def manifest(self):
        return {
            "config": self.path,
            "config_sha256": C.sha256(self.doc),
            "seed": self.seed,
            "subcommand": self.subcommand,
            "overrides": self.overrides,
            "version": __version__,
            "wall_clock_s": round(time.time() - self.t0, 3),
        }

    def emit(self, result, summary):
        out = {"manifest": self.manifest(), "result": _jsonable(result)}
        json.dump(out, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
        print(summary, file=sys.stderr)

    def control(self):
        if "control" not in self.doc:
            raise ValidationError("control: section is required for this command")
        return C.build_control(self.doc["control"], self.spec)


# ---------------------------------------------------------------- subcommands

def cmd_check_capacity(args):
    run = Run(args, "check-capacity")
    ok, slack = capacity_condition(run.spec)
    run.emit({"capacity_condition": ok, "slack": slack, "kappa": run.spec.kappa},
             f"capacity condition {'holds' if ok else 'FAILS'}; min slack {float(np.min(slack)):.6g}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_solve_alloc(args):
    run = Run(args, "solve-alloc")
    sec = dict(run.doc.get("solve") or {})
    ctl = run.doc.get("control") or {}
    state = _int_tuple(args.state) if args.state else tuple(sec.get("state", ()))
    if len(state) != run.spec.num_types:
        raise ValidationError(f"state must have {run.spec.num_types} entries (use --state)")
    alpha = C.parse_value(args.alpha) if args.alpha is not None else sec.get("alpha", ctl.get("alpha", 1.0))
    alpha = C._number(alpha, "solve.alpha", allow_inf=True)
    weights = (_float_list(args.weights) if args.weights
               else sec.get("weights", ctl.get("weights", [1.0] * run.spec.num_types)))
    tol = float(sec.get("tol", 1e-8))
    rep = solve_alpha_fair(run.spec, state, AlphaFairParams(alpha, tuple(weights)), tol)
    run.emit({"state": list(state), "alpha": alpha, "weights": list(weights), **rep.to_dict()},
             f"allocation {np.round(rep.allocation, 6).tolist()} (KKT residual {rep.kkt_residual:.2e})")
    return EXIT_OK


def _write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_simulate(args):
    run = Run(args, "simulate")
    cfg = C.build_sim(run.doc, run.spec, run.seed, args.events, args.time, args.warmup)
    if args.csv_dir and cfg.record_every is None:
        total = cfg.max_events if cfg.max_events is not None else 100_000
        cfg = replace(cfg, record_every=max(1, total // 10_000))
    control = run.control()
    reps = int((run.doc.get("sim") or {}).get("replications", 1))
    results = replicate(run.spec, control, cfg, reps, args.jobs)
    docs = []
    for st in results:
        d = st.summary()
        lem = check_lemma1(st, run.spec)
        d["service_bound"] = {"bound": lem.bound, "ok": lem.ok, "passed": lem.passed}
        try:
            d["growth"] = detect_growth(st).to_dict()
        except InsufficientDataError as exc:
            d["growth"] = {"verdict": None, "reason": str(exc)}
        docs.append(d)
    if args.csv_dir:
        out = Path(args.csv_dir)
        R = run.spec.num_types
        for i, st in enumerate(results):
            tag = f"rep{i}"
            _write_csv(out / f"trajectory_{tag}.csv",
                       ["time"] + [f"n{r}" for r in range(R)] + [f"b{r}" for r in range(R)],
                       [[t, *n, *b] for t, n, b in st.trajectory or []])
            _write_csv(out / f"checkpoints_{tag}.csv", ["time"] + [f"n{r}" for r in range(R)],
                       [[t, *map(int, n)] for t, n in zip(st.checkpoint_times, st.checkpoint_states)])
            _write_csv(out / f"stats_{tag}.csv",
                       ["type", "kappa", "service_mean", "service_se", "occupancy_mean", "occupancy_se"],
                       [[r, run.spec.kappa[r], st.service_mean[r], st.service_se[r],
                         st.occupancy_mean[r], st.occupancy_se[r]] for r in range(R)])
    first = docs[0]
    run.emit({"replications": docs},
             f"{first['events']} events, t={first['elapsed_time']:.4g}, "
             f"growth={first['growth'].get('verdict')}, service={np.round(first['service_mean'], 4).tolist()}")
    return EXIT_OK


def cmd_drift_scan(args):
    run = Run(args, "drift-scan")
    sec = dict(run.doc.get("scan") or {})
    if "lyapunov" not in sec:
        raise ValidationError("scan.lyapunov: is required")
    box = _int_tuple(args.box) if args.box else tuple(C._int_list(sec.get("box"), "scan.box"))
    drift_cfg = C.build_drift(run.doc, args.epsilon)
    mode = sec.get("mode", "foster")
    # scan.control, when present, replaces the top-level control for this command
    ctl = sec.get("control", run.doc.get("control"))
    if ctl is None:
        raise ValidationError("control: section is required for this command")
    if mode == "instability":
        eps = args.epsilon if args.epsilon is not None else float(sec.get("epsilon", 1e-9))
        rep = instability_evidence(run.spec, C.build_control(ctl, run.spec), C.build_lyapunov(sec["lyapunov"]), box, eps)
        run.emit({"mode": mode, **rep.to_dict()},
                 f"instability evidence {'PASSES' if rep.passed else 'fails'}: min drift {rep.min_drift:.6g}")
        return EXIT_OK
    if mode == "search":
        if ctl.get("variant") != "threshold_priority":
            raise ValidationError("scan.mode=search needs a threshold_priority control")

        def control_family(a):
            return C.build_control({**ctl, "a": a}, run.spec)

        res = find_threshold_a(run.spec, control_family,
                               lambda a: C.build_lyapunov(sec["lyapunov"], a), drift_cfg, box,
                               int(sec.get("a_max", 50)), args.jobs)
        run.emit({"mode": mode, **res.to_dict()},
                 f"smallest passing a: {res.a}" + (f" ({res.reason})" if res.reason else ""))
        return EXIT_OK
    if mode != "foster":
        raise ValidationError(f"scan.mode: unknown mode {mode!r}")
    lyap = C.build_lyapunov(sec["lyapunov"])
    rep = foster_scan(run.spec, C.build_control(ctl, run.spec), lyap, box, drift_cfg, a=getattr(lyap, "a", None),
                      jobs=args.jobs)
    run.emit({"mode": mode, **rep.to_dict()},
             f"scan {'passes' if rep.passed else 'FAILS'}: worst drift {rep.worst_drift:.6g} at "
             f"{rep.worst_state}, {rep.num_violations} violations")
    return EXIT_OK


def _classify_inputs(run, args):
    sec = dict(run.doc.get("classify") or {})
    z = z_from_confidence(args.confidence) if args.confidence is not None else None
    cfg = C.build_classify(run.doc, run.seed, args.events, z)
    order = _int_tuple(args.order) if args.order else sec.get("order")
    return sec, cfg, None if order is None else tuple(order)


def cmd_classify(args):
    run = Run(args, "classify")
    sec, cfg, order = _classify_inputs(run, args)
    res = classify(run.spec, run.control(), order, cfg, sec.get("declared_monotone"),
                   tuple(sec.get("start", ())), sec.get("start_reason"))
    steps = "; ".join(f"{s.subset}+{s.added}: E={s.estimate:.5g} vs kappa={s.kappa:.5g} -> {s.verdict}"
                      for s in res.trace)
    run.emit(res.to_dict(), f"verdict {res.verdict} ({steps})")
    return EXIT_INDETERMINATE if res.verdict == INDETERMINATE else EXIT_OK


def cmd_threshold(args):
    run = Run(args, "threshold")
    sec, cfg, order = _classify_inputs(run, args)
    th = dict(run.doc.get("threshold") or {})
    if "target" not in th or "bracket" not in th:
        raise ValidationError("threshold: needs 'target' and 'bracket'")
    family = C.family_from(run.doc, th["target"], th.get("index"))
    ctl_sec = run.doc.get("control")

    def control(theta):
        return C.build_control(ctl_sec, family(theta))

    res = critical_threshold(family, control, order, tuple(th["bracket"]), float(th.get("tol", 0.01)),
                             cfg, sec.get("declared_monotone"), tuple(sec.get("start", ())),
                             sec.get("start_reason"))
    run.emit(res.to_dict(), f"threshold in [{res.lo:.6g}, {res.hi:.6g}]")
    return EXIT_OK


def cmd_example(args):
    params = {}
    for key in ("nu", "mu", "c"):
        val = getattr(args, key)
        if val is not None:
            vals = _float_list(val)
            params[key] = vals[0] if len(vals) == 1 else vals
    for key in ("k", "a"):
        if getattr(args, key) is not None:
            params[key] = getattr(args, key)
    if args.alpha is not None:
        params["alpha"] = C._number(C.parse_value(args.alpha), "alpha", allow_inf=True)
    if args.variant is not None:
        params["variant"] = args.variant
    doc = catalog.builtin(args.name, **params)
    C.apply_overrides(doc, args.set)
    C.build_network(doc)
    doc["manifest"] = {
        "config": f"builtin:{args.name}", "config_sha256": C.sha256(doc), "seed": None,
        "subcommand": "example", "overrides": list(args.set or []), "version": __version__,
        "parameters": params,
    }
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")
    print(f"{args.name}: {json.dumps(params)}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _common(p, *, sim=False, scan=False, cls=False):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="config JSON path")
    src.add_argument("--builtin", choices=catalog.BUILTINS, help="use a built-in example with defaults")
    p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                   help="override a config leaf, e.g. network.nu[1]=0.35")
    p.add_argument("--seed", type=int, default=None, help="seed (falls back to PSNET_SEED)")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    if sim or cls:
        p.add_argument("--events", type=int, default=None)
    if sim:
        p.add_argument("--time", type=float, default=None)
        p.add_argument("--warmup", type=float, default=None)
        p.add_argument("--csv-dir", default=None)
    if scan:
        p.add_argument("--box", default=None, help="comma-separated per-type upper bounds")
        p.add_argument("--epsilon", type=float, default=None)
    if cls:
        p.add_argument("--order", default=None, help="comma-separated type order")
        p.add_argument("--confidence", type=float, default=None, help="two-sided level, e.g. 0.997")


def build_parser():
    ap = argparse.ArgumentParser(prog="psnet", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"psnet {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-capacity", help="strict load condition per resource")
    _common(p)
    p.set_defaults(func=cmd_check_capacity)

    p = sub.add_parser("solve-alloc", help="weighted alpha-fair allocation at one state")
    _common(p)
    p.add_argument("--state", default=None, help="comma-separated counts")
    p.add_argument("--alpha", default=None)
    p.add_argument("--weights", default=None)
    p.set_defaults(func=cmd_solve_alloc)

    p = sub.add_parser("simulate", help="event-driven simulation")
    _common(p, sim=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("drift-scan", help="drift scan on a finite box")
    _common(p, scan=True)
    p.set_defaults(func=cmd_drift_scan)

    p = sub.add_parser("classify", help="recursive stability classification")
    _common(p, cls=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("threshold", help="bisection for the critical parameter")
    _common(p, cls=True)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("example", help="write a built-in example config")
    p.add_argument("name", choices=catalog.BUILTINS)
    p.add_argument("--nu", default=None)
    p.add_argument("--mu", default=None)
    p.add_argument("--c", default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--a", type=int, default=None)
    p.add_argument("--alpha", default=None)
    p.add_argument("--variant", default=None, choices=("switching", "proportional", "equal"))
    p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE")
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_example)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, InfeasibleAllocationError, NotMonotoneError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SolverError, LimitNotResolvedError, ReducedChainUnstableError, InsufficientDataError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
