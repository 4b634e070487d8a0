"""Smallest boundary threshold a making the two-type priority control pass the drift scan.

Below a, type 1 gets priority; the scanned function is
g_a(n_0)/mu_0 + n_1/mu_1 and the exception set is {n_0 < a, n_1 = 0}.
"""
import argparse

from psnet.controls import StaticPriority, threshold_modify
from psnet.lyapunov import DriftConfig, ExceptionSet, SmoothedFirstLyapunov, find_threshold_a
from psnet.network import NetworkSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kappa", type=float, nargs=2, default=[0.5, 0.3])
    ap.add_argument("--delta", type=float, default=0.7)
    ap.add_argument("--box", type=int, default=200)
    ap.add_argument("--a-max", type=int, default=50)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    spec = NetworkSpec([[1, 1], [0, 1]], [1.0, 1.0], args.kappa, [1.0, 1.0])
    cfg = DriftConfig(delta=args.delta, exception=lambda a: ExceptionSet(boxes=(((0, 0), (a - 1, 0)),)))
    res = find_threshold_a(spec, lambda a: threshold_modify(StaticPriority(((0,), (1,))), "two_type", a),
                           SmoothedFirstLyapunov, cfg, (args.box, args.box), args.a_max, args.jobs)
    for t in res.tried:
        print(f"a={t['a']:3d}  worst drift {t['worst_drift']:+.6f}  violations {t['num_violations']}")
    print(f"smallest passing a: {res.a}" + (f" ({res.reason})" if res.reason else ""))


if __name__ == "__main__":
    main()
