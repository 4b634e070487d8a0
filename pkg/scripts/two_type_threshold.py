"""Classify static priority on the two-type network across a sweep of kappa_1.

Stable iff kappa_1 < c_1 (1 - kappa_0 / c_0); prints one line per value and
the bisected critical value.
"""
import argparse

import numpy as np

from psnet.classifier import ClassifyConfig, classify, critical_threshold
from psnet.controls import StaticPriority
from psnet.network import NetworkSpec


def network(k1, nu0=0.5, c=(1.0, 1.0)):
    return NetworkSpec([[1, 1], [0, 1]], list(c), [nu0, k1], [1.0, 1.0])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--method", choices=("simulation", "matrix"), default="simulation")
    ap.add_argument("--events", type=int, default=2_000_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    ctl = StaticPriority(((0,), (1,)))
    cfg = ClassifyConfig(method=args.method, events=args.events, seed=args.seed, box=(60, 60))
    print("kappa_1  E[b_1]    se        verdict")
    for k1 in np.arange(0.30, 0.71, 0.05):
        res = classify(network(float(k1)), ctl, (0, 1), cfg)
        last = res.trace[-1]
        print(f"{k1:6.2f}  {last.estimate:.5f}  {last.se:.2e}  {res.verdict}")
    th = critical_threshold(network, ctl, (0, 1), (0.2, 0.8), 0.01, cfg)
    print(f"critical kappa_1 in [{th.lo:.4f}, {th.hi:.4f}] (closed form 0.5)")


if __name__ == "__main__":
    main()
