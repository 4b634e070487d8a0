"""Critical arrival rate on the triangle when types 0 and 1 have priority over type 2.

Compares the serve-one-type control (critical value 1/3) with proportional
and equal splitting between types 0 and 1 (critical value above 1/3).
"""
import argparse

from psnet.classifier import ClassifyConfig, critical_threshold
from psnet.controls import StaticPriority, SwitchingMax
from psnet.network import NetworkSpec

REASON = "types 0 and 1 jointly get capacity c while present, so n0 + n1 is an M/M/1 queue"


def triangle(nu):
    return NetworkSpec([[0, 1, 1], [1, 0, 1], [1, 1, 0]], [1.0] * 3, [nu] * 3, [1.0] * 3)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--box", type=int, default=120)
    ap.add_argument("--tol", type=float, default=0.005)
    args = ap.parse_args()
    cfg = ClassifyConfig(method="matrix", box=(args.box,) * 3)
    res = critical_threshold(triangle, SwitchingMax(), (0, 1, 2), (0.2, 0.5), args.tol, cfg)
    print(f"switching     critical nu in [{res.lo:.4f}, {res.hi:.4f}]")
    for sharing in ("proportional", "equal"):
        ctl = StaticPriority(((0, 1), (2,)), sharing=sharing)
        res = critical_threshold(triangle, ctl, (0, 1, 2), (0.3, 0.5), args.tol, cfg,
                                 declared_monotone="b_0 and b_1 do not depend on n_2",
                                 start=(0, 1), start_reason=REASON)
        print(f"{sharing:13s} critical nu in [{res.lo:.4f}, {res.hi:.4f}]")


if __name__ == "__main__":
    main()
