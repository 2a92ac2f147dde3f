"""Penalised optimum versus mu on a fixed instance.

Prints the objective of the exact penalised optimum, its relative gap to
the LP optimum and its capacity overload for a geometric range of mu.

    python scripts/penalty_consistency.py --n 100 --m 5
"""

import argparse

import numpy as np

from spfom import reference as ref
from spfom.instance import generate_uniform
from spfom.solver import overload


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--m", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mus", type=float, nargs="+",
                    default=[0.5, 0.1, 0.03, 0.01, 0.003, 0.001, 0.0001])
    a = ap.parse_args(argv)

    inst = generate_uniform(a.n, a.m, a.seed)
    opt = ref.simplex_solve_sblp(inst).objective
    print(f"LP optimum {opt:.6f}")
    print(f"{'mu':>8} {'objective':>11} {'rel gap':>9} {'overload':>9} {'gap/mu':>8}")
    for mu in a.mus:
        pen = ref.penalized_optimum(inst, mu)
        gap = (pen.objective - opt) / opt
        print(f"{mu:8.4g} {pen.objective:11.6f} {gap:9.4%} "
              f"{overload(pen.col_sums, inst.capacities):9.4f} {gap / mu:8.3f}")
    print(f"sum of capacities {np.sum(inst.capacities):.4f}")


if __name__ == "__main__":
    main()
