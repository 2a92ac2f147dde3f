"""SPFOM objective and overload against the simplex optimum.

Sweeps instance size and step size on U(0, 1) instances with m = 10 and
writes one CSV row per (n, tau, seed). The penalised optimum at the same
mu is reported alongside, since that is the point the iterates target.

    python scripts/convergence_study.py --out results/convergence.csv
"""

import argparse
import csv
import sys
import time

from spfom import reference as ref
from spfom.instance import generate_uniform
from spfom.solver import SolverParams, overload, spfom_solve


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 300, 500])
    ap.add_argument("--taus", type=float, nargs="+", default=[0.1, 0.01, 0.001])
    ap.add_argument("--m", type=int, default=10)
    ap.add_argument("--mu", type=float, default=0.5)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--max-iters", type=int, default=100_000)
    ap.add_argument("--out", default="-")
    a = ap.parse_args(argv)

    out = sys.stdout if a.out == "-" else open(a.out, "w", newline="")
    w = csv.writer(out)
    w.writerow(["n", "tau", "seed", "opt", "penalized_obj", "penalized_overload",
                "spfom_obj", "spfom_overload", "iterations", "stopped", "seconds"])
    for n in a.sizes:
        for seed in range(a.seeds):
            inst = generate_uniform(n, a.m, seed)
            opt = ref.simplex_solve_sblp(inst).objective
            pen = ref.penalized_optimum(inst, a.mu)
            pen_over = overload(pen.col_sums, inst.capacities)
            for tau in a.taus:
                t0 = time.perf_counter()
                rep = spfom_solve(inst, SolverParams(tau=tau, mu=a.mu, seed=seed,
                                                     max_iters=a.max_iters))
                w.writerow([n, tau, seed, f"{opt:.6g}", f"{pen.objective:.6g}",
                            f"{pen_over:.4f}", f"{rep.objective:.6g}",
                            f"{rep.overload_ratio:.4f}", rep.iterations, rep.stopped,
                            f"{time.perf_counter() - t0:.2f}"])
                out.flush()
    if out is not sys.stdout:
        out.close()


if __name__ == "__main__":
    main()
