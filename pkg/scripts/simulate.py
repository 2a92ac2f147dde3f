"""GO vs MSD bid-price simulation with an optional exact-dual GO arm.

Runs the replications of ``SimConfig`` and prints the four directional
checks. ``--with-lp`` adds a GO run on the same markets with exact HiGHS
duals, which tells solver noise apart from the policy effect; it is slow
(about 1.5 minutes per run at the default size).

    python scripts/simulate.py --runs 30 --jobs 4 --with-lp
"""

import argparse
import json
from dataclasses import replace

import numpy as np

from spfom import rng
from spfom.sim import (SimConfig, compare_policies, generate_market, mean_opportunity_cost,
                       run_go_policy, sales_entropy)
from spfom.solver import SolverParams


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-iters", type=int, default=1000)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--with-lp", action="store_true")
    a = ap.parse_args(argv)

    cfg = SimConfig(runs=a.runs, seed=a.seed, solver_params=SolverParams(max_iters=a.max_iters))
    comp = compare_policies(cfg, jobs=a.jobs)
    summary = comp.summary()
    print(json.dumps({k: summary[k] for k in ("go", "msd", "paired_t")}, indent=2))
    crossings = comp.crossing_batches()
    print(f"MSD stock below GO's before batch 60 in "
          f"{sum(c is not None and c < 60 for c in crossings)}/{a.runs} runs")
    possible = []
    for s in rng.run_seeds(cfg.seed, cfg.runs):
        mp = generate_market(cfg, s)
        possible.append(float(mp.initial_capacities @ mp.prices))
    print(f"revenue if all stock sells: {np.mean(possible):.0f} (mean over runs)")

    if a.with_lp:
        lp_cfg = replace(cfg, bid_prices="lp")
        rev, ent, opp = [], [], []
        for s in rng.run_seeds(cfg.seed, cfg.runs):
            tr = run_go_policy(generate_market(cfg, s), lp_cfg, s)
            rev.append(tr.total_revenue)
            ent.append(sales_entropy(tr))
            opp.append(mean_opportunity_cost(tr))
        print(f"GO with exact duals: revenue {np.mean(rev):.0f}, entropy {np.mean(ent):.3f}, "
              f"opportunity cost {np.mean(opp):.3f}")


if __name__ == "__main__":
    main()
