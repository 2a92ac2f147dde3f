"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every output file is written through a temporary file and a rename.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import reference as ref
from .bundle import bundle_mu_bound, estimate_r_tilde, generate_bundle, spfom_solve_bundle
from .errors import DataError, NumericalError, SpfomError, UsageError
from .inner import fast_inner, feasible_nopurchase_bound
from .instance import (BundleInstance, GenerationConfig, Instance, MultiPeriodInstance,
                       atomic_write_text, bundle_to_dict, generate_uniform, instance_to_dict,
                       load_any, read_json, stack_periods, validate)
from .recovery import recover_policy
from .sim import SimConfig, compare_policies, histogram_csv, summary_json, traces_csv
from .solver import SolverParams, spfom_solve_parallel

WORKERS_ENV = "SPFOM_WORKERS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _pair(text):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
    return lo, hi


def _mu(text):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"mu must be a number or 'auto', got {text!r}") from None


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def _solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--tau", type=float, default=0.1)
    g.add_argument("--mu", type=_mu, default=0.5, help="number or 'auto' for 1/(2R)")
    g.add_argument("--B", "--batch-size", dest="batch_size", type=int, default=None,
                   help="customers per worker and iteration (default: min(10, n))")
    g.add_argument("--k", type=int, default=None,
                   help=f"workers (default: ${WORKERS_ENV} or 1)")
    g.add_argument("--golden-tol", type=float, default=1e-3)
    g.add_argument("--window", type=int, default=None, help="stagnation window")
    g.add_argument("--rel-tol", type=float, default=1e-9, help="stagnation tolerance")
    g.add_argument("--max-iters", type=int, default=100_000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--plain", action="store_true", help="unpenalised dual step")


def _params(a, inst: Instance) -> SolverParams:
    batch = a.batch_size if a.batch_size is not None else min(10, inst.n)
    return SolverParams(tau=a.tau, mu=a.mu, batch_size=batch,
                        workers=a.k if a.k is not None else _default_workers(),
                        golden_tol=a.golden_tol, stagnation_window=a.window,
                        stagnation_rel_tol=a.rel_tol, max_iters=a.max_iters, seed=a.seed,
                        penalized=not a.plain,
                        record_trajectory=getattr(a, "trajectory", None) is not None)


def _save_rows(path, y) -> None:
    buf = io.BytesIO()
    np.save(buf, y)
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_bytes(buf.getvalue())
    os.replace(tmp, path)


def _load_rows(path) -> np.ndarray:
    path = Path(path)
    try:
        if path.suffix == ".npy":
            return np.load(path)
        return np.asarray(read_json(path)["y"], dtype=float)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read primal rows from {path}: {exc}") from None


def _plain_instance(obj, path) -> Instance:
    if isinstance(obj, MultiPeriodInstance):
        obj = stack_periods(obj)
    if isinstance(obj, BundleInstance):
        raise DataError(f"{path} is a bundle instance; use bundle-solve")
    validate(obj).raise_if_invalid()
    return obj


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_generate(a) -> str:
    cfg = GenerationConfig(prices=a.prices, capacities=a.capacities, weights=a.weights)
    if a.resources:
        obj = bundle_to_dict(generate_bundle(a.n, a.m, a.resources, a.seed, cfg))
    else:
        inst = generate_uniform(a.n, a.m, a.seed, cfg)
        obj = instance_to_dict(inst.to_sparse() if a.sparse else inst)
    atomic_write_text(a.out, json.dumps(obj))
    return f"wrote {a.out}"


def cmd_solve(a) -> str:
    inst = _plain_instance(load_any(a.instance), a.instance)
    rep = spfom_solve_parallel(inst, _params(a, inst))
    text = rep.to_json()
    if a.out:
        atomic_write_text(a.out, text)
    if a.trajectory:
        atomic_write_text(a.trajectory, rep.trajectory_csv())
    if a.primal:
        _save_rows(a.primal, rep.primal.y)
    return text


def cmd_recover(a) -> str:
    inst = _plain_instance(load_any(a.instance), a.instance)
    y = ref.simplex_solve_sblp(inst).y if a.oracle else _load_rows(a.primal)
    if y.shape != (inst.n, inst.m + 1):
        raise DataError(f"primal rows have shape {y.shape}, expected {(inst.n, inst.m + 1)}")
    text = recover_policy(inst, np.maximum(y, 0.0)).to_jsonl()
    if a.out:
        atomic_write_text(a.out, text)
        return f"wrote {inst.n} policies to {a.out}"
    return text.rstrip("\n")


def cmd_verify(a) -> str:
    inst = _plain_instance(load_any(a.instance), a.instance)
    oracle = ref.simplex_solve_sblp(inst)
    rep = spfom_solve_parallel(inst, _params(a, inst))
    lines = [f"sblp_optimum={oracle.objective:.10g}",
             f"spfom_objective={rep.objective:.10g}",
             f"sblp_gap={(oracle.objective - rep.objective) / max(abs(oracle.objective), 1e-300):.6g}",
             f"overload_ratio={rep.overload_ratio:.6g}"]
    if inst.m <= 4 and inst.n <= 50:
        cblp = ref.cblp_enumerate_solve(inst)
        lines.append(f"cblp_gap={abs(cblp.objective - oracle.objective):.3g}")
    else:
        lines.append("cblp_gap=skipped (needs m <= 4 and n <= 50)")
    mismatches = 0
    if inst.m <= 10:
        gen = np.random.default_rng(a.seed)
        for _ in range(a.inner_cases):
            i = int(gen.integers(inst.n))
            lo = feasible_nopurchase_bound(inst, i)
            y0 = lo + (inst.lambdas[i] - lo) * gen.random()
            eta = gen.random(inst.m) * inst.prices.max(initial=1.0)
            if abs(fast_inner(inst, i, y0, eta).value
                   - ref.inner_bruteforce(inst, i, y0, eta)) > 1e-9:
                mismatches += 1
        lines.append(f"inner_mismatches={mismatches}")
    else:
        lines.append("inner_mismatches=skipped (needs m <= 10)")
    return "\n".join(lines)


def cmd_simulate(a) -> str:
    params = SolverParams(max_iters=a.max_iters, seed=a.seed)
    cfg = SimConfig(batches=a.batches, customers_per_batch=a.customers, products=a.products,
                    rec_limit=a.rec_limit, segments=a.segments, runs=a.runs, seed=a.seed,
                    solver_params=params, rank_by=a.rank_by,
                    bid_prices=a.bid_prices)
    comp = compare_policies(cfg, jobs=a.jobs)
    out = Path(a.out_dir)
    atomic_write_text(out / "go_trace.csv", traces_csv(comp.go))
    atomic_write_text(out / "msd_trace.csv", traces_csv(comp.msd))
    atomic_write_text(out / "go_sales.csv", histogram_csv(comp.go))
    atomic_write_text(out / "msd_sales.csv", histogram_csv(comp.msd))
    text = summary_json(comp)
    atomic_write_text(out / "summary.json", text)
    return text


def cmd_bundle_solve(a) -> str:
    obj = load_any(a.instance)
    if not isinstance(obj, BundleInstance):
        raise DataError(f"{a.instance} has no incidence matrix")
    validate(obj.base).raise_if_invalid()
    rep = spfom_solve_bundle(obj, _params(a, obj.base))
    d = rep.to_dict()
    if a.mu_bound:
        r_tilde = a.r_tilde if a.r_tilde is not None else estimate_r_tilde(rep)
        d["r_tilde"] = r_tilde
        d["mu_bound"] = bundle_mu_bound(obj, r_tilde)
    text = json.dumps(d)
    if a.out:
        atomic_write_text(a.out, text)
    return text


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spfom", description="SPFOM solver for sales-based assortment LPs")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="synthesise a uniform instance")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--prices", type=_pair, default=(0.0, 1.0), metavar="LO,HI")
    g.add_argument("--capacities", type=_pair, default=(0.0, 1.0), metavar="LO,HI")
    g.add_argument("--weights", type=_pair, default=(0.0, 1.0), metavar="LO,HI")
    g.add_argument("--sparse", action="store_true", help="store weights as sparse rows")
    g.add_argument("--resources", type=int, default=0, help="emit a bundle instance with L resources")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run SPFOM on an instance file")
    s.add_argument("instance")
    _solver_flags(s)
    s.add_argument("--out", help="SolveReport JSON path")
    s.add_argument("--trajectory", help="trajectory CSV path")
    s.add_argument("--primal", help="write the rows y (n x (m+1)) as .npy")
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("recover", help="nested-assortment policies from SBLP rows")
    r.add_argument("instance")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--primal", help=".npy rows or JSON with key 'y'")
    src.add_argument("--oracle", action="store_true", help="use the simplex optimum")
    r.add_argument("--out", help="policy JSON-lines path")
    r.set_defaults(func=cmd_recover)

    v = sub.add_parser("verify", help="oracle cross-checks on a small instance")
    v.add_argument("instance")
    _solver_flags(v)
    v.add_argument("--inner-cases", type=int, default=200)
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("simulate", help="GO vs MSD bid-price simulation")
    m.add_argument("--batches", type=int, default=100)
    m.add_argument("--customers", type=int, default=1000)
    m.add_argument("--products", type=int, default=40)
    m.add_argument("--rec-limit", type=int, default=2)
    m.add_argument("--segments", type=int, default=10)
    m.add_argument("--runs", type=int, default=30)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--max-iters", type=int, default=1000, help="SPFOM cap per solve")
    m.add_argument("--rank-by", choices=("score", "margin"), default="score")
    m.add_argument("--bid-prices", choices=("spfom", "lp"), default="spfom",
                   help="lp: exact HiGHS duals instead of SPFOM")
    m.add_argument("--jobs", type=int, default=1, help="replications in parallel processes")
    m.add_argument("--out-dir", required=True)
    m.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bundle-solve", help="SPFOM with resource duals")
    b.add_argument("instance")
    _solver_flags(b)
    b.add_argument("--mu-bound", action="store_true", help="also report rho_max^2/(2 R~)")
    b.add_argument("--r-tilde", type=float, default=None, help="R~ (default: estimated)")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bundle_solve)
    return p


def run(argv=None) -> int:
    """Execute one command; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
        print(args.func(args))
        return 0
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except SpfomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
