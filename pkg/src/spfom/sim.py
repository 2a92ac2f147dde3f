"""Multi-period bid-price simulation: global (GO) vs segment-decomposed (MSD).

Every batch, the products still in stock are either all shown (when there
are at most ``rec_limit`` of them) or filtered by bid prices: product ``j``
is eligible for customer ``i`` when ``r_j - eta_j >= 0`` and the
``rec_limit`` eligible products with the largest ``(r_j - eta_j) w_ij`` are
shown. The bid prices come from an SPFOM solve of the batch's customers
against the per-batch share of the remaining stock, ``inventory / batches
left``. Because the SBLP is homogeneous in ``(lambda, c)``, this has the
same duals as weighting every batch customer by the number of batches left,
i.e. treating the current batch as a sample of the remaining horizon.

GO solves once per batch over all customers. MSD splits the batch
round-robin into segments and lets each segment solve against the *whole*
remaining share with its own duals, so no segment sees the others' demand.
With one segment the two policies run the identical code path. Setting
``bid_prices="lp"`` swaps SPFOM for exact HiGHS duals, which separates
solver noise from the effect of the policy itself.

Purchases are simulated with one uniform per customer in index order.
Stock is integral; a purchase of a sold-out product is lost.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import rng as rng_mod
from .choice import batch_choice_probabilities, batch_draw
from .errors import ConfigurationError, SpfomError
from .instance import Instance, MultiPeriodInstance
from .reference import solve_sblp_highs
from .solver import SolverParams, run_spfom


class SimWarning(UserWarning):
    """A diagnostic was evaluated on a trace where it is undefined."""


@dataclass
class SimConfig:
    batches: int = 100
    customers_per_batch: int = 1000
    products: int = 40
    rec_limit: int = 2
    segments: int = 10
    runs: int = 30
    seed: int = 0
    solver_params: SolverParams = field(default_factory=lambda: SolverParams(max_iters=1000))
    price_range: tuple[float, float] = (1.0, 20.0)
    inventory_range: tuple[int, int] = (1, 2000)
    weight_range: tuple[float, float] = (0.0, 1.0)
    w0_range: tuple[float, float] = (0.0, 1.0)
    rank_by: str = "score"  # "score": (r - eta) * w ; "margin": r - eta
    bid_prices: str = "spfom"  # "spfom", or "lp" for exact HiGHS duals (diagnostic)

    def check(self) -> None:
        if self.rec_limit < 1 or self.segments < 1 or self.batches < 1 or self.runs < 1:
            raise ConfigurationError("rec_limit, segments, batches and runs must be >= 1")
        if self.customers_per_batch < 1 or self.products < 1:
            raise ConfigurationError("customers_per_batch and products must be >= 1")
        if self.rank_by not in ("score", "margin"):
            raise ConfigurationError(f"unknown rank_by {self.rank_by!r}")
        if self.bid_prices not in ("spfom", "lp"):
            raise ConfigurationError(f"unknown bid_prices {self.bid_prices!r}")
        lo, hi = self.inventory_range
        if not 1 <= lo <= hi:
            raise ConfigurationError("inventory_range must satisfy 1 <= lo <= hi")
        for name in ("price_range", "weight_range", "w0_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo < hi:
                raise ConfigurationError(f"invalid {name} {(lo, hi)!r}")


@dataclass
class SimTrace:
    """Per-batch record of one policy run. ``duals`` is ``(T, segments, m)``
    and NaN where no solve happened; ``inventory`` is the stock after each
    batch."""

    prices: np.ndarray
    initial_inventory: np.ndarray
    revenue: np.ndarray
    sold: np.ndarray
    lost: np.ndarray
    inventory: np.ndarray
    shown: np.ndarray
    duals: np.ndarray
    opp_sum: np.ndarray
    opp_count: np.ndarray
    solver_iterations: np.ndarray

    @property
    def cumulative_revenue(self) -> np.ndarray:
        return np.cumsum(self.revenue)

    @property
    def total_revenue(self) -> float:
        return float(self.revenue.sum())

    @property
    def remaining_total(self) -> np.ndarray:
        return self.inventory.sum(axis=1)

    @property
    def sales_histogram(self) -> np.ndarray:
        return self.sold.sum(axis=0)


# ---------------------------------------------------------------------------
# market synthesis
# ---------------------------------------------------------------------------


def _unif(gen, bounds, size):
    lo, hi = bounds
    return lo + (hi - lo) * (1.0 - gen.random(size))


def generate_market(cfg: SimConfig, seed=None) -> MultiPeriodInstance:
    """Prices, integral stock and i.i.d. customer batches from ``generation``."""
    cfg.check()
    gen = rng_mod.stream(cfg.seed if seed is None else seed, "generation")
    m, n = cfg.products, cfg.customers_per_batch
    prices = _unif(gen, cfg.price_range, m)
    lo, hi = cfg.inventory_range
    stock = gen.integers(lo, hi + 1, size=m).astype(float)
    periods = []
    for _ in range(cfg.batches):
        w0 = _unif(gen, cfg.w0_range, n)
        w = _unif(gen, cfg.weight_range, (n, m))
        periods.append(Instance(prices=prices, capacities=stock, w0=w0, weights=w))
    return MultiPeriodInstance(periods=tuple(periods), initial_capacities=stock)


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------


def _fit_batch(p: SolverParams, n: int) -> SolverParams:
    # small segments: shrink the mini-batch rather than reject the solve
    if p.batch_size * p.workers <= n:
        return p
    workers = min(p.workers, n)
    return replace(p, workers=workers, batch_size=max(1, n // workers))


def recommend(prices, eta, weights, avail, rec_limit, rank_by="score") -> np.ndarray:
    """Boolean ``(n, m)`` mask of shown products.

    Eligible: in stock and ``r_j - eta_j >= 0``. Ranked by ``(r_j - eta_j)
    w_ij`` (or the margin alone); ties go to the lower product index.
    """
    margin = prices - eta
    ok = avail & (margin >= 0)
    score = margin[None, :] * weights if rank_by == "score" else np.broadcast_to(
        margin, weights.shape)
    score = np.where(ok[None, :], score, -np.inf)
    order = np.argsort(-score, axis=1, kind="stable")[:, :rec_limit]
    mask = np.zeros(weights.shape, dtype=bool)
    rows = np.arange(weights.shape[0])[:, None]
    mask[rows, order] = np.isfinite(score[rows, order])
    return mask


def _run(mp: MultiPeriodInstance, cfg: SimConfig, segments: int, seed) -> SimTrace:
    cfg.check()
    seed = cfg.seed if seed is None else seed
    sampler = rng_mod.stream(seed, "sampling")
    chooser = rng_mod.stream(seed, "choice")
    T, m = mp.T, mp.m
    prices = np.asarray(mp.prices, dtype=float)
    inv = np.floor(np.asarray(mp.initial_capacities, dtype=float))
    K = cfg.rec_limit
    out = dict(
        revenue=np.zeros(T), sold=np.zeros((T, m), dtype=np.int64),
        lost=np.zeros(T, dtype=np.int64), inventory=np.zeros((T, m)),
        shown=np.zeros((T, m), dtype=np.int64), duals=np.full((T, segments, m), np.nan),
        opp_sum=np.zeros(T), opp_count=np.zeros(T, dtype=np.int64),
        solver_iterations=np.zeros(T, dtype=np.int64))
    warm = np.zeros((segments, m))
    for t, period in enumerate(mp.periods):
        n = period.n
        W = period.dense_weights()
        avail = inv >= 1
        mask = np.zeros((n, m), dtype=bool)
        if avail.sum() <= K:
            mask[:, avail] = True
        else:
            keep = np.flatnonzero(avail)
            share = inv[keep] / (T - t)
            for g in range(segments):
                idx = np.arange(g, n, segments)
                sub = Instance(prices=prices[keep], capacities=share, w0=period.w0[idx],
                               weights=W[np.ix_(idx, keep)], lambdas=period.lambdas[idx])
                try:
                    if cfg.bid_prices == "lp":
                        local, iters = solve_sblp_highs(sub).duals, 0
                    else:
                        rep = run_spfom(sub, _fit_batch(cfg.solver_params, sub.n),
                                        init_duals=warm[g, keep],
                                        sampler=sampler)
                        local, iters = rep.duals.eta, rep.iterations
                except SpfomError as exc:
                    raise type(exc)(f"batch {t}, segment {g}: {exc}") from exc
                eta = np.zeros(m)
                eta[keep] = local
                warm[g] = eta
                out["duals"][t, g] = eta
                out["solver_iterations"][t] += iters
                seg_mask = recommend(prices, eta, W[idx], avail, K, cfg.rank_by)
                mask[idx] = seg_mask
                offered = seg_mask.any(axis=0)
                out["opp_sum"][t] += eta[offered].sum()
                out["opp_count"][t] += int(offered.sum())
        probs = batch_choice_probabilities(W, period.w0, mask, period.shadow_weights
                                           if period.is_gam else None)
        picks = batch_draw(probs, chooser.random(n))
        demand = np.bincount(picks[picks >= 0], minlength=m)
        # sequential checkout against live stock: the first inv_j buyers succeed
        sold = np.minimum(demand, inv).astype(np.int64)
        inv = inv - sold
        out["sold"][t] = sold
        out["lost"][t] = int((demand - sold).sum())
        out["revenue"][t] = float(sold @ prices)
        out["inventory"][t] = inv
        out["shown"][t] = mask.sum(axis=0)
    return SimTrace(prices=prices, initial_inventory=np.asarray(mp.initial_capacities), **out)


def run_go_policy(mp: MultiPeriodInstance, cfg: SimConfig, seed=None) -> SimTrace:
    """Global bid prices: one solve per batch over every customer."""
    return _run(mp, cfg, 1, seed)


def run_msd_policy(mp: MultiPeriodInstance, cfg: SimConfig, seed=None) -> SimTrace:
    """``cfg.segments`` independent solves per batch, each with local duals."""
    return _run(mp, cfg, cfg.segments, seed)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def sales_entropy(trace_or_counts) -> float:
    """Shannon entropy (bits) of the sales distribution over products."""
    counts = np.asarray(getattr(trace_or_counts, "sales_histogram", trace_or_counts), float)
    total = counts.sum()
    if total <= 0:
        warnings.warn("no sales: entropy defined as 0", SimWarning, stacklevel=2)
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def mean_opportunity_cost(trace: SimTrace) -> float:
    """Mean dual over (batch, segment, shown product) triples with a solve."""
    count = int(trace.opp_count.sum())
    if count == 0:
        warnings.warn("no solves in trace: opportunity cost defined as 0", SimWarning,
                      stacklevel=2)
        return 0.0
    return float(trace.opp_sum.sum() / count)


# ---------------------------------------------------------------------------
# replications
# ---------------------------------------------------------------------------


@dataclass
class Comparison:
    go: list
    msd: list

    def revenues(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([t.total_revenue for t in self.go]),
                np.array([t.total_revenue for t in self.msd]))

    def revenue_test(self):
        """Paired one-sided t-test of GO > MSD total revenue."""
        go, msd = self.revenues()
        with warnings.catch_warnings():  # identical pairs: scipy warns and returns NaN
            warnings.simplefilter("ignore", RuntimeWarning)
            return stats.ttest_rel(go, msd, alternative="greater")

    def crossing_batches(self) -> list:
        """First batch where MSD's remaining stock drops below GO's (None if never)."""
        out = []
        for g, s in zip(self.go, self.msd):
            below = np.flatnonzero(s.remaining_total < g.remaining_total)
            out.append(int(below[0]) if below.size else None)
        return out

    def summary(self) -> dict:
        def ci(x):
            x = np.asarray(x, dtype=float)
            half = (stats.t.ppf(0.975, x.size - 1) * x.std(ddof=1) / math.sqrt(x.size)
                    if x.size > 1 else float("nan"))
            return {"mean": float(x.mean()), "ci95": [float(x.mean() - half),
                                                       float(x.mean() + half)]}

        res = {}
        for name, traces in (("go", self.go), ("msd", self.msd)):
            res[name] = {
                "revenue": ci([t.total_revenue for t in traces]),
                "entropy_bits": ci([sales_entropy(t) for t in traces]),
                "opportunity_cost": ci([mean_opportunity_cost(t) for t in traces]),
                "lost_sales": ci([t.lost.sum() for t in traces]),
            }
        test = self.revenue_test() if len(self.go) > 1 else None
        res["paired_t"] = None if test is None else {"statistic": float(test.statistic),
                                                     "pvalue": float(test.pvalue)}
        res["crossing_batches"] = self.crossing_batches()
        return res


def _one_run(cfg: SimConfig, run_seed):
    mp = generate_market(cfg, run_seed)
    return run_go_policy(mp, cfg, run_seed), run_msd_policy(mp, cfg, run_seed)


def compare_policies(cfg: SimConfig, jobs: int = 1) -> Comparison:
    """``cfg.runs`` replications; run ``r`` uses the ``r``-th spawned seed for
    its market, solver sampling and purchases, shared by both policies."""
    cfg.check()
    seeds = rng_mod.run_seeds(cfg.seed, cfg.runs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            pairs = list(ex.map(_one_run, [cfg] * cfg.runs, seeds))
    else:
        pairs = [_one_run(cfg, s) for s in seeds]
    return Comparison(go=[p[0] for p in pairs], msd=[p[1] for p in pairs])


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def traces_csv(traces: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "batch", "revenue", "cum_revenue", "qty_sold",
                "inventory_remaining_total", "mean_dual"])
    for r, tr in enumerate(traces):
        cum = tr.cumulative_revenue
        for t in range(tr.revenue.size):
            d = tr.duals[t]
            mean_dual = float(np.nanmean(d)) if np.isfinite(d).any() else float("nan")
            w.writerow([r, t, repr(float(tr.revenue[t])), repr(float(cum[t])),
                        int(tr.sold[t].sum()), repr(float(tr.inventory[t].sum())),
                        "" if math.isnan(mean_dual) else repr(mean_dual)])
    return buf.getvalue()


def histogram_csv(traces: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "product", "sold"])
    for r, tr in enumerate(traces):
        for j, q in enumerate(tr.sales_histogram):
            w.writerow([r, j, int(q)])
    return buf.getvalue()


def summary_json(comp: Comparison) -> str:
    return json.dumps(comp.summary(), indent=2)
