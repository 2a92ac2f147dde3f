import csv
import io
import json
import warnings

import numpy as np
import pytest

from spfom import reference as ref
from spfom import rng
from spfom.choice import batch_choice_probabilities, batch_draw
from spfom.errors import ConfigurationError
from spfom.instance import Instance
from spfom.sim import (SimConfig, SimWarning, compare_policies, generate_market,
                       histogram_csv, mean_opportunity_cost, recommend, run_go_policy,
                       run_msd_policy, sales_entropy, summary_json, traces_csv)
from spfom.solver import SolverParams


def _cfg(**kw):
    base = dict(batches=6, customers_per_batch=60, products=6, rec_limit=2, segments=3,
                runs=2, seed=5, inventory_range=(5, 40),
                solver_params=SolverParams(max_iters=200))
    base.update(kw)
    return SimConfig(**base)


def _same_trace(a, b):
    for name in ("revenue", "sold", "lost", "inventory", "shown", "opp_sum", "opp_count",
                 "solver_iterations"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert np.array_equal(a.duals, b.duals, equal_nan=True)


def test_config_checks():
    for bad in (dict(rec_limit=0), dict(segments=0), dict(batches=0), dict(rank_by="x"),
                dict(inventory_range=(0, 5)), dict(price_range=(2.0, 1.0)),
                dict(bid_prices="exact")):
        with pytest.raises(ConfigurationError):
            _cfg(**bad).check()


def test_market_shape_and_ranges():
    cfg = _cfg()
    mp = generate_market(cfg)
    assert mp.T == 6 and mp.m == 6 and mp.periods[0].n == 60
    assert np.all(mp.initial_capacities == np.floor(mp.initial_capacities))
    assert np.all((mp.initial_capacities >= 5) & (mp.initial_capacities <= 40))
    assert np.all((mp.prices > 1) & (mp.prices <= 20))


def test_recommend_rule():
    prices = np.array([3.0, 2.0, 1.0, 5.0])
    eta = np.array([1.0, 0.0, 2.0, 0.0])
    weights = np.array([[1.0, 1.0, 1.0, 0.1],
                        [0.5, 1.0, 1.0, 1.0]])
    avail = np.array([True, True, True, False])
    mask = recommend(prices, eta, weights, avail, 2)
    # product 2 has negative margin, product 3 is out of stock
    np.testing.assert_array_equal(mask, [[True, True, False, False],
                                         [True, True, False, False]])
    one = recommend(prices, eta, weights, avail, 1)
    np.testing.assert_array_equal(one, [[True, False, False, False],
                                        [False, True, False, False]])


def test_rank_by_margin_ablation_differs():
    prices = np.array([4.0, 2.0])
    weights = np.array([[0.1, 1.0]])
    avail = np.ones(2, dtype=bool)
    by_score = recommend(prices, np.zeros(2), weights, avail, 1, "score")
    by_margin = recommend(prices, np.zeros(2), weights, avail, 1, "margin")
    np.testing.assert_array_equal(by_score, [[False, True]])
    np.testing.assert_array_equal(by_margin, [[True, False]])


def test_ample_inventory_shows_everything_without_solves():
    cfg = _cfg(products=3, rec_limit=5, inventory_range=(10_000, 10_001))
    tr = run_go_policy(generate_market(cfg), cfg)
    assert np.all(tr.shown == cfg.customers_per_batch)
    assert np.all(tr.solver_iterations == 0)
    assert np.all(np.isnan(tr.duals))
    with pytest.warns(SimWarning):
        assert mean_opportunity_cost(tr) == 0.0


def test_inactive_policy_matches_plain_choice_simulation():
    cfg = _cfg(products=3, rec_limit=3)
    mp = generate_market(cfg)
    tr = run_go_policy(mp, cfg)
    chooser = rng.stream(cfg.seed, "choice")
    inv = mp.initial_capacities.copy()
    revenue = 0.0
    for period in mp.periods:
        mask = np.tile(inv >= 1, (period.n, 1))
        picks = batch_draw(batch_choice_probabilities(period.dense_weights(), period.w0, mask),
                           chooser.random(period.n))
        sold = np.minimum(np.bincount(picks[picks >= 0], minlength=3), inv)
        inv -= sold
        revenue += float(sold @ mp.prices)
    assert tr.total_revenue == pytest.approx(revenue, rel=1e-12)


def test_single_segment_msd_is_go():
    cfg = _cfg(segments=1)
    mp = generate_market(cfg)
    _same_trace(run_go_policy(mp, cfg), run_msd_policy(mp, cfg))


def test_trace_determinism():
    cfg = _cfg()
    mp = generate_market(cfg)
    _same_trace(run_msd_policy(mp, cfg), run_msd_policy(mp, cfg))
    _same_trace(run_go_policy(mp, cfg, seed=11), run_go_policy(mp, cfg, seed=11))


@pytest.mark.parametrize("policy", [run_go_policy, run_msd_policy])
def test_inventory_and_revenue_accounting(policy):
    cfg = _cfg(inventory_range=(1, 15))
    mp = generate_market(cfg)
    tr = policy(mp, cfg)
    start = np.vstack([mp.initial_capacities, tr.inventory[:-1]])
    assert np.all(tr.inventory >= 0)
    assert np.all(np.diff(tr.inventory, axis=0) <= 0)
    assert np.all(tr.sold <= start)
    np.testing.assert_array_equal(tr.inventory, start - tr.sold)
    assert tr.cumulative_revenue[-1] == pytest.approx(float(tr.sales_histogram @ mp.prices),
                                                      rel=1e-12)
    assert tr.cumulative_revenue[-1] == pytest.approx(tr.revenue.sum(), abs=1e-8)
    assert np.all(tr.shown <= cfg.customers_per_batch)


def test_scarce_go_run_has_positive_opportunity_cost():
    cfg = _cfg(inventory_range=(1, 3), batches=3)
    tr = run_go_policy(generate_market(cfg), cfg)
    assert tr.solver_iterations.sum() > 0
    assert mean_opportunity_cost(tr) > 0


def test_entropy_examples():
    assert sales_entropy(np.array([5, 5, 5, 5])) == pytest.approx(2.0)
    assert sales_entropy(np.array([0, 9, 0])) == 0.0
    assert sales_entropy(np.array([2, 1, 1])) == pytest.approx(1.5)
    with pytest.warns(SimWarning):
        assert sales_entropy(np.zeros(3)) == 0.0


def test_entropy_bounded_on_traces():
    cfg = _cfg()
    tr = run_msd_policy(generate_market(cfg), cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        h = sales_entropy(tr)
    assert 0 <= h <= np.log2(cfg.products)


def test_compare_and_exports():
    cfg = _cfg()
    comp = compare_policies(cfg)
    assert len(comp.go) == len(comp.msd) == 2
    assert comp.go[0].total_revenue != comp.go[1].total_revenue  # distinct run seeds
    rows = list(csv.DictReader(io.StringIO(traces_csv(comp.go))))
    assert list(rows[0]) == ["run", "batch", "revenue", "cum_revenue", "qty_sold",
                             "inventory_remaining_total", "mean_dual"]
    assert len(rows) == 2 * cfg.batches
    hist = list(csv.reader(io.StringIO(histogram_csv(comp.msd))))
    assert hist[0] == ["run", "product", "sold"] and len(hist) == 1 + 2 * cfg.products
    summary = json.loads(summary_json(comp))
    assert set(summary) == {"go", "msd", "paired_t", "crossing_batches"}
    assert summary["go"]["revenue"]["ci95"][0] <= summary["go"]["revenue"]["mean"]


def test_parallel_replications_match_serial():
    cfg = _cfg()
    a, b = compare_policies(cfg), compare_policies(cfg, jobs=2)
    for x, y in zip(a.go + a.msd, b.go + b.msd):
        _same_trace(x, y)


def test_lp_bid_prices_are_exact_duals():
    cfg = _cfg(batches=1, segments=1, bid_prices="lp", inventory_range=(1, 4))
    mp = generate_market(cfg)
    tr = run_go_policy(mp, cfg)
    period = mp.periods[0]
    sub = Instance(prices=mp.prices, capacities=mp.initial_capacities, w0=period.w0,
                   weights=period.dense_weights())
    np.testing.assert_allclose(tr.duals[0, 0], ref.solve_sblp_highs(sub).duals, atol=1e-9)
    assert tr.solver_iterations[0] == 0


def test_segments_smaller_than_batch_still_solve():
    cfg = _cfg(customers_per_batch=12, segments=4, inventory_range=(1, 3),
               solver_params=SolverParams(max_iters=50, batch_size=10))
    tr = run_go_policy(generate_market(cfg), cfg)
    assert tr.solver_iterations.sum() > 0
