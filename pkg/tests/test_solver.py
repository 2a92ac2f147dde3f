import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spfom import reference as ref
from spfom.errors import ConfigurationError, ConsistencyError, UsageError
from spfom.inner import solve_inner_golden
from spfom.instance import from_arrays, generate_uniform
from spfom.solver import (DualPrices, PrimalState, SolverParams, compute_R, default_mu,
                          dual_step, dual_step_penalized, objective_value, overload_ratio,
                          run_spfom, spfom_solve, spfom_solve_parallel)

from conftest import small_instances


def test_compute_R_worked_example():
    inst = from_arrays([1.0, 3.0], [1.0, 1.0], [1.0, 1.0], [[1.0, 1.0], [3.0, 1.0]])
    assert compute_R(inst) == pytest.approx(2.0)
    assert default_mu(inst) == pytest.approx(0.25)


def test_compute_R_uniform_weights_is_mean_price():
    inst = from_arrays([0.2, 0.5, 0.8], [1.0] * 3, [1.0], [[0.3, 0.3, 0.3]])
    assert compute_R(inst) == pytest.approx(0.5)


def test_compute_R_single_pair():
    inst = from_arrays([0.7], [1.0], [1.0], [[0.4]])
    assert compute_R(inst) == pytest.approx(0.7)


def test_default_mu_half():
    inst = from_arrays([0.5], [1.0], [1.0], [[1.0]])
    assert default_mu(inst) == pytest.approx(1.0)


def test_default_mu_zero_prices():
    inst = from_arrays([0.0, 0.0], [1.0, 1.0], [1.0], [[1.0, 1.0]])
    with pytest.raises(ConfigurationError):
        default_mu(inst)


def test_compute_R_all_zero_customer():
    inst = from_arrays([1.0], [1.0], [1.0, 1.0], [[1.0], [0.0]])
    with pytest.raises(ConfigurationError):
        compute_R(inst)


def test_dual_step_examples():
    assert dual_step([0.2], [2.0], [1.0], 0.1).eta[0] == pytest.approx(0.3)
    assert dual_step([0.0], [0.0], [5.0], 0.1).eta[0] == 0.0
    assert dual_step([0.4], [3.0], [3.0], 0.1).eta[0] == 0.4


def test_dual_step_penalized_examples():
    assert dual_step_penalized([1.0], [1.0], [1.0], 0.5, 0.4).eta[0] == pytest.approx(0.8)
    assert dual_step_penalized([0.1], [0.0], [2.0], 0.1, 0.5).eta[0] == 0.0
    with pytest.raises(ConfigurationError):
        dual_step_penalized([0.1], [0.0], [1.0], 1.0, 2.0)


@given(st.lists(st.tuples(st.floats(0, 5), st.floats(0, 5), st.floats(0.01, 5)),
                min_size=1, max_size=6), st.floats(0.001, 1))
def test_dual_steps_agree_at_zero_mu_and_stay_nonnegative(cols, tau):
    eta, sums, caps = map(np.array, zip(*cols))
    plain = dual_step(eta, sums, caps, tau).eta
    np.testing.assert_array_equal(plain, dual_step_penalized(eta, sums, caps, tau, 0.0).eta)
    assert np.all(plain >= 0)


def test_dual_prices_reject_negative():
    with pytest.raises(UsageError):
        DualPrices([0.1, -0.2])


def test_objective_value_examples():
    inst = from_arrays([2.0], [1.0], [1.0], [[1.0]])
    assert objective_value(PrimalState.initial(inst), inst) == 0.0
    state = PrimalState.from_rows(inst, [[0.5, 0.5]])
    assert objective_value(state, inst) == pytest.approx(1.0)
    state.objective_cache = 2.0
    with pytest.raises(ConsistencyError):
        objective_value(state, inst)


def test_overload_ratio_examples():
    inst = from_arrays([1.0, 1.0], [1.0, 3.0], [1.0], [[1.0, 1.0]])
    state = PrimalState.initial(inst)
    assert overload_ratio(state, inst) == 0.0
    state.col_sums = 1.1 * inst.capacities
    assert overload_ratio(state, inst) == pytest.approx(0.1)
    state.col_sums = np.array([1.25, 2.0])
    assert overload_ratio(state, inst) == pytest.approx(0.25 / 4)


@pytest.mark.parametrize("bad", [dict(tau=0.0), dict(mu=-1.0), dict(tau=0.5, mu=3.0),
                                 dict(batch_size=0), dict(batch_size=11), dict(workers=0),
                                 dict(workers=3, batch_size=4)])
def test_params_rejected(bad):
    with pytest.raises(ConfigurationError):
        SolverParams(**bad).resolve(generate_uniform(10, 2, 0))


def test_params_defaults_resolve():
    p = SolverParams().resolve(generate_uniform(30_000, 1, 0).subset(range(20_000)))
    assert (p.tau, p.mu, p.batch_size, p.workers) == (0.1, 0.5, 10, 1)
    assert p.stagnation_window == 200
    assert SolverParams(mu="auto").resolve(generate_uniform(20, 2, 0)).mu > 0


def test_nonbinding_capacities_give_zero_duals():
    base = generate_uniform(30, 4, 1)
    inst = base.replace(capacities=np.full(4, base.lambdas.sum() + 1))
    rep = spfom_solve(inst, SolverParams(batch_size=inst.n, max_iters=3))
    assert np.all(rep.duals.eta == 0)
    for i in range(inst.n):
        np.testing.assert_allclose(rep.primal.y[i], solve_inner_golden(inst, i, np.zeros(4)).y_row,
                                   atol=1e-12)


def test_full_batch_is_deterministic():
    inst = generate_uniform(40, 5, 2)
    p = SolverParams(batch_size=inst.n, max_iters=200, record_trajectory=True)
    a, b = spfom_solve(inst, p), spfom_solve(inst, p)
    assert np.array_equal(a.trajectory, b.trajectory, equal_nan=True)
    np.testing.assert_array_equal(a.primal.y, b.primal.y)
    # another seed visits the same full batch in another order: equal up to rounding
    c = spfom_solve(inst, replace(p, seed=99))
    np.testing.assert_allclose(c.trajectory[:, :3], a.trajectory[:, :3], rtol=1e-9, atol=1e-9)


def test_same_seed_replays():
    inst = generate_uniform(100, 5, 3)
    p = SolverParams(max_iters=500, seed=7, record_trajectory=True)
    a, b = spfom_solve(inst, p), spfom_solve(inst, p)
    np.testing.assert_array_equal(a.trajectory, b.trajectory)
    assert a.objective == b.objective


def test_single_worker_parallel_is_serial():
    inst = generate_uniform(200, 6, 4)
    p = SolverParams(max_iters=800, seed=3, record_trajectory=True, trajectory_every=1)
    a = spfom_solve(inst, p)
    b = spfom_solve_parallel(inst, replace(p, workers=1))
    assert np.array_equal(a.trajectory, b.trajectory, equal_nan=True)
    np.testing.assert_array_equal(a.duals.eta, b.duals.eta)


def test_parallel_is_deterministic_and_consistent():
    inst = generate_uniform(300, 6, 5)
    p = SolverParams(workers=4, batch_size=5, max_iters=400, seed=1)
    a, b = spfom_solve_parallel(inst, p), spfom_solve_parallel(inst, p)
    np.testing.assert_array_equal(a.primal.y, b.primal.y)
    assert a.primal.audit_col_sums() < 1e-9
    assert objective_value(a.primal, inst) == pytest.approx(a.objective, rel=1e-8)


def test_merged_rows_match_serial_solves():
    inst = generate_uniform(50, 4, 6)
    rep = spfom_solve_parallel(inst, SolverParams(workers=3, batch_size=4, max_iters=1))
    touched = np.flatnonzero(rep.primal.y[:, 0] != inst.lambdas)
    assert touched.size == 12
    rows = np.array([solve_inner_golden(inst, i, np.zeros(4)).y_row for i in touched])
    np.testing.assert_allclose(rep.primal.y[touched], rows, atol=1e-12)
    np.testing.assert_allclose(rep.primal.col_sums, rows[:, 1:].sum(axis=0), atol=1e-12)


def test_report_invariants_and_json():
    inst = generate_uniform(80, 5, 8)
    rep = spfom_solve(inst, SolverParams(max_iters=300, record_trajectory=True))
    assert rep.objective == pytest.approx(objective_value(rep.primal, inst), rel=1e-8)
    d = json.loads(rep.to_json())
    assert set(d) == {"objective", "eta", "iterations", "overload_ratio", "stopped"}
    assert rep.trajectory_csv().splitlines()[0] == "iter,objective,dual_norm,dist_sq"
    assert rep.trajectory[0, 0] == 0 and rep.trajectory[-1, 0] == rep.iterations


@settings(max_examples=25)
@given(small_instances(max_n=12, max_m=4), st.integers(0, 2**32 - 1), st.booleans(),
       st.integers(1, 12))
def test_solver_state_invariants(inst, seed, penalized, window):
    B = min(3, inst.n)
    rep = spfom_solve(inst, SolverParams(batch_size=B, seed=seed, penalized=penalized,
                                         max_iters=300, stagnation_window=window))
    assert np.all(rep.duals.eta >= 0)
    assert rep.primal.audit_col_sums() <= 1e-6 * inst.n
    if rep.stopped == "stagnation":
        assert rep.iterations >= window
    y = rep.primal.y
    assert np.all(y >= -1e-12)
    np.testing.assert_allclose(y.sum(axis=1), inst.lambdas, atol=1e-9)
    ratio = inst.w0[:, None] * y[:, 1:] - inst.dense_weights() * y[:, :1]
    assert np.all(ratio <= 1e-9)


def test_stagnation_stops_constant_run():
    # capacities never bind and every row is solved at iteration 1, so the
    # objective stays flat and the run stops exactly after the window
    base = generate_uniform(20, 3, 0)
    inst = base.replace(capacities=np.full(3, 100.0))
    rep = spfom_solve(inst, SolverParams(batch_size=20, stagnation_window=5, max_iters=1000))
    assert rep.stopped == "stagnation"
    assert rep.iterations == 6


def test_warm_start_and_reference_distance():
    inst = generate_uniform(60, 4, 9)
    first = spfom_solve(inst, SolverParams(max_iters=200))
    rep = run_spfom(inst, SolverParams(max_iters=50, record_trajectory=True),
                    init_duals=first.duals, init_primal=first.primal,
                    reference_y=first.primal.y)
    assert rep.trajectory[0, 3] == 0.0
    assert np.all(np.isfinite(rep.trajectory[:, 3]))
    with pytest.raises(UsageError):
        run_spfom(inst, SolverParams(), init_duals=np.zeros(3))


def test_near_optimal_on_medium_instance():
    inst = generate_uniform(500, 10, 0)
    opt = ref.simplex_solve_sblp(inst).objective
    rep = spfom_solve(inst, SolverParams(max_iters=20_000))
    # penalized iterates sit above the hard optimum by the penalty bias
    assert rep.objective >= 0.95 * opt
