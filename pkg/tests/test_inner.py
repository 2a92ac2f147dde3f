import numpy as np
import pytest
from hypothesis import given, strategies as st

from spfom import reference as ref
from spfom.errors import InfeasibleError, UsageError
from spfom.inner import (descending_order, fast_inner, feasible_nopurchase_bound,
                         inner_value_curve, solve_inner_golden)
from spfom.instance import from_arrays

from conftest import small_instances


def _one(coef, w, w0=1.0, lam=1.0):
    """Single customer whose coefficients r - 0 equal ``coef``."""
    m = len(coef)
    return from_arrays(coef, [1.0] * m, [w0], [w], lambdas=[lam])


def _grid_best(inst, i, eta, step=1e-4):
    lo = feasible_nopurchase_bound(inst, i)
    grid = np.append(np.arange(lo, inst.lambdas[i], step * inst.lambdas[i]), inst.lambdas[i])
    return inner_value_curve(inst, i, eta, grid).max()


# --- feasibility bound ---------------------------------------------------------

def test_bound_half():
    assert feasible_nopurchase_bound(_one([1.0], [1.0]), 0) == pytest.approx(0.5)


def test_bound_third():
    assert feasible_nopurchase_bound(_one([1.0, 1.0], [1.0, 1.0]), 0) == pytest.approx(1 / 3)


def test_bound_tends_to_lambda():
    assert feasible_nopurchase_bound(_one([1.0], [1e-12]), 0) == pytest.approx(1.0)


# --- fixed y0 greedy ------------------------------------------------------------

def test_fast_inner_worked_example():
    sol = fast_inner(_one([2.0, 1.0], [1.0, 1.0]), 0, 0.4, np.zeros(2))
    np.testing.assert_allclose(sol.y_row, [0.4, 0.4, 0.2])
    assert sol.value == pytest.approx(1.0)


def test_fast_inner_zero_budget():
    sol = fast_inner(_one([2.0, 1.0], [1.0, 1.0]), 0, 1.0, np.zeros(2))
    np.testing.assert_array_equal(sol.y_row, [1.0, 0.0, 0.0])
    assert sol.value == 0.0


def test_fast_inner_fills_best_coefficient_first():
    sol = fast_inner(_one([1.0, 3.0], [2.0, 1.0]), 0, 0.5, np.zeros(2))
    np.testing.assert_allclose(sol.y_row, [0.5, 0.0, 0.5])
    assert sol.value == pytest.approx(1.5)


def test_fast_inner_duals_shift_order():
    inst = _one([2.0, 1.0], [1.0, 1.0])
    sol = fast_inner(inst, 0, 0.4, np.array([1.5, 0.0]))  # coefficients (0.5, 1)
    np.testing.assert_allclose(sol.y_row, [0.4, 0.2, 0.4])


def test_fast_inner_rejects_y0_above_lambda():
    with pytest.raises(UsageError):
        fast_inner(_one([1.0], [1.0]), 0, 1.5, np.zeros(1))


def test_fast_inner_rejects_y0_below_bound():
    with pytest.raises(InfeasibleError) as info:
        fast_inner(_one([1.0], [1.0]), 0, 0.3, np.zeros(1))
    assert info.value.certificate == pytest.approx(0.5)


def test_inner_bruteforce_examples():
    inst = _one([2.0, 1.0], [1.0, 1.0])
    assert ref.inner_bruteforce(inst, 0, 0.4, np.zeros(2)) == pytest.approx(1.0, abs=1e-12)
    assert ref.inner_bruteforce(inst, 0, 1.0, np.zeros(2)) == pytest.approx(0.0, abs=1e-12)
    neg = _one([-1.0, -3.0], [1.0, 1.0])
    assert ref.inner_bruteforce(neg, 0, 0.4, np.zeros(2)) == pytest.approx(
        fast_inner(neg, 0, 0.4, np.zeros(2)).value, abs=1e-9)
    with pytest.raises(InfeasibleError):
        ref.inner_bruteforce(inst, 0, 0.1, np.zeros(2))


def test_descending_order_ties_by_index():
    np.testing.assert_array_equal(descending_order(np.array([1.0, 2.0, 1.0, 2.0])), [1, 3, 0, 2])


@st.composite
def inner_cases(draw):
    inst = draw(small_instances(max_m=8, positive=False))
    i = draw(st.integers(0, inst.n - 1))
    lo = feasible_nopurchase_bound(inst, i)
    t = draw(st.floats(0, 1))
    y0 = min(lo + t * (inst.lambdas[i] - lo), inst.lambdas[i])
    eta = np.array(draw(st.lists(st.floats(0, 3), min_size=inst.m, max_size=inst.m)))
    return inst, i, y0, eta


@given(inner_cases())
def test_fast_inner_matches_simplex(case):
    inst, i, y0, eta = case
    sol = fast_inner(inst, i, y0, eta)
    assert sol.value == pytest.approx(ref.inner_bruteforce(inst, i, y0, eta), abs=1e-9)


@given(inner_cases())
def test_inner_row_invariants(case):
    inst, i, y0, eta = case
    row = fast_inner(inst, i, y0, eta).y_row
    w, w0, lam = inst.weight_row(i), inst.w0[i], inst.lambdas[i]
    assert row.sum() == pytest.approx(lam, abs=1e-9)
    assert row[1:].sum() == pytest.approx(lam - row[0], abs=1e-9)
    assert np.all(row >= 0)
    assert np.all(row[1:] <= w * row[0] / w0 + 1e-9)
    assert np.all(row[1:][w == 0] == 0)


@given(inner_cases())
def test_greedy_structure(case):
    inst, i, y0, eta = case
    row = fast_inner(inst, i, y0, eta).y_row
    coef = inst.prices - eta
    cap = inst.weight_row(i) * row[0] / inst.w0[i]
    for j in range(inst.m):
        for k in range(inst.m):
            if coef[j] > coef[k] + 1e-12 and row[k + 1] > 0:
                assert row[j + 1] == pytest.approx(cap[j], abs=1e-9)


# --- golden-section over y0 -----------------------------------------------------

def test_golden_plateau_example():
    inst = _one([2.0, 1.0], [1.0, 1.0])
    sol = solve_inner_golden(inst, 0, np.zeros(2))
    assert sol.value == pytest.approx(1.0, abs=1e-6)
    assert 1 / 3 - 1e-9 <= sol.y_row[0] <= 0.5 + 1e-9


def test_golden_nonpositive_coefficients():
    inst = _one([0.5, 0.2], [1.0, 1.0])
    eta = np.array([1.0, 1.0])
    sol = solve_inner_golden(inst, 0, eta)
    assert sol.value >= _grid_best(inst, 0, eta) - 1e-6
    assert sol.y_row[0] == pytest.approx(1.0)


def test_golden_single_product_peak():
    sol = solve_inner_golden(_one([1.0], [1.0]), 0, np.zeros(1))
    assert sol.value == pytest.approx(0.5, abs=1e-6)
    assert sol.y_row[0] == pytest.approx(0.5, abs=1e-3)


def test_golden_rejects_bad_tol():
    with pytest.raises(UsageError):
        solve_inner_golden(_one([1.0], [1.0]), 0, np.zeros(1), tol=0.0)


@given(small_instances(max_m=8), st.data())
def test_golden_close_to_grid(inst, data):
    i = data.draw(st.integers(0, inst.n - 1))
    eta = np.array(data.draw(st.lists(st.floats(0, 2), min_size=inst.m, max_size=inst.m)))
    v = solve_inner_golden(inst, i, eta).value
    assert v >= _grid_best(inst, i, eta) - 1e-4 * (1 + abs(v))


@given(small_instances(max_m=8, positive=False), st.data())
def test_value_curve_is_unimodal(inst, data):
    i = data.draw(st.integers(0, inst.n - 1))
    eta = np.array(data.draw(st.lists(st.floats(0, 2), min_size=inst.m, max_size=inst.m)))
    lo = feasible_nopurchase_bound(inst, i)
    z = inner_value_curve(inst, i, eta, np.linspace(lo, inst.lambdas[i], 100))
    top = int(np.argmax(z))
    assert np.all(np.diff(z[:top + 1]) >= -1e-10)
    assert np.all(np.diff(z[top:]) <= 1e-10)


@given(small_instances(max_m=6), st.data())
def test_golden_row_is_feasible(inst, data):
    i = data.draw(st.integers(0, inst.n - 1))
    eta = np.array(data.draw(st.lists(st.floats(0, 2), min_size=inst.m, max_size=inst.m)))
    row = solve_inner_golden(inst, i, eta).y_row
    assert row.sum() == pytest.approx(inst.lambdas[i], abs=1e-9)
    assert np.all(row[1:] <= inst.weight_row(i) * row[0] / inst.w0[i] + 1e-9)
