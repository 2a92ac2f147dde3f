"""Exact per-customer inner problem.

For fixed duals the customer's sub-problem is

    max  sum_j y_j * g_j        with g_j = r_j - eta_j
    s.t. y_0 + sum_j y_j = lambda,  0 <= y_j <= w_j * y_0 / w_0.

With ``y_0`` fixed, filling products greedily in descending ``g`` order is
optimal, and the resulting value ``z(y_0)`` is concave in ``y_0`` (it is the
value function of an LP in a right-hand side), so a golden-section search
over ``y_0`` recovers the optimum.

The batch kernels below work on a whole mini-batch at once: weight rows are
pre-permuted into descending-coefficient order (the sort is done once per
dual snapshot) and every golden-section step evaluates one point per
customer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InfeasibleError, UsageError
from .instance import Instance

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI2 = (3.0 - math.sqrt(5.0)) / 2.0
DEFAULT_TOL = 1e-3


@dataclass(frozen=True)
class InnerSolution:
    """``y_row[0]`` is the no-purchase quantity, ``y_row[j + 1]`` product j."""

    y_row: np.ndarray
    value: float


def coefficients(inst: Instance, duals) -> np.ndarray:
    """Per-product objective coefficients ``r_j - eta_j``."""
    eta = np.asarray(getattr(duals, "eta", duals), dtype=float)
    if eta.shape != (inst.m,):
        raise UsageError(f"duals must have length m={inst.m}, got shape {eta.shape}")
    return inst.prices - eta


def descending_order(coef: np.ndarray) -> np.ndarray:
    """Products by descending coefficient; ties keep ascending index."""
    return np.argsort(-coef, kind="stable")


def feasible_nopurchase_bound(inst: Instance, i: int) -> float:
    """Smallest ``y_0`` for which the ratio caps can absorb ``lambda - y_0``."""
    if not 0 <= i < inst.n:
        raise UsageError(f"customer index {i} outside [0, {inst.n})")
    w0 = inst.w0[i]
    return float(inst.lambdas[i] * w0 / (w0 + inst.weight_sums[i]))


# ---------------------------------------------------------------------------
# batch kernels
# ---------------------------------------------------------------------------


def greedy_fill(w_sorted, w0, budget, y0, coef_sorted):
    """Greedy allocation for a batch with ``y_0`` fixed.

    All arrays are already in descending-coefficient order. Returns the
    ``(B, m)`` allocation and the ``(B,)`` objective values.
    """
    caps = w_sorted * (y0 / w0)[:, None]
    before = np.zeros_like(caps)
    np.cumsum(caps[:, :-1], axis=1, out=before[:, 1:])
    y = np.minimum(caps, np.maximum(budget[:, None] - before, 0.0))
    return y, (y * coef_sorted).sum(axis=1)


@njit(cache=True)
def _fill_value(w, w0, lam, y0, coef):
    ratio = y0 / w0
    budget = lam - y0
    v = 0.0
    for j in range(w.shape[0]):
        if budget <= 0.0:
            break
        take = min(w[j] * ratio, budget)
        v += take * coef[j]
        budget -= take
    return v


@njit(cache=True)
def _golden_row(w, w0, lam, coef, tol):
    total = 0.0
    for j in range(w.shape[0]):
        total += w[j]
    lo = lam * w0 / (w0 + total)
    hi = lam
    a, b = lo, hi
    h = b - a
    target = tol * lam
    steps = 0
    if h > target:
        steps = int(math.ceil(math.log(target / h) / math.log(INV_PHI)))
    c = a + INV_PHI2 * h
    d = a + INV_PHI * h
    fc = _fill_value(w, w0, lam, c, coef)
    fd = _fill_value(w, w0, lam, d, coef)
    for _ in range(steps):
        h *= INV_PHI
        if fc >= fd:  # a maximiser lies in [a, d]
            b = d
            d, fd = c, fc
            c = a + INV_PHI2 * h
            fc = _fill_value(w, w0, lam, c, coef)
        else:
            a = c
            c, fc = d, fd
            d = a + INV_PHI * h
            fd = _fill_value(w, w0, lam, d, coef)
    fa = _fill_value(w, w0, lam, a, coef)
    fb = _fill_value(w, w0, lam, b, coef)
    # z is linear between the saturation points y0 = lam*w0/(w0 + W_k), so the
    # best value inside the final bracket sits on one of them or on an end
    best_x, best_f = c, fc
    for x, f in ((d, fd), (a, fa), (b, fb)):
        if f > best_f:  # first maximum wins: deterministic
            best_x, best_f = x, f
    cum_w = 0.0
    cum_v = 0.0
    for j in range(w.shape[0]):
        cum_w += w[j]
        cum_v += coef[j] * w[j]
        x = lam * w0 / (w0 + cum_w)
        if x < a:
            break
        if x <= b:
            f = cum_v * x / w0
            if f > best_f:
                best_x, best_f = x, f
    for x in (lo, hi):
        f = _fill_value(w, w0, lam, x, coef)
        if f > best_f:
            best_x, best_f = x, f
    return best_x


@njit(cache=True)
def _golden_rows(w_sorted, w0, lam, coef_sorted, tol, y0_out, y_out, val_out):
    for r in range(w_sorted.shape[0]):
        w = w_sorted[r]
        y0 = _golden_row(w, w0[r], lam[r], coef_sorted, tol)
        ratio = y0 / w0[r]
        budget = lam[r] - y0
        v = 0.0
        for j in range(w.shape[0]):
            take = 0.0
            if budget > 0.0:
                take = min(w[j] * ratio, budget)
                budget -= take
            y_out[r, j] = take
            v += take * coef_sorted[j]
        y0_out[r] = y0
        val_out[r] = v


def golden_batch(w_sorted, w0, lam, coef_sorted, tol=DEFAULT_TOL):
    """Golden-section search on ``y_0`` for every customer of a batch.

    The search interval is ``[lambda*w0/(w0+sum w), lambda]`` and shrinks
    until its width is at most ``tol * lambda``. Because ``z`` is piecewise
    linear with breaks where a product saturates, the final bracket is
    polished by also scoring every break inside it. The best of the bracket
    points, those breaks and both domain ends is returned.

    Returns ``(y0, y_sorted, values)``.
    """
    w_sorted = np.ascontiguousarray(w_sorted, dtype=float)
    B = w_sorted.shape[0]
    y0 = np.empty(B)
    y = np.empty_like(w_sorted)
    values = np.empty(B)
    _golden_rows(w_sorted, np.ascontiguousarray(w0, dtype=float),
                 np.ascontiguousarray(lam, dtype=float),
                 np.ascontiguousarray(coef_sorted, dtype=float), float(tol), y0, y, values)
    return y0, y, values


def solve_rows(inst: Instance, idx, coef: np.ndarray, order: np.ndarray | None = None,
               tol: float = DEFAULT_TOL):
    """Optimal rows ``(len(idx), m + 1)`` and values for the given customers."""
    idx = np.asarray(idx, dtype=np.intp)
    if order is None:
        order = descending_order(coef)
    w_sorted = inst.weight_rows(idx)[:, order]
    y0, y_sorted, values = golden_batch(w_sorted, inst.w0[idx], inst.lambdas[idx],
                                        coef[order], tol)
    rows = np.empty((idx.size, inst.m + 1))
    rows[:, 0] = y0
    rows[:, 1 + order] = y_sorted
    return rows, values


# ---------------------------------------------------------------------------
# single-customer API
# ---------------------------------------------------------------------------


def fast_inner(inst: Instance, i: int, y_i0: float, duals) -> InnerSolution:
    """Greedy optimum of customer ``i``'s inner problem with ``y_0`` fixed."""
    lower = feasible_nopurchase_bound(inst, i)
    lam = float(inst.lambdas[i])
    if y_i0 > lam * (1 + 1e-12):
        raise UsageError(f"y_i0={y_i0} exceeds lambda_i={lam}")
    if y_i0 < lower - 1e-12 * lam:
        raise InfeasibleError(
            f"y_i0={y_i0} is below the feasibility bound {lower} for customer {i}",
            certificate=lower)
    coef = coefficients(inst, duals)
    order = descending_order(coef)
    w = inst.weight_row(i)
    ratio = y_i0 / inst.w0[i]
    budget = lam - y_i0
    y = np.zeros(inst.m)
    for j in order:  # at most m steps even if budget is left over
        if budget <= 0:
            break
        take = min(w[j] * ratio, budget)
        y[j] = take
        budget -= take
    if budget > 1e-9 * lam:
        raise InfeasibleError(f"caps cannot absorb the remaining budget {budget}",
                              certificate=budget)
    row = np.concatenate([[y_i0], y])
    return InnerSolution(y_row=row, value=float(y @ coef))


def solve_inner_golden(inst: Instance, i: int, duals, tol: float = DEFAULT_TOL) -> InnerSolution:
    """Optimal row of customer ``i`` via golden-section search on ``y_0``."""
    if tol <= 0:
        raise UsageError("tol must be positive")
    if not 0 <= i < inst.n:
        raise UsageError(f"customer index {i} outside [0, {inst.n})")
    coef = coefficients(inst, duals)
    rows, values = solve_rows(inst, [i], coef, tol=tol)
    return InnerSolution(y_row=rows[0], value=float(values[0]))


def inner_value_curve(inst: Instance, i: int, duals, grid: np.ndarray) -> np.ndarray:
    """``z(y_0)`` on a grid of no-purchase quantities (for probes and oracles)."""
    coef = coefficients(inst, duals)
    order = descending_order(coef)
    grid = np.asarray(grid, dtype=float)
    w_sorted = np.tile(inst.weight_row(i)[order], (grid.size, 1))
    lam = np.full(grid.size, inst.lambdas[i])
    return greedy_fill(w_sorted, np.full(grid.size, inst.w0[i]), lam - grid, grid,
                       coef[order])[1]
