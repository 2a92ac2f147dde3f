"""Exact small-scale oracles.

* :func:`revised_simplex` -- dense two-phase revised simplex with Bland's
  rule, used for every tiny LP in the test-suite.
* :func:`simplex_solve_sblp` -- SBLP optimum and capacity duals. Tiny
  problems go through :func:`revised_simplex`; larger ones (up to the
  ``n <= 1000, m <= 20`` guard) go through HiGHS' dual simplex.
* :func:`cblp_enumerate_solve` -- the choice-based LP with one column per
  ``(customer, assortment)`` pair, for ``m <= 4``.
* :func:`inner_bruteforce` -- the fixed-``y_0`` inner LP solved by simplex.
* :func:`capacity_saturation_optimum` -- certified optimum when demand can
  exhaust every capacity (used at scales no simplex oracle can reach).
* :func:`penalized_optimum` -- the quadratically penalised SBLP as a QP.

All LPs are maximisation problems ``max c.x  s.t.  A x = b, x >= 0``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .choice import mnl_probability
from .errors import InfeasibleError, NumericalError, UsageError
from .inner import coefficients
from .instance import BundleInstance, Instance

TOL = 1e-9
REFACTOR_EVERY = 50
DENSE_LIMIT = 250_000  # rows * cols above which the SBLP oracle uses HiGHS


@dataclass
class StandardFormLP:
    """``max c.x  s.t.  A x = b,  x >= 0`` with labels for rows and columns."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    row_labels: list = field(default_factory=list)
    col_labels: list = field(default_factory=list)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        rows, cols = self.A.shape
        if self.b.shape != (rows,) or self.c.shape != (cols,):
            raise UsageError(f"inconsistent LP dimensions A{self.A.shape} b{self.b.shape} "
                             f"c{self.c.shape}")


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    objective: float
    duals: np.ndarray | None
    iterations: int
    basis: list = field(default_factory=list)


class _Tableau:
    """Basis inverse bookkeeping for the revised simplex."""

    def __init__(self, A, b, basis):
        self.A = A
        self.b = b
        self.basis = list(basis)
        self.pivots = 0
        self.refactor()

    def refactor(self):
        Bm = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(Bm)
        except np.linalg.LinAlgError:
            raise NumericalError(
                f"singular basis after {self.pivots} pivots "
                f"(condition number {np.linalg.cond(Bm):.3e})") from None
        cond = np.linalg.norm(Bm, 1) * np.linalg.norm(self.Binv, 1)
        if not np.isfinite(cond) or cond > 1e13:
            raise NumericalError(f"ill-conditioned basis: 1-norm condition estimate {cond:.3e} "
                                 f"after {self.pivots} pivots")

    def pivot(self, row, col, u):
        piv = u[row]
        self.Binv[row] /= piv
        others = np.arange(len(u)) != row
        self.Binv[others] -= np.outer(u[others], self.Binv[row])
        self.basis[row] = col
        self.pivots += 1
        if self.pivots % REFACTOR_EVERY == 0:
            self.refactor()


def _run_phase(tab: _Tableau, cost, allowed, max_iter):
    """Bland's-rule simplex on ``tab`` maximising ``cost``; returns status."""
    A = tab.A
    for it in range(max_iter):
        xB = tab.Binv @ tab.b
        pi = cost[tab.basis] @ tab.Binv
        reduced = cost - pi @ A
        reduced[tab.basis] = 0.0
        cand = np.flatnonzero(allowed & (reduced > TOL))
        if cand.size == 0:
            return "optimal", it
        q = int(cand[0])  # Bland: lowest-index improving column
        u = tab.Binv @ A[:, q]
        pos = u > TOL
        if not pos.any():
            return "unbounded", it
        ratios = np.full(u.shape, np.inf)
        ratios[pos] = np.maximum(xB[pos], 0.0) / u[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + TOL * max(1.0, abs(best)))
        row = int(min(ties, key=lambda r: tab.basis[r]))  # Bland: lowest leaving index
        tab.pivot(row, q, u)
    raise NumericalError(f"simplex did not terminate within {max_iter} iterations")


def revised_simplex(lp: StandardFormLP, max_iter: int = 100_000) -> LPResult:
    """Two-phase revised simplex with Bland's anti-cycling rule."""
    A = lp.A.copy()
    b = lp.b.copy()
    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1
    rows, cols = A.shape

    # slack-like unit columns seed the basis; artificials cover the rest
    basis = [-1] * rows
    for j in range(cols):
        col = A[:, j]
        nz = np.flatnonzero(col)
        if nz.size == 1 and col[nz[0]] == 1.0 and basis[nz[0]] == -1 and lp.c[j] == 0.0:
            basis[nz[0]] = j
    missing = [r for r in range(rows) if basis[r] == -1]
    n_art = len(missing)
    if n_art:
        art = np.zeros((rows, n_art))
        for k, r in enumerate(missing):
            art[r, k] = 1.0
            basis[r] = cols + k
        A = np.hstack([A, art])
    total = cols + n_art
    tab = _Tableau(A, b, basis)
    iterations = 0

    if n_art:
        cost1 = np.zeros(total)
        cost1[cols:] = -1.0
        status, it = _run_phase(tab, cost1, np.ones(total, dtype=bool), max_iter)
        iterations += it
        infeas = -float(cost1[tab.basis] @ (tab.Binv @ b))
        if infeas > 1e-7 * max(1.0, np.abs(b).max()):
            pi = cost1[tab.basis] @ tab.Binv
            return LPResult("infeasible", None, float("nan"), pi, iterations, tab.basis)
        # drive zero-level artificials out where a real column can replace them
        for r in range(rows):
            if tab.basis[r] >= cols:
                row_vals = tab.Binv[r] @ A[:, :cols]
                row_vals[[j for j in tab.basis if j < cols]] = 0.0
                cand = np.flatnonzero(np.abs(row_vals) > 1e-9)
                if cand.size:
                    q = int(cand[0])
                    tab.pivot(r, q, tab.Binv @ A[:, q])
    allowed = np.zeros(total, dtype=bool)
    allowed[:cols] = True
    cost2 = np.zeros(total)
    cost2[:cols] = lp.c
    status, it = _run_phase(tab, cost2, allowed, max_iter)
    iterations += it
    if status != "optimal":
        return LPResult(status, None, float("inf"), None, iterations, tab.basis)
    xB = tab.Binv @ b
    x = np.zeros(total)
    x[tab.basis] = xB
    x = np.maximum(x[:cols], 0.0)
    pi = cost2[tab.basis] @ tab.Binv
    pi[flip] *= -1
    return LPResult("optimal", x, float(lp.c @ x), pi, iterations, list(tab.basis))


# ---------------------------------------------------------------------------
# SBLP
# ---------------------------------------------------------------------------


@dataclass
class SBLPSolution:
    objective: float
    y: np.ndarray  # (n, m + 1), column 0 is no-purchase
    duals: np.ndarray  # capacity (or resource) shadow prices
    method: str


def _check_sblp_size(inst: Instance) -> None:
    if inst.n > 1000 or inst.m > 20:
        raise UsageError(f"SBLP oracle is limited to n <= 1000 and m <= 20 "
                         f"(got n={inst.n}, m={inst.m})")


def _sblp_blocks(inst: Instance, incidence=None, resource_caps=None):
    """Sparse blocks of the SBLP over variables ``y[i, 0..m]`` (row-major).

    Returns ``(objective, cap_rows, cap_rhs, balance_rows, lambdas, ratio_rows)``;
    ratio rows are cross-multiplied, ``w_i0 y_ij - w_ij y_i0 <= 0``, which
    keeps zero-weight products well defined.
    """
    n, m = inst.n, inst.m
    k = m + 1
    nv = n * k
    W = inst.dense_weights()
    obj = np.tile(np.concatenate([[0.0], inst.prices]), n)
    # capacity: sum_i y_ij (or incidence-weighted)
    cap_prod = sp.csr_matrix(
        (np.ones(n * m), (np.tile(np.arange(m), n),
                          (np.arange(n)[:, None] * k + 1 + np.arange(m)).ravel())),
        shape=(m, nv))
    if incidence is None:
        cap, rhs = cap_prod, inst.capacities
    else:
        cap, rhs = sp.csr_matrix(np.asarray(incidence, float)) @ cap_prod, resource_caps
    bal = sp.csr_matrix((np.ones(nv), (np.repeat(np.arange(n), k), np.arange(nv))), shape=(n, nv))
    ri = np.arange(n * m)
    ii = np.repeat(np.arange(n), m)
    jj = np.tile(np.arange(m), n)
    ratio = sp.csr_matrix(
        (np.concatenate([np.repeat(inst.w0, m), -W.ravel()]),
         (np.concatenate([ri, ri]), np.concatenate([ii * k + 1 + jj, ii * k]))),
        shape=(n * m, nv))
    return obj, sp.csr_matrix(cap), np.asarray(rhs, float), bal, inst.lambdas, ratio


def build_sblp_lp(inst: Instance, incidence=None, resource_caps=None) -> StandardFormLP:
    """Dense standard form with slack columns ``[capacity | ratio]``.

    The capacity slacks form an identity block in the capacity rows, the
    ``A = [M | I]`` layout; this is asserted on construction.
    """
    obj, cap, cap_rhs, bal, lam, ratio = _sblp_blocks(inst, incidence, resource_caps)
    n, m = inst.n, inst.m
    nv = n * (m + 1)
    nc = cap.shape[0]
    nr = ratio.shape[0]
    rows = nc + n + nr
    A = np.zeros((rows, nv + nc + nr))
    A[:nc, :nv] = cap.toarray()
    A[:nc, nv:nv + nc] = np.eye(nc)
    A[nc:nc + n, :nv] = bal.toarray()
    A[nc + n:, :nv] = ratio.toarray()
    A[nc + n:, nv + nc:] = np.eye(nr)
    assert np.array_equal(A[:nc, nv:nv + nc], np.eye(nc)), "capacity slack block must be I"
    assert not A[nc:, nv:nv + nc].any()
    b = np.concatenate([cap_rhs, lam, np.zeros(nr)])
    c = np.concatenate([obj, np.zeros(nc + nr)])
    col_labels = ([("y", i, j) for i in range(n) for j in range(m + 1)]
                  + [("cap_slack", j) for j in range(nc)]
                  + [("ratio_slack", i, j) for i in range(n) for j in range(m)])
    row_labels = ([("capacity", j) for j in range(nc)] + [("balance", i) for i in range(n)]
                  + [("ratio", i, j) for i in range(n) for j in range(m)])
    return StandardFormLP(A, b, c, row_labels, col_labels)


def solve_sblp_highs(inst: Instance, incidence=None, resource_caps=None) -> SBLPSolution:
    """HiGHS dual simplex on the sparse SBLP, without the dense size guard."""
    return _solve_highs(inst, incidence, resource_caps)


def _solve_highs(inst, incidence=None, resource_caps=None) -> SBLPSolution:
    obj, cap, cap_rhs, bal, lam, ratio = _sblp_blocks(inst, incidence, resource_caps)
    A_ub = sp.vstack([cap, ratio], format="csr")
    b_ub = np.concatenate([cap_rhs, np.zeros(ratio.shape[0])])
    res = linprog(-obj, A_ub=A_ub, b_ub=b_ub, A_eq=bal, b_eq=lam, bounds=(0, None),
                  method="highs-ds")
    if res.status != 0:
        raise NumericalError(f"HiGHS dual simplex failed: {res.message}")
    y = res.x.reshape(inst.n, inst.m + 1)
    duals = -res.ineqlin.marginals[:cap.shape[0]]
    return SBLPSolution(float(obj @ res.x), y, np.maximum(duals, 0.0), "highs-ds")


def _solve_dense(inst, incidence=None, resource_caps=None) -> SBLPSolution:
    lp = build_sblp_lp(inst, incidence, resource_caps)
    res = revised_simplex(lp)
    if res.status != "optimal":
        raise NumericalError(f"SBLP simplex ended with status {res.status}")
    nv = inst.n * (inst.m + 1)
    nc = inst.m if incidence is None else len(resource_caps)
    y = res.x[:nv].reshape(inst.n, inst.m + 1)
    return SBLPSolution(res.objective, y, np.maximum(res.duals[:nc], 0.0), "bland")


def simplex_solve_sblp(inst: Instance, method: str = "auto") -> SBLPSolution:
    """Exact vertex optimum of the SBLP and its capacity duals.

    ``method`` is ``"bland"`` (in-repo revised simplex), ``"highs"`` (HiGHS
    dual simplex) or ``"auto"`` (Bland's rule while the dense tableau stays
    small).
    """
    _check_sblp_size(inst)
    return _dispatch(inst, method, None, None)


def simplex_solve_bundle(binst: BundleInstance, method: str = "auto") -> SBLPSolution:
    """Optimum of the bundle LP (resource rows ``incidence @ sum_i y_i``)."""
    _check_sblp_size(binst.base)
    return _dispatch(binst.base, method, binst.incidence, binst.resource_capacities)


def _dispatch(inst, method, incidence, resource_caps):
    if method == "auto":
        nc = inst.m if incidence is None else incidence.shape[0]
        rows = nc + inst.n + inst.n * inst.m
        cols = inst.n * (inst.m + 1) + nc + inst.n * inst.m
        method = "bland" if rows * cols <= DENSE_LIMIT else "highs"
    if method == "bland":
        return _solve_dense(inst, incidence, resource_caps)
    if method == "highs":
        return _solve_highs(inst, incidence, resource_caps)
    raise UsageError(f"unknown method {method!r}")


def capacity_saturation_optimum(inst: Instance):
    """Certified optimum ``sum_j r_j c_j`` when demand can fill every product.

    Capacity rows bound the objective by ``sum_j r_j c_j``. A feasible point
    attaining it is built by offering each customer at most one product:
    offering ``{j}`` alone lets customer ``i`` buy up to
    ``lambda_i w_ij / (w_i0 + w_ij)``, and customers are dealt to products in
    index order until each capacity is met (the last one partially, which
    keeps its ratio constraint). Returns ``(objective, y)`` or ``None`` when
    the customers run out first.
    """
    W = inst.dense_weights()
    y = np.zeros((inst.n, inst.m + 1))
    y[:, 0] = inst.lambdas
    i = 0
    for j in range(inst.m):
        need = inst.capacities[j]
        while need > 0:
            if i >= inst.n:
                return None
            top = inst.lambdas[i] * W[i, j] / (inst.w0[i] + W[i, j])
            take = min(top, need)
            y[i, j + 1] = take
            y[i, 0] = inst.lambdas[i] - take
            need -= take
            i += 1
    return float(inst.prices @ inst.capacities), y


@dataclass
class PenalizedSolution:
    objective: float  # sum_ij y_ij r_j, without the penalty
    penalized_value: float
    y: np.ndarray
    col_sums: np.ndarray


def penalized_optimum(inst: Instance, mu: float, incidence=None,
                      resource_caps=None) -> PenalizedSolution:
    """Maximiser of ``r.y - (1/(2 mu)) sum_l (a_l.y - c_l)_+^2`` over the rows.

    This is the point the penalised dual step is attracted to: its
    stationarity condition is ``(a_l.y - c_l)_+ = mu * eta_l``. Solved as a
    convex QP with Clarabel through cvxpy. ``mu = 0`` gives the hard-capacity
    LP.
    """
    import cvxpy as cp

    if mu < 0:
        raise UsageError("mu must be non-negative")
    _check_sblp_size(inst)
    obj, cap, cap_rhs, bal, lam, ratio = _sblp_blocks(inst, incidence, resource_caps)
    x = cp.Variable(obj.size, nonneg=True)
    cons = [bal @ x == lam, ratio @ x <= 0]
    if mu == 0:
        cons.append(cap @ x <= cap_rhs)
        goal = obj @ x
    else:
        goal = obj @ x - cp.sum_squares(cp.pos(cap @ x - cap_rhs)) / (2.0 * mu)
    prob = cp.Problem(cp.Maximize(goal), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status != cp.OPTIMAL:
        raise NumericalError(f"penalised QP ended with status {prob.status}")
    xv = np.maximum(x.value, 0.0)
    y = xv.reshape(inst.n, inst.m + 1)
    return PenalizedSolution(float(obj @ xv), float(prob.value), y, y[:, 1:].sum(axis=0))


# ---------------------------------------------------------------------------
# CBLP and inner oracle
# ---------------------------------------------------------------------------


@dataclass
class CBLPSolution:
    objective: float
    x: dict  # (customer, assortment tuple) -> offer time, non-zero entries only
    duals: np.ndarray


def cblp_enumerate_solve(inst: Instance) -> CBLPSolution:
    """Choice-based LP over every assortment, solved by :func:`revised_simplex`."""
    n, m = inst.n, inst.m
    if m > 4 or n > 50:
        raise UsageError(f"CBLP enumeration is limited to m <= 4 and n <= 50 (got n={n}, m={m})")
    subsets = [s for k in range(m + 1) for s in itertools.combinations(range(m), k)]
    cols = [(i, s) for i in range(n) for s in subsets]
    nx = len(cols)
    A = np.zeros((m + n, nx + m))
    c = np.zeros(nx + m)
    for k, (i, s) in enumerate(cols):
        pi = mnl_probability(inst, i, list(s))[1:]
        c[k] = pi @ inst.prices
        A[:m, k] = pi
        A[m + i, k] = 1.0
    A[:m, nx:] = np.eye(m)
    b = np.concatenate([inst.capacities, inst.lambdas])
    res = revised_simplex(StandardFormLP(A, b, c))
    if res.status != "optimal":
        raise NumericalError(f"CBLP simplex ended with status {res.status}")
    x = {cols[k]: float(v) for k, v in enumerate(res.x[:nx]) if v > 1e-12}
    return CBLPSolution(res.objective, x, res.duals[:m])


def inner_bruteforce(inst: Instance, i: int, y_i0: float, duals) -> float:
    """Optimal value of customer ``i``'s inner LP with ``y_0`` fixed."""
    m = inst.m
    if m > 10:
        raise UsageError("inner_bruteforce is limited to m <= 10")
    coef = coefficients(inst, duals)
    caps = inst.weight_row(i) * y_i0 / inst.w0[i]
    budget = inst.lambdas[i] - y_i0
    # variables: y_1..y_m, s_1..s_m with y_j + s_j = cap_j and sum y = budget
    A = np.zeros((m + 1, 2 * m))
    A[:m, :m] = np.eye(m)
    A[:m, m:] = np.eye(m)
    A[m, :m] = 1.0
    b = np.concatenate([caps, [budget]])
    c = np.concatenate([coef, np.zeros(m)])
    res = revised_simplex(StandardFormLP(A, b, c))
    if res.status == "infeasible":
        raise InfeasibleError(
            f"no allocation of budget {budget} fits under caps summing to {caps.sum()}",
            certificate=float(budget - caps.sum()))
    if res.status != "optimal":
        raise NumericalError(f"inner LP ended with status {res.status}")
    return res.objective


def reduced_costs(lp: StandardFormLP, duals: np.ndarray) -> np.ndarray:
    """``c - A^T pi``; non-positive everywhere at an optimal dual."""
    return lp.c - duals @ lp.A
