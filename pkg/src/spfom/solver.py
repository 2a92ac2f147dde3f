"""Stochastic primal-dual first-order method (SPFOM) for the SBLP.

Each iteration samples a mini-batch of customers without replacement,
re-solves their inner problems exactly against the current dual snapshot,
swaps the new rows into the primal state (column sums and objective are
updated by the row deltas, never by a full scan), and takes one projected
dual step on the capacity residual ``c - sum_i y_i``. The penalised step
shrinks the duals by ``1 - tau*mu`` first.

The parallel variant samples ``k * B`` customers, splits them into ``k``
contiguous chunks, solves the chunks in a ``prange`` against the same
snapshot and merges the per-worker deltas in worker order. ``k = 1`` runs
exactly the serial code path.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from numba import njit, prange

from . import rng as rng_mod
from .errors import ConfigurationError, ConsistencyError, UsageError
from .inner import DEFAULT_TOL, _golden_row
from .instance import Instance

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DualPrices:
    """Non-negative capacity multipliers (bid prices)."""

    eta: np.ndarray

    def __post_init__(self):
        eta = np.array(self.eta, dtype=float)
        if np.any(eta < 0):
            raise UsageError("dual prices must be non-negative")
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)

    @classmethod
    def zeros(cls, m: int) -> "DualPrices":
        return cls(np.zeros(m))


@dataclass
class PrimalState:
    """Rows ``y[i] = (y_i0, y_i1, ..., y_im)`` with cached aggregates."""

    y: np.ndarray
    col_sums: np.ndarray
    objective_cache: float

    @classmethod
    def initial(cls, inst: Instance) -> "PrimalState":
        """All mass on no-purchase: feasible, zero column sums."""
        y = np.zeros((inst.n, inst.m + 1))
        y[:, 0] = inst.lambdas
        return cls(y=y, col_sums=np.zeros(inst.m), objective_cache=0.0)

    @classmethod
    def from_rows(cls, inst: Instance, y) -> "PrimalState":
        y = np.array(y, dtype=float)
        col_sums = y[:, 1:].sum(axis=0)
        return cls(y=y, col_sums=col_sums, objective_cache=float(col_sums @ inst.prices))

    def copy(self) -> "PrimalState":
        return PrimalState(self.y.copy(), self.col_sums.copy(), self.objective_cache)

    def audit_col_sums(self) -> float:
        """Largest gap between cached and recomputed column sums."""
        return float(np.abs(self.y[:, 1:].sum(axis=0) - self.col_sums).max(initial=0.0))


@dataclass
class SolverParams:
    """Knobs of :func:`spfom_solve`.

    ``mu`` may be a number or ``"auto"`` for ``1 / (2R)``. A
    ``stagnation_window`` of ``None`` means ``max(100, n // 100)``.
    """

    tau: float = 0.1
    mu: float | str = 0.5
    batch_size: int = 10
    workers: int = 1
    golden_tol: float = DEFAULT_TOL
    stagnation_window: int | None = None
    stagnation_rel_tol: float = 1e-9
    max_iters: int = 100_000
    seed: int = 0
    penalized: bool = True
    record_trajectory: bool = False
    trajectory_every: int | None = None

    def resolve(self, inst: Instance) -> "SolverParams":
        """Concrete copy for ``inst``: numeric ``mu``, window and checks."""
        mu = default_mu(inst) if self.mu == "auto" else float(self.mu)
        window = self.stagnation_window
        if window is None:
            window = max(100, inst.n // 100)
        p = replace(self, mu=mu, stagnation_window=int(window))
        if p.tau <= 0:
            raise ConfigurationError("tau must be positive")
        if p.mu < 0:
            raise ConfigurationError("mu must be non-negative")
        if p.penalized and p.tau * p.mu > 1:
            raise ConfigurationError(f"tau*mu = {p.tau * p.mu:g} exceeds 1")
        if p.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if not 1 <= p.batch_size * p.workers <= inst.n:
            raise ConfigurationError(
                f"batch_size*workers = {p.batch_size * p.workers} must lie in [1, n={inst.n}]")
        if p.golden_tol <= 0 or p.max_iters < 1 or p.stagnation_window < 1:
            raise ConfigurationError("golden_tol, max_iters and stagnation_window must be positive")
        return p


@dataclass
class SolveReport:
    objective: float
    duals: DualPrices
    primal: PrimalState
    iterations: int
    overload_ratio: float
    trajectory: np.ndarray | None = None  # columns: iter, objective, dual_norm, dist_sq
    stopped: str = "max_iters"
    params: SolverParams | None = field(default=None, repr=False)
    coef_sum_max: float = float("nan")  # largest sum_j (r_j - eta_j) seen
    resource_sums: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "eta": self.duals.eta.tolist(),
            "iterations": self.iterations,
            "overload_ratio": self.overload_ratio,
            "stopped": self.stopped,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def trajectory_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "objective", "dual_norm", "dist_sq"])
        if self.trajectory is not None:
            for it, obj, dn, dist in self.trajectory:
                w.writerow([int(it), repr(obj), repr(dn), "" if math.isnan(dist) else repr(dist)])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# scalar pieces
# ---------------------------------------------------------------------------


def compute_R(inst: Instance) -> float:
    """Largest weight-averaged price over customers."""
    sums = inst.weight_sums
    if np.any(sums <= 0):
        bad = int(np.flatnonzero(sums <= 0)[0])
        raise ConfigurationError(f"customer {bad} has all-zero weights; R is undefined")
    return float(np.max((inst.weights @ inst.prices) / sums))


def default_mu(inst: Instance) -> float:
    R = compute_R(inst)
    if R <= 0:
        raise ConfigurationError("R = 0 (all prices zero); supply mu explicitly")
    return 1.0 / (2.0 * R)


def _eta(duals) -> np.ndarray:
    return np.asarray(getattr(duals, "eta", duals), dtype=float)


def dual_step(duals, col_sums, capacities, tau: float) -> DualPrices:
    """Projected ascent ``max(0, eta - tau (c - colsum))``."""
    if tau <= 0:
        raise ConfigurationError("tau must be positive")
    eta = _eta(duals)
    return DualPrices(np.maximum(0.0, eta - tau * (np.asarray(capacities) - col_sums)))


def dual_step_penalized(duals, col_sums, capacities, tau: float, mu: float) -> DualPrices:
    """Penalised step ``max(0, (1 - tau mu) eta - tau (c - colsum))``."""
    if tau <= 0 or mu < 0:
        raise ConfigurationError("tau must be positive and mu non-negative")
    if tau * mu > 1:
        raise ConfigurationError(f"tau*mu = {tau * mu:g} exceeds 1")
    eta = _eta(duals)
    return DualPrices(np.maximum(0.0, (1.0 - tau * mu) * eta
                                 - tau * (np.asarray(capacities) - col_sums)))


def objective_value(primal: PrimalState, inst: Instance) -> float:
    """Recompute ``sum y_ij r_j`` and check it against the cache."""
    fresh = float(primal.y[:, 1:].sum(axis=0) @ inst.prices)
    if abs(fresh - primal.objective_cache) > 1e-8 * max(1.0, abs(fresh)):
        raise ConsistencyError(
            f"objective cache {primal.objective_cache!r} drifted from recomputation {fresh!r}")
    return fresh


def overload(sums, capacities) -> float:
    capacities = np.asarray(capacities, dtype=float)
    return float(np.maximum(0.0, np.asarray(sums) - capacities).sum() / capacities.sum())


def overload_ratio(primal: PrimalState, inst: Instance) -> float:
    """Capacity-normalised total violation ``sum_j (colsum_j - c_j)^+ / sum_j c_j``."""
    return overload(primal.col_sums, inst.capacities)


# ---------------------------------------------------------------------------
# main loop
# ---------------------------------------------------------------------------


@njit(cache=True)
def _fetch_row(i, dense, indptr, indices, data, out):
    if dense.shape[0] > 0:
        out[:] = dense[i]
    else:
        out[:] = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            out[indices[p]] = data[p]


def _make_loop(parallel: bool):
    @njit(cache=True, parallel=parallel)
    def loop(gen, perm, y, col_sums, res_sums, eta, obj0, prices, caps, w0, lam,
             dense, indptr, indices, data, inc_ptr, inc_idx, inc_val,
             k, B, tau, shrink, tol, max_iters, window, rel_tol,
             every, traj, ref):
        n, m1 = y.shape
        m = m1 - 1
        kb = k * B
        coef = np.empty(m)
        coef_sorted = np.empty(m)
        deltas = np.zeros((k, m))
        delta = np.empty(m)
        obj = obj0
        stagnant = 0
        stopped = 0  # 0 max_iters, 1 stagnation
        coef_sum_max = -np.inf
        n_rec = 0
        t = 0
        for t in range(1, max_iters + 1):
            for j in range(m):
                acc = prices[j]
                for q in range(inc_ptr[j], inc_ptr[j + 1]):
                    acc -= inc_val[q] * eta[inc_idx[q]]
                coef[j] = acc
            csum = coef.sum()
            if csum > coef_sum_max:
                coef_sum_max = csum
            order = np.argsort(-coef, kind="mergesort")
            for j in range(m):
                coef_sorted[j] = coef[order[j]]
            # partial Fisher-Yates: perm[:kb] becomes a uniform kb-subset
            for s in range(kb):
                r = s + int(gen.random() * (n - s))
                if r >= n:
                    r = n - 1
                perm[s], perm[r] = perm[r], perm[s]
            for wk in prange(k):
                wrow = np.empty(m)
                wbuf = np.empty(m)
                dw = deltas[wk]
                dw[:] = 0.0
                for b in range(wk * B, (wk + 1) * B):
                    i = perm[b]
                    _fetch_row(i, dense, indptr, indices, data, wrow)
                    for j in range(m):
                        wbuf[j] = wrow[order[j]]
                    y0 = _golden_row(wbuf, w0[i], lam[i], coef_sorted, tol)
                    ratio = y0 / w0[i]
                    budget = lam[i] - y0
                    y[i, 0] = y0
                    for jj in range(m):
                        j = order[jj]
                        take = 0.0
                        if budget > 0.0:
                            take = min(wbuf[jj] * ratio, budget)
                            budget -= take
                        dw[j] += take - y[i, j + 1]
                        y[i, j + 1] = take
            delta[:] = deltas[0]
            for wk in range(1, k):  # merge in worker order
                for j in range(m):
                    delta[j] += deltas[wk, j]
            old_obj = obj
            dobj = 0.0
            for j in range(m):
                col_sums[j] += delta[j]
                dobj += delta[j] * prices[j]
                for q in range(inc_ptr[j], inc_ptr[j + 1]):
                    res_sums[inc_idx[q]] += inc_val[q] * delta[j]
            obj = old_obj + dobj
            for l in range(eta.shape[0]):
                eta[l] = max(0.0, shrink * eta[l] - tau * (caps[l] - res_sums[l]))

            if traj.shape[0] > 0 and t % every == 0 and n_rec < traj.shape[0]:
                traj[n_rec, 0] = t
                traj[n_rec, 1] = obj
                traj[n_rec, 2] = np.sqrt((eta * eta).sum())
                traj[n_rec, 3] = ((y - ref) ** 2).sum() if ref.shape[0] > 0 else np.nan
                n_rec += 1
            if abs(obj - old_obj) <= rel_tol * abs(old_obj):
                stagnant += 1
                if stagnant >= window:
                    stopped = 1
                    break
            else:
                stagnant = 0
        return t, obj, stopped, n_rec, coef_sum_max

    return loop


_loop_serial = _make_loop(False)
_loop_parallel = _make_loop(True)


def _incidence_csc(incidence, m):
    if incidence is None:
        return np.arange(m + 1), np.arange(m), np.ones(m)
    csc = sp.csc_matrix(np.asarray(incidence, dtype=float))
    csc.sort_indices()
    return csc.indptr.astype(np.int64), csc.indices.astype(np.int64), csc.data.astype(float)


def run_spfom(inst: Instance, params: SolverParams, *, incidence=None, capacities=None,
              init_duals=None, init_primal: PrimalState | None = None,
              reference_y=None, sampler: np.random.Generator | None = None) -> SolveReport:
    """Shared SPFOM loop.

    ``incidence`` (``L x m``) and ``capacities`` (length ``L``) generalise the
    capacity rows to ``incidence @ colsum <= capacities``; by default they are
    the identity and the instance capacities. ``reference_y`` adds the squared
    distance to a reference solution to the trajectory.

    Batches are drawn by a partial Fisher-Yates shuffle driven by
    ``sampler``. The ``k`` worker chunks of an iteration read the same dual
    snapshot, write disjoint rows and private deltas, and the deltas are
    merged in worker order, so the result does not depend on threading.
    """
    p = params.resolve(inst)
    n, m = inst.n, inst.m
    caps = np.array(inst.capacities if capacities is None else capacities, dtype=float)
    inc_ptr, inc_idx, inc_val = _incidence_csc(incidence, m)
    if incidence is not None and np.asarray(incidence).shape != (caps.shape[0], m):
        raise UsageError("incidence must have shape (len(capacities), m)")
    eta = np.zeros(caps.shape[0]) if init_duals is None else _eta(init_duals).copy()
    if eta.shape != caps.shape:
        raise UsageError("initial duals must match the number of capacity rows")
    if np.any(eta < 0):
        raise UsageError("initial duals must be non-negative")
    state = PrimalState.initial(inst) if init_primal is None else init_primal.copy()
    if state.y.shape != (n, m + 1):
        raise UsageError("initial primal state has the wrong shape")
    res_sums = state.col_sums.copy() if incidence is None else \
        np.asarray(incidence, dtype=float) @ state.col_sums
    sampler = sampler if sampler is not None else rng_mod.stream(p.seed, "sampling")

    if inst.is_sparse:
        w = inst.weights
        dense = np.empty((0, m))
        indptr, indices, data = (w.indptr.astype(np.int64), w.indices.astype(np.int64),
                                 w.data.astype(float))
    else:
        dense = np.ascontiguousarray(inst.weights, dtype=float)
        indptr = indices = np.empty(0, dtype=np.int64)
        data = np.empty(0)
    every = p.trajectory_every or max(1, math.ceil(p.max_iters / 1000))
    traj = np.empty((p.max_iters // every + 1 if p.record_trajectory else 0, 4))
    ref = np.empty((0, m + 1)) if reference_y is None else np.asarray(reference_y, dtype=float)
    if ref.shape[0] and ref.shape != state.y.shape:
        raise UsageError("reference_y must have the shape of the primal rows")

    def snapshot(t):
        dist = float(((state.y - ref) ** 2).sum()) if ref.shape[0] else float("nan")
        return (t, state.objective_cache, float(np.linalg.norm(eta)), dist)

    head = [snapshot(0)] if p.record_trajectory else []
    loop = _loop_parallel if p.workers > 1 else _loop_serial
    shrink = 1.0 - p.tau * p.mu if p.penalized else 1.0
    t, obj, stopped, n_rec, coef_sum_max = loop(
        sampler, np.arange(n, dtype=np.int64), state.y, state.col_sums, res_sums, eta,
        float(state.objective_cache), inst.prices, caps, inst.w0, inst.lambdas,
        dense, indptr, indices, data, inc_ptr, inc_idx, inc_val,
        p.workers, p.batch_size, p.tau, shrink, p.golden_tol, p.max_iters,
        p.stagnation_window, p.stagnation_rel_tol, every, traj, ref)
    state.objective_cache = obj
    trajectory = None
    if p.record_trajectory:
        rows = head + [tuple(r) for r in traj[:n_rec]]
        if rows[-1][0] != t:
            rows.append(snapshot(t))
        trajectory = np.array(rows, dtype=float)
    if log.isEnabledFor(logging.DEBUG):
        log.debug("spfom: %d iterations, objective %.6g, max sum(r - eta) %.4g", t, obj,
                  coef_sum_max)
    return SolveReport(
        objective=obj,
        duals=DualPrices(eta),
        primal=state,
        iterations=int(t),
        overload_ratio=overload(res_sums, caps),
        trajectory=trajectory,
        stopped="stagnation" if stopped else "max_iters",
        params=p,
        coef_sum_max=float(coef_sum_max),
        resource_sums=res_sums,
    )


def spfom_solve(inst: Instance, params: SolverParams | None = None, **kwargs) -> SolveReport:
    """Serial SPFOM (``workers`` is forced to 1)."""
    params = replace(params or SolverParams(), workers=1)
    return run_spfom(inst, params, **kwargs)


def spfom_solve_parallel(inst: Instance, params: SolverParams | None = None,
                         **kwargs) -> SolveReport:
    """SPFOM with ``params.workers`` threads sharing each dual snapshot."""
    return run_spfom(inst, params or SolverParams(), **kwargs)
