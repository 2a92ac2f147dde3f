"""Randomised nested-assortment policies recovered from SBLP rows.

Sort the options of customer ``i`` by the ratio ``q_j = y_ij / w_ij``
(no-purchase first, then descending, ties by index) and let ``S_l`` be the
first ``l`` products together with option 0. Offering ``S_l`` with
probability

    alpha_l = (q_l - q_{l+1}) * (w_i0 + sum_{k <= l} w_(k)) / lambda_i

(with ``q_{K+1} = 0`` after the last product) reproduces the row exactly
under MNL: the expected sales of product ``j`` telescope back to ``y_ij``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .choice import mnl_probability
from .errors import DataError, UsageError
from .instance import Instance

ROW_TOL = 1e-8
ATOM_TOL = 1e-12  # atoms below this are rounding noise of equal ratios


@dataclass(frozen=True)
class CustomerPolicy:
    """``order`` lists products by descending ratio; ``lengths[k]`` is the
    prefix length of the ``k``-th support atom and ``probs[k]`` its weight."""

    i: int
    order: np.ndarray
    lengths: np.ndarray
    probs: np.ndarray

    def assortment(self, length: int) -> np.ndarray:
        return np.sort(self.order[:length])

    def to_record(self) -> dict:
        return {"i": self.i, "order": self.order.tolist(),
                "alphas": [{"len": int(l), "p": float(p)}
                           for l, p in zip(self.lengths, self.probs)]}


@dataclass(frozen=True)
class AssortmentPolicy:
    customers: tuple[CustomerPolicy, ...]

    def __len__(self) -> int:
        return len(self.customers)

    def __getitem__(self, k) -> CustomerPolicy:
        return self.customers[k]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(c.to_record()) + "\n" for c in self.customers)


def _rows(primal):
    return np.asarray(getattr(primal, "y", primal), dtype=float)


def check_row(inst: Instance, i: int, row: np.ndarray, tol: float = ROW_TOL) -> None:
    """Raise :class:`DataError` unless ``row`` satisfies the SBLP row constraints."""
    w = inst.weight_row(i)
    lam, w0 = inst.lambdas[i], inst.w0[i]
    scale = tol * max(1.0, lam)
    if row.shape != (inst.m + 1,):
        raise DataError(f"row {i} must have length m+1={inst.m + 1}")
    if np.any(row < -scale):
        raise DataError(f"row {i} has negative entries")
    if abs(row.sum() - lam) > scale:
        raise DataError(f"row {i} sums to {row.sum()!r}, expected lambda={lam!r}")
    if np.any(w0 * row[1:] - w * row[0] > scale * max(1.0, w0)):
        bad = int(np.argmax(w0 * row[1:] - w * row[0]))
        raise DataError(f"row {i} violates the ratio constraint at product {bad}")


def recover_assortment_distribution(inst: Instance, primal, i: int) -> CustomerPolicy:
    """Nested-assortment distribution reproducing row ``i`` of ``primal``."""
    if not 0 <= i < inst.n:
        raise UsageError(f"customer index {i} outside [0, {inst.n})")
    row = _rows(primal)[i]
    check_row(inst, i, row)
    w = inst.weight_row(i)
    lam, w0 = inst.lambdas[i], inst.w0[i]
    active = np.flatnonzero(w > 0)
    ratios = np.maximum(row[1:][active], 0.0) / w[active]
    order = active[np.lexsort((active, -ratios))]  # descending ratio, then index
    q = np.concatenate([[max(row[0], 0.0) / w0], np.maximum(row[1:][order], 0.0) / w[order]])
    mass = w0 + np.concatenate([[0.0], np.cumsum(w[order])])
    gaps = np.maximum(q - np.concatenate([q[1:], [0.0]]), 0.0)
    alphas = gaps * mass / lam
    keep = np.flatnonzero(alphas > ATOM_TOL)
    return CustomerPolicy(i=i, order=order, lengths=keep, probs=alphas[keep])


def recover_policy(inst: Instance, primal) -> AssortmentPolicy:
    """Per-customer policies for every row."""
    return AssortmentPolicy(tuple(recover_assortment_distribution(inst, primal, i)
                                  for i in range(inst.n)))


def _expected_sales(inst: Instance, cp: CustomerPolicy) -> np.ndarray:
    """``lambda_i sum_l alpha_l pi_i(S_l)`` over slots ``0..m``."""
    out = np.zeros(inst.m + 1)
    for length, p in zip(cp.lengths, cp.probs):
        out += p * mnl_probability(inst, cp.i, cp.assortment(int(length)))
    return inst.lambdas[cp.i] * out


def policy_expected_revenue(inst: Instance, policy: AssortmentPolicy) -> float:
    total = 0.0
    for cp in policy.customers:
        total += float(_expected_sales(inst, cp)[1:] @ inst.prices)
    return total


def policy_consistency_residual(inst: Instance, policy: AssortmentPolicy, primal) -> float:
    """Largest ``|expected sales - y_ij|`` over all customers and slots."""
    y = _rows(primal)
    worst = 0.0
    for cp in policy.customers:
        worst = max(worst, float(np.abs(_expected_sales(inst, cp) - y[cp.i]).max()))
    return worst
