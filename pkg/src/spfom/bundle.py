"""Bundles drawing on shared base resources.

Bundle ``j`` uses every resource ``l`` with ``incidence[l, j] = 1``, so the
capacity rows become ``incidence @ sum_i y_i <= c`` and the duals live on the
``L`` resources. For fixed resource duals each bundle has the linear
coefficient ``r_j - (incidence^T eta)_j`` and the per-customer inner problem
is unchanged.

The step-size bound uses the spectral norm of the equality-form constraint
matrix, whose block rows are::

    resource  [ B0  B0 ... B0 | I_L   0     ]     B0 = [0 | incidence]
    demand    [ 1^T          |  0    0     ]     one row per customer
    ratio     [ W_1 ...  W_n |  0    I_nm  ]

with ``W_i`` holding the cross-multiplied ratio rows ``w_i0 y_ij - w_ij y_i0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, NumericalError, StructuralError, UsageError
from .instance import BundleInstance, generate_uniform
from .rng import stream
from .solver import SolveReport, SolverParams, run_spfom

POWER_TOL = 1e-8
POWER_MAX_ITERS = 10_000


@dataclass(frozen=True, eq=False)
class ResourceDuals:
    eta: np.ndarray

    def __post_init__(self):
        eta = np.array(self.eta, dtype=float)
        if eta.ndim != 1 or np.any(eta < 0):
            raise UsageError("resource duals must be a non-negative vector")
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)


def effective_bundle_coefficients(binst: BundleInstance, duals) -> np.ndarray:
    """``r_j - sum_l incidence[l, j] eta_l`` for every bundle."""
    eta = np.asarray(getattr(duals, "eta", duals), dtype=float)
    if eta.shape != (binst.L,):
        raise StructuralError(f"expected {binst.L} resource duals, got shape {eta.shape}")
    return binst.base.prices - binst.incidence.T @ eta


# ---------------------------------------------------------------------------
# augmented matrix
# ---------------------------------------------------------------------------


class AugmentedOperator:
    """Matrix-free products with the augmented constraint matrix.

    Columns are ordered ``[y_1, ..., y_n, s_res, s_ratio]`` with
    ``y_i = (y_i0, ..., y_im)``.
    """

    def __init__(self, binst: BundleInstance):
        base = binst.base
        self.n, self.m, self.L = base.n, base.m, binst.L
        self.inc = np.asarray(binst.incidence, dtype=float)
        self.W = base.dense_weights()
        self.w0 = np.asarray(base.w0, dtype=float)

    @property
    def shape(self) -> tuple[int, int]:
        n, m, L = self.n, self.m, self.L
        return L + n + n * m, n * (m + 1) + L + n * m

    def matvec(self, x: np.ndarray) -> np.ndarray:
        n, m, L = self.n, self.m, self.L
        y = x[:n * (m + 1)].reshape(n, m + 1)
        s_res = x[n * (m + 1):n * (m + 1) + L]
        s_ratio = x[n * (m + 1) + L:].reshape(n, m)
        res = self.inc @ y[:, 1:].sum(axis=0) + s_res
        demand = y.sum(axis=1)
        ratio = self.w0[:, None] * y[:, 1:] - self.W * y[:, :1] + s_ratio
        return np.concatenate([res, demand, ratio.ravel()])

    def rmatvec(self, u: np.ndarray) -> np.ndarray:
        n, m, L = self.n, self.m, self.L
        u_res, u_dem, u_rat = u[:L], u[L:L + n], u[L + n:].reshape(n, m)
        gy = np.empty((n, m + 1))
        gy[:, 0] = u_dem - (self.W * u_rat).sum(axis=1)
        gy[:, 1:] = (self.inc.T @ u_res)[None, :] + u_dem[:, None] + self.w0[:, None] * u_rat
        return np.concatenate([gy.ravel(), u_res, u_rat.ravel()])

    def to_sparse(self) -> sp.csr_matrix:
        """Explicit matrix (tests and tiny instances only)."""
        n, m, L = self.n, self.m, self.L
        k = m + 1
        b0 = sp.hstack([sp.csr_matrix((L, 1)), sp.csr_matrix(self.inc)])
        res = sp.hstack([sp.hstack([b0] * n), sp.identity(L), sp.csr_matrix((L, n * m))])
        dem = sp.hstack([sp.kron(sp.identity(n), np.ones((1, k))),
                         sp.csr_matrix((n, L + n * m))])
        blocks = []
        for i in range(n):
            wi = np.zeros((m, k))
            wi[:, 0] = -self.W[i]
            wi[:, 1:] = self.w0[i] * np.eye(m)
            blocks.append(sp.csr_matrix(wi))
        rat = sp.hstack([sp.block_diag(blocks), sp.csr_matrix((n * m, L)), sp.identity(n * m)])
        return sp.vstack([res, dem, rat], format="csr")


def spectral_norm(op: AugmentedOperator, tol: float = POWER_TOL,
                  max_iters: int = POWER_MAX_ITERS) -> float:
    """Largest singular value by power iteration on ``A A^T``.

    Stops when the Rayleigh quotient changes by less than ``tol`` relative;
    raises :class:`NumericalError` after ``max_iters`` iterations.
    """
    rows = op.shape[0]
    u = np.ones(rows) + np.linspace(0.0, 1.0, rows)  # deterministic, not orthogonal to the top vector
    u /= np.linalg.norm(u)
    est = 0.0
    for it in range(1, max_iters + 1):
        v = op.matvec(op.rmatvec(u))
        new = float(u @ v)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise NumericalError("augmented matrix annihilated the power-iteration vector")
        u = v / norm
        if it > 1 and abs(new - est) <= tol * abs(new):
            return float(np.sqrt(new))
        est = new
    raise NumericalError(
        f"power iteration did not converge in {max_iters} iterations "
        f"(last estimate {est:.6g})")


def bundle_mu_bound(binst: BundleInstance, R_tilde: float) -> float:
    """``rho_max^2 / (2 R_tilde)`` for the augmented matrix of ``binst``."""
    if not R_tilde > 0:
        raise ConfigurationError("R_tilde must be positive")
    rho = spectral_norm(AugmentedOperator(binst))
    return rho * rho / (2.0 * R_tilde)


def estimate_r_tilde(report: SolveReport, safety: float = 2.0) -> float:
    """``safety * max_t sum_j (r_j - (B^T eta^t)_j)`` observed during a run."""
    peak = report.coef_sum_max
    if not np.isfinite(peak) or peak <= 0:
        raise ConfigurationError("run never saw a positive coefficient sum; supply R_tilde")
    return safety * peak


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------


def spfom_solve_bundle(binst: BundleInstance, params: SolverParams | None = None,
                       **kwargs) -> SolveReport:
    """SPFOM with resource duals; ``eta`` in the report has length ``L``.

    ``params.mu == "auto"`` uses ``1/(2R)`` of the bundle prices as in the
    base solver.
    """
    params = params or SolverParams()
    return run_spfom(binst.base, params, incidence=binst.incidence,
                     capacities=binst.resource_capacities, **kwargs)


def identity_bundle(inst) -> BundleInstance:
    """Bundle view of a plain instance: one resource per product."""
    return BundleInstance(base=inst, incidence=np.eye(inst.m),
                          resource_capacities=np.array(inst.capacities))


def generate_bundle(n: int, m: int, L: int, seed: int, config=None) -> BundleInstance:
    """Uniform bundle instance; each bundle uses a random non-empty resource set.

    Incidence entries are fair coin flips (an empty column gets one random
    resource) and resource capacities are U(0, 1], both from the ``bundle``
    stream.
    """
    if L < 1:
        raise ConfigurationError("L must be >= 1")
    base = generate_uniform(n, m, seed, config)
    gen = stream(seed, "bundle")
    inc = (gen.random((L, m)) < 0.5).astype(float)
    for j in np.flatnonzero(inc.sum(axis=0) == 0):
        inc[gen.integers(L), j] = 1.0
    caps = 1.0 - gen.random(L)
    return BundleInstance(base=base, incidence=inc, resource_capacities=caps)
