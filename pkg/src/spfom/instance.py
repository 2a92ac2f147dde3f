"""Problem data for single-period, multi-period and bundled sales-based LPs.

An :class:`Instance` holds the market data of one SBLP: ``n`` customer types
and ``m`` products, product prices ``r_j`` and capacities ``c_j``, arrival
rates ``lambda_i``, no-purchase weights ``w_i0`` and preference weights
``w_ij``. Preference weights are either a dense ``(n, m)`` array or a
``scipy.sparse.csr_matrix``; every consumer goes through
:meth:`Instance.weight_rows` so both layouts behave identically.

Instances serialise to the canonical JSON layout::

    {"n": int, "m": int, "prices": [...], "capacities": [...],
     "lambdas": [...], "w0": [...],
     "weights": [[...], ...] | {"sparse": [[[j, w], ...], ...]},
     "shadow_weights": optional, same layout as weights}
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp

from . import rng as rng_mod
from .errors import ConfigurationError, DataError, StructuralError


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _freeze_weights(w):
    if w is None:
        return None
    if sp.issparse(w):
        w = sp.csr_matrix(w, dtype=float, copy=True)
        w.sum_duplicates()
        w.sort_indices()
        return w
    return _frozen(w)


@dataclass(frozen=True, eq=False)
class Instance:
    """Market data of one sales-based LP.

    Arrays are copied and made read-only on construction. ``shadow_weights``
    switches the choice model from MNL to GAM for every customer at once.
    """

    prices: np.ndarray
    capacities: np.ndarray
    w0: np.ndarray
    weights: Any
    lambdas: np.ndarray | None = None
    shadow_weights: Any = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "prices", _frozen(self.prices))
        set_(self, "capacities", _frozen(self.capacities))
        set_(self, "w0", _frozen(self.w0))
        set_(self, "weights", _freeze_weights(self.weights))
        set_(self, "shadow_weights", _freeze_weights(self.shadow_weights))
        if self.prices.ndim != 1 or self.capacities.shape != self.prices.shape:
            raise StructuralError("prices and capacities must be 1-d arrays of length m")
        if self.weights.ndim != 2 or self.weights.shape[1] != self.prices.shape[0]:
            raise StructuralError(
                f"weights must have shape (n, m={self.prices.shape[0]}), got {self.weights.shape}")
        if self.w0.shape != (self.weights.shape[0],):
            raise StructuralError("w0 must have length n")
        lambdas = np.ones(self.n) if self.lambdas is None else self.lambdas
        set_(self, "lambdas", _frozen(lambdas))
        if self.lambdas.shape != (self.n,):
            raise StructuralError("lambdas must have length n")
        if self.shadow_weights is not None and self.shadow_weights.shape != self.weights.shape:
            raise StructuralError("shadow_weights must match the shape of weights")

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def m(self) -> int:
        return self.weights.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.weights)

    @property
    def is_gam(self) -> bool:
        return self.shadow_weights is not None

    def weight_rows(self, idx) -> np.ndarray:
        """Dense ``(len(idx), m)`` copy of the selected weight rows."""
        idx = np.asarray(idx, dtype=np.intp)
        if self.is_sparse:
            return self.weights[idx].toarray()
        return self.weights[idx]

    def shadow_rows(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.intp)
        if sp.issparse(self.shadow_weights):
            return self.shadow_weights[idx].toarray()
        return self.shadow_weights[idx]

    def weight_row(self, i: int) -> np.ndarray:
        return self.weight_rows([i])[0]

    @property
    def weight_sums(self) -> np.ndarray:
        """Per-customer total product weight ``sum_j w_ij``."""
        if "weight_sums" not in self._cache:
            s = np.asarray(self.weights.sum(axis=1)).ravel()
            s.setflags(write=False)
            self._cache["weight_sums"] = s
        return self._cache["weight_sums"]

    def dense_weights(self) -> np.ndarray:
        return self.weights.toarray() if self.is_sparse else np.array(self.weights)

    def replace(self, **changes) -> "Instance":
        changes.setdefault("_cache", {})
        return replace(self, **changes)

    def to_sparse(self) -> "Instance":
        sw = None if self.shadow_weights is None else sp.csr_matrix(self.shadow_weights)
        return self.replace(weights=sp.csr_matrix(self.weights), shadow_weights=sw)

    def to_dense(self) -> "Instance":
        sw = self.shadow_weights
        if sp.issparse(sw):
            sw = sw.toarray()
        return self.replace(weights=self.dense_weights(), shadow_weights=sw)

    def subset(self, idx) -> "Instance":
        """Instance restricted to the customers in ``idx`` (same products)."""
        idx = np.asarray(idx, dtype=np.intp)
        sw = None if self.shadow_weights is None else self.shadow_weights[idx]
        return self.replace(weights=self.weights[idx], w0=self.w0[idx],
                            lambdas=self.lambdas[idx], shadow_weights=sw)

    def restrict_products(self, keep) -> "Instance":
        """Instance over the products in ``keep`` only (same customers)."""
        keep = np.asarray(keep, dtype=np.intp)
        sw = None if self.shadow_weights is None else self.shadow_weights[:, keep]
        return self.replace(prices=self.prices[keep], capacities=self.capacities[keep],
                            weights=self.weights[:, keep], shadow_weights=sw)


# ---------------------------------------------------------------------------
# generation and validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GenerationConfig:
    """Uniform ranges ``(lo, hi)`` used by :func:`generate_uniform`."""

    prices: tuple[float, float] = (0.0, 1.0)
    capacities: tuple[float, float] = (0.0, 1.0)
    weights: tuple[float, float] = (0.0, 1.0)
    w0: tuple[float, float] | None = None  # None: same as weights
    arrival_rate: float = 1.0

    def check(self) -> None:
        for name in ("prices", "capacities", "weights", "w0"):
            rng_ = getattr(self, name)
            if rng_ is None:
                continue
            lo, hi = rng_
            if not (lo < hi) or hi <= 0 or lo < 0:
                raise ConfigurationError(f"invalid {name} range {rng_!r}")
        if self.arrival_rate <= 0:
            raise ConfigurationError("arrival_rate must be positive")


def _uniform(gen: np.random.Generator, bounds, size) -> np.ndarray:
    lo, hi = bounds
    # 1 - U[0,1) lies in (0, 1], so draws never hit the lower bound
    return lo + (hi - lo) * (1.0 - gen.random(size))


def generate_uniform(n: int, m: int, seed: int, config: GenerationConfig | None = None) -> Instance:
    """Draw prices, capacities and weights i.i.d. uniform on ``config`` ranges.

    Draw order on the generation stream is prices, capacities, ``w0`` and
    then the ``(n, m)`` weight matrix in row-major order, so the result is a
    pure function of ``(n, m, seed, config)``.
    """
    if n < 1 or m < 1:
        raise ConfigurationError("n and m must be positive")
    config = config or GenerationConfig()
    config.check()
    gen = rng_mod.stream(seed, "generation")
    prices = _uniform(gen, config.prices, m)
    capacities = _uniform(gen, config.capacities, m)
    w0 = _uniform(gen, config.w0 or config.weights, n)
    weights = _uniform(gen, config.weights, (n, m))
    return Instance(prices=prices, capacities=capacities, w0=w0, weights=weights,
                    lambdas=np.full(n, float(config.arrival_rate)))


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def raise_if_invalid(self) -> None:
        if self.violations:
            shown = "; ".join(self.violations[:5])
            more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
            raise DataError(f"invalid instance: {shown}{more}")


def _report_nonpositive(report, name, arr, strict=True):
    bad = np.flatnonzero(arr <= 0) if strict else np.flatnonzero(arr < 0)
    rel = "> 0" if strict else ">= 0"
    for k in bad:
        report.violations.append(f"{name}[{k}] must be {rel}")
    for k in np.flatnonzero(~np.isfinite(arr)):
        report.violations.append(f"{name}[{k}] must be finite")


def validate(inst: Instance) -> ValidationReport:
    """Check every data invariant and list violations with their indices."""
    report = ValidationReport()
    if inst.n < 1:
        report.violations.append("n must be >= 1")
    if inst.m < 1:
        report.violations.append("m must be >= 1")
    _report_nonpositive(report, "capacity", inst.capacities)
    _report_nonpositive(report, "price", inst.prices, strict=False)
    _report_nonpositive(report, "lambda", inst.lambdas)
    _report_nonpositive(report, "w0", inst.w0)
    data = inst.weights.data if inst.is_sparse else inst.weights
    if np.any(data < 0) or not np.all(np.isfinite(data)):
        dense = inst.dense_weights()
        for i, j in zip(*np.nonzero((dense < 0) | ~np.isfinite(dense))):
            report.violations.append(f"weight[{i}][{j}] must be finite and >= 0")
    for i in np.flatnonzero(inst.weight_sums <= 0):
        report.violations.append(f"customer {i} has no product with positive weight")
    if inst.shadow_weights is not None:
        sw = inst.shadow_weights
        sdata = sw.data if sp.issparse(sw) else sw
        if np.any(sdata < 0):
            report.violations.append("shadow_weights must be >= 0")
    return report


# ---------------------------------------------------------------------------
# multi-period and bundle containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MultiPeriodInstance:
    """Per-period customer data sharing one product list and one stock.

    Each period's ``capacities`` field is ignored; the stock available to
    the whole horizon is ``initial_capacities``.
    """

    periods: tuple[Instance, ...]
    initial_capacities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple(self.periods))
        object.__setattr__(self, "initial_capacities", _frozen(self.initial_capacities))
        if not self.periods:
            raise StructuralError("a multi-period instance needs at least one period")
        m = self.periods[0].m
        for t, p in enumerate(self.periods):
            if p.m != m:
                raise StructuralError(f"period {t} has m={p.m}, expected {m}")
            if not np.array_equal(p.prices, self.periods[0].prices):
                raise StructuralError(f"period {t} prices differ from period 0")
        if self.initial_capacities.shape != (m,):
            raise StructuralError("initial_capacities must have length m")

    @property
    def T(self) -> int:
        return len(self.periods)

    @property
    def m(self) -> int:
        return self.periods[0].m

    @property
    def prices(self) -> np.ndarray:
        return self.periods[0].prices


def stack_periods(mp: MultiPeriodInstance) -> Instance:
    """Concatenate all periods' customers into one instance.

    Rows keep period order (period 0 first); capacities become the shared
    initial stock. Periods interact only through that stock, so the stacked
    SBLP is the multi-period SBLP.
    """
    periods = mp.periods
    if any(p.is_sparse for p in periods):
        weights = sp.vstack([sp.csr_matrix(p.weights) for p in periods], format="csr")
    else:
        weights = np.vstack([p.weights for p in periods])
    shadow = None
    gam = [p.is_gam for p in periods]
    if any(gam):
        if not all(gam):
            raise StructuralError("either every period carries shadow weights or none does")
        shadow = np.vstack([p.shadow_rows(np.arange(p.n)) for p in periods])
    return Instance(
        prices=periods[0].prices,
        capacities=mp.initial_capacities,
        w0=np.concatenate([p.w0 for p in periods]),
        weights=weights,
        lambdas=np.concatenate([p.lambdas for p in periods]),
        shadow_weights=shadow,
    )


@dataclass(frozen=True, eq=False)
class BundleInstance:
    """Customers choosing among bundles that consume shared base resources.

    ``base`` is an instance whose products are the ``m`` bundles (its
    ``capacities`` are not used); ``incidence[l, j] = 1`` when bundle ``j``
    uses resource ``l``.
    """

    base: Instance
    incidence: np.ndarray
    resource_capacities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "incidence", _frozen(self.incidence))
        object.__setattr__(self, "resource_capacities", _frozen(self.resource_capacities))
        inc = self.incidence
        if inc.ndim != 2 or inc.shape[1] != self.base.m or inc.shape[0] < 1:
            raise StructuralError(
                f"incidence must have shape (L, m={self.base.m}), got {inc.shape}")
        if not np.all((inc == 0) | (inc == 1)):
            raise DataError("incidence entries must be 0 or 1")
        if np.any(inc.sum(axis=0) < 1):
            bad = np.flatnonzero(inc.sum(axis=0) < 1).tolist()
            raise DataError(f"bundles {bad} consume no resource")
        if self.resource_capacities.shape != (inc.shape[0],):
            raise StructuralError("resource_capacities must have length L")
        if np.any(self.resource_capacities <= 0):
            raise DataError("resource capacities must be > 0")

    @property
    def L(self) -> int:
        return self.incidence.shape[0]


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def _weights_to_json(w):
    if w is None:
        return None
    if sp.issparse(w):
        w = sp.csr_matrix(w)
        rows = []
        for i in range(w.shape[0]):
            lo, hi = w.indptr[i], w.indptr[i + 1]
            rows.append([[int(j), float(v)] for j, v in zip(w.indices[lo:hi], w.data[lo:hi])])
        return {"sparse": rows}
    return np.asarray(w).tolist()


def _weights_from_json(obj, n, m):
    if obj is None:
        return None
    if isinstance(obj, dict):
        if "sparse" not in obj:
            raise DataError("sparse weights must be given as {\"sparse\": [...]}")
        rows, cols, vals = [], [], []
        if len(obj["sparse"]) != n:
            raise StructuralError(f"sparse weights list {len(obj['sparse'])} rows, expected {n}")
        for i, row in enumerate(obj["sparse"]):
            for j, v in row:
                if not 0 <= int(j) < m:
                    raise StructuralError(f"sparse weight column {j} out of range in row {i}")
                rows.append(i)
                cols.append(int(j))
                vals.append(float(v))
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, m))
    arr = np.asarray(obj, dtype=float)
    if arr.shape != (n, m):
        raise StructuralError(f"weights have shape {arr.shape}, expected {(n, m)}")
    return arr


def instance_to_dict(inst: Instance) -> dict:
    out = {
        "n": inst.n,
        "m": inst.m,
        "prices": inst.prices.tolist(),
        "capacities": inst.capacities.tolist(),
        "lambdas": inst.lambdas.tolist(),
        "w0": inst.w0.tolist(),
        "weights": _weights_to_json(inst.weights),
    }
    if inst.shadow_weights is not None:
        out["shadow_weights"] = _weights_to_json(inst.shadow_weights)
    return out


def instance_from_dict(d: dict) -> Instance:
    try:
        n, m = int(d["n"]), int(d["m"])
        return Instance(
            prices=d["prices"],
            capacities=d["capacities"],
            lambdas=d.get("lambdas"),
            w0=d["w0"],
            weights=_weights_from_json(d["weights"], n, m),
            shadow_weights=_weights_from_json(d.get("shadow_weights"), n, m),
        )
    except KeyError as exc:
        raise DataError(f"instance JSON is missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"malformed instance JSON: {exc}") from None


def multiperiod_to_dict(mp: MultiPeriodInstance) -> dict:
    return {"periods": [instance_to_dict(p) for p in mp.periods],
            "initial_capacities": mp.initial_capacities.tolist()}


def multiperiod_from_dict(d: dict) -> MultiPeriodInstance:
    try:
        return MultiPeriodInstance(periods=[instance_from_dict(p) for p in d["periods"]],
                                   initial_capacities=d["initial_capacities"])
    except KeyError as exc:
        raise DataError(f"multi-period JSON is missing field {exc}") from None


def bundle_to_dict(b: BundleInstance) -> dict:
    out = instance_to_dict(b.base)
    out["incidence"] = b.incidence.astype(int).tolist()
    out["resource_capacities"] = b.resource_capacities.tolist()
    return out


def bundle_from_dict(d: dict) -> BundleInstance:
    try:
        return BundleInstance(base=instance_from_dict(d), incidence=d["incidence"],
                              resource_capacities=d["resource_capacities"])
    except KeyError as exc:
        raise DataError(f"bundle JSON is missing field {exc}") from None


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def save_instance(inst: Instance, path) -> None:
    atomic_write_text(path, json.dumps(instance_to_dict(inst)))


def load_instance(path) -> Instance:
    return instance_from_dict(read_json(path))


def load_any(path):
    """Load an Instance, MultiPeriodInstance or BundleInstance by its keys."""
    d = read_json(path)
    if not isinstance(d, dict):
        raise DataError(f"{path}: top-level JSON value must be an object")
    if "periods" in d:
        return multiperiod_from_dict(d)
    if "incidence" in d:
        return bundle_from_dict(d)
    return instance_from_dict(d)


def from_arrays(prices: Sequence[float], capacities: Sequence[float], w0, weights,
                lambdas=None, shadow_weights=None) -> Instance:
    """Convenience constructor for hand-written test instances."""
    return Instance(prices=prices, capacities=capacities, w0=w0, weights=np.atleast_2d(weights),
                    lambdas=lambdas, shadow_weights=shadow_weights)
