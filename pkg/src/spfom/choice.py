"""MNL and GAM choice probabilities and purchase sampling.

Probability vectors have length ``m + 1``: slot 0 is the no-purchase option
and slot ``j + 1`` is product ``j``. Assortments are sorted, duplicate-free
arrays of product indices in ``[0, m)``.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, UsageError
from .instance import Instance


def as_assortment(s, m: int) -> np.ndarray:
    """Validate ``s`` and return it as a sorted ``intp`` array."""
    arr = np.asarray(s, dtype=np.intp).ravel()
    if arr.size and (arr.min() < 0 or arr.max() >= m):
        raise UsageError(f"assortment {arr.tolist()} has indices outside [0, {m})")
    if arr.size > 1 and np.any(np.diff(arr) <= 0):
        raise UsageError(f"assortment {arr.tolist()} must be sorted and duplicate-free")
    return arr


def _check_customer(inst: Instance, i: int) -> None:
    if not 0 <= i < inst.n:
        raise UsageError(f"customer index {i} outside [0, {inst.n})")


def mnl_probability(inst: Instance, i: int, s) -> np.ndarray:
    """Purchase probabilities of customer ``i`` offered assortment ``s``."""
    _check_customer(inst, i)
    s = as_assortment(s, inst.m)
    w = inst.weight_row(i)
    out = np.zeros(inst.m + 1)
    denom = inst.w0[i] + w[s].sum()
    out[s + 1] = w[s] / denom
    out[0] = inst.w0[i] / denom
    return out


def gam_probability(inst: Instance, i: int, s) -> np.ndarray:
    """GAM probabilities; products outside ``s`` add their shadow weight.

    The no-purchase slot is ``1 - sum`` of the purchase probabilities, so it
    absorbs the shadow mass of excluded products.
    """
    if not inst.is_gam:
        raise ConfigurationError("instance has no shadow weights; GAM is undefined")
    _check_customer(inst, i)
    s = as_assortment(s, inst.m)
    w = inst.weight_row(i)
    v = inst.shadow_rows([i])[0]
    excluded = np.ones(inst.m, dtype=bool)
    excluded[s] = False
    denom = inst.w0[i] + w[s].sum() + v[excluded].sum()
    out = np.zeros(inst.m + 1)
    out[s + 1] = w[s] / denom
    out[0] = 1.0 - out[1:].sum()
    return out


def choice_probability(inst: Instance, i: int, s) -> np.ndarray:
    """GAM when the instance carries shadow weights, MNL otherwise."""
    return gam_probability(inst, i, s) if inst.is_gam else mnl_probability(inst, i, s)


def draw_from(probs: np.ndarray, u: float) -> int:
    """Inverse-CDF draw in index order; returns the slot index."""
    cdf = np.cumsum(probs)
    k = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(k, len(probs) - 1)


def sample_choice(inst: Instance, i: int, s, rng: np.random.Generator) -> int:
    """Sample one purchase; returns ``-1`` for no purchase, else the product.

    Consumes exactly one uniform from ``rng``.
    """
    probs = choice_probability(inst, i, s)
    k = draw_from(probs, rng.random())
    return k - 1


def batch_choice_probabilities(w: np.ndarray, w0: np.ndarray, offered: np.ndarray,
                               shadow: np.ndarray | None = None) -> np.ndarray:
    """Row-wise probabilities for many customers at once.

    ``offered`` is a boolean ``(B, m)`` mask. Returns ``(B, m + 1)`` with the
    same slot layout and arithmetic as :func:`mnl_probability`.
    """
    attract = np.where(offered, w, 0.0)
    denom = w0 + attract.sum(axis=1)
    if shadow is not None:
        denom = denom + np.where(offered, 0.0, shadow).sum(axis=1)
    out = np.empty((w.shape[0], w.shape[1] + 1))
    out[:, 1:] = attract / denom[:, None]
    if shadow is None:
        out[:, 0] = w0 / denom
    else:
        out[:, 0] = 1.0 - out[:, 1:].sum(axis=1)
    return out


def batch_draw(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorised :func:`draw_from`; returns product index or ``-1``."""
    cdf = np.cumsum(probs, axis=1)
    # searchsorted(side="right") counts entries <= target; match it exactly
    k = (cdf <= (u * cdf[:, -1])[:, None]).sum(axis=1)
    return np.minimum(k, probs.shape[1] - 1) - 1
