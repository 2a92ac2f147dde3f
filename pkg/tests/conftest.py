import numpy as np
import pytest
from hypothesis import settings, strategies as st

from spfom.inner import feasible_nopurchase_bound
from spfom.instance import Instance, from_arrays

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@st.composite
def small_instances(draw, max_n=6, max_m=6, gam=False, positive=True):
    """Random instances with every weight strictly positive by default."""
    n = draw(st.integers(1, max_n))
    m = draw(st.integers(1, max_m))
    seed = draw(st.integers(0, 2**32 - 1))
    gen = np.random.default_rng(seed)
    w = gen.uniform(0.05, 2.0, (n, m))
    if not positive:
        w[gen.random((n, m)) < 0.3] = 0.0
        w[np.arange(n), gen.integers(m, size=n)] = gen.uniform(0.05, 2.0, n)
    shadow = gen.uniform(0.0, 1.0, (n, m)) if gam else None
    return Instance(prices=gen.uniform(0.0, 2.0, m), capacities=gen.uniform(0.1, 2.0, m),
                    w0=gen.uniform(0.1, 2.0, n), weights=w,
                    lambdas=gen.uniform(0.5, 2.0, n), shadow_weights=shadow)


@pytest.fixture
def one_by_one():
    """n=1, m=1, r=1, c=10, w0=w1=1."""
    return from_arrays([1.0], [10.0], [1.0], [[1.0]])


def random_feasible_row(inst, i, u, t):
    """Feasible row of customer ``i``: ``t`` places y0 between its lower bound
    and lambda, ``u`` (in [0, 1]^m) shapes how the purchase budget spreads
    under the ratio caps."""
    lam, w0, w = inst.lambdas[i], inst.w0[i], inst.weight_row(i)
    lo = feasible_nopurchase_bound(inst, i)
    y0 = lo + t * (lam - lo)
    cap = w * y0 / w0
    budget = lam - y0
    base = cap * u
    if base.sum() >= budget:
        prod = base * (budget / base.sum()) if base.sum() > 0 else base
    else:
        prod = base + (budget - base.sum()) / (cap - base).sum() * (cap - base)
    return np.concatenate([[lam - prod.sum()], prod])
