"""Independent reference implementations used by the tests."""
import itertools

import numpy as np


def bounds_numpy(e, period, m):
    """Completion bounds for many task sets at once.

    ``e`` has shape (sets, n). Written from the formula directly, without
    the package's helpers; includes the n <= M cap.
    """
    e = np.asarray(e, dtype=float)
    n = e.shape[1]
    k = min(m - 1, n)
    top = -np.sort(-e, axis=1)[:, :k].sum(axis=1) if k > 0 else np.zeros(len(e))
    denom = m - top / period
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.maximum(top[:, None] - e, 0.0) / denom[:, None]
    r = period + e + frac
    r = np.where(denom[:, None] > 0, r, np.inf)
    if n <= m:
        r = np.minimum(r, period + e)
    return r


def admission_oracle(n, costs, period, m, deadline):
    """Best total cost over all granularity vectors in {1,2,3}^n that are
    feasible and respect the two-iteration structure (nothing is upgraded
    to the full cascade while some task is still colour-only).

    Returns None if no vector is feasible.
    """
    vecs = np.array(list(itertools.product((0, 1, 2), repeat=n)), dtype=int)
    structured = ~((vecs == 2).any(axis=1) & (vecs == 0).any(axis=1))
    vecs = vecs[structured]
    e = np.asarray(costs)[vecs]
    r = bounds_numpy(e, period, m)
    ok = (r <= deadline).all(axis=1) & (e.sum(axis=1) / period <= m + 1e-12)
    if not ok.any():
        return None
    return float(e.sum(axis=1)[ok].max())


def extreme_values(iv, rng):
    """Endpoints and an interior point of an interval."""
    return (iv.lo, iv.hi, float(rng.uniform(iv.lo, iv.hi)))
