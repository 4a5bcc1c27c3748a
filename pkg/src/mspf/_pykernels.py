"""Pure numpy implementations of the hot particle-filter kernels.

These define the contracts for the compiled twins in ``_kernels.pyx``. The
resampling selectors perform the same floating-point operations in the same
order as the compiled versions, so the two backends choose identical indices.
"""

import numpy as np


def systematic_select(weights, m, u0):
    """Indices of m systematic draws from unnormalised ``weights``.

    Position k is (k + u0) / m * total with u0 in [0, 1); the selected index
    is the first one whose running weight sum exceeds the position.
    """
    cum = np.cumsum(weights)
    pos = (np.arange(m) + u0) / m * cum[-1]
    return _pick(cum, pos)


def multinomial_select(weights, uniforms):
    cum = np.cumsum(weights)
    return _pick(cum, np.asarray(uniforms) * cum[-1])


def _pick(cum, pos):
    # A position can round up to the total itself; it then takes the first
    # index whose running sum reaches the total, never a trailing zero weight.
    last = np.searchsorted(cum, cum[-1], side="left")
    return np.minimum(np.searchsorted(cum, pos, side="right"), last)


def shift_gather(hist, parent, front, out):
    """out[0] = front; out[a] = hist[a-1, parent] for a >= 1."""
    out[0] = front
    if hist.shape[0] > 1:
        np.take(hist[:-1], parent, axis=1, out=out[1:])


def ecdf_sq_distance(sorted_x, truth, points, dx):
    """sum_i (truth_i - #{x <= points_i}/m)**2 * dx for sorted samples x."""
    frac = np.searchsorted(sorted_x, points, side="right") / len(sorted_x)
    diff = truth - frac
    return float(np.dot(diff, diff) * dx)


def ecdf_sq_distance_rows(sorted_rows, truth, row_times, points, dx):
    """Row-wise :func:`ecdf_sq_distance`; row r is compared with
    ``truth[row_times[r]]``. Negative times yield 0."""
    out = np.zeros(sorted_rows.shape[0])
    for r, t in enumerate(row_times):
        if t >= 0:
            out[r] = ecdf_sq_distance(sorted_rows[r], truth[t], points, dx)
    return out
