"""NumPy implementations of the numerical kernels.

Always importable; used when the compiled extension is missing and as the
oracle the extension is tested against.
"""

import numpy as np
from scipy.special import erfc

_SQRT2 = np.sqrt(2.0)
# beyond this many noise standard deviations a Gaussian tail is below 1e-300
_FAR = 37.0


def piecewise_pdf(y, params):
    """Two-sided power-exponential density.

    ``params = (A1, mu1, b1, s1sq, A2, mu2, b2, s2sq, D)``; the first piece
    applies for ``y <= D``, the second for ``y > D``.
    """
    a1, m1, b1, s1, a2, m2, b2, s2, d = (float(p) for p in params)
    y = np.asarray(y, dtype=float)
    left = a1 * np.exp(-np.abs(y - m1) ** b1 / (2.0 * s1))
    right = a2 * np.exp(-np.abs(y - m2) ** b2 / (2.0 * s2))
    return np.where(y <= d, left, right)


def _upper_tail(x):
    return 0.5 * erfc(x / _SQRT2)


def interval_masses(y, weights, lo, hi, sigma):
    """``sum_j weights[j] * P(lo[i] < y[j] + N(0, sigma^2) < hi[i])`` for each i.

    Differences of Gaussian tails are taken on whichever side avoids
    cancellation, so tiny interval probabilities keep full relative accuracy.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    u = (lo[:, None] - y[None, :]) / sigma
    v = (hi[:, None] - y[None, :]) / sigma
    with np.errstate(invalid="ignore"):
        # upper side: Q(u) - Q(v); lower side: Q(-v) - Q(-u)
        upper = _upper_tail(u) - _upper_tail(v)
        lower = _upper_tail(-v) - _upper_tail(-u)
    p = np.where(u > -v, upper, lower)
    p = np.where(np.isnan(p), 0.0, p)
    return p @ w
