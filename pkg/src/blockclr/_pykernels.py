"""Pure numpy stratum kernels, used when the compiled extension is absent.

Strata are processed one size class at a time so every operation is a
vectorized reduction over a dense ``(count, m)`` block.
"""

import numpy as np


def _class_terms(E):
    # E: (count, m) linear predictors, case in column 0
    top = E.argmax(axis=1)
    mx = E[np.arange(E.shape[0]), top]
    ex = np.exp(E - mx[:, None])
    ex[np.arange(E.shape[0]), top] = 0.0
    rest = ex.sum(axis=1)
    return mx, top, ex, rest


def stratum_nll(eta, layout):
    total = 0.0
    for pos, rows in layout.groups.values():
        E = eta[rows]
        mx, _, _, rest = _class_terms(E)
        total += float(np.sum((mx - E[:, 0]) + np.log1p(rest)))
    return total


def stratum_nll_weights(eta, layout):
    """Return ``(nll, w)`` with ``w_i = pi_i - [i is the case]``."""
    w = np.empty_like(eta)
    total = 0.0
    for pos, rows in layout.groups.values():
        E = eta[rows]
        mx, top, ex, rest = _class_terms(E)
        total += float(np.sum((mx - E[:, 0]) + np.log1p(rest)))
        ex[np.arange(E.shape[0]), top] = 1.0
        W = ex / (1.0 + rest)[:, None]
        W[:, 0] -= 1.0
        w[rows] = W
    return total, w
