"""Conditional logistic log-likelihood and its derivatives.

For stratum s with members j and linear predictor ``eta_j = x_j @ beta`` the
conditional likelihood is ``exp(eta_case) / sum_j exp(eta_j)``. It equals the
partial likelihood of a stratified Cox model in which every stratum shares
one event time, but is evaluated here directly, with the per-stratum maximum
subtracted before exponentiating.
"""

from __future__ import annotations

import numpy as np

from . import _backend
from .data import MatchedDataset
from .exceptions import InvalidArgumentError


def _coef(beta, p):
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (p,):
        raise InvalidArgumentError(
            f"coefficient vector has shape {beta.shape}, expected ({p},)"
        )
    if not np.all(np.isfinite(beta)):
        raise InvalidArgumentError("coefficients must be finite")
    return beta


def neg_log_likelihood(beta, data: MatchedDataset) -> float:
    """Negative conditional log-likelihood, summed over strata (no averaging)."""
    beta = _coef(beta, data.p)
    layout = data.check().layout
    return _backend.kernels.stratum_nll(layout.X @ beta, layout)


def gradient(beta, data: MatchedDataset) -> np.ndarray:
    """Gradient of :func:`neg_log_likelihood` with respect to ``beta``."""
    return nll_and_gradient(beta, data)[1]


def nll_and_gradient(beta, data: MatchedDataset):
    beta = _coef(beta, data.p)
    layout = data.check().layout
    value, w = _backend.kernels.stratum_nll_weights(layout.X @ beta, layout)
    return value, layout.X.T @ w


def hessian(beta, data: MatchedDataset) -> np.ndarray:
    """Observed information: ``sum_s X_s' (diag(pi) - pi pi') X_s``."""
    beta = _coef(beta, data.p)
    layout = data.check().layout
    _, w = _backend.kernels.stratum_nll_weights(layout.X @ beta, layout)
    pi = w.copy()
    pi[layout.offsets[:-1]] += 1.0
    H = np.zeros((data.p, data.p))
    for _, rows in layout.groups.values():
        Xg = layout.X[rows]  # (count, m, p)
        P = pi[rows]
        xbar = np.einsum("cm,cmp->cp", P, Xg)
        H += np.einsum("cm,cmp,cmq->pq", P, Xg, Xg) - xbar.T @ xbar
    return H


def null_neg_log_likelihood(data: MatchedDataset) -> float:
    """Value at ``beta = 0``: ``sum_s log(m_s)``."""
    sizes = data.check().layout.sizes
    return float(np.sum(np.log(sizes)))
