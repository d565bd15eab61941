"""Block-wise elastic-net penalized conditional logistic regression.

The objective is

    nll(beta) + sum_b lambda_b * sum_{j in b} [alpha |beta_j| + (1 - alpha)/2 beta_j^2]

minimized by proximal gradient descent with backtracking on the smooth part
(likelihood plus ridge term) and soft-thresholding for the L1 part. The
accelerated variant is the monotone FISTA scheme: a momentum step is only
kept when it does not increase the objective, so the recorded objective
sequence never goes up.

With ``standardize=True`` (the default) the penalty acts on the coefficients
of unit-variance columns, ``gamma_j = beta_j * sd_j``; results are reported
on the original covariate scale together with the scales used.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .data import MatchedDataset
from .exceptions import InvalidArgumentError
from .likelihood import gradient, neg_log_likelihood

# relative objective increase attributed to floating-point rounding
_ROUNDING = 1e-13
# slack in the sufficient-decrease test of the line search (a few ulps)
_LINE_SEARCH_SLACK = 4 * np.finfo(float).eps


@dataclass(frozen=True)
class PenaltySpec:
    """Per-block penalty levels and the elastic-net mixing weight.

    ``lambdas[b]`` is the total penalty level of block b. It is split into an
    L1 weight ``lambdas[b] * alpha`` and an L2 weight
    ``lambdas[b] * (1 - alpha)``. ``unpenalized`` optionally flags columns
    exempt from any penalty.
    """

    lambdas: tuple
    alpha: float = 1.0
    unpenalized: tuple | None = None

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lambdas, dtype=np.float64))
        if lam.ndim != 1 or lam.size == 0:
            raise InvalidArgumentError("lambdas must be a non-empty vector")
        if not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise InvalidArgumentError(f"lambdas must be finite and >= 0, got {lam.tolist()}")
        if not (0.0 < float(self.alpha) <= 1.0):
            raise InvalidArgumentError(f"alpha must lie in (0, 1], got {self.alpha}")
        object.__setattr__(self, "lambdas", tuple(float(x) for x in lam))
        object.__setattr__(self, "alpha", float(self.alpha))
        if self.unpenalized is not None:
            object.__setattr__(self, "unpenalized", tuple(bool(x) for x in self.unpenalized))

    @property
    def n_blocks(self) -> int:
        return len(self.lambdas)

    def column_weights(self, block_sizes):
        """Per-column ``(l1, l2)`` weights for the given block layout."""
        block_sizes = tuple(block_sizes)
        if len(block_sizes) != self.n_blocks:
            raise InvalidArgumentError(
                f"penalty has {self.n_blocks} levels but the data has {len(block_sizes)} blocks"
            )
        lam = np.repeat(np.asarray(self.lambdas), block_sizes)
        if self.unpenalized is not None:
            mask = np.asarray(self.unpenalized, dtype=bool)
            if mask.shape != lam.shape:
                raise InvalidArgumentError(
                    f"unpenalized mask has {mask.size} entries, expected {lam.size}"
                )
            lam = np.where(mask, 0.0, lam)
        return lam * self.alpha, lam * (1.0 - self.alpha)

    def scaled(self, factor: float) -> "PenaltySpec":
        return PenaltySpec(tuple(factor * x for x in self.lambdas), self.alpha, self.unpenalized)


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 1000
    tolerance: float = 1e-8  # relative objective change
    coef_tolerance: float = 1e-6  # max coefficient change, fitting scale
    standardize: bool = True
    accelerate: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be >= 1")
        if self.tolerance <= 0 or self.coef_tolerance <= 0:
            raise InvalidArgumentError("tolerances must be positive")


@dataclass
class FitResult:
    beta: np.ndarray
    objective: float
    converged: bool
    iterations: int
    nonzero: np.ndarray
    penalty: PenaltySpec
    center: np.ndarray
    scale: np.ndarray
    neg_log_likelihood: float
    history: list = field(default_factory=list, repr=False)
    message: str = ""

    @property
    def scaled_beta(self) -> np.ndarray:
        """Coefficients on the scale the penalty was applied to."""
        return self.beta * self.scale


def penalty_value(beta, spec: PenaltySpec, block_sizes, scale=None) -> float:
    """Elastic-net penalty of ``beta``; with ``scale``, of ``beta * scale``."""
    beta = np.asarray(beta, dtype=np.float64)
    l1, l2 = spec.column_weights(block_sizes)
    if beta.shape != l1.shape:
        raise InvalidArgumentError(
            f"coefficient vector has shape {beta.shape}, expected ({l1.size},)"
        )
    if scale is not None:
        beta = beta * np.asarray(scale, dtype=np.float64)
    return float(np.sum(l1 * np.abs(beta)) + 0.5 * np.sum(l2 * beta * beta))


def _standardization(X, standardize):
    center = X.mean(axis=0)
    if not standardize:
        return center, np.ones(X.shape[1]), np.zeros(X.shape[1], dtype=bool)
    scale = X.std(axis=0)
    constant = ~(scale > 0)
    scale = np.where(constant, 1.0, scale)
    return center, scale, constant


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def fit_penalized(
    data: MatchedDataset,
    spec: PenaltySpec,
    options: SolverOptions | None = None,
    init=None,
) -> FitResult:
    """Fit the block-penalized conditional logistic model.

    Parameters
    ----------
    data : MatchedDataset
    spec : PenaltySpec
        One level per block of ``data``.
    options : SolverOptions, optional
    init : array_like, optional
        Starting coefficients on the original scale (warm start). Defaults
        to zero.

    Returns
    -------
    FitResult
        ``converged`` is False when the iteration cap was reached; the last
        iterate is still returned.
    """
    options = options or SolverOptions()
    data.check()
    l1, l2 = spec.column_weights(data.block_sizes)
    layout = data.layout
    kernels = _backend.kernels

    center, scale, constant = _standardization(layout.X, options.standardize)
    if constant.any():
        penalized_constant = constant & (l1 + l2 > 0)
        if penalized_constant.any():
            names = [data.names[j] for j in np.flatnonzero(penalized_constant)[:5]]
            warnings.warn(
                f"{int(penalized_constant.sum())} constant column(s) fixed at 0: {', '.join(names)}",
                RuntimeWarning,
                stacklevel=2,
            )
    free = ~constant
    Z = (layout.X - center) / scale

    def smooth(g):
        return kernels.stratum_nll(Z @ g, layout) + 0.5 * float(np.dot(l2 * g, g))

    def smooth_grad(g):
        value, w = kernels.stratum_nll_weights(Z @ g, layout)
        return value + 0.5 * float(np.dot(l2 * g, g)), Z.T @ w + l2 * g

    def nonsmooth(g):
        return float(np.dot(l1, np.abs(g)))

    if init is None:
        x = np.zeros(data.p)
    else:
        x = np.where(free, np.asarray(init, dtype=np.float64) * scale, 0.0)

    F = smooth(x) + nonsmooth(x)
    history = [F]
    y = x.copy()
    t = 1.0
    L = 1.0
    converged = False
    it = 0
    restarted = True  # y coincides with the accepted point x
    # Once a plain step from x changes the objective only at rounding level,
    # objective comparisons can no longer rank iterates. The solver then
    # "polishes": plain proximal gradient steps with the last step size that
    # passed the line search, which contract in coefficient space, so the
    # coefficient tolerance stays reachable.
    polishing = False
    for it in range(1, options.max_iterations + 1):
        fy, gy = smooth_grad(y)
        while True:
            z = soft_threshold(y - gy / L, l1 / L)
            z[~free] = 0.0
            d = z - y
            fz = smooth(z)
            if polishing or (
                fz <= fy + float(np.dot(gy, d)) + 0.5 * L * float(np.dot(d, d)) + _LINE_SEARCH_SLACK * abs(fy)
            ):
                break
            L *= 2.0
            if not np.isfinite(L):
                break
        Fz = fz + nonsmooth(z)
        noise = _ROUNDING * max(abs(F), 1.0)
        if polishing:
            accepted = Fz <= F + noise
            if not accepted:
                L *= 2.0  # step too long after all; retry from x
        else:
            accepted = Fz <= F
            if not accepted and restarted:
                # a plain step from x that passed the line search cannot
                # increase the objective in exact arithmetic
                if Fz - F > noise:
                    history.append(F)
                    converged = True
                    change = rel = 0.0
                    break
                polishing = accepted = True
        x_new = z if accepted else x
        F_new = Fz if accepted else F
        if options.accelerate and not polishing:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            if accepted:
                y = x_new + ((t - 1.0) / t_new) * (x_new - x)
                t = t_new
                restarted = False
            else:
                # momentum overshot: restart from the last accepted point
                y = x.copy()
                t = 1.0
                restarted = True
        else:
            y = x_new
            restarted = True

        change = float(np.max(np.abs(x_new - x))) if data.p else 0.0
        rel = abs(F - F_new) / max(abs(F), 1e-300)
        x, F = x_new, F_new
        history.append(F)
        if accepted and rel < options.tolerance and change < options.coef_tolerance:
            converged = True
            break
        if not polishing:
            L *= 0.9

    beta = x / scale
    beta[~free] = 0.0
    nll = neg_log_likelihood(beta, data)
    objective = nll + penalty_value(beta, spec, data.block_sizes, scale)
    msg = "converged" if converged else (
        f"no convergence after {options.max_iterations} iterations "
        f"(last relative change {rel:.3g}, max step {change:.3g})"
    )
    return FitResult(
        beta=beta,
        objective=objective,
        converged=converged,
        iterations=it,
        nonzero=np.flatnonzero(beta != 0),
        penalty=spec,
        center=center,
        scale=scale,
        neg_log_likelihood=nll,
        history=history,
        message=msg,
    )


def lambda_max(data: MatchedDataset, alpha: float = 1.0, standardize: bool = True) -> np.ndarray:
    """Per-block smallest penalty level at which ``beta = 0`` is optimal.

    Block b: ``max_{j in b} |grad_j(0) / scale_j| / alpha``, the gradient
    taken with respect to the standardized coefficients.
    """
    if not (0.0 < alpha <= 1.0):
        raise InvalidArgumentError(f"alpha must lie in (0, 1], got {alpha}")
    data.check()
    g = gradient(np.zeros(data.p), data)
    _, scale, _ = _standardization(data.layout.X, standardize)
    score = np.abs(g / scale) / alpha
    return np.array([score[s].max() if s.stop > s.start else 0.0 for s in data.block_slices()])


@dataclass
class KKTReport:
    violations: list
    max_violation: float

    @property
    def ok(self) -> bool:
        return not self.violations


def kkt_check(fit: FitResult, data: MatchedDataset, spec: PenaltySpec, tol: float = 1e-4) -> KKTReport:
    """Check the subgradient optimality conditions of a fit.

    Conditions are evaluated on the fit's penalization scale. With
    ``g_j = d nll / d gamma_j + l2_j gamma_j``: a nonzero coefficient needs
    ``|g_j + l1_j sign(gamma_j)| <= tol``; a zero one needs
    ``|g_j| <= l1_j + tol``.
    """
    l1, l2 = spec.column_weights(data.block_sizes)
    scale = np.asarray(fit.scale, dtype=np.float64)
    gamma = np.asarray(fit.beta, dtype=np.float64) * scale
    g = gradient(fit.beta, data) / scale + l2 * gamma
    nz = gamma != 0
    resid = np.where(nz, np.abs(g + l1 * np.sign(gamma)), np.maximum(np.abs(g) - l1, 0.0))
    violations = [
        (int(j), "nonzero" if nz[j] else "zero", float(resid[j]))
        for j in np.flatnonzero(resid > tol)
    ]
    return KKTReport(violations, float(resid.max()) if resid.size else 0.0)
