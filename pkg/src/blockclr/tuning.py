"""Penalty tuning: cross-validated overall level and relative block factors.

A penalty vector is written as ``lambda = lambda1 * pf`` where ``pf`` is a
vector of penalty factors with ``pf[0] = 1``. :func:`default_pf` estimates
``pf`` from tentative fits (blocks with larger mean absolute coefficients get
smaller factors); :func:`find_default_lambda` picks ``lambda1`` for a given
``pf`` by minimizing the cross-validated deviance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from ._parallel import map_ordered
from .data import MatchedDataset
from .exceptions import ConvergenceError, InvalidArgumentError, NoSignalError
from .likelihood import neg_log_likelihood
from .solver import PenaltySpec, SolverOptions, fit_penalized, lambda_max

DEFAULT_N_LAMBDA = 20
DEFAULT_LAMBDA_RATIO = 1e-3
DEFAULT_PF_CAP = 100.0


@dataclass(frozen=True)
class CvPlan:
    """Assignment of strata to cross-validation folds."""

    n_folds: int
    fold_of: np.ndarray  # fold label of each stratum

    def fold(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == k)

    def train(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of, minlength=self.n_folds)


def make_cv_plan(data_or_n, n_folds: int = 5, seed: int = 0) -> CvPlan:
    """Seeded partition of strata into near-equal folds.

    Strata are shuffled and dealt round-robin, so fold sizes differ by at
    most one and a matched set is never split.
    """
    n = data_or_n.n if isinstance(data_or_n, MatchedDataset) else int(data_or_n)
    n_folds = int(n_folds)
    if not 2 <= n_folds <= n:
        raise InvalidArgumentError(f"n_folds must lie in [2, {n}], got {n_folds}")
    perm = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[perm] = np.arange(n) % n_folds
    return CvPlan(n_folds, fold_of)


def _check_plan(plan: CvPlan, data: MatchedDataset):
    if plan.fold_of.shape != (data.n,):
        raise InvalidArgumentError(
            f"CV plan covers {plan.fold_of.size} strata but the data has {data.n}"
        )


def _fold_deviance(data, spec, plan, options, k):
    train = data.subset(plan.train(k))
    fit = fit_penalized(train, spec, options)
    if not fit.converged:
        raise ConvergenceError(f"training fit for CV fold {k} did not converge: {fit.message}")
    return 2.0 * neg_log_likelihood(fit.beta, data.subset(plan.fold(k)))


def cv_fold_deviances(data, spec, plan, options=None, workers=1) -> np.ndarray:
    data.check()
    _check_plan(plan, data)
    job = partial(_fold_deviance, data, spec, plan, options or SolverOptions())
    return np.array(map_ordered(job, range(plan.n_folds), workers))


def cv_deviance(
    data: MatchedDataset,
    spec: PenaltySpec,
    plan: CvPlan,
    options: SolverOptions | None = None,
    workers: int = 1,
) -> float:
    """Held-out deviance ``2 * sum_s -log L_s`` summed over all folds.

    The fold sum is exactly rounded, so relabelling folds cannot change it.
    """
    return math.fsum(cv_fold_deviances(data, spec, plan, options, workers))


def default_lambda_grid(
    data: MatchedDataset,
    pf,
    alpha: float = 1.0,
    n_lambda: int = DEFAULT_N_LAMBDA,
    ratio: float = DEFAULT_LAMBDA_RATIO,
    standardize: bool = True,
) -> np.ndarray:
    """Geometric grid from the smallest all-zero ``lambda1`` down by ``ratio``."""
    pf = np.asarray(pf, dtype=np.float64)
    top = float(np.max(lambda_max(data, alpha, standardize) / pf))
    if not top > 0:
        raise NoSignalError("gradient at zero vanishes; no penalty grid can be built")
    return np.geomspace(top, top * ratio, n_lambda)


def _fold_path(data, plan, pf, alpha, options, grid_desc, k):
    train = data.subset(plan.train(k))
    test = data.subset(plan.fold(k))
    out = np.empty(len(grid_desc))
    beta = None
    for i, lam1 in enumerate(grid_desc):
        fit = fit_penalized(train, PenaltySpec(tuple(lam1 * pf), alpha), options, init=beta)
        if not fit.converged:
            raise ConvergenceError(
                f"training fit for CV fold {k} at lambda1={lam1:.6g} did not converge: {fit.message}"
            )
        beta = fit.beta
        out[i] = 2.0 * neg_log_likelihood(beta, test)
    return out


@dataclass
class LambdaSearch:
    lambda1: float
    grid: np.ndarray
    deviance: np.ndarray
    pf: np.ndarray

    def table(self):
        return list(zip(self.grid.tolist(), self.deviance.tolist()))


def find_default_lambda(
    data: MatchedDataset,
    pf=None,
    alpha: float = 1.0,
    grid=None,
    plan: CvPlan | None = None,
    options: SolverOptions | None = None,
    n_folds: int = 5,
    seed: int = 0,
    workers: int = 1,
) -> LambdaSearch:
    """Choose the overall penalty level by cross-validated deviance.

    Every grid value ``lambda1`` is scored by :func:`cv_deviance` with
    penalty ``lambda1 * pf``; the smallest minimizing value is returned.
    Within each fold the grid is traversed from the largest value down and
    each fit starts from the previous solution.
    """
    data.check()
    options = options or SolverOptions()
    pf = np.ones(data.n_blocks) if pf is None else np.asarray(pf, dtype=np.float64)
    if pf.shape != (data.n_blocks,) or np.any(pf <= 0) or not np.all(np.isfinite(pf)):
        raise InvalidArgumentError(f"penalty factors must be {data.n_blocks} positive numbers")
    if grid is None:
        grid = default_lambda_grid(data, pf, alpha, standardize=options.standardize)
    grid = np.atleast_1d(np.asarray(grid, dtype=np.float64))
    if grid.size == 0 or np.any(~(grid > 0)) or not np.all(np.isfinite(grid)):
        raise InvalidArgumentError("lambda grid must be non-empty, finite and strictly positive")
    if plan is None:
        plan = make_cv_plan(data, n_folds, seed)
    _check_plan(plan, data)

    # duplicates are scored once so exact ties resolve to the smaller value
    uniq = np.unique(grid)
    desc = uniq[::-1]
    job = partial(_fold_path, data, plan, pf, alpha, options, desc)
    per_fold = np.array(map_ordered(job, range(plan.n_folds), workers))
    dev_desc = np.array([math.fsum(col) for col in per_fold.T])
    dev_uniq = dev_desc[::-1]
    best = int(np.argmin(dev_uniq))
    deviance = dev_uniq[np.searchsorted(uniq, grid)]
    return LambdaSearch(float(uniq[best]), grid, deviance, pf)


@dataclass
class PenaltyFactorResult:
    pf: np.ndarray
    block_means: np.ndarray
    type_step1: str
    lambdas: list = field(default_factory=list)  # tentative-model lambda1 values
    betas: list = field(default_factory=list)  # tentative coefficients
    notes: list = field(default_factory=list)


def factors_from_means(means, pf_cap: float = DEFAULT_PF_CAP):
    """Penalty factors ``m_1 / m_i`` clipped to ``[1 / pf_cap, pf_cap]``.

    Returns ``(pf, notes)``. A block with zero mean gets ``pf_cap``. If the
    first block has zero (or negligible) mean every other signal-carrying
    block is floored at ``1 / pf_cap`` so the leading factor stays 1.
    """
    means = np.asarray(means, dtype=np.float64)
    notes = []
    if not np.any(means > 0):
        raise NoSignalError("no signal detected; penalty factors undefined")
    pf = np.empty_like(means)
    pf[0] = 1.0
    for i in range(1, means.size):
        if means[i] == 0:
            pf[i] = pf_cap
            notes.append(f"block {i + 1} has no nonzero tentative coefficients; factor capped at {pf_cap:g}")
        elif means[0] == 0:
            pf[i] = 1.0 / pf_cap
            notes.append(f"block 1 has no nonzero tentative coefficients; block {i + 1} factor floored at {1 / pf_cap:g}")
        else:
            if means[0] > pf_cap * means[i]:
                notes.append(f"block {i + 1} factor exceeds {pf_cap:g}; capped at {pf_cap:g}")
                pf[i] = pf_cap
            elif means[i] * (1.0 / pf_cap) > means[0]:
                notes.append(f"block {i + 1} factor below {1 / pf_cap:g}; floored at {1 / pf_cap:g}")
                pf[i] = 1.0 / pf_cap
            else:
                pf[i] = means[0] / means[i]
    return pf, notes


def default_pf(
    data: MatchedDataset,
    alpha: float = 1.0,
    type_step1: str = "combined",
    plan: CvPlan | None = None,
    pf_cap: float = DEFAULT_PF_CAP,
    options: SolverOptions | None = None,
    n_folds: int = 5,
    seed: int = 0,
    workers: int = 1,
) -> PenaltyFactorResult:
    """Data-adaptive penalty factors from tentative fits.

    Step 1 fits tentative models with a cross-validated penalty: one model
    per block on that block's columns only (``"separate"``), or one model on
    all columns with a common penalty (``"combined"``). Step 2 sets block i's
    factor to ``m_1 / m_i`` where ``m_i`` is the mean absolute tentative
    coefficient in block i, measured on the scale the penalty acts on
    (standardized columns unless ``options.standardize`` is off).
    """
    data.check()
    if type_step1 not in ("separate", "combined"):
        raise InvalidArgumentError(f"type_step1 must be 'separate' or 'combined', got {type_step1!r}")
    if pf_cap < 1:
        raise InvalidArgumentError("pf_cap must be >= 1")
    options = options or SolverOptions()
    if plan is None:
        plan = make_cv_plan(data, n_folds, seed)

    result = PenaltyFactorResult(np.empty(0), np.empty(0), type_step1)
    slices = data.block_slices()
    if type_step1 == "combined":
        try:
            search = find_default_lambda(
                data, np.ones(data.n_blocks), alpha, plan=plan, options=options, workers=workers
            )
        except NoSignalError as exc:
            raise NoSignalError("no signal detected; penalty factors undefined") from exc
        fit = fit_penalized(data, PenaltySpec((search.lambda1,) * data.n_blocks, alpha), options)
        if not fit.converged:
            raise ConvergenceError(f"tentative combined fit did not converge: {fit.message}")
        result.lambdas.append(search.lambda1)
        result.betas.append(fit.beta)
        means = np.array([np.mean(np.abs(fit.scaled_beta[s])) for s in slices])
    else:
        means = np.empty(data.n_blocks)
        for b, s in enumerate(slices):
            sub = data.select_columns(np.arange(s.start, s.stop))
            try:
                search = find_default_lambda(sub, None, alpha, plan=plan, options=options, workers=workers)
            except NoSignalError:
                means[b] = 0.0
                result.lambdas.append(float("nan"))
                result.betas.append(np.zeros(s.stop - s.start))
                continue
            fit = fit_penalized(sub, PenaltySpec((search.lambda1,), alpha), options)
            if not fit.converged:
                raise ConvergenceError(f"tentative fit for block {b + 1} did not converge: {fit.message}")
            result.lambdas.append(search.lambda1)
            result.betas.append(fit.beta)
            means[b] = np.mean(np.abs(fit.scaled_beta))

    pf, notes = factors_from_means(means, pf_cap)
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    result.pf = pf
    result.block_means = means
    result.notes = notes
    return result
