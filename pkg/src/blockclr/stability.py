"""Complementary-pairs stability selection over a list of penalty vectors.

For each of B draws the strata are shuffled and split into two disjoint
halves of ``n // 2`` strata; both halves are fitted, giving 2B fits per
penalty vector. A variable's frequency for a penalty vector is the share of
those fits with a nonzero coefficient, and its selection probability is the
largest frequency over the penalty vectors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from ._parallel import map_ordered
from .data import MatchedDataset
from .exceptions import ConvergenceError, InvalidArgumentError
from .solver import PenaltySpec, SolverOptions, fit_penalized

FAILURE_WARN_FRACTION = 0.10


@dataclass(frozen=True)
class SubsamplePair:
    half_a: np.ndarray
    half_b: np.ndarray


def draw_complementary_pairs(n: int, B: int, seed: int = 0) -> list[SubsamplePair]:
    """B seeded pairs of disjoint stratum subsets of size ``n // 2``.

    For odd n one stratum, different in each pair, is left out.
    """
    if n < 4:
        raise InvalidArgumentError(f"need at least 4 strata for subsampling, got {n}")
    if B < 1:
        raise InvalidArgumentError(f"B must be >= 1, got {B}")
    rng = np.random.default_rng(seed)
    h = n // 2
    pairs = []
    for _ in range(B):
        perm = rng.permutation(n)
        pairs.append(SubsamplePair(np.sort(perm[:h]), np.sort(perm[h : 2 * h])))
    return pairs


@dataclass(frozen=True)
class StabilityConfig:
    """Settings for :func:`stable_clr_g`.

    ``lambda_list`` holds s penalty vectors, one level per block.
    ``redraw_per_vector`` draws a fresh subsample schedule for every penalty
    vector instead of sharing one.
    """

    lambda_list: tuple
    alpha: float = 1.0
    B: int = 100
    seed: int = 0
    workers: int = 1
    options: SolverOptions = field(default_factory=SolverOptions)
    redraw_per_vector: bool = False

    def __post_init__(self):
        lam = np.atleast_2d(np.asarray(self.lambda_list, dtype=np.float64))
        if lam.size == 0:
            raise InvalidArgumentError("lambda_list must contain at least one penalty vector")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise InvalidArgumentError("penalty vectors must be finite and nonnegative")
        if int(self.B) < 1:
            raise InvalidArgumentError(f"B must be >= 1, got {self.B}")
        if not (0.0 < float(self.alpha) <= 1.0):
            raise InvalidArgumentError(f"alpha must lie in (0, 1], got {self.alpha}")
        object.__setattr__(self, "lambda_list", tuple(tuple(float(x) for x in row) for row in lam))

    @property
    def s(self) -> int:
        return len(self.lambda_list)

    def schedule(self, n: int) -> list[list[SubsamplePair]]:
        """Subsample pairs for each penalty vector, fixed before any fitting."""
        if self.redraw_per_vector:
            seeds = np.random.SeedSequence(self.seed).generate_state(self.s)
            return [draw_complementary_pairs(n, self.B, int(sd)) for sd in seeds]
        shared = draw_complementary_pairs(n, self.B, self.seed)
        return [shared] * self.s


@dataclass
class StabilityResult:
    selection_probability: np.ndarray
    per_grid_frequency: np.ndarray  # (s, p)
    config: StabilityConfig
    n_fits: int
    failures: np.ndarray  # non-converged fits per penalty vector
    warnings: list = field(default_factory=list)

    def selected(self, threshold: float = 0.55) -> np.ndarray:
        return select(self, threshold)


def _fit_half(data, alpha, options, job):
    lam, rows = job
    fit = fit_penalized(data.subset(rows), PenaltySpec(lam, alpha), options)
    return fit.converged, fit.beta != 0


def stable_clr_g(data: MatchedDataset, config: StabilityConfig) -> StabilityResult:
    """Stability selection for the block-penalized conditional logistic model.

    Runs ``2 * B * s`` fits. Failed (non-converged) fits are dropped from the
    denominator of their penalty vector's frequencies; more than 10% failures
    for a vector raises a warning, all fits failing for a vector is an error.
    The result does not depend on ``config.workers``.
    """
    data.check()
    if any(len(v) != data.n_blocks for v in config.lambda_list):
        raise InvalidArgumentError(
            f"every penalty vector needs {data.n_blocks} entries (one per block)"
        )
    schedule = config.schedule(data.n)
    jobs = [
        (lam, half)
        for lam, pairs in zip(config.lambda_list, schedule)
        for pair in pairs
        for half in (pair.half_a, pair.half_b)
    ]
    fitter = partial(_fit_half, data, config.alpha, config.options)
    chunk = max(1, len(jobs) // (4 * max(1, config.workers)))
    results = map_ordered(fitter, jobs, config.workers, chunksize=chunk)

    per_vec = 2 * config.B
    ok = np.array([r[0] for r in results]).reshape(config.s, per_vec)
    nz = np.array([r[1] for r in results]).reshape(config.s, per_vec, data.p)
    failures = per_vec - ok.sum(axis=1)
    notes = []
    for v, lam in enumerate(config.lambda_list):
        if failures[v] == per_vec:
            raise ConvergenceError(f"all {per_vec} fits failed for penalty vector {lam}")
        if failures[v] > FAILURE_WARN_FRACTION * per_vec:
            msg = f"{failures[v]} of {per_vec} fits did not converge for penalty vector {lam}"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    counts = (nz & ok[:, :, None]).sum(axis=1)
    freq = counts / (per_vec - failures)[:, None]
    return StabilityResult(
        selection_probability=freq.max(axis=0),
        per_grid_frequency=freq,
        config=config,
        n_fits=len(jobs),
        failures=failures,
        warnings=notes,
    )


def select(result, threshold: float = 0.55) -> np.ndarray:
    """Indices of variables with selection probability >= ``threshold``.

    ``result`` may be a :class:`StabilityResult` or a probability vector.
    """
    if not (0.0 < threshold < 1.0):
        raise InvalidArgumentError(f"threshold must lie in (0, 1), got {threshold}")
    prob = getattr(result, "selection_probability", result)
    return np.flatnonzero(np.asarray(prob) >= threshold)
