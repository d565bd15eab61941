"""Simulation harness: two-block matched case-control data and power/FDR.

Each replicate runs the whole selection pipeline: data-adaptive penalty
factors, a cross-validated overall level, stability selection with the
resulting penalty vector, and thresholding of the selection probabilities.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from ._parallel import map_ordered
from .data import MatchedDataset
from .exceptions import BlockClrError, InvalidArgumentError, NumericalError
from .solver import SolverOptions
from .stability import StabilityConfig, select, stable_clr_g
from .tuning import default_pf, find_default_lambda, make_cv_plan

log = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = tuple(np.round(np.arange(0.55, 0.9001, 0.05), 2).tolist())


@dataclass(frozen=True)
class SimulationSetting:
    p1: int
    p2: int
    a1: int
    a2: int
    b1: float
    b2: float
    n_pairs: int = 200
    controls_per_case: int = 1
    covariate_sd: float = 1.0
    correlation: float = 0.0  # exchangeable, within subject
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if min(self.p1, self.p2) < 1:
            raise InvalidArgumentError("block sizes must be >= 1")
        if not (0 <= self.a1 <= self.p1 and 0 <= self.a2 <= self.p2):
            raise InvalidArgumentError("active counts must lie in [0, block size]")
        if self.n_pairs < 4:
            raise InvalidArgumentError("n_pairs must be >= 4")
        if self.controls_per_case < 1:
            raise InvalidArgumentError("controls_per_case must be >= 1")
        if not self.covariate_sd > 0:
            raise InvalidArgumentError("covariate_sd must be positive")
        if not 0 <= self.correlation < 1:
            raise InvalidArgumentError("correlation must lie in [0, 1)")

    @property
    def p(self) -> int:
        return self.p1 + self.p2

    @property
    def block_sizes(self) -> tuple[int, int]:
        return (self.p1, self.p2)


# (p1, p2, a1, a2, beta1, beta2) and the reference (power, FDR) at threshold 0.55
TABLE1 = {
    1: ((50, 50, 10, 10, 4, 4), (0.59, 0.23)),
    2: ((50, 50, 3, 17, 4, 4), (0.70, 0.23)),
    3: ((50, 50, 20, 0, 4, 0), (0.84, 0.18)),
    4: ((20, 80, 10, 10, 4, 1), (0.50, 0.26)),
    5: ((20, 80, 15, 5, 4, 4), (0.81, 0.21)),
    6: ((20, 80, 5, 15, 4, 4), (0.58, 0.21)),
}


def table1_setting(number: int, **overrides) -> SimulationSetting:
    if number not in TABLE1:
        raise InvalidArgumentError(f"setting must be one of {sorted(TABLE1)}, got {number}")
    p1, p2, a1, a2, b1, b2 = TABLE1[number][0]
    kw = dict(p1=p1, p2=p2, a1=a1, a2=a2, b1=b1, b2=b2, name=str(number))
    kw.update(overrides)
    return SimulationSetting(**kw)


@dataclass
class SimulatedData:
    data: MatchedDataset
    truth: np.ndarray
    beta: np.ndarray


def generate_dataset(setting: SimulationSetting) -> SimulatedData:
    """Draw one dataset.

    Covariates are independent N(0, sd^2) per subject (optionally with an
    exchangeable within-subject correlation). Active positions are drawn
    uniformly within each block. In each stratum the case is member j with
    probability ``exp(eta_j) / sum_l exp(eta_l)``.
    """
    rng = np.random.default_rng(setting.seed)
    p, m = setting.p, setting.controls_per_case + 1
    n = setting.n_pairs

    beta = np.zeros(p)
    act1 = np.sort(rng.choice(setting.p1, setting.a1, replace=False))
    act2 = setting.p1 + np.sort(rng.choice(setting.p2, setting.a2, replace=False))
    beta[act1] = setting.b1
    beta[act2] = setting.b2
    truth = np.flatnonzero(beta)

    Z = rng.standard_normal((n * m, p))
    if setting.correlation > 0:
        shared = rng.standard_normal((n * m, 1))
        Z = np.sqrt(1 - setting.correlation) * Z + np.sqrt(setting.correlation) * shared
    X = setting.covariate_sd * Z

    eta = (X @ beta).reshape(n, m)
    prob = np.exp(eta - eta.max(axis=1, keepdims=True))
    prob /= prob.sum(axis=1, keepdims=True)
    u = rng.random(n)
    who = np.minimum((prob.cumsum(axis=1) < u[:, None]).sum(axis=1), m - 1)
    case = np.zeros((n, m), dtype=np.int64)
    case[np.arange(n), who] = 1

    data = MatchedDataset(
        X,
        np.repeat(np.arange(n), m),
        case.ravel(),
        setting.block_sizes,
    )
    return SimulatedData(data, truth, beta)


def evaluate_selection(selected, truth, p: int) -> tuple[float, float]:
    """Power and false discovery proportion of a selected set.

    Empty truth gives power 0; an empty selection gives FDR 0.
    """
    sel = {int(j) for j in selected}
    tru = {int(j) for j in truth}
    if any(not 0 <= j < p for j in sel | tru):
        raise InvalidArgumentError(f"indices must lie in [0, {p})")
    power = len(sel & tru) / len(tru) if tru else 0.0
    fdr = len(sel - tru) / len(sel) if sel else 0.0
    return power, fdr


@dataclass(frozen=True)
class PipelineConfig:
    alpha: float = 1.0
    B: int = 50
    n_folds: int = 5
    type_step1: str = "combined"
    selection_threshold: float = 0.55
    pf_cap: float = 100.0
    # fits near the bottom of the CV grid on half samples can be close to
    # separable and need more than the library default of 1000 iterations
    options: SolverOptions = field(default_factory=lambda: SolverOptions(max_iterations=10000))


@dataclass
class ReplicateResult:
    setting: str
    replicate: int
    seed: int
    truth: np.ndarray
    pf: np.ndarray | None = None
    lambda1: float | None = None
    selection_probability: np.ndarray | None = None
    selected: dict = field(default_factory=dict)  # threshold -> indices
    power: dict = field(default_factory=dict)
    fdr: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def run_replicate(setting: SimulationSetting, seed: int, thresholds, config: PipelineConfig, replicate: int = 0):
    setting = replace(setting, seed=seed)
    sim = generate_dataset(setting)
    out = ReplicateResult(setting.name, replicate, seed, sim.truth)
    cv_seed, stab_seed = (int(s) for s in np.random.SeedSequence(seed).generate_state(2))
    try:
        plan = make_cv_plan(sim.data, config.n_folds, cv_seed)
        pfr = default_pf(
            sim.data, config.alpha, config.type_step1, plan, config.pf_cap, config.options
        )
        search = find_default_lambda(sim.data, pfr.pf, config.alpha, plan=plan, options=config.options)
        lam = tuple(search.lambda1 * pfr.pf)
        stab = stable_clr_g(
            sim.data,
            StabilityConfig((lam,), config.alpha, config.B, stab_seed, 1, config.options),
        )
    except BlockClrError as exc:
        out.error = f"{type(exc).__name__}: {exc}"
        log.warning("setting %s replicate %d failed: %s", setting.name, replicate, out.error)
        return out
    out.pf = pfr.pf
    out.lambda1 = search.lambda1
    out.selection_probability = stab.selection_probability
    for t in thresholds:
        sel = select(stab, t)
        out.selected[t] = sel
        out.power[t], out.fdr[t] = evaluate_selection(sel, sim.truth, setting.p)
    return out


@dataclass
class StudyReport:
    settings: list
    thresholds: tuple
    config: PipelineConfig
    master_seed: int
    replicates: dict  # setting name -> list[ReplicateResult]

    def _ok(self, name):
        return [r for r in self.replicates[name] if r.ok]

    def mean_power(self, name, threshold=None):
        t = self.config.selection_threshold if threshold is None else threshold
        return float(np.mean([r.power[t] for r in self._ok(name)]))

    def mean_fdr(self, name, threshold=None):
        t = self.config.selection_threshold if threshold is None else threshold
        return float(np.mean([r.fdr[t] for r in self._ok(name)]))

    def failures(self, name) -> int:
        return sum(not r.ok for r in self.replicates[name])

    def summary_rows(self):
        """``(setting, power, fdr, replicates)`` at the selection threshold."""
        return [
            (s.name, self.mean_power(s.name), self.mean_fdr(s.name), len(self._ok(s.name)))
            for s in self.settings
        ]

    def sweep_rows(self):
        """``(setting, threshold, power, fdr)`` over the threshold grid."""
        return [
            (s.name, t, self.mean_power(s.name, t), self.mean_fdr(s.name, t))
            for s in self.settings
            for t in self.thresholds
        ]


def _replicate_job(thresholds, config, job):
    setting, seed, r = job
    return run_replicate(setting, seed, thresholds, config, r)


def run_study(
    settings,
    replicates: int = 100,
    thresholds=DEFAULT_THRESHOLDS,
    config: PipelineConfig | None = None,
    master_seed: int = 0,
    workers: int = 1,
) -> StudyReport:
    """Run every setting ``replicates`` times; replicate r uses seed ``master_seed + r``."""
    config = config or PipelineConfig()
    if replicates < 1:
        raise InvalidArgumentError("replicates must be >= 1")
    thresholds = tuple(float(t) for t in thresholds)
    if config.selection_threshold not in thresholds:
        thresholds = tuple(sorted(thresholds + (config.selection_threshold,)))
    if any(not 0 < t < 1 for t in thresholds):
        raise InvalidArgumentError("thresholds must lie in (0, 1)")
    settings = [s if s.name else replace(s, name=str(i + 1)) for i, s in enumerate(settings)]
    jobs = [(s, master_seed + r, r) for s in settings for r in range(replicates)]
    results = map_ordered(partial(_replicate_job, thresholds, config), jobs, workers)
    by_setting = {s.name: [] for s in settings}
    for res in results:
        by_setting[res.setting].append(res)
    for name, reps in by_setting.items():
        if all(not r.ok for r in reps):
            raise NumericalError(f"every replicate of setting {name} failed: {reps[0].error}")
    return StudyReport(settings, thresholds, config, master_seed, by_setting)
