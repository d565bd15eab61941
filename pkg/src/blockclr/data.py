"""Matched case-control data model.

A :class:`MatchedDataset` is stored the way it arrives from a file: one row
per subject, a stratum label per row and a 0/1 case flag per row. The
stratum view (:class:`Stratum`) and the computational layout used by the
likelihood kernels are derived lazily and cached.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .exceptions import DataValidationError, InvalidArgumentError


@dataclass(frozen=True)
class Stratum:
    """One matched set: a single case row and one or more control rows."""

    id: object
    case_row: int
    control_rows: tuple[int, ...]

    @property
    def rows(self) -> tuple[int, ...]:
        return (self.case_row,) + self.control_rows

    @property
    def size(self) -> int:
        return 1 + len(self.control_rows)


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    stratum: object = None
    row: int | None = None


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        # truthy when there is something to report
        return bool(self.violations)

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def summary(self, limit: int = 10) -> str:
        lines = [v.message for v in self.violations[:limit]]
        if len(self.violations) > limit:
            lines.append(f"... and {len(self.violations) - limit} more")
        return "\n".join(lines)


class Layout:
    """Rows regrouped stratum by stratum with the case first in each group.

    ``X`` holds the reordered covariates, ``offsets`` the stratum boundaries
    into it (length n + 1). ``groups`` maps each distinct stratum size m to
    ``(stratum_positions, row_matrix)`` where ``row_matrix`` is the
    ``(count, m)`` array of positions into ``X``; the vectorized fallback
    kernels work one size class at a time.
    """

    def __init__(self, X: np.ndarray, strata: Sequence[Stratum]):
        order = np.fromiter(
            (r for s in strata for r in s.rows), dtype=np.intp, count=sum(s.size for s in strata)
        )
        sizes = np.array([s.size for s in strata], dtype=np.int64)
        self.order = order
        self.sizes = sizes
        self.offsets = np.zeros(len(strata) + 1, dtype=np.int64)
        np.cumsum(sizes, out=self.offsets[1:])
        self.X = np.ascontiguousarray(X[order], dtype=np.float64)
        self.groups = {}
        for m in np.unique(sizes):
            pos = np.flatnonzero(sizes == m)
            rows = self.offsets[pos][:, None] + np.arange(m)[None, :]
            self.groups[int(m)] = (pos, rows)

    @property
    def n_strata(self) -> int:
        return len(self.sizes)


class MatchedDataset:
    """Matched case-control data with block-partitioned covariates.

    Parameters
    ----------
    covariates : array_like, shape (n_subjects, p)
    stratum : array_like, shape (n_subjects,)
        Matched-set label of each subject. Any hashable values.
    case : array_like, shape (n_subjects,)
        1 for the case, 0 for controls.
    block_sizes : sequence of int, optional
        Sizes of the contiguous covariate blocks, in column order. Defaults
        to a single block holding every column.
    names : sequence of str, optional
        Covariate names; defaults to ``x1..xp``.

    Construction does not validate; call :func:`validate` for a report or
    :meth:`check` to raise on the first problem. Model code calls ``check``.
    """

    def __init__(self, covariates, stratum, case, block_sizes=None, names=None):
        X = np.asarray(covariates, dtype=np.float64)
        if X.ndim != 2:
            raise InvalidArgumentError("covariates must be a 2-d array")
        self.covariates = X
        self.stratum = np.asarray(stratum)
        self.case = np.asarray(case)
        if self.stratum.shape != (X.shape[0],) or self.case.shape != (X.shape[0],):
            raise InvalidArgumentError(
                "stratum and case must have one entry per covariate row "
                f"({X.shape[0]} rows)"
            )
        if block_sizes is None:
            block_sizes = (X.shape[1],)
        self.block_sizes = tuple(int(b) for b in block_sizes)
        if names is None:
            names = [f"x{j + 1}" for j in range(X.shape[1])]
        self.names = list(names)
        self._checked = False

    @classmethod
    def from_strata(cls, covariates, strata: Sequence[Stratum], block_sizes=None, names=None):
        X = np.asarray(covariates, dtype=np.float64)
        labels = np.empty(X.shape[0], dtype=object)
        case = np.zeros(X.shape[0], dtype=np.int64)
        for s in strata:
            for r in s.rows:
                labels[r] = s.id
            case[s.case_row] = 1
        return cls(X, labels, case, block_sizes, names)

    # shape -----------------------------------------------------------------

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_subjects(self) -> int:
        return self.covariates.shape[0]

    @property
    def n(self) -> int:
        """Number of strata."""
        return len(self.strata)

    @property
    def n_blocks(self) -> int:
        return len(self.block_sizes)

    @cached_property
    def block_index(self) -> np.ndarray:
        """Block number of every column."""
        return np.repeat(np.arange(self.n_blocks), self.block_sizes)

    def block_slices(self) -> list[slice]:
        edges = np.concatenate([[0], np.cumsum(self.block_sizes)])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    # derived views ---------------------------------------------------------

    @cached_property
    def strata(self) -> list[Stratum]:
        """Strata in order of first appearance of their label."""
        groups: dict = {}
        for row, label in enumerate(self.stratum.tolist()):
            groups.setdefault(label, []).append(row)
        out = []
        case = self.case
        for label, rows in groups.items():
            cases = [r for r in rows if case[r] == 1]
            if len(cases) != 1:
                raise DataValidationError(
                    f"stratum {label!r} has {len(cases)} cases (expected exactly 1)"
                )
            out.append(
                Stratum(label, cases[0], tuple(r for r in rows if r != cases[0]))
            )
        return out

    @cached_property
    def layout(self) -> Layout:
        return Layout(self.covariates, self.strata)

    def check(self) -> "MatchedDataset":
        if not self._checked:
            report = validate(self)
            if not report.ok:
                raise DataValidationError(
                    "invalid matched dataset:\n" + report.summary(), report
                )
            self._checked = True
        return self

    # restriction -----------------------------------------------------------

    def subset(self, strata_idx) -> "MatchedDataset":
        """Dataset restricted to the given strata (positions into ``strata``)."""
        strata = self.strata
        rows = np.fromiter(
            (r for i in strata_idx for r in strata[int(i)].rows), dtype=np.intp
        )
        sub = MatchedDataset(
            self.covariates[rows],
            self.stratum[rows],
            self.case[rows],
            self.block_sizes,
            self.names,
        )
        sub._checked = self._checked
        return sub

    def select_columns(self, cols, block_sizes=None) -> "MatchedDataset":
        cols = np.asarray(cols, dtype=np.intp)
        sub = MatchedDataset(
            self.covariates[:, cols],
            self.stratum,
            self.case,
            block_sizes if block_sizes is not None else (len(cols),),
            [self.names[j] for j in cols],
        )
        sub._checked = self._checked
        return sub

    def __repr__(self):
        try:
            n = self.n
        except DataValidationError:
            n = "?"
        return (
            f"MatchedDataset(n_strata={n}, n_subjects={self.n_subjects}, "
            f"p={self.p}, blocks={self.block_sizes})"
        )


def validate(data: MatchedDataset) -> ValidationReport:
    """Collect every structural problem with ``data``.

    Checks: exactly one case per stratum, at least one control, 0/1 case
    flags, finite covariates, and block sizes that are positive and sum to
    the column count. An empty report means the dataset is usable.
    """
    report = ValidationReport()
    v = report.violations

    if any(b <= 0 for b in data.block_sizes):
        v.append(Violation("block_sizes", f"block sizes must be positive, got {data.block_sizes}"))
    if sum(data.block_sizes) != data.p:
        v.append(
            Violation(
                "block_sum",
                f"block sizes {data.block_sizes} sum to {sum(data.block_sizes)} "
                f"but there are {data.p} covariate columns",
            )
        )

    case = data.case
    bad_flag = ~np.isin(case, (0, 1))
    for r in np.flatnonzero(bad_flag)[:20]:
        v.append(Violation("case_flag", f"row {r}: case flag {case[r]!r} is not 0/1", row=int(r)))

    finite = np.isfinite(data.covariates)
    if not finite.all():
        bad_rows = np.flatnonzero(~finite.all(axis=1))
        for r in bad_rows[:20]:
            cols = np.flatnonzero(~finite[r])
            v.append(
                Violation(
                    "non_finite",
                    f"row {r}: non-finite covariate value in column(s) "
                    f"{', '.join(data.names[c] for c in cols[:5])}",
                    row=int(r),
                )
            )
        if len(bad_rows) > 20:
            v.append(Violation("non_finite", f"{len(bad_rows)} rows with non-finite values in total"))

    groups: dict = {}
    for row, label in enumerate(data.stratum.tolist()):
        groups.setdefault(label, []).append(row)
    if data.n_subjects == 0:
        v.append(Violation("empty", "dataset has no rows"))
    for label, rows in groups.items():
        n_case = int(sum(case[r] == 1 for r in rows))
        if n_case != 1:
            v.append(
                Violation(
                    "case_count",
                    f"stratum {label!r} has {n_case} cases (expected exactly 1)",
                    stratum=label,
                )
            )
        if len(rows) - n_case < 1:
            v.append(
                Violation("no_controls", f"stratum {label!r} has no controls", stratum=label)
            )
    return report


def matched_from_pairs(case_rows, control_rows, block_sizes=None) -> MatchedDataset:
    """Build a 1:k dataset from per-stratum case and control covariate arrays.

    ``case_rows`` has shape (n, p); ``control_rows`` has shape (n, k, p) or
    (n, p) for 1:1 matching. Stratum s occupies rows ``s*(k+1) ..`` with the
    case first.
    """
    cases = np.asarray(case_rows, dtype=np.float64)
    controls = np.asarray(control_rows, dtype=np.float64)
    if controls.ndim == 2:
        controls = controls[:, None, :]
    n, k, p = controls.shape
    X = np.concatenate([cases[:, None, :], controls], axis=1).reshape(n * (k + 1), p)
    stratum = np.repeat(np.arange(n), k + 1)
    case = np.tile(np.r_[1, np.zeros(k, dtype=np.int64)], n)
    return MatchedDataset(X, stratum, case, block_sizes)
