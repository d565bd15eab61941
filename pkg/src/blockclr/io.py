"""Dataset files, result tables and run manifests.

Dataset CSV layout: a header row ``stratum,case,<covariate names...>`` with
covariate columns in block order, one row per subject. Block sizes come from
the caller or from a sidecar file ``<data>.blocks`` holding e.g. ``50,50``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import platform
import shutil
import tempfile
from pathlib import Path

import numpy as np

from .data import MatchedDataset, validate
from .exceptions import DataValidationError, InvalidArgumentError


class DatasetParseError(DataValidationError):
    pass


def parse_block_sizes(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        parts = list(text)
    else:
        parts = [t for t in str(text).replace(" ", "").split(",") if t]
    try:
        sizes = tuple(int(t) for t in parts)
    except ValueError:
        raise InvalidArgumentError(f"block sizes must be comma-separated integers, got {text!r}")
    if not sizes or any(s <= 0 for s in sizes):
        raise InvalidArgumentError(f"block sizes must be positive, got {text!r}")
    return sizes


def _sidecar_blocks(path: Path):
    side = Path(str(path) + ".blocks")
    if side.exists():
        return parse_block_sizes(side.read_text().strip())
    return None


def parse_dataset(path, block_sizes=None) -> MatchedDataset:
    """Read and validate a matched dataset CSV.

    Raises :class:`DatasetParseError` with a file location for malformed
    rows, non-numeric cells, strata without exactly one case and block sizes
    that do not add up to the covariate count.
    """
    path = Path(path)
    if block_sizes is None:
        block_sizes = _sidecar_blocks(path)
    elif not isinstance(block_sizes, tuple):
        block_sizes = parse_block_sizes(block_sizes)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetParseError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if len(header) < 3 or header[0] != "stratum" or header[1] != "case":
            raise DatasetParseError(
                f"{path}:1: header must start with 'stratum,case' followed by covariate names"
            )
        names = header[2:]
        width = len(header)
        labels, cases, rows, first_line = [], [], [], {}
        for line_no, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != width:
                raise DatasetParseError(
                    f"{path}:{line_no}: expected {width} fields, found {len(rec)}"
                )
            label = rec[0].strip()
            flag = rec[1].strip()
            if flag not in ("0", "1"):
                raise DatasetParseError(f"{path}:{line_no}: case must be 0 or 1, got {flag!r}")
            try:
                vals = [float(c) for c in rec[2:]]
            except ValueError:
                bad = next(i for i, c in enumerate(rec[2:]) if not _is_float(c))
                raise DatasetParseError(
                    f"{path}:{line_no}: column {names[bad]!r}: non-numeric value {rec[2 + bad]!r}"
                )
            if not all(math.isfinite(v) for v in vals):
                bad = next(i for i, v in enumerate(vals) if not math.isfinite(v))
                raise DatasetParseError(
                    f"{path}:{line_no}: column {names[bad]!r}: non-finite value {rec[2 + bad]!r}"
                )
            first_line.setdefault(label, line_no)
            labels.append(label)
            cases.append(int(flag))
            rows.append(vals)
    if not rows:
        raise DatasetParseError(f"{path}: no data rows")
    X = np.array(rows, dtype=np.float64)
    data = MatchedDataset(X, np.array(labels, dtype=object), np.array(cases), block_sizes, names)
    report = validate(data)
    if not report.ok:
        msgs = []
        for v in report.violations:
            where = f"{path}:{first_line[v.stratum]}" if v.stratum in first_line else str(path)
            msgs.append(f"{where}: {v.message}")
        raise DatasetParseError("\n".join(msgs), report)
    data._checked = True
    return data


def _is_float(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def fmt(x) -> str:
    """Shortest round-trip text for a number."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_dataset(data: MatchedDataset, path, sidecar: bool = True):
    rows = (
        [data.stratum[i], int(data.case[i]), *data.covariates[i]]
        for i in range(data.n_subjects)
    )
    write_csv(path, ["stratum", "case", *data.names], rows)
    if sidecar:
        Path(str(path) + ".blocks").write_text(",".join(map(str, data.block_sizes)) + "\n")


def read_lambda_grid(text_or_path) -> list[tuple[float, ...]]:
    """Penalty vectors from ``"5,1;5,2"`` or a CSV file with one vector per row."""
    src = str(text_or_path)
    if os.path.exists(src):
        with open(src, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
        if rows and not _is_float(rows[0][0]):
            rows = rows[1:]
    else:
        rows = [r.split(",") for r in src.replace(" ", "").split(";") if r]
    try:
        grid = [tuple(float(c) for c in r) for r in rows]
    except ValueError:
        raise InvalidArgumentError(f"cannot parse penalty grid {src!r}")
    if not grid or len({len(r) for r in grid}) != 1:
        raise InvalidArgumentError("penalty grid needs rows of equal, nonzero length")
    return grid


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict:
    from . import __version__, _backend

    return {
        "blockclr": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "kernel_backend": _backend.kernels.name,
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


class OutputDir:
    """Stage result files in a temporary directory, promote on success.

    Files are written under :attr:`path` (a temporary sibling of the final
    directory). :meth:`commit` moves them into place: a fresh target is
    created by a single directory rename; into an existing directory each
    file is moved with an atomic replace, the manifest last. Leaving the
    ``with`` block through an exception discards everything.
    """

    def __init__(self, target):
        self.target = Path(target)
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self.path = Path(tempfile.mkdtemp(prefix=f".{self.target.name}.tmp-", dir=self.target.parent))
        self.committed = False

    def __truediv__(self, name):
        return self.path / name

    def commit(self):
        if not self.target.exists():
            os.replace(self.path, self.target)
        else:
            names = sorted(os.listdir(self.path), key=lambda n: n == "manifest.json")
            for name in names:
                os.replace(self.path / name, self.target / name)
            shutil.rmtree(self.path, ignore_errors=True)
        self.committed = True

    def discard(self):
        shutil.rmtree(self.path, ignore_errors=True)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if not self.committed:
            self.discard()
        return False
