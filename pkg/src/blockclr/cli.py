"""Command line interface.

    blockclr validate    --data D [--blocks 50,50]
    blockclr fit         --data D --blocks 50,50 --lambda 5,10 [--alpha 1] --out DIR
    blockclr stabsel     --data D --blocks 50,50 --lambda-grid "5,1;5,2" [--B 100] --out DIR
    blockclr adapt-pf    --data D --blocks 50,50 [--type-step1 combined] --out DIR
    blockclr find-lambda --data D --blocks 50,50 --pf 1,3.6 --out DIR
    blockclr simulate    --setting 3 --replicates 2 --seed 7 --out DIR

Any long option may also be given in a flat ``key = value`` file passed with
``--config``; command-line flags win over file values.

Exit codes: 0 success, 2 usage error, 3 data validation error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import io as bio
from .exceptions import BlockClrError, ConvergenceError, InvalidArgumentError
from .simulation import DEFAULT_THRESHOLDS, TABLE1, PipelineConfig, run_study, table1_setting
from .solver import PenaltySpec, SolverOptions, fit_penalized
from .stability import StabilityConfig, stable_clr_g
from .tuning import default_pf, find_default_lambda, make_cv_plan

log = logging.getLogger("blockclr")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# option name -> (type, default); None default means "required when used"
SHARED = {
    "data": (str, None),
    "blocks": (str, None),
    "alpha": (float, 1.0),
    "seed": (int, 0),
    "workers": (int, 1),
    "out": (str, None),
}
SOLVER = {
    "max_iterations": (int, 1000),
    "tolerance": (float, 1e-8),
    "coef_tolerance": (float, 1e-6),
    "standardize": ("bool", True),
}
COMMANDS = {
    "validate": {"data": SHARED["data"], "blocks": SHARED["blocks"], "out": (str, "")},
    "fit": {**SHARED, **SOLVER, "lambda": (str, None)},
    "stabsel": {
        **SHARED,
        **SOLVER,
        "lambda_grid": (str, None),
        "B": (int, 100),
        "threshold": (float, 0.55),
        "redraw_per_vector": ("bool", False),
    },
    "adapt-pf": {
        **SHARED,
        **SOLVER,
        "type_step1": (str, "combined"),
        "folds": (int, 5),
        "pf_cap": (float, 100.0),
    },
    "find-lambda": {**SHARED, **SOLVER, "pf": (str, ""), "folds": (int, 5), "grid": (str, "")},
    "simulate": {
        "setting": (str, "all"),
        "replicates": (int, 100),
        "thresholds": (str, ",".join(str(t) for t in DEFAULT_THRESHOLDS)),
        "threshold": (float, 0.55),
        "B": (int, 50),
        "alpha": (float, 1.0),
        "folds": (int, 5),
        "type_step1": (str, "combined"),
        "seed": (int, 0),
        "workers": (int, 1),
        "out": (str, None),
        "plot": ("bool", False),
        **SOLVER,
        # matches the pipeline default; half-sample fits low on the grid can be slow
        "max_iterations": (int, 10000),
    },
}

HELP = {
    "data": "dataset CSV (stratum,case,covariates...)",
    "blocks": "comma-separated block sizes; default: <data>.blocks sidecar or one block",
    "alpha": "elastic-net mixing weight on the L1 part, in (0, 1]",
    "lambda": "penalty level per block, e.g. 5,10",
    "lambda_grid": 'penalty vectors "5,1;5,2;..." or a CSV file, one vector per row',
    "B": "number of complementary subsample pairs",
    "threshold": "selection probability threshold",
    "pf": "penalty factors, e.g. 1,3.6 (default all ones)",
    "grid": "comma-separated lambda1 grid (default: 20-point geometric grid)",
    "setting": "reference setting number(s) 1-6, comma-separated, or 'all'",
    "thresholds": "threshold grid for the sweep table",
    "workers": "worker processes",
    "out": "output directory",
    "plot": "also render sweep.png (needs matplotlib)",
}


def _flag(name):
    return "--" + name.replace("_", "-") if name != "B" else "--B"


def _to_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise InvalidArgumentError(f"expected a boolean, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockclr",
        description="Block-penalized conditional logistic regression for matched case-control data.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, opts in COMMANDS.items():
        p = sub.add_parser(cmd)
        p.add_argument("--config", help="flat key = value file with option values")
        for name, (typ, default) in opts.items():
            kw = {"dest": name, "default": None, "help": HELP.get(name)}
            if typ == "bool":
                p.add_argument(_flag(name), action="store_true", **kw)
                p.add_argument("--no-" + name.replace("_", "-"), dest=name, action="store_false")
            else:
                p.add_argument(_flag(name), type=typ, metavar=name.upper(), **kw)
    return parser


def read_config(path) -> dict:
    out = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"{path}:{line_no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def resolve(command: str, ns: argparse.Namespace) -> dict:
    """Merge flags over config-file values over defaults; validate."""
    opts = COMMANDS[command]
    file_vals = read_config(ns.config) if ns.config else {}
    unknown = sorted(set(file_vals) - set(opts))
    if unknown:
        raise InvalidArgumentError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
    params = {}
    for name, (typ, default) in opts.items():
        val = getattr(ns, name, None)
        if val is None and name in file_vals:
            raw = file_vals[name]
            try:
                val = _to_bool(raw) if typ == "bool" else typ(raw)
            except ValueError:
                raise InvalidArgumentError(f"config key {name}: cannot parse {raw!r}")
        if val is None:
            val = default
        params[name] = val
    missing = [n for n, v in params.items() if v is None and n != "blocks"]
    if missing:
        raise InvalidArgumentError(
            f"{command}: missing required option(s): {', '.join(_flag(m) for m in missing)}"
        )
    if "alpha" in params and not 0 < params["alpha"] <= 1:
        raise InvalidArgumentError("--alpha must lie in (0, 1]")
    if "workers" in params and params["workers"] < 1:
        raise InvalidArgumentError("--workers must be >= 1")
    if "threshold" in params and not 0 < params["threshold"] < 1:
        raise InvalidArgumentError("--threshold must lie in (0, 1)")
    if "B" in params and params["B"] < 1:
        raise InvalidArgumentError("--B must be >= 1")
    if "max_iterations" in params:
        params["_options"] = SolverOptions(
            max_iterations=params["max_iterations"],
            tolerance=params["tolerance"],
            coef_tolerance=params["coef_tolerance"],
            standardize=params["standardize"],
        )
    return params


def _floats(text, what):
    try:
        vals = [float(t) for t in str(text).replace(" ", "").split(",") if t]
    except ValueError:
        raise InvalidArgumentError(f"{what}: expected comma-separated numbers, got {text!r}")
    return vals


def _load(params):
    blocks = bio.parse_block_sizes(params["blocks"]) if params.get("blocks") else None
    return bio.parse_dataset(params["data"], blocks)


def _manifest(command, params, started, extra=None):
    man = {
        "command": command,
        "parameters": {k: v for k, v in params.items() if not k.startswith("_")},
        "seed": params.get("seed"),
        "versions": bio.versions(),
        "timings": {"started_unix": started, "elapsed_s": time.time() - started},
    }
    if params.get("data"):
        man["inputs"] = {"data": str(params["data"]), "data_sha256": bio.file_sha256(params["data"])}
    if extra:
        man.update(extra)
    return man


def _variable_rows(data):
    return [(data.names[j], int(data.block_index[j]) + 1) for j in range(data.p)]


def cmd_validate(params, started):
    blocks = bio.parse_block_sizes(params["blocks"]) if params.get("blocks") else None
    try:
        data = bio.parse_dataset(params["data"], blocks)
    except bio.DatasetParseError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_DATA
    print(f"valid: {data.n} strata, {data.n_subjects} subjects, {data.p} covariates, blocks {data.block_sizes}")
    if params.get("out"):
        with bio.OutputDir(params["out"]) as out:
            bio.write_json(out / "validation.json", {"valid": True, "violations": [], "n_strata": data.n})
            bio.write_json(out / "manifest.json", _manifest("validate", params, started))
            out.commit()
    return EXIT_OK


def cmd_fit(params, started):
    data = _load(params)
    lam = _floats(params["lambda"], "--lambda")
    spec = PenaltySpec(tuple(lam), params["alpha"])
    fit = fit_penalized(data, spec, params["_options"])
    if not fit.converged:
        raise ConvergenceError(fit.message + "; raise --max-iterations or loosen --tolerance")
    with bio.OutputDir(params["out"]) as out:
        rows = [(n, b, fit.beta[j], fit.beta[j] != 0) for j, (n, b) in enumerate(_variable_rows(data))]
        bio.write_csv(out / "coefficients.csv", ["variable", "block", "beta", "nonzero"], rows)
        summary = {
            "objective": fit.objective,
            "neg_log_likelihood": fit.neg_log_likelihood,
            "converged": fit.converged,
            "iterations": fit.iterations,
            "n_nonzero": len(fit.nonzero),
            "lambda": list(spec.lambdas),
            "alpha": spec.alpha,
            "scale": fit.scale,
            "center": fit.center,
        }
        bio.write_json(out / "fit.json", summary)
        bio.write_json(out / "manifest.json", _manifest("fit", params, started, {"n_fits": 1}))
        out.commit()
    print(f"objective {fit.objective:.10g}, {len(fit.nonzero)} nonzero of {data.p}, {fit.iterations} iterations")
    return EXIT_OK


def cmd_stabsel(params, started):
    data = _load(params)
    grid = bio.read_lambda_grid(params["lambda_grid"])
    config = StabilityConfig(
        tuple(grid),
        params["alpha"],
        params["B"],
        params["seed"],
        params["workers"],
        params["_options"],
        params["redraw_per_vector"],
    )
    res = stable_clr_g(data, config)
    selected = res.selection_probability >= params["threshold"]
    header = ["variable", "block"] + [f"freq_{i + 1}" for i in range(config.s)] + [
        "selection_probability",
        "selected",
    ]
    rows = [
        (n, b, *res.per_grid_frequency[:, j], res.selection_probability[j], selected[j])
        for j, (n, b) in enumerate(_variable_rows(data))
    ]
    with bio.OutputDir(params["out"]) as out:
        bio.write_csv(out / "stability.csv", header, rows)
        extra = {
            "n_fits": res.n_fits,
            "lambda_list": [list(v) for v in config.lambda_list],
            "failures_per_vector": res.failures,
            "warnings": res.warnings,
            "n_selected": int(selected.sum()),
        }
        bio.write_json(out / "manifest.json", _manifest("stabsel", params, started, extra))
        out.commit()
    print(f"{res.n_fits} fits; {int(selected.sum())} variable(s) with selection probability >= {params['threshold']}")
    return EXIT_OK


def cmd_adapt_pf(params, started):
    data = _load(params)
    plan = make_cv_plan(data, params["folds"], params["seed"])
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        res = default_pf(
            data,
            params["alpha"],
            params["type_step1"],
            plan,
            params["pf_cap"],
            params["_options"],
            workers=params["workers"],
        )
    with bio.OutputDir(params["out"]) as out:
        rows = [(b + 1, res.pf[b], res.block_means[b]) for b in range(data.n_blocks)]
        bio.write_csv(out / "penalty_factors.csv", ["block", "pf", "mean_abs_coef"], rows)
        bio.write_json(
            out / "pf.json",
            {"pf": res.pf, "block_means": res.block_means, "type_step1": res.type_step1,
             "tentative_lambda1": res.lambdas, "notes": res.notes},
        )
        bio.write_json(out / "manifest.json", _manifest("adapt-pf", params, started))
        out.commit()
    for note in res.notes:
        print("note:", note, file=sys.stderr)
    print("penalty factors:", ", ".join(f"{x:.4g}" for x in res.pf))
    return EXIT_OK


def cmd_find_lambda(params, started):
    data = _load(params)
    pf = np.array(_floats(params["pf"], "--pf")) if params["pf"] else None
    grid = np.array(_floats(params["grid"], "--grid")) if params["grid"] else None
    plan = make_cv_plan(data, params["folds"], params["seed"])
    res = find_default_lambda(
        data, pf, params["alpha"], grid, plan, params["_options"], workers=params["workers"]
    )
    with bio.OutputDir(params["out"]) as out:
        bio.write_csv(out / "lambda_cv.csv", ["lambda1", "cv_deviance"], res.table())
        bio.write_json(
            out / "lambda.json",
            {"lambda1": res.lambda1, "pf": res.pf, "lambda": res.lambda1 * res.pf},
        )
        bio.write_json(out / "manifest.json", _manifest("find-lambda", params, started))
        out.commit()
    print(f"lambda1 = {res.lambda1:.6g}; penalty vector", ", ".join(f"{x:.6g}" for x in res.lambda1 * res.pf))
    return EXIT_OK


def _settings(text):
    if str(text).strip().lower() == "all":
        return sorted(TABLE1)
    try:
        nums = [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise InvalidArgumentError(f"--setting: expected numbers or 'all', got {text!r}")
    bad = [k for k in nums if k not in TABLE1]
    if bad or not nums:
        raise InvalidArgumentError(f"--setting must be among {sorted(TABLE1)}")
    return nums


def cmd_simulate(params, started):
    settings = [table1_setting(k) for k in _settings(params["setting"])]
    thresholds = _floats(params["thresholds"], "--thresholds")
    config = PipelineConfig(
        alpha=params["alpha"],
        B=params["B"],
        n_folds=params["folds"],
        type_step1=params["type_step1"],
        selection_threshold=params["threshold"],
        options=params["_options"],
    )
    report = run_study(settings, params["replicates"], thresholds, config, params["seed"], params["workers"])
    with bio.OutputDir(params["out"]) as out:
        bio.write_csv(out / "table1.csv", ["setting", "power", "fdr", "replicates"], report.summary_rows())
        bio.write_csv(out / "sweep.csv", ["setting", "threshold", "power", "fdr"], report.sweep_rows())
        if params["plot"]:
            plot_sweep(report, out / "sweep.png")
        failed = {s.name: report.failures(s.name) for s in settings}
        extra = {
            "failed_replicates": failed,
            "replicate_seeds": [params["seed"] + r for r in range(params["replicates"])],
            "n_fits_stability": 2 * params["B"] * params["replicates"] * len(settings),
        }
        bio.write_json(out / "manifest.json", _manifest("simulate", params, started, extra))
        out.commit()
    for name, power, fdr, n in report.summary_rows():
        print(f"setting {name}: power {power:.3f}  FDR {fdr:.3f}  ({n} replicates)")
    return EXIT_OK


def plot_sweep(report, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6), sharex=True)
    for s in report.settings:
        ts = list(report.thresholds)
        axes[0].plot(ts, [report.mean_power(s.name, t) for t in ts], marker="o", label=f"setting {s.name}")
        axes[1].plot(ts, [report.mean_fdr(s.name, t) for t in ts], marker="o")
    axes[0].set_ylabel("power")
    axes[1].set_ylabel("FDR")
    for ax in axes:
        ax.set_xlabel("threshold")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


HANDLERS = {
    "validate": cmd_validate,
    "fit": cmd_fit,
    "stabsel": cmd_stabsel,
    "adapt-pf": cmd_adapt_pf,
    "find-lambda": cmd_find_lambda,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    started = time.time()
    try:
        params = resolve(ns.command, ns)
        return HANDLERS[ns.command](params, started)
    except BlockClrError as exc:
        kind = {EXIT_USAGE: "usage error", EXIT_DATA: "data error", EXIT_NUMERIC: "numerical failure"}.get(
            exc.exit_code, "error"
        )
        print(f"blockclr {ns.command}: {kind}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
