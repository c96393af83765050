"""Command-line entry point: ``predsens <command> [options]``.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
failure. Each run writes ``report.json`` (plus command-specific CSV/text
files) to ``--out-dir``.
"""

from __future__ import annotations

import csv
import os
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import demo
from .data import impute_simple, load_csv
from .diagnostics import (
    OutlierRule,
    cross_population_cv,
    detect_outliers_by_split,
    fit_the_fit,
    kfold_cv,
    overlap_score,
)
from .errors import ConfigError, NumericalError, PredsensError
from .regressors import RegressorConfig, fit
from .report import (
    emit_sensitivity_plots,
    make_envelope,
    write_density,
    write_envelope,
)
from .sensitivity import SensitivitySpec, run_sensitivity
from .utils import THREADS_ENV, default_workers, sha256_file

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2

# config field -> flag, for error messages
_FLAGS = {
    "correlation_levels": "--rho-levels",
    "bootstrap_b": "--bootstrap",
    "correlate_top_k": "--top-k",
    "interval_level": "--level",
    "holdout_fraction": "--holdout",
    "unit_test": "--unit-test",
    "kind": "--model",
    "trees": "--trees",
    "bart.burn_in": "--burn-in",
    "bart.draws": "--mcmc-draws",
    "rule": "--rule",
    "k_mult": "--k-mult",
    "tail": "--tail",
}


class Run:
    """Loaded data plus the resolved settings shared by every command."""

    def __init__(self, opts, command):
        self.command = command
        self.opts = opts
        path = opts["input"]
        if path is None:
            path = str(demo.demo_path())
            opts["outcome"] = opts["outcome"] or demo.OUTCOME
            opts["split_col"] = opts["split_col"] or demo.SPLIT_COLUMN
        if not opts["outcome"]:
            raise ConfigError("outcome", "--outcome is required with --input")
        self.path = Path(path)
        if not self.path.is_file():
            raise ConfigError("input", f"cannot read {self.path}")
        d = load_csv(self.path, opts["outcome"], opts["split_col"], categorical=opts["categorical"])
        self.data = impute_simple(d) if opts["impute"] else d
        self.seed = int(opts["seed"])
        self.workers = opts["threads"] or default_workers()
        self.out = Path(opts["out_dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        bart = {}
        if opts["burn_in"] is not None:
            bart["burn_in"] = opts["burn_in"]
        if opts["mcmc_draws"] is not None:
            bart["draws"] = opts["mcmc_draws"]
        self.regressor = RegressorConfig(kind=opts["model"], trees=opts["trees"], bart=bart,
                                         seed=self.seed)
        self.extra = {}

    def config(self):
        return {
            "command": self.command,
            "outcome": self.data.outcome_name,
            "split_column": self.data.split_name,
            "categorical": sorted(self.opts["categorical"]),
            "impute": bool(self.opts["impute"]),
            "seed": self.seed,
            "regressor": self.regressor.to_dict(),
            **self.extra,
        }

    def input_info(self):
        return {
            "path": str(self.path),
            "sha256": sha256_file(self.path),
            "rows": self.data.row_count,
            "split_counts": self.data.split_counts(),
        }

    def finish(self, payload, caught, extra_warnings=()):
        msgs = [str(w.message) for w in caught] + list(extra_warnings)
        env = make_envelope(self.command, self.config(), self.input_info(), payload, msgs,
                            timestamp=_timestamp())
        path = write_envelope(env, self.out)
        click.echo(f"{self.command}: wrote {path}")
        for m in msgs:
            click.echo(f"warning: {m}", err=True)
        return env


def _timestamp():
    # honours SOURCE_DATE_EPOCH for fully reproducible envelopes
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        return datetime.fromtimestamp(int(epoch), timezone.utc).isoformat()
    return None


def _model_payload(m):
    return {
        "kind": m.config.kind,
        "predictors": list(m.predictor_names),
        "importance": dict(zip(m.predictor_names, m.variable_importance.tolist())),
        "info": m.info,
    }


def _fit_model(run):
    model = fit(run.data.study(), run.regressor)
    z = model.info.get("geweke_z")
    if z is not None and abs(z) > 3.0:
        warnings.warn(
            f"sigma^2 chain failed the stationarity check (z = {z:.2f}); "
            "consider a longer --burn-in"
        )
    return model


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return str(v)


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _group_labels(d):
    return d.groups if d.groups is not None else d.split


def _common(fn):
    options = [
        click.option("--input", "input", type=click.Path(dir_okay=False), default=None,
                     help="CSV file (default: bundled demo data)."),
        click.option("--outcome", default=None, help="Outcome column."),
        click.option("--split-col", default=None, help="Column separating study and target rows."),
        click.option("--categorical", multiple=True, help="Force a column to be categorical."),
        click.option("--impute/--no-impute", default=False,
                     help="Fill missing predictor cells with means / modes."),
        click.option("--model", type=click.Choice(["bart", "rf"]), default="bart"),
        click.option("--trees", type=int, default=None, help="Ensemble size."),
        click.option("--burn-in", type=int, default=None, help="BART burn-in sweeps."),
        click.option("--mcmc-draws", type=int, default=None, help="BART retained draws."),
        click.option("--seed", type=int, default=0),
        click.option("--threads", type=int, default=None,
                     help=f"Worker threads (default: ${THREADS_ENV} or 1)."),
        click.option("--out-dir", type=click.Path(file_okay=False), default="predsens-out"),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(package_name="predsens")
def cli():
    """Sensitivity of model predictions to an unobserved predictor."""


@cli.command()
@_common
@click.option("--bootstrap", type=int, default=100, help="Predictive draws per unit.")
@click.option("--level", type=float, default=0.95, help="Central interval level.")
@click.option("--threshold", type=float, default=None, help="Reference level marked in density.csv.")
def predict(bootstrap, level, threshold, **opts):
    """Predictive means and intervals for the target rows."""
    run = Run(opts, "predict")
    run.extra = {"bootstrap": bootstrap, "level": level, "threshold": threshold}
    if not 0 < level < 1:
        raise ConfigError("interval_level", f"must lie in (0, 1), got {level}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        d = run.data
        model = _fit_model(run)
        pd = model.predict_distribution(d, bootstrap, seed=run.seed)
        lo, hi = pd.interval(level)
        rows = np.flatnonzero(d.is_target)
        if rows.size == 0:
            warnings.warn("no target rows; predictions are written for the study rows")
            rows = np.flatnonzero(d.is_study)
        labels = _group_labels(d)
        _write_rows(run.out / "predictions.csv", ["row", "group", "split", "mean", "sd", "lo", "hi"],
                    ([i, labels[i], d.split[i], pd.mean[i], pd.sd[i], lo[i], hi[i]] for i in rows))
        groups = {str(g): pd.mean[labels == g] for g in np.unique(labels)}
        write_density(groups, run.out / "density.csv", threshold)
        summary = {}
        for g, v in groups.items():
            summary[g] = {
                "count": int(v.size),
                "mean": float(v.mean()),
                "sd": float(v.std(ddof=1)) if v.size > 1 else None,
                "below_threshold_share": None if threshold is None else float((v < threshold).mean()),
            }
        payload = {
            "model": _model_payload(model),
            "draws": bootstrap,
            "interval_level": level,
            "predicted_rows": int(rows.size),
            "threshold": threshold,
            "split_summary": summary,
        }
    run.finish(payload, caught)


def _parse_levels(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError("correlation_levels", f"cannot parse {text!r} as numbers") from None


@cli.command()
@_common
@click.option("--rho-levels", default="0.1,0.2,0.3,0.4,0.5", help="Comma-separated correlations.")
@click.option("--bootstrap", type=int, default=100, help="Draws per unit and model (B).")
@click.option("--top-k", type=int, default=0, help="Also correlate R with the k most important predictors.")
@click.option("--level", type=float, default=0.95, help="Unit interval level.")
@click.option("--ci-level", type=float, default=0.99, help="Metric interval level.")
@click.option("--holdout", type=float, default=0.2, help="Held-out share of study rows.")
@click.option("--unit-test", type=click.Choice(["interval", "ttest"]), default="interval")
@click.option("--refit/--no-refit", default=False, help="Bootstrap refits instead of model draws.")
def sensitivity(rho_levels, bootstrap, top_k, level, ci_level, holdout, unit_test, refit, **opts):
    """Sweep the synthetic predictor's correlation with the outcome."""
    run = Run(opts, "sensitivity")
    spec = SensitivitySpec(
        correlation_levels=_parse_levels(rho_levels),
        bootstrap_b=bootstrap,
        interval_level=level,
        metric_ci_level=ci_level,
        correlate_top_k=top_k,
        regressor=run.regressor,
        seed=run.seed,
        holdout_fraction=holdout,
        unit_test=unit_test,
        refit=refit,
    )
    run.extra = {"sensitivity": spec.to_dict()}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = run_sensitivity(run.data, spec, workers=run.workers)
        payload = rep.to_dict()
        emit_sensitivity_plots(payload, run.out)
    run.finish(payload, caught, rep.warnings)


@cli.command()
@_common
@click.option("--bootstrap", type=int, default=100, help="Predictive draws per unit.")
@click.option("--rule", type=click.Choice(["sd", "mad"]), default="sd")
@click.option("--k-mult", type=float, default=2.0, help="Deviation multiplier K.")
@click.option("--tail", type=click.Choice(["lower", "upper", "both"]), default="lower")
@click.option("--pool", type=click.Choice(["pooled", "split"]), default="pooled",
              help="Statistics over all units or within each split.")
@click.option("--tree-depth", type=int, default=3)
@click.option("--min-leaf", type=int, default=20)
def outliers(bootstrap, rule, k_mult, tail, pool, tree_depth, min_leaf, **opts):
    """Flag unusually low predictions and describe them with a tree."""
    run = Run(opts, "outliers")
    orule = OutlierRule(rule, k_mult, tail)
    run.extra = {"bootstrap": bootstrap, "rule": orule.to_dict(), "pool": pool,
                 "tree_depth": tree_depth, "min_leaf": min_leaf}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        d = run.data
        model = _fit_model(run)
        pd = model.predict_distribution(d, bootstrap, seed=run.seed)
        labels = _group_labels(d)
        flags, low, groups = detect_outliers_by_split(pd, labels, orule, pooled=pool == "pooled")
        tree = fit_the_fit(d, low, max_depth=tree_depth, min_leaf=min_leaf)
        _write_rows(run.out / "flags.csv", ["row", "group", "split", "mean", "flagged", "low"],
                    ([i, labels[i], d.split[i], pd.mean[i], int(flags[i]), int(low[i])]
                     for i in range(d.row_count)))
        (run.out / "tree.txt").write_text(tree.to_text(), encoding="utf-8")
        (run.out / "tree.dot").write_text(tree.to_dot(), encoding="utf-8")
        payload = {
            "model": _model_payload(model),
            "draws": bootstrap,
            "pooling": pool,
            "groups": {k: v.to_dict() for k, v in groups.items()},
            "flagged_count": int(flags.sum()),
            "flagged_by_split": {str(g): int(flags[labels == g].sum()) for g in np.unique(labels)},
            "tree": tree.to_dict(),
        }
    run.finish(payload, caught)


@cli.command()
@_common
def overlap(**opts):
    """Study-membership scores and trimming of non-overlapping units."""
    run = Run(opts, "overlap")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        d = run.data
        rep = overlap_score(d)
        labels = _group_labels(d)
        _write_rows(run.out / "overlap.csv", ["row", "group", "split", "score", "trimmed"],
                    ([i, labels[i], d.split[i], rep.scores[i], int(rep.trimmed[i])]
                     for i in range(d.row_count)))
        payload = rep.to_dict()
    run.finish(payload, caught)


@cli.command()
@_common
@click.option("--folds", type=int, default=10)
def cv(folds, **opts):
    """K-fold cross-validation on the study rows."""
    run = Run(opts, "cv")
    run.extra = {"folds": folds}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = kfold_cv(run.data, run.regressor, k=folds, seed=run.seed, workers=run.workers)
        payload = res.to_dict()
    run.finish(payload, caught)


@cli.command()
@_common
@click.option("--proxy", required=True, help="Outcome observed on both splits.")
@click.option("--folds", type=int, default=10)
def crosscv(proxy, folds, **opts):
    """Train on study folds, test on target folds, with a proxy outcome."""
    run = Run(opts, "crosscv")
    run.extra = {"folds": folds, "proxy_outcome": proxy}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = cross_population_cv(run.data, proxy, run.regressor, k=folds, seed=run.seed,
                                  workers=run.workers)
        payload = {**res.to_dict(), "proxy_outcome": proxy}
    run.finish(payload, caught)


def _describe(err):
    if isinstance(err, ConfigError):
        flag = _FLAGS.get(err.field)
        return f"invalid value for {flag} ({err})" if flag else f"invalid configuration: {err}"
    return str(err)


def main(argv=None):
    """Run the CLI and return the exit code (0 ok, 1 invalid input, 2 numerical)."""
    try:
        cli.main(args=argv, prog_name="predsens", standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_INVALID
    except click.ClickException as e:
        e.show()
        return EXIT_INVALID
    except NumericalError as e:
        click.echo(f"error: numerical failure: {_describe(e)}", err=True)
        return EXIT_NUMERICAL
    except (PredsensError, OSError) as e:
        click.echo(f"error: {_describe(e)}", err=True)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
