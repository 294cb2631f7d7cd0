"""Command-line pipelines: contagion, screen, and the two simulators.

Configuration is a flat ``key = value`` text file (``#`` comments allowed);
command-line flags override file values. Every run writes a ``manifest.json``
echoing the fully resolved configuration, so any run can be reproduced from
its manifest alone.

Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

import dataclasses
import json
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__, io
from .changepoint import Priors, filter_cohort, gibbs_screen, screen
from .errors import (
    ConvergenceError,
    DataValidationError,
    NumericalError,
    RankDeficiencyError,
)
from .factors import FourFactorResiduals
from .graphs import WindowSpec, rolling_graphs
from .simulate import ContagionSim, FirmSim, simulate_contagion, simulate_firms

PIPELINES = ("contagion", "screen", "simulate-contagion", "simulate-firms")
ESTIMATORS = ("bic-subset", "ols", "ridge", "lasso")


def _int_tuple(value):
    if isinstance(value, (tuple, list)):
        return tuple(int(v) for v in value)
    parts = [p.strip() for p in str(value).split(",") if p.strip()]
    return tuple(int(p) for p in parts)


def _opt_int(value):
    if value in (None, "", "none"):
        return None
    return int(value)


@dataclass
class RunConfig:
    """Fully resolved settings for one pipeline run."""

    pipeline: str
    out: str = None
    input: str = None
    seed: int = 0
    # contagion
    window_length: int = 150
    window_step: int = 5
    estimator: str = "bic-subset"
    lam: float = 0.1
    rule: str = "and"
    n_jobs: int = None
    # screen
    iters: int = 3000
    burn_in: int = 500
    cutoff: float = 0.95
    min_obs: int = 20
    a: float = 2.0
    b: float = 2.0
    tau2: float = 10.0
    alpha_null: float = 0.8
    alpha_full: float = 0.1
    n_grid: int = None
    df_convention: str = "shifted"
    # simulators
    sim_series: int = 10
    sim_regime_lengths: tuple = (300, 300)
    sim_loading_scale: float = 0.5
    sim_partial: float = 0.45
    sim_firms: int = 200
    sim_years: int = 30
    sim_obs: int = 25
    sim_signal: int = 20
    sim_jump: float = 3.0
    sim_noise: float = 0.5
    sim_changepoint_years: tuple = ()

    def validate(self):
        if self.pipeline not in PIPELINES:
            raise DataValidationError(f"unknown pipeline {self.pipeline!r}; choose from {PIPELINES}")
        if not self.out:
            raise DataValidationError("an output directory is required (--out or the 'out' config key)")
        if self.estimator not in ESTIMATORS:
            raise DataValidationError(f"unknown estimator {self.estimator!r}; choose from {ESTIMATORS}")
        if self.pipeline in ("contagion", "screen"):
            if not self.input:
                raise DataValidationError(f"pipeline {self.pipeline!r} requires an input path")
            if not Path(self.input).exists():
                raise DataValidationError(f"input path does not exist: {self.input}")
        if self.seed < 0:
            raise DataValidationError("seed must be nonnegative")
        if not 0 < self.cutoff <= 1:
            raise DataValidationError("cutoff must lie in (0, 1]")
        if self.window_length < 3 or self.window_step < 1:
            raise DataValidationError("window geometry out of range")
        if self.iters <= self.burn_in or self.burn_in < 0:
            raise DataValidationError("need iters > burn_in >= 0")
        if self.min_obs < 1:
            raise DataValidationError("min_obs must be at least 1")
        if self.lam < 0:
            raise DataValidationError("lambda must be nonnegative")
        return self

    def to_dict(self):
        payload = dataclasses.asdict(self)
        payload["sim_regime_lengths"] = list(self.sim_regime_lengths)
        payload["sim_changepoint_years"] = list(self.sim_changepoint_years)
        return payload

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DataValidationError(f"unknown configuration keys: {sorted(unknown)}")
        coerced = {}
        for field in dataclasses.fields(cls):
            if field.name not in data:
                continue
            raw = data[field.name]
            caster = _CASTERS[field.name]
            try:
                coerced[field.name] = caster(raw)
            except (TypeError, ValueError) as err:
                raise DataValidationError(f"bad value for {field.name!r}: {raw!r}") from err
        return cls(**coerced)

    @classmethod
    def from_manifest(cls, path):
        with open(path, encoding="utf-8") as handle:
            manifest = json.load(handle)
        return cls.from_dict(manifest["config"])


_CASTERS = {
    "pipeline": str,
    "out": lambda v: None if v in (None, "") else str(v),
    "input": lambda v: None if v in (None, "") else str(v),
    "seed": int,
    "window_length": int,
    "window_step": int,
    "estimator": str,
    "lam": float,
    "rule": str,
    "n_jobs": _opt_int,
    "iters": int,
    "burn_in": int,
    "cutoff": float,
    "min_obs": int,
    "a": float,
    "b": float,
    "tau2": float,
    "alpha_null": float,
    "alpha_full": float,
    "n_grid": _opt_int,
    "df_convention": str,
    "sim_series": int,
    "sim_regime_lengths": _int_tuple,
    "sim_loading_scale": float,
    "sim_partial": float,
    "sim_firms": int,
    "sim_years": int,
    "sim_obs": int,
    "sim_signal": int,
    "sim_jump": float,
    "sim_noise": float,
    "sim_changepoint_years": _int_tuple,
}


def read_config_file(path):
    """Parse the flat ``key = value`` format into a raw string dict."""
    data = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataValidationError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            data[key.strip()] = value.strip()
    return data


def run(config: RunConfig):
    """Execute one pipeline end-to-end; returns the manifest dict.

    Artifacts land in ``config.out``. The manifest is written even when the
    pipeline fails partway, with ``status: failed`` and whatever artifacts
    made it to disk.
    """
    config.validate()
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    manifest = {
        "schema_version": io.SCHEMA_VERSION,
        "package_version": __version__,
        "pipeline": config.pipeline,
        "seed": config.seed,
        "config": config.to_dict(),
        "started_utc": datetime.now(timezone.utc).isoformat(),
        "artifacts": [],
        "status": "running",
    }
    runner = {
        "contagion": _run_contagion,
        "screen": _run_screen,
        "simulate-contagion": _run_simulate_contagion,
        "simulate-firms": _run_simulate_firms,
    }[config.pipeline]
    try:
        runner(config, out, manifest)
    except Exception as err:
        manifest["status"] = "failed"
        manifest["error"] = str(err)
        manifest["wall_time_s"] = time.time() - started
        _write_manifest(out, manifest)
        raise
    manifest["status"] = "complete"
    manifest["wall_time_s"] = time.time() - started
    _write_manifest(out, manifest)
    return manifest


def _write_manifest(out, manifest):
    with open(out / "manifest.json", "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2)
        handle.write("\n")


def _emit(out, manifest, name, writer, *args, **kwargs):
    path = out / name
    result = writer(path, *args, **kwargs)
    manifest["artifacts"].append(name)
    return result


def _run_contagion(config, out, manifest):
    returns, factors = io.load_return_panel(config.input)
    click.echo(f"loaded {returns.shape[0]} rows x {returns.shape[1]} index columns")
    transformer = FourFactorResiduals(factors=factors).fit(returns)
    residuals = transformer.transform(returns)
    spec = WindowSpec(length=config.window_length, step=config.window_step)
    snapshots = rolling_graphs(
        residuals,
        spec,
        method=config.estimator,
        lam=config.lam,
        rule=config.rule,
        n_jobs=config.n_jobs,
    )
    click.echo(f"estimated {len(snapshots)} rolling graphs")
    manifest["n_windows"] = len(snapshots)
    _emit(out, manifest, "snapshots.jsonl", io.write_snapshots_jsonl, snapshots)
    _emit(out, manifest, "degrees.csv", io.write_long_series_csv, io.degree_rows(snapshots))
    _emit(out, manifest, "coefficients.csv", io.write_long_series_csv, io.coefficient_rows(snapshots))
    _emit(
        out,
        manifest,
        "loadings.csv",
        io.write_frame_csv,
        transformer.loadings_frame().reset_index(names="index_id"),
    )


def _run_screen(config, out, manifest):
    firms, year_offset = io.load_firm_csv(config.input)
    kept = filter_cohort(firms, min_obs=config.min_obs)
    click.echo(f"loaded {len(firms)} firms; {len(kept)} with at least {config.min_obs} observations")
    if not kept:
        raise DataValidationError(f"no firms left after the min_obs={config.min_obs} filter")
    manifest["n_firms_loaded"] = len(firms)
    manifest["n_firms_screened"] = len(kept)
    manifest["year_offset"] = year_offset
    n_grid = config.n_grid or max(int(f.times[-1]) for f in kept)
    priors = Priors.default(
        n_grid,
        a=config.a,
        b=config.b,
        tau2=config.tau2,
        alpha_null=config.alpha_null,
        alpha_full=config.alpha_full,
    )
    posteriors, weight_mean = gibbs_screen(
        kept,
        priors,
        iters=config.iters,
        burn_in=config.burn_in,
        seed=config.seed,
        df_convention=config.df_convention,
    )
    hits = screen(posteriors, cutoff=config.cutoff)
    click.echo(f"{len(hits)} firms at or above cutoff {config.cutoff}")
    _emit(out, manifest, "posteriors.csv", io.write_posteriors_csv, posteriors, year_offset)
    _emit(out, manifest, "weights.csv", io.write_weights_csv, weight_mean, year_offset)
    _emit(out, manifest, "report.json", io.write_screen_report, hits, config.cutoff, year_offset)


def _run_simulate_contagion(config, out, manifest):
    sim = ContagionSim(
        n_series=config.sim_series,
        regime_lengths=config.sim_regime_lengths,
        factor_loading_scale=config.sim_loading_scale,
    )
    panel, truth = simulate_contagion(sim, seed=config.seed)
    click.echo(f"simulated {len(panel)} trading days x {config.sim_series} series")
    _emit(out, manifest, "panel.csv", io.write_return_panel, panel)
    _emit(out, manifest, "truth.json", io.write_json, truth)


def _run_simulate_firms(config, out, manifest):
    sim = FirmSim(
        n_firms=config.sim_firms,
        n_years=config.sim_years,
        n_obs=config.sim_obs,
        n_signal=config.sim_signal,
        jump_size=config.sim_jump,
        noise_sd=config.sim_noise,
        changepoint_years=config.sim_changepoint_years or None,
    )
    firms, truth = simulate_firms(sim, seed=config.seed)
    click.echo(f"simulated {len(firms)} firms over {config.sim_years} years")
    _emit(out, manifest, "firms.csv", io.write_firm_csv, firms)
    _emit(out, manifest, "truth.json", io.write_json, truth)


def _resolved_config(ctx, pipeline, config_path, flag_names):
    """Merge config-file values with flags; explicitly passed flags win."""
    data = {}
    if config_path:
        data.update(read_config_file(config_path))
    data["pipeline"] = pipeline
    for name in flag_names:
        source = ctx.get_parameter_source(name)
        value = ctx.params[name]
        if source == click.core.ParameterSource.COMMANDLINE:
            data[name] = value
        elif name not in data and value is not None:
            data[name] = value
    return RunConfig.from_dict(data)


def _execute(config):
    try:
        run(config)
    except DataValidationError as err:
        click.echo(f"error: {err}", err=True)
        raise SystemExit(2)
    except (NumericalError, ConvergenceError, RankDeficiencyError, np.linalg.LinAlgError) as err:
        click.echo(f"numerical failure: {err}", err=True)
        raise SystemExit(3)


def _common_options(command):
    for option in reversed(
        [
            click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="Flat key = value configuration file; flags override it."),
            click.option("--out", type=click.Path(), default=None, help="Output directory (created if missing)."),
            click.option("--seed", type=int, default=0, show_default=True, help="Root seed; all randomness derives from it."),
        ]
    ):
        command = option(command)
    return command


@click.group()
@click.version_option(version=__version__)
def main():
    """Rolling-graph contagion estimation and changepoint screening."""


@main.command()
@_common_options
@click.option("--input", type=click.Path(), default=None, help="Return-panel CSV (date, factor columns, index columns).")
@click.option("--window", "window_length", type=int, default=150, show_default=True, help="Observations per rolling window.")
@click.option("--step", "window_step", type=int, default=5, show_default=True, help="Shift between window starts.")
@click.option("--estimator", type=click.Choice(ESTIMATORS), default="bic-subset", show_default=True, help="Per-node regression method.")
@click.option("--lam", type=float, default=0.1, show_default=True, help="Penalty for the ridge/lasso estimators.")
@click.pass_context
def contagion(ctx, config_path, **_):
    """Estimate rolling residual graphs from a return panel."""
    flags = ("out", "seed", "input", "window_length", "window_step", "estimator", "lam")
    _execute(_resolved_config(ctx, "contagion", config_path, flags))


@main.command("screen")
@_common_options
@click.option("--input", type=click.Path(), default=None, help="Firm panel CSV (firm_id, year, value).")
@click.option("--iters", type=int, default=3000, show_default=True, help="Gibbs sweeps.")
@click.option("--burn-in", "burn_in", type=int, default=500, show_default=True, help="Sweeps discarded before averaging.")
@click.option("--cutoff", type=float, default=0.95, show_default=True, help="Screening threshold on the interior peak probability.")
@click.option("--min-obs", "min_obs", type=int, default=20, show_default=True, help="Minimum observations per firm.")
@click.pass_context
def screen_command(ctx, config_path, **_):
    """Screen a firm cohort for single changepoints."""
    flags = ("out", "seed", "input", "iters", "burn_in", "cutoff", "min_obs")
    _execute(_resolved_config(ctx, "screen", config_path, flags))


@main.command("simulate-contagion")
@_common_options
@click.option("--series", "sim_series", type=int, default=10, show_default=True, help="Number of simulated return series.")
@click.pass_context
def simulate_contagion_command(ctx, config_path, **_):
    """Generate a regime-switching return panel with known graph truth."""
    flags = ("out", "seed", "sim_series")
    _execute(_resolved_config(ctx, "simulate-contagion", config_path, flags))


@main.command("simulate-firms")
@_common_options
@click.option("--firms", "sim_firms", type=int, default=200, show_default=True, help="Cohort size.")
@click.pass_context
def simulate_firms_command(ctx, config_path, **_):
    """Generate a firm cohort with known changepoint truth."""
    flags = ("out", "seed", "sim_firms")
    _execute(_resolved_config(ctx, "simulate-firms", config_path, flags))


if __name__ == "__main__":
    main()
