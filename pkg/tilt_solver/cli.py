"""Command-line interface for the TILT solver."""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
import numpy as np
import pandas as pd
from pydantic import ValidationError

from tilt_solver import __version__
from tilt_solver.config.config import OuterOptions, configure_logging
from tilt_solver.config.run_config import RunConfig, load_run_config
from tilt_solver.errors import TiltError
from tilt_solver.experiments import (
    BENCH_SOLVERS, CORRUPTION_SOLVERS, DEFAULT_LEVELS, RANGE_SOLVERS, SPEED_SOLVERS, bench_frame, bench_inner,
    experiment_corruption, experiment_range, experiment_speed, median_times, summarize_bench, write_results,
    write_table,
)
from tilt_solver.imaging import (
    load_corpus, load_png, range_grid, read_sidecar, save_png, synthetic_corpus, warp_patch, write_corpus,
    params_from_list,
)
from tilt_solver.models import CorpusCase, TiltResult, TransformParams, WindowSpec
from tilt_solver.outer_loop import run_tilt
from tilt_solver.reports import TauReport, export_schemas
from tilt_solver.transforms import relative_error

logger = logging.getLogger(__name__)

PARAM_NAMES = ["a11", "a12", "a21", "a22", "tx", "ty", "h31", "h32"]


class InputError(click.ClickException):
    """Bad arguments, configuration or input files."""
    exit_code = 2


class SolverFailure(click.ClickException):
    """The solver raised a TiltError."""
    exit_code = 1


def solver_options(fn):
    """Options shared by every solving command."""
    decorators = [
        click.option("--config", "config_file", type=click.Path(), default=None,
                     help="key=value config file (dotenv syntax)"),
        click.option("--seed", type=int, default=None, help="RNG seed (fallback: TILT_SEED)"),
        click.option("--solver", default=None, help="adm, ladmap, ladmap-vws, ladmap-svdws or ladmap-vws-svdws"),
        click.option("--kind", type=click.Choice(["affine", "projective"]), default=None, help="Transform model"),
        click.option("--constraints", type=click.Choice(["none", "center_area"]), default=None,
                     help="Side constraints on the transform update"),
        click.option("--max-outer-iters", type=int, default=None),
        click.option("--tau-tol", type=float, default=None),
        click.option("--lambda-scale", type=float, default=None),
        click.option("--rho0", type=float, default=None),
        click.option("--adm-rho", type=float, default=None),
        click.option("--eps1", type=float, default=None),
        click.option("--eps2", type=float, default=None),
        click.option("--eps-svd", type=float, default=None),
        click.option("--max-inner-iters", type=int, default=None),
        click.option("--rel-err-tol", type=float, default=None, help="Success threshold on the relative error"),
        click.option("--jobs", "-j", type=int, default=None, help="Worker processes for sweeps"),
        click.option("--verbose", "-v", is_flag=True, help="Enable verbose logging"),
        click.option("--quiet", "-q", is_flag=True, help="Suppress progress display"),
    ]
    for decorator in reversed(decorators):
        fn = decorator(fn)
    return fn


def _configure(command: str, params: Dict[str, Any], sweep: bool = False) -> RunConfig:
    config_file = params.pop("config_file", None)
    # an unset flag must not mask the config file
    for flag in ("verbose", "quiet"):
        if not params.get(flag):
            params.pop(flag, None)
    try:
        cfg = load_run_config(command, params, config_file)
        options = cfg.to_outer_options()
    except (ValidationError, ValueError, FileNotFoundError) as e:
        raise InputError(str(e)) from e
    if sweep and not cfg.verbose:
        # per-iteration INFO lines would drown the progress bar
        options.log_level = max(options.log_level, logging.WARNING)
    configure_logging(options)
    logger.debug(f"Effective configuration: {cfg.model_dump(mode='json')}")
    return cfg


def _load_cases(cfg: RunConfig) -> List[CorpusCase]:
    if cfg.corpus is None:
        logger.info("No --corpus given; using the built-in synthetic corpus")
        return synthetic_corpus()
    try:
        cases = load_corpus(cfg.corpus)
    except (FileNotFoundError, OSError, KeyError, ValueError) as e:
        raise InputError(f"Cannot load corpus {cfg.corpus}: {e}") from e
    if not cases:
        raise InputError(f"Corpus {cfg.corpus} contains no annotated images")
    return cases


@click.group()
@click.version_option(__version__)
def main():
    """TILT solver: rectify low-rank textures and run the solver comparisons."""
    pass


@main.command()
@click.argument("image", type=click.Path(exists=True, dir_okay=False, readable=True))
@click.option("--window", "-w", default=None, help="Window as x,y,w,h (default: from the JSON sidecar)")
@click.option("--out", "-o", required=True, type=click.Path(file_okay=False), help="Output directory")
@solver_options
def rectify(image, **params):
    """Rectify one window of IMAGE and write the decomposition."""
    cfg = _configure("rectify", dict(params, input=image))
    options = cfg.to_outer_options()
    try:
        gray = load_png(image)
        sidecar = read_sidecar(image) or {}
    except (OSError, ValueError) as e:
        raise InputError(f"Cannot read {image}: {e}") from e

    window = cfg.window_spec
    if window is None:
        if "window" not in sidecar:
            raise InputError("No --window given and no window in the image sidecar")
        window = WindowSpec(*sidecar["window"])
    truth = params_from_list(sidecar["ground_truth"]) if sidecar.get("ground_truth") else None
    tau0 = params_from_list(sidecar["tau0"]) if sidecar.get("tau0") else None

    try:
        result = run_tilt(gray, window, tau0, options)
        rectified = warp_patch(gray, result.tau_star, window)
    except TiltError as e:
        raise SolverFailure(f"Rectification failed: {e}") from e

    out = Path(cfg.out)
    write_rectify_outputs(out, cfg, result, rectified, truth)
    click.echo(f"tau* = {np.array2string(result.tau_star.params, precision=6)}")
    if truth is not None:
        click.echo(f"relative error vs ground truth: {relative_error(result.tau_star, truth):.4g}")
    click.echo(f"Outputs written to {out}")


def write_rectify_outputs(
    out: Path, cfg: RunConfig, result: TiltResult, rectified: np.ndarray, truth: Optional[TransformParams]
) -> None:
    """Write config.json, the three PNGs, tau.json and trace.csv."""
    out.mkdir(parents=True, exist_ok=True)
    cfg.echo(out)
    save_png(rectified, out / "rectified.png")
    save_png(result.a_star, out / "A.png", rescale=True)
    save_png(result.e_star, out / "E.png", rescale=True)

    inner_time = sum(r.wall_time for r in result.inner_reports)
    tau = result.tau_star
    report = TauReport(
        kind=tau.kind.value,
        param_names=PARAM_NAMES[:tau.params.size],
        params=tau.to_list(),
        solver=cfg.to_outer_options().solver_name,
        converged=result.converged,
        outer_iters=result.outer_iters,
        inner_iterations=result.inner_iterations,
        total_time_s=result.total_time,
        inner_time_fraction=inner_time / result.total_time if result.total_time > 0 else 0.0,
        norm_factor=result.norm_factors[-1] if result.norm_factors else 0.0,
        ground_truth=truth.to_list() if truth is not None else None,
        relative_error=relative_error(tau, truth) if truth is not None else None,
    )
    (out / "tau.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")

    rows = []
    for i, inner in enumerate(result.inner_reports):
        step = result.tau_history[i + 1].params - result.tau_history[i].params
        rows.append({
            "outer_iter": i + 1,
            "inner_iters": inner.iterations,
            "stop_reason": inner.stop_reason.value,
            "objective": inner.objective,
            "dtau_inf": float(np.max(np.abs(step))),
            "norm_factor": result.norm_factors[i],
            "inner_time_s": inner.wall_time,
            **dict(zip(PARAM_NAMES, result.tau_history[i + 1].to_list())),
        })
    write_table(pd.DataFrame(rows), out / "trace.csv", "trace")


@main.command("bench-inner")
@click.option("--sizes", default=None, help="Comma-separated square patch sizes [10,50,100]")
@click.option("--trials", type=int, default=None, help="Trials per size [10]")
@click.option("--solvers", default=None, help="Comma-separated solver names")
@click.option("--out", "-o", required=True, type=click.Path(file_okay=False))
@solver_options
def bench_inner_cmd(**params):
    """Inner-loop benchmark on random instances."""
    cfg = _configure("bench-inner", params, sweep=True)
    options = cfg.to_outer_options()
    instances = bench_inner(
        cfg.sizes or [10, 50, 100], trials=cfg.trials or 10, seed=cfg.seed,
        solvers=cfg.solvers or BENCH_SOLVERS, options=options.inner,
        lambda_scale=options.lambda_scale, jobs=cfg.jobs, show_progress=options.show_progress,
    )
    out = Path(cfg.out)
    cfg.echo(out)
    write_results(instances, out, "bench_inner_instances", ["size", "solver", "trial"], ["time_s"])
    summary = bench_frame(summarize_bench(instances))
    write_results(summary, out, "bench_inner", ["size", "solver"], ["mean_time_s"])
    for row in summarize_bench(instances):
        click.echo(f"size={row.size:4d} {row.solver:14s} iters={row.mean_iters:7.1f} "
                   f"obj={row.mean_objective:.6g} time={row.mean_time_s:.3f}s")


@main.command("range")
@click.option("--theta-steps", type=int, default=None, help="Rotation samples in [0, pi/6] [11]")
@click.option("--t-steps", type=int, default=None, help="Skew samples in [0, 1] [21]")
@click.option("--solvers", default=None, help="Comma-separated solver names")
@click.option("--out", "-o", required=True, type=click.Path(file_okay=False))
@solver_options
def range_cmd(**params):
    """Range of convergence over rotation and skew of a checkerboard."""
    cfg = _configure("range", params, sweep=True)
    options = cfg.to_outer_options()
    thetas, ts = range_grid(cfg.theta_steps or 11, cfg.t_steps or 21)
    frame = experiment_range(
        thetas, ts, solvers=cfg.solvers or RANGE_SOLVERS, options=options, rel_err_tol=cfg.rel_err_tol,
        jobs=cfg.jobs, show_progress=options.show_progress,
    )
    out = Path(cfg.out)
    cfg.echo(out)
    write_results(frame, out, "range", ["theta", "t", "solver"], ["time_s"])
    for solver, group in frame.groupby("solver"):
        click.echo(f"{solver}: {int(group['success'].sum())}/{len(group)} cells recovered")


@main.command("corruption")
@click.option("--corpus", type=click.Path(), default=None, help="Corpus directory (default: built-in)")
@click.option("--levels", default=None, help="Comma-separated corruption fractions [0,0.1,...,1]")
@click.option("--solvers", default=None, help="Comma-separated solver names")
@click.option("--out", "-o", required=True, type=click.Path(file_okay=False))
@solver_options
def corruption_cmd(**params):
    """Success rate under random pixel corruption."""
    cfg = _configure("corruption", params, sweep=True)
    options = cfg.to_outer_options()
    cases = _load_cases(cfg)
    summary, detail = experiment_corruption(
        cases, cfg.levels or DEFAULT_LEVELS, seed=cfg.seed,
        solvers=cfg.solvers or CORRUPTION_SOLVERS, options=options,
        rel_err_tol=cfg.rel_err_tol, jobs=cfg.jobs, show_progress=options.show_progress,
    )
    out = Path(cfg.out)
    cfg.echo(out)
    write_results(summary, out, "corruption", ["level", "solver"], ["time_s"])
    write_results(detail, out, "corruption_cases", ["case", "level", "solver"], ["time_s"])
    for row in summary.itertuples():
        click.echo(f"level={row.level:.2f} {row.solver:14s} success={row.success_rate:.2f}")


@main.command("speed")
@click.option("--corpus", type=click.Path(), default=None, help="Corpus directory (default: built-in)")
@click.option("--solvers", default=None, help="Comma-separated solver names")
@click.option("--out", "-o", required=True, type=click.Path(file_okay=False))
@solver_options
def speed_cmd(**params):
    """End-to-end speed of the solver variants on the corpus."""
    cfg = _configure("speed", params, sweep=True)
    options = cfg.to_outer_options()
    cases = _load_cases(cfg)
    frame = experiment_speed(cases, solvers=cfg.solvers or SPEED_SOLVERS, options=options, jobs=cfg.jobs,
                             show_progress=options.show_progress)
    out = Path(cfg.out)
    cfg.echo(out)
    write_results(frame, out, "speed", ["case", "solver"], ["time_s", "speedup_vs_adm"])
    medians = median_times(frame)
    for solver, seconds in medians.items():
        click.echo(f"{solver:18s} median time {seconds:.3f}s")


@main.command("make-corpus")
@click.argument("directory", type=click.Path(file_okay=False))
@click.option("--size", type=int, default=128, help="Image side in pixels")
@click.option("--window", "window_size", type=int, default=48, help="Window side in pixels")
@click.option("--theta-deg", type=float, default=10.0, help="Rotation applied to every texture")
@click.option("--verbose", "-v", is_flag=True)
def make_corpus(directory, size, window_size, theta_deg, verbose):
    """Write the synthetic texture corpus with JSON sidecars to DIRECTORY."""
    configure_logging(OuterOptions(log_level=logging.DEBUG if verbose else logging.INFO))
    if window_size >= size:
        raise InputError("--window must be smaller than --size")
    cases = synthetic_corpus(size=size, window=window_size, theta=np.deg2rad(theta_deg))
    written = write_corpus(directory, cases)
    click.echo(f"Wrote {len(written)} images to {directory}")


@main.command()
@click.argument("directory", type=click.Path(file_okay=False))
def schemas(directory):
    """Export the JSON schemas of tau.json and config.json to DIRECTORY."""
    for path in export_schemas(directory):
        click.echo(f"Wrote {path}")


if __name__ == "__main__":
    main()
