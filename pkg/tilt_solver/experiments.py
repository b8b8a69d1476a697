"""Experiment harness behind the benchmark commands.

Every sweep is a list of independent tasks mapped (optionally in worker
processes) over a top-level task function; rows are merged in task order and
sorted by their key columns, so the tables do not depend on ``jobs``.
Wall-clock columns are kept apart from the deterministic columns.
"""
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from tilt_solver.config.config import OuterOptions, SolverOptions, parse_solver_name
from tilt_solver.errors import TiltError
from tilt_solver.imaging import corrupt, gen_checkerboard, make_rng, range_grid
from tilt_solver.inner_solver import InnerProblem, solve_adm, solve_ladmap
from tilt_solver.models import (
    BenchRow, CorpusCase, CorruptionSpec, JacobianMatrix, SolverKind, TransformParams, WindowSpec,
)
from tilt_solver.outer_loop import run_tilt
from tilt_solver.projector import Projector
from tilt_solver.transforms import checkerboard_ground_truth, relative_error

logger = logging.getLogger("tilt_solver")

BENCH_SOLVERS = ("adm", "ladmap", "ladmap-svdws")
RANGE_SOLVERS = ("adm", "ladmap")
CORRUPTION_SOLVERS = ("adm", "ladmap")
SPEED_SOLVERS = ("adm", "ladmap", "ladmap-vws", "ladmap-vws-svdws")
DEFAULT_LEVELS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
REL_ERR_TOL = 0.05
CSV_FLOAT_FORMAT = "%.10g"


# -- plumbing ----------------------------------------------------------------

def run_tasks(
    fn: Callable[[Any], Dict[str, Any]], tasks: Sequence[Any], jobs: int = 1,
    show_progress: bool = True, desc: str = "tasks",
) -> List[Dict[str, Any]]:
    """Map ``fn`` over ``tasks``, in order, with a progress bar."""
    if jobs <= 1:
        return [fn(task) for task in tqdm(tasks, desc=desc, disable=not show_progress)]
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        return list(tqdm(executor.map(fn, tasks), total=len(tasks), desc=desc, disable=not show_progress))


def split_timings(
    frame: pd.DataFrame, keys: List[str], timing_columns: List[str]
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Split a result table into (deterministic table, wall-clock table)."""
    frame = frame.sort_values(keys, kind="mergesort").reset_index(drop=True)
    timings = frame[keys + timing_columns]
    return frame.drop(columns=timing_columns), timings


def write_table(frame: pd.DataFrame, path: Path, table: str) -> Path:
    """Write a CSV whose first line names the table and its schema version."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# tilt-solver {table} v1\n")
        frame.to_csv(f, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


def read_table(path: Path) -> pd.DataFrame:
    """Read a table written by :func:`write_table`."""
    return pd.read_csv(path, comment="#")


def write_results(
    frame: pd.DataFrame, out_dir: Path, table: str, keys: List[str], timing_columns: List[str]
) -> Tuple[Path, Path]:
    """Write ``<table>.csv`` and ``<table>_timings.csv`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    main, timings = split_timings(frame, keys, timing_columns)
    return (
        write_table(main, out_dir / f"{table}.csv", table),
        write_table(timings, out_dir / f"{table}_timings.csv", f"{table}_timings"),
    )


def _attempt(image, window: WindowSpec, truth: TransformParams, opts: OuterOptions, tol: float,
             tau0: Optional[TransformParams] = None) -> Dict[str, Any]:
    started = time.perf_counter()
    try:
        result = run_tilt(image, window, tau0, opts)
    except TiltError as err:
        logger.debug(f"{opts.solver_name} failed: {err}")
        return {"success": 0, "rel_err": float("nan"), "outer_iters": 0, "inner_iters": 0,
                "time_s": time.perf_counter() - started}
    elapsed = time.perf_counter() - started
    err = relative_error(result.tau_star, truth)
    return {
        "success": int(err < tol),
        "rel_err": err,
        "outer_iters": result.outer_iters,
        "inner_iters": result.inner_iterations,
        "time_s": elapsed,
    }


# -- inner-loop benchmark ----------------------------------------------------

def random_instance(size: int, p: int, seed: int, trial: int) -> Tuple[np.ndarray, np.ndarray]:
    """Unit-norm uniform patch and Gaussian Jacobian; identical for every solver."""
    rng = make_rng([seed, size, trial])
    d = rng.uniform(size=(size, size))
    d /= np.linalg.norm(d)
    jac = rng.standard_normal((size * size, p))
    return d, jac


@dataclass(frozen=True)
class BenchTask:
    size: int
    trial: int
    solver: str
    seed: int
    p: int
    lambda_scale: float
    options: SolverOptions


def bench_task(task: BenchTask) -> Dict[str, Any]:
    d, jac = random_instance(task.size, task.p, task.seed, task.trial)
    projector = Projector.build(JacobianMatrix(jac, d.shape))
    problem = InnerProblem(d, projector, task.lambda_scale / np.sqrt(task.size))
    kind, _ = parse_solver_name(task.solver)
    opts = replace(task.options, solver_kind=kind)
    if kind is SolverKind.ADM:
        _, _, _, report = solve_adm(problem, opts)
    else:
        _, _, report, _ = solve_ladmap(problem, None, opts)
    return {
        "size": task.size,
        "trial": task.trial,
        "solver": task.solver,
        "iterations": report.iterations,
        "objective": report.objective,
        "converged": int(report.converged),
        "time_s": report.wall_time,
    }


def bench_inner(
    sizes: Iterable[int], trials: int = 10, seed: int = 0, solvers: Sequence[str] = BENCH_SOLVERS,
    options: Optional[SolverOptions] = None, p: int = 8, lambda_scale: float = 1.0,
    jobs: int = 1, show_progress: bool = True,
) -> pd.DataFrame:
    """Per-instance inner-loop results on random problems."""
    options = options or SolverOptions()
    tasks = [
        BenchTask(size, trial, solver, seed, p, lambda_scale, options)
        for size in sizes for trial in range(trials) for solver in solvers
    ]
    rows = run_tasks(bench_task, tasks, jobs, show_progress, desc="bench-inner")
    return pd.DataFrame(rows).sort_values(["size", "solver", "trial"], kind="mergesort").reset_index(drop=True)


def summarize_bench(instances: pd.DataFrame) -> List[BenchRow]:
    """Average the per-instance results by (size, solver)."""
    rows = []
    for (size, solver), group in instances.groupby(["size", "solver"], sort=True):
        rows.append(BenchRow(
            size=int(size),
            solver=str(solver),
            mean_time_s=float(group["time_s"].mean()),
            mean_iters=float(group["iterations"].mean()),
            mean_objective=float(group["objective"].mean()),
            trials=int(len(group)),
        ))
    return rows


def bench_frame(rows: List[BenchRow]) -> pd.DataFrame:
    return pd.DataFrame([vars(r) for r in rows])


# -- convergence range -------------------------------------------------------

@dataclass(frozen=True)
class RangeTask:
    theta: float
    t: float
    solver: str
    options: OuterOptions
    rel_err_tol: float
    cells: int
    cell_px: int
    window: int


def range_task(task: RangeTask) -> Dict[str, Any]:
    image = gen_checkerboard(task.cells, task.cell_px, task.theta, task.t)
    window = WindowSpec.centered(image.pixels.shape, task.window, task.window)
    truth = checkerboard_ground_truth(task.theta, task.t)
    row = _attempt(image, window, truth, task.options.with_solver(task.solver), task.rel_err_tol)
    return {"theta": task.theta, "t": task.t, "solver": task.solver, **row}


def experiment_range(
    thetas: Optional[Sequence[float]] = None, ts: Optional[Sequence[float]] = None,
    solvers: Sequence[str] = RANGE_SOLVERS, options: Optional[OuterOptions] = None,
    rel_err_tol: float = REL_ERR_TOL, cells: int = 8, cell_px: int = 12, window: int = 48,
    jobs: int = 1, show_progress: bool = True,
) -> pd.DataFrame:
    """Success grid over rotation angle and skew of a deformed checkerboard."""
    default_thetas, default_ts = range_grid()
    thetas = default_thetas if thetas is None else thetas
    ts = default_ts if ts is None else ts
    options = options or OuterOptions()
    tasks = [
        RangeTask(float(theta), float(t), solver, options, rel_err_tol, cells, cell_px, window)
        for theta in thetas for t in ts for solver in solvers
    ]
    rows = run_tasks(range_task, tasks, jobs, show_progress, desc="range")
    return pd.DataFrame(rows)


# -- corruption --------------------------------------------------------------

@dataclass(frozen=True)
class CorruptionTask:
    case: CorpusCase
    case_index: int
    level: float
    level_index: int
    solver: str
    seed: int
    options: OuterOptions
    rel_err_tol: float


def corruption_task(task: CorruptionTask) -> Dict[str, Any]:
    # seed depends on (image, level) only, so every solver sees the same pixels
    seed = int(make_rng([task.seed, task.case_index, task.level_index]).integers(2**31))
    image = corrupt(task.case.image, CorruptionSpec(task.level, seed))
    row = _attempt(image, task.case.window, task.case.ground_truth, task.options.with_solver(task.solver),
                   task.rel_err_tol, task.case.tau0)
    return {"case": task.case.name, "level": task.level, "solver": task.solver, **row}


def experiment_corruption(
    corpus: List[CorpusCase], levels: Sequence[float] = DEFAULT_LEVELS, seed: int = 0,
    solvers: Sequence[str] = CORRUPTION_SOLVERS, options: Optional[OuterOptions] = None,
    rel_err_tol: float = REL_ERR_TOL, jobs: int = 1, show_progress: bool = True,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Success rate per (level, solver) over the corpus images with ground truth.

    Returns:
        Tuple of (per-level summary, per-case detail)
    """
    options = options or OuterOptions()
    usable = [(i, c) for i, c in enumerate(corpus) if c.ground_truth is not None]
    if len(usable) < len(corpus):
        logger.warning(f"Skipping {len(corpus) - len(usable)} corpus images without ground truth")
    tasks = [
        CorruptionTask(case, i, float(level), li, solver, seed, options, rel_err_tol)
        for i, case in usable for li, level in enumerate(levels) for solver in solvers
    ]
    detail = pd.DataFrame(run_tasks(corruption_task, tasks, jobs, show_progress, desc="corruption"))
    summary = (
        detail.groupby(["level", "solver"], sort=True)
        .agg(success_rate=("success", "mean"), cases=("success", "size"), time_s=("time_s", "sum"))
        .reset_index()
    )
    return summary, detail


# -- speed -------------------------------------------------------------------

@dataclass(frozen=True)
class SpeedTask:
    case: CorpusCase
    solver: str
    options: OuterOptions


def speed_task(task: SpeedTask) -> Dict[str, Any]:
    case = task.case
    opts = task.options.with_solver(task.solver)
    started = time.perf_counter()
    row: Dict[str, Any] = {
        "case": case.name,
        "size": f"{case.window.width}x{case.window.height}",
        "solver": task.solver,
    }
    try:
        result = run_tilt(case.image, case.window, case.tau0, opts)
    except TiltError as err:
        logger.warning(f"{case.name}/{task.solver} failed: {err}")
        row.update(rel_err=float("nan"), outer_iters=0, inner_iters=0, failed=1,
                   time_s=time.perf_counter() - started)
        return row
    row.update(
        rel_err=relative_error(result.tau_star, case.ground_truth) if case.ground_truth is not None else float("nan"),
        outer_iters=result.outer_iters,
        inner_iters=result.inner_iterations,
        failed=0,
        time_s=result.total_time,
    )
    return row


def experiment_speed(
    corpus: List[CorpusCase], solvers: Sequence[str] = SPEED_SOLVERS, options: Optional[OuterOptions] = None,
    jobs: int = 1, show_progress: bool = True,
) -> pd.DataFrame:
    """End-to-end time per (case, solver) with speedup relative to ADM."""
    options = options or OuterOptions()
    tasks = [SpeedTask(case, solver, options) for case in corpus for solver in solvers]
    frame = pd.DataFrame(run_tasks(speed_task, tasks, jobs, show_progress, desc="speed"))
    adm = frame[frame["solver"] == "adm"].set_index("case")["time_s"]
    frame["speedup_vs_adm"] = [
        adm[case] / t if case in adm.index and t > 0 else float("nan")
        for case, t in zip(frame["case"], frame["time_s"])
    ]
    return frame


def median_times(frame: pd.DataFrame) -> Dict[str, float]:
    """Median wall time per solver across cases."""
    return {str(k): float(v) for k, v in frame.groupby("solver")["time_s"].median().items()}
