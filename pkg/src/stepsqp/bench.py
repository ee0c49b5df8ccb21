"""Benchmark harness: noise grids, run artifacts, performance profiles.

A grid crosses registered problems with zeroth/first-order noise levels
and replicates (replicates collapse to one when both levels are zero,
since such runs are deterministic). Every run gets an independent RNG
stream derived from (seed, problem, noise pair, replicate), so results
do not depend on execution order or parallelism degree.

Per run, two metric trajectories are tracked against two cost axes:

* infeasibility: ||c(x_k)||_inf
* kkt: max(||c(x_k)||_inf, least-squares dual residual inf-norm)

against iteration count and against cumulative oracle work (function
plus gradient calls). Budgets-to-convergence use the standard
data-profile convergence test

    m(x_0) - m(x_k) >= (1 - eps_pp) * (m(x_0) - m_best)

with m_best the best value reached by any solver configuration on that
instance, and performance profiles plot the fraction of instances each
configuration solved within a factor tau of the per-instance best
budget.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .oracles import OracleConfig, derive_stream
from .problems import get_problem, problem_names
from .sqp import RunRecord, RunStatus, SolverParams, solve

EPS_PP_DEFAULT = 1e-3

# Zeroth-order levels {0, 1e-4, 1e-2, 1e-1} crossed with first-order
# levels {1e-4, 1e-2, 1e-1}, plus the noiseless pair.
DEFAULT_NOISE_PAIRS: tuple[tuple[float, float], ...] = ((0.0, 0.0),) + tuple(
    (ef, eg)
    for ef in (0.0, 1e-4, 1e-2, 1e-1)
    for eg in (1e-4, 1e-2, 1e-1)
)


class EmptyInputError(Exception):
    """Profile construction got no solvers or no instances."""


def _default_problems() -> tuple[str, ...]:
    return tuple(problem_names())


@dataclass(frozen=True)
class ExperimentGrid:
    """One benchmark campaign: problems x noise pairs x replicates."""

    problems: tuple[str, ...] = field(default_factory=_default_problems)
    noise_pairs: tuple[tuple[float, float], ...] = DEFAULT_NOISE_PAIRS
    replicates: int = 5
    params: SolverParams = field(default_factory=SolverParams)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "problems", tuple(self.problems))
        pairs = tuple((float(ef), float(eg)) for ef, eg in self.noise_pairs)
        object.__setattr__(self, "noise_pairs", pairs)
        if not self.problems:
            raise ValueError("grid needs at least one problem")
        if not self.noise_pairs:
            raise ValueError("grid needs at least one noise pair")
        for ef, eg in pairs:
            if ef < 0 or eg < 0 or not (math.isfinite(ef) and math.isfinite(eg)):
                raise ValueError("noise levels must be finite and >= 0")
        if not isinstance(self.replicates, int) or self.replicates < 1:
            raise ValueError("replicates must be a positive integer")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an integer in [0, 2^64)")


@dataclass(frozen=True)
class GridCell:
    """One run's coordinates within a grid."""

    problem: str
    eps_f: float
    eps_g: float
    replicate: int
    stream_id: int


def grid_cells(grid: ExperimentGrid) -> list[GridCell]:
    """Enumerate the grid deterministically (problems, pairs, replicates)."""
    cells = []
    for name in grid.problems:
        for ef, eg in grid.noise_pairs:
            reps = 1 if ef == 0.0 and eg == 0.0 else grid.replicates
            for rep in range(reps):
                stream = derive_stream(grid.seed, name, (ef, eg), rep)
                cells.append(GridCell(name, ef, eg, rep, stream))
    return cells


def run_cell(grid: ExperimentGrid, cell: GridCell) -> RunRecord:
    """Execute one grid cell."""
    cfg = OracleConfig(
        eps_f_noise=cell.eps_f,
        eps_g_noise=cell.eps_g,
        seed=grid.seed,
        stream_id=cell.stream_id,
    )
    return solve(get_problem(cell.problem), grid.params, cfg)


# ---------------------------------------------------------------------------
# Trajectories and convergence budgets.


class Trajectory(NamedTuple):
    """Metric values at iterates x_0..x_K and the oracle work to reach each."""

    values: np.ndarray
    work: np.ndarray


def _trajectories_from_rows(
    rows: list[tuple[float, float, int, int]],
    final_infeas: Optional[float],
    final_kkt: Optional[float],
) -> dict[str, Trajectory]:
    """Build metric trajectories from per-iteration rows plus final metrics.

    Each row is (infeas_inf, kkt_inf, zeroth_calls, first_calls) with
    cumulative counters; row j describes iterate x_j, and the final
    metrics (when available) describe the last iterate.
    """
    infeas = [r[0] for r in rows]
    kkt = [max(r[0], r[1]) for r in rows]
    work = [0.0] + [float(r[2] + r[3]) for r in rows]
    if final_infeas is not None and final_kkt is not None:
        infeas.append(final_infeas)
        kkt.append(max(final_infeas, final_kkt))
    else:
        work.pop()
    return {
        "infeasibility": Trajectory(np.asarray(infeas), np.asarray(work)),
        "kkt": Trajectory(np.asarray(kkt), np.asarray(work)),
    }


def record_trajectories(record: RunRecord) -> dict[str, Trajectory]:
    """Metric trajectories (values, cumulative work) of one run."""
    rows = [
        (log.infeas_inf, log.kkt_inf, log.zeroth_calls, log.first_calls)
        for log in record.iterations
    ]
    return _trajectories_from_rows(rows, record.final_infeas_inf, record.final_kkt_inf)


@dataclass(frozen=True)
class ProfileInput:
    """One solver configuration's trajectory on one problem instance."""

    solver: str
    instance: str
    values: np.ndarray
    work: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        work = np.asarray(self.work, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "work", work)
        if values.shape != work.shape or values.ndim != 1:
            raise ValueError("values and work must be 1-d arrays of equal length")
        if values.size and not np.all(np.isfinite(values)):
            raise ValueError("metric values must be finite")
        if values.size and (np.any(work < 0) or np.any(np.diff(work) < 0)):
            raise ValueError("work counts must be non-negative and non-decreasing")


def convergence_budget(
    trajectory: "ProfileInput | Trajectory",
    m0: float,
    m_best: float,
    eps_pp: float = EPS_PP_DEFAULT,
) -> Optional[float]:
    """Work needed to close a (1 - eps_pp) fraction of the reachable gap.

    Returns the work count at the first trajectory point with
    m0 - m(x) >= (1 - eps_pp) * (m0 - m_best), or None when the
    trajectory never achieves it (the instance counts as unsolved).
    The comparison is non-strict, so m0 == m_best converges at the
    first point.
    """
    values = np.asarray(trajectory.values, dtype=np.float64)
    work = np.asarray(trajectory.work, dtype=np.float64)
    if values.size == 0:
        return None
    target = (1.0 - eps_pp) * (m0 - m_best)
    hits = np.nonzero(m0 - values >= target)[0]
    if hits.size == 0:
        return None
    return float(work[hits[0]])


# ---------------------------------------------------------------------------
# Performance profiles.


@dataclass(frozen=True)
class PerformanceProfile:
    """Performance ratios and step-curve samples per solver configuration.

    ratios maps (solver, instance) to budget / best-budget-on-instance
    (inf for unsolved); curves maps each solver to sampled step points
    (tau, rho(tau)) at its distinct finite ratios.
    """

    solvers: tuple[str, ...]
    instances: tuple[str, ...]
    ratios: dict[tuple[str, str], float]
    curves: dict[str, list[tuple[float, float]]]

    def rho(self, solver: str, tau: float) -> float:
        """Fraction of instances this solver solved within factor tau."""
        count = sum(1 for inst in self.instances if self.ratios[(solver, inst)] <= tau)
        return count / len(self.instances)


def build_profile(budgets: dict[str, dict[str, Optional[float]]]) -> PerformanceProfile:
    """Build a performance profile from per-solver per-instance budgets.

    Parameters
    ----------
    budgets : dict
        budgets[solver][instance] is a non-negative work count, or None
        for unsolved. Every solver must cover the same instance set.

    Raises
    ------
    EmptyInputError
        If there are no solvers or no instances.
    """
    solvers = tuple(budgets)
    if not solvers:
        raise EmptyInputError("no solver configurations given")
    instances = tuple(budgets[solvers[0]])
    if not instances:
        raise EmptyInputError("no instances given")
    for solver in solvers:
        if tuple(budgets[solver]) != instances:
            raise ValueError(f"solver {solver!r} covers a different instance set")

    ratios: dict[tuple[str, str], float] = {}
    for inst in instances:
        vals = {s: budgets[s][inst] for s in solvers}
        for s, v in vals.items():
            if v is not None and (v < 0 or not math.isfinite(v)):
                raise ValueError(f"budget for ({s!r}, {inst!r}) must be finite >= 0 or None")
        solved = [v for v in vals.values() if v is not None]
        best = min(solved) if solved else None
        for s, v in vals.items():
            if v is None or best is None:
                ratios[(s, inst)] = math.inf
            elif best == 0.0:
                ratios[(s, inst)] = 1.0 if v == 0.0 else math.inf
            else:
                ratios[(s, inst)] = v / best

    curves: dict[str, list[tuple[float, float]]] = {}
    for s in solvers:
        finite = sorted(ratios[(s, inst)] for inst in instances if math.isfinite(ratios[(s, inst)]))
        points: list[tuple[float, float]] = []
        for i, r in enumerate(finite, start=1):
            rho = i / len(instances)
            if points and points[-1][0] == r:
                points[-1] = (r, rho)
            else:
                points.append((r, rho))
        curves[s] = points
    return PerformanceProfile(solvers, instances, ratios, curves)


def config_label(eps_f: float, eps_g: float) -> str:
    return f"f{format(eps_f, 'g')}__g{format(eps_g, 'g')}"


def run_filename(problem: str, eps_f: float, eps_g: float, replicate: int) -> str:
    return f"{problem}__f{format(eps_f, 'g')}__g{format(eps_g, 'g')}__r{replicate}.csv"


class _LabeledRun(NamedTuple):
    label: str
    problem: str
    replicate: int
    deterministic: bool
    trajectories: dict[str, Trajectory]


def _label_runs(
    runs: list[tuple[GridCell, dict[str, Trajectory]]],
    label_prefix: str = "",
) -> list[_LabeledRun]:
    labeled = []
    for cell, trajs in runs:
        label = label_prefix + config_label(cell.eps_f, cell.eps_g)
        deterministic = cell.eps_f == 0.0 and cell.eps_g == 0.0
        labeled.append(_LabeledRun(label, cell.problem, cell.replicate, deterministic, trajs))
    return labeled


def _grid_budgets(
    grid_replicates: int,
    runs: list[_LabeledRun],
    eps_pp: float = EPS_PP_DEFAULT,
) -> dict[str, dict[str, dict[str, Optional[float]]]]:
    """Per metric/axis then solver/instance convergence budgets.

    Solver configurations are the noise pairs (optionally prefixed by a
    campaign name); instances are (problem, replicate) pairs. A
    deterministic (0, 0) run stands in for every replicate of its
    problem, since replicates of it would be bit-identical.
    """
    # (label, instance) -> Trajectory, expanded across replicates for (0, 0).
    per_metric: dict[str, dict[tuple[str, str], Trajectory]] = {
        "infeasibility": {},
        "kkt": {},
    }
    labels: list[str] = []
    instances: list[str] = []
    for run in runs:
        if run.label not in labels:
            labels.append(run.label)
        if run.deterministic:
            reps = range(grid_replicates)
        else:
            reps = range(run.replicate, run.replicate + 1)
        for rep in reps:
            instance = f"{run.problem}__r{rep}"
            if instance not in instances:
                instances.append(instance)
            for metric in per_metric:
                per_metric[metric][(run.label, instance)] = run.trajectories[metric]

    budgets: dict[str, dict[str, dict[str, Optional[float]]]] = {}
    for metric, table in per_metric.items():
        # Best reachable value per instance across all configurations.
        best: dict[str, float] = {}
        start: dict[str, float] = {}
        for (label, instance), traj in table.items():
            if traj.values.size == 0:
                continue
            best[instance] = min(best.get(instance, math.inf), float(traj.values.min()))
            start.setdefault(instance, float(traj.values[0]))
        for axis in ("iterations", "work"):
            per_solver: dict[str, dict[str, Optional[float]]] = {}
            for label in labels:
                row: dict[str, Optional[float]] = {}
                for instance in instances:
                    traj = table.get((label, instance))
                    if traj is None or traj.values.size == 0 or instance not in best:
                        row[instance] = None
                        continue
                    axis_work = (
                        np.arange(traj.values.size, dtype=np.float64)
                        if axis == "iterations"
                        else traj.work
                    )
                    pinput = ProfileInput(label, instance, traj.values, axis_work)
                    row[instance] = convergence_budget(
                        pinput, start[instance], best[instance], eps_pp
                    )
                per_solver[label] = row
            budgets[f"{metric}__{axis}"] = per_solver
    return budgets


def build_grid_profiles(
    grid: ExperimentGrid,
    cells: list[GridCell],
    records: list[RunRecord],
    eps_pp: float = EPS_PP_DEFAULT,
) -> dict[str, PerformanceProfile]:
    """Profiles per metric and cost axis for one grid's runs."""
    runs = [(cell, record_trajectories(rec)) for cell, rec in zip(cells, records)]
    budgets = _grid_budgets(grid.replicates, _label_runs(runs), eps_pp)
    return {name: build_profile(table) for name, table in budgets.items()}


# ---------------------------------------------------------------------------
# Grid execution and file outputs.


@dataclass
class GridResult:
    grid: ExperimentGrid
    cells: list[GridCell]
    records: list[RunRecord]
    profiles: dict[str, PerformanceProfile]
    wall_time: float

    @property
    def failed_cells(self) -> list[GridCell]:
        return [
            cell
            for cell, rec in zip(self.cells, self.records)
            if rec.status is RunStatus.LINEAR_ALGEBRA_FAILURE
        ]


def run_grid(
    grid: ExperimentGrid,
    out_dir: "Path | str | None" = None,
    jobs: int = 1,
) -> GridResult:
    """Run every cell of the grid, optionally writing output files.

    Outputs per grid: one CSV of iteration rows per run (named
    <problem>__f<eps_f>__g<eps_g>__r<replicate>.csv), a summary.json
    with statuses, final metrics and timings, and one CSV per profile
    curve. Outputs are written in deterministic cell order; jobs only
    sets the worker-thread count and never affects file contents.
    """
    if not isinstance(jobs, int) or jobs < 1:
        raise ValueError("jobs must be a positive integer")
    t_start = time.perf_counter()
    cells = grid_cells(grid)
    if jobs == 1:
        records = [run_cell(grid, cell) for cell in cells]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(lambda cell: run_cell(grid, cell), cells))
    profiles = build_grid_profiles(grid, cells, records)
    result = GridResult(grid, cells, records, profiles, time.perf_counter() - t_start)
    if out_dir is not None:
        write_grid_outputs(result, Path(out_dir))
    return result


CSV_COLUMNS = (
    "k",
    "alpha",
    "tau_bar",
    "delta_l",
    "accepted",
    "infeas_inf",
    "kkt_inf",
    "zeroth_calls",
    "first_calls",
    "true_iter",
)


def write_run_csv(path: Path, record: RunRecord) -> None:
    """One row per iteration; float fields use shortest round-trip repr."""
    lines = [",".join(CSV_COLUMNS)]
    for log in record.iterations:
        lines.append(
            ",".join(
                (
                    str(log.k),
                    repr(log.alpha),
                    repr(log.tau_bar),
                    repr(log.delta_l),
                    str(int(log.accepted)),
                    repr(log.infeas_inf),
                    repr(log.kkt_inf),
                    str(log.zeroth_calls),
                    str(log.first_calls),
                    "" if log.true_iter is None else str(int(log.true_iter)),
                )
            )
        )
    path.write_text("\n".join(lines) + "\n")


def write_profile_csv(path: Path, points: list[tuple[float, float]]) -> None:
    lines = ["tau,rho"]
    for tau, rho in points:
        lines.append(f"{repr(float(tau))},{repr(float(rho))}")
    path.write_text("\n".join(lines) + "\n")


def _run_summary(cell: GridCell, record: RunRecord) -> dict:
    return {
        "problem": cell.problem,
        "eps_f_noise": cell.eps_f,
        "eps_g_noise": cell.eps_g,
        "replicate": cell.replicate,
        "stream_id": cell.stream_id,
        "status": record.status.value,
        "iterations": len(record.iterations),
        "zeroth_calls": record.zeroth_calls,
        "first_calls": record.first_calls,
        "final_infeas_inf": record.final_infeas_inf,
        "final_kkt_inf": record.final_kkt_inf,
        "failure_reason": record.failure_reason,
        "wall_time_s": record.wall_time,
        "csv": run_filename(cell.problem, cell.eps_f, cell.eps_g, cell.replicate),
    }


def write_grid_outputs(result: GridResult, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for cell, record in zip(result.cells, result.records):
        write_run_csv(
            out_dir / run_filename(cell.problem, cell.eps_f, cell.eps_g, cell.replicate),
            record,
        )
    summary = {
        "grid": {
            "problems": list(result.grid.problems),
            "noise_pairs": [list(pair) for pair in result.grid.noise_pairs],
            "replicates": result.grid.replicates,
            "seed": result.grid.seed,
            "params": asdict(result.grid.params),
        },
        "wall_time_s": result.wall_time,
        "runs": [
            _run_summary(cell, record)
            for cell, record in zip(result.cells, result.records)
        ],
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    write_profile_files(result.profiles, out_dir)


def write_profile_files(profiles: dict[str, PerformanceProfile], out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, profile in profiles.items():
        for solver, points in profile.curves.items():
            write_profile_csv(out_dir / f"profile__{name}__{solver}.csv", points)


# ---------------------------------------------------------------------------
# Rebuilding profiles from previously written run directories.


def _read_run_rows(path: Path) -> list[tuple[float, float, int, int]]:
    rows = []
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                (
                    float(row["infeas_inf"]),
                    float(row["kkt_inf"]),
                    int(row["zeroth_calls"]),
                    int(row["first_calls"]),
                )
            )
    return rows


def load_run_trajectories(run_dir: Path) -> tuple[int, list[tuple[GridCell, dict[str, Trajectory]]]]:
    """Read a grid output directory back into (replicates, per-run trajectories)."""
    run_dir = Path(run_dir)
    summary_path = run_dir / "summary.json"
    if not summary_path.is_file():
        raise FileNotFoundError(f"{run_dir} has no summary.json; not a grid output directory")
    summary = json.loads(summary_path.read_text())
    replicates = int(summary["grid"]["replicates"])
    runs = []
    for entry in summary["runs"]:
        rows = _read_run_rows(run_dir / entry["csv"])
        trajs = _trajectories_from_rows(rows, entry["final_infeas_inf"], entry["final_kkt_inf"])
        cell = GridCell(
            problem=entry["problem"],
            eps_f=float(entry["eps_f_noise"]),
            eps_g=float(entry["eps_g_noise"]),
            replicate=int(entry["replicate"]),
            stream_id=int(entry["stream_id"]),
        )
        runs.append((cell, trajs))
    return replicates, runs


def profiles_from_directories(
    run_dirs: list[Path],
    eps_pp: float = EPS_PP_DEFAULT,
) -> dict[str, PerformanceProfile]:
    """Rebuild profiles from one or more grid output directories.

    With several directories, solver labels are prefixed by the
    directory name so that separately produced campaigns can be
    compared on their common instances.
    """
    if not run_dirs:
        raise EmptyInputError("no run directories given")
    labeled: list[_LabeledRun] = []
    replicate_counts = []
    prefix_labels = len(run_dirs) > 1
    for run_dir in run_dirs:
        replicates, runs = load_run_trajectories(Path(run_dir))
        replicate_counts.append(replicates)
        prefix = f"{Path(run_dir).name}__" if prefix_labels else ""
        labeled.extend(_label_runs(runs, prefix))
    budgets = _grid_budgets(max(replicate_counts), labeled, eps_pp)
    return {name: build_profile(table) for name, table in budgets.items()}
