"""Benchmark harness: builds cases, runs optimizers, writes convergence
traces (CSV) and a summary (JSON).

Output layout inside the output directory:
    trace_<case>__<optimizer>.csv     iteration records
    fluence_<case>__<optimizer>.csv   final fluence vector, one value per line
    goals_<case>.json                 goal set used for the case
    summary.json                      per-(case, optimizer) summary
    cache/<case>.dij                  influence-matrix cache (optional)

The environment variable FMOPT_MAX_PARALLEL caps the number of
(case, optimizer) pairs run in parallel processes (default 1, sequential).
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dose import BeamConfig, DoseInfluenceMatrix, compute_influence_matrix
from .errors import ConfigurationError
from .objective import DoseObjective, default_objective_spec, standard_initial_fluence
from .optimizers import (
    ConvergenceTrace,
    OptimizerConfig,
    OptimizerId,
    Termination,
    run,
)
from .phantom import CASE_NAMES, Phantom, build_builtin_case

TRACE_COLUMNS = ("iteration", "cost", "gradient_norm", "elapsed_seconds", "function_evals")


@dataclass(frozen=True)
class BenchmarkConfig:
    cases: tuple[str, ...]
    optimizers: tuple[OptimizerConfig, ...]
    output_dir: Path
    repetitions: int = 3
    cache_matrices: bool = True
    beams: BeamConfig = field(default_factory=BeamConfig)

    def __post_init__(self):
        if not self.cases or not self.optimizers:
            raise ConfigurationError("benchmark needs at least one case and one optimizer")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be >= 1")
        for name in self.cases:
            if name not in CASE_NAMES:
                raise ConfigurationError(
                    f"unknown case {name!r}; available: {', '.join(CASE_NAMES)}"
                )

    @staticmethod
    def from_json_file(path, output_dir=None) -> "BenchmarkConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigurationError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"config file {path} is not valid JSON: {e}") from None
        return BenchmarkConfig.from_dict(doc, output_dir=output_dir)

    @staticmethod
    def from_dict(doc: dict, output_dir=None) -> "BenchmarkConfig":
        if "cases" not in doc:
            raise ConfigurationError("config missing field 'cases'")
        if "optimizers" not in doc:
            raise ConfigurationError("config missing field 'optimizers'")
        optimizers = []
        for entry in doc["optimizers"]:
            if isinstance(entry, str):
                optimizers.append(OptimizerConfig.default_for(OptimizerId.parse(entry)))
            else:
                entry = dict(entry)
                if "id" not in entry:
                    raise ConfigurationError("optimizer entry missing field 'id'")
                opt_id = OptimizerId.parse(entry.pop("id"))
                optimizers.append(OptimizerConfig.default_for(opt_id, **entry))
        out = output_dir or doc.get("output_dir", "bench_out")
        return BenchmarkConfig(
            cases=tuple(doc["cases"]),
            optimizers=tuple(optimizers),
            output_dir=Path(out),
            repetitions=int(doc.get("repetitions", 3)),
            cache_matrices=bool(doc.get("cache_matrices", True)),
        )


DEFAULT_CONFIG = {
    "cases": list(CASE_NAMES),
    "optimizers": ["NewtonCG", "LBFGS", "BFGS", "CG", "GD", "Adam", "RMSprop"],
    "repetitions": 3,
    "cache_matrices": True,
}


@dataclass(frozen=True)
class PairSummary:
    final_cost: float
    iterations: int
    iterations_to_threshold: int | None
    time_to_threshold: float | None
    mean_seconds_per_iteration: float
    termination: str


def case_setup(case_name: str, beams: BeamConfig | None = None,
               cache_path: Path | None = None):
    """Build (phantom, objective, b0) for a built-in case, optionally loading
    or writing the influence matrix cache file."""
    beams = beams or BeamConfig()
    phantom = build_builtin_case(case_name)
    matrix = None
    if cache_path is not None and cache_path.exists():
        matrix = DoseInfluenceMatrix.load(cache_path)
        if matrix.n_bixels != beams.n_bixels or matrix.n_voxels != phantom.grid.voxel_count:
            matrix = None  # stale cache
    if matrix is None:
        matrix = compute_influence_matrix(phantom, beams)
        if cache_path is not None:
            cache_path.parent.mkdir(parents=True, exist_ok=True)
            matrix.save(cache_path)
    spec = default_objective_spec(case_name, beams)
    objective = DoseObjective(phantom, matrix, spec)
    b0 = standard_initial_fluence(objective)
    return phantom, objective, b0


def trace_path(out_dir: Path, case: str, opt: OptimizerId) -> Path:
    return Path(out_dir) / f"trace_{case}__{opt.value}.csv"


def fluence_path(out_dir: Path, case: str, opt: OptimizerId) -> Path:
    return Path(out_dir) / f"fluence_{case}__{opt.value}.csv"


def write_trace_csv(path, trace: ConvergenceTrace) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_COLUMNS)
        for r in trace.records:
            writer.writerow(
                [r.iteration, f"{r.cost:.17g}", f"{r.gradient_norm:.17g}",
                 f"{r.elapsed:.9f}", r.function_evals]
            )


def read_trace_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = set(TRACE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigurationError(
                f"trace file {path} missing columns: {', '.join(sorted(missing))}"
            )
        rows = []
        for row in reader:
            rows.append(
                {
                    "iteration": int(row["iteration"]),
                    "cost": float(row["cost"]),
                    "gradient_norm": float(row["gradient_norm"]),
                    "elapsed_seconds": float(row["elapsed_seconds"]),
                    "function_evals": int(row["function_evals"]),
                }
            )
    return rows


@dataclass
class _RunOutput:
    case: str
    optimizer: OptimizerId
    trace: ConvergenceTrace | None
    mean_iter_times: list[float]
    error: str | None = None


def _run_pair(args) -> _RunOutput:
    case, opt_cfg, beams, cache_file, repetitions = args
    try:
        _, objective, b0 = case_setup(case, beams, cache_file)
        trace = None
        mean_times = []
        for _ in range(repetitions):
            t = run(objective, b0, opt_cfg, case_name=case)
            iters = max(1, t.records[-1].iteration)
            mean_times.append(t.records[-1].elapsed / iters)
            if trace is None:
                trace = t
        return _RunOutput(case, opt_cfg.id, trace, mean_times)
    except (FloatingPointError, ValueError, ArithmeticError) as e:
        return _RunOutput(case, opt_cfg.id, None, [], error=str(e))


def summarize(traces: dict[tuple[str, str], list[dict]],
              mean_iter_time: dict[tuple[str, str], float] | None = None,
              termination: dict[tuple[str, str], str] | None = None,
              ) -> dict[str, dict[str, dict]]:
    """Per-case summaries from trace rows keyed by (case, optimizer name).

    The convergence threshold is 1% above the per-case minimum final cost
    across all optimizers present in the run.
    """
    by_case: dict[str, dict[str, list[dict]]] = {}
    for (case, opt), rows in traces.items():
        if not rows:
            raise ConfigurationError(f"empty trace for ({case}, {opt})")
        by_case.setdefault(case, {})[opt] = rows
    summary: dict[str, dict[str, dict]] = {}
    for case, per_opt in by_case.items():
        best = min(rows[-1]["cost"] for rows in per_opt.values())
        threshold = best * 1.01 + 1e-12
        summary[case] = {}
        for opt, rows in per_opt.items():
            hit = next((r for r in rows if r["cost"] <= threshold), None)
            iters = max(1, rows[-1]["iteration"])
            key = (case, opt)
            summary[case][opt] = {
                "final_cost": rows[-1]["cost"],
                "iterations": rows[-1]["iteration"],
                "iterations_to_threshold": None if hit is None else hit["iteration"],
                "time_to_threshold": None if hit is None else hit["elapsed_seconds"],
                "mean_seconds_per_iteration": (
                    mean_iter_time[key]
                    if mean_iter_time and key in mean_iter_time
                    else rows[-1]["elapsed_seconds"] / iters
                ),
                "termination": termination.get(key, "") if termination else "",
            }
    return summary


def run_benchmark(config: BenchmarkConfig) -> dict:
    """Run every (case, optimizer) pair, write traces + summary, and return
    the summary dict. A failed pair is recorded in the summary and does not
    stop the others."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache_dir = out / "cache" if config.cache_matrices else None

    jobs = []
    for case in config.cases:
        cache_file = (cache_dir / f"{case}.dij") if cache_dir else None
        for opt_cfg in config.optimizers:
            jobs.append((case, opt_cfg, config.beams, cache_file, config.repetitions))

    max_parallel = int(os.environ.get("FMOPT_MAX_PARALLEL", "1"))
    if max_parallel > 1 and cache_dir is not None:
        # warm the matrix cache sequentially so workers do not race on it
        for case in config.cases:
            case_setup(case, config.beams, cache_dir / f"{case}.dij")
    if max_parallel > 1:
        with ProcessPoolExecutor(max_workers=max_parallel) as pool:
            outputs = list(pool.map(_run_pair, jobs))
    else:
        outputs = [_run_pair(j) for j in jobs]

    traces: dict[tuple[str, str], list[dict]] = {}
    mean_iter_time: dict[tuple[str, str], float] = {}
    terminations: dict[tuple[str, str], str] = {}
    failures: dict[str, dict[str, str]] = {}
    for o in outputs:
        key = (o.case, o.optimizer.value)
        if o.trace is None:
            failures.setdefault(o.case, {})[o.optimizer.value] = o.error or "run failed"
            continue
        tp = trace_path(out, o.case, o.optimizer)
        write_trace_csv(tp, o.trace)
        np.savetxt(fluence_path(out, o.case, o.optimizer), o.trace.final_b, fmt="%.17g")
        traces[key] = read_trace_csv(tp)
        mean_iter_time[key] = float(np.mean(o.mean_iter_times))
        terminations[key] = o.trace.termination.value

    for case in config.cases:
        spec = default_objective_spec(case, config.beams)
        (out / f"goals_{case}.json").write_text(spec.goals_to_json())

    summary = summarize(traces, mean_iter_time, terminations)
    for case, errs in failures.items():
        for opt, msg in errs.items():
            summary.setdefault(case, {})[opt] = {"error": msg}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary
