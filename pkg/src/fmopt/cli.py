"""Command-line entry point for the benchmark harness."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import (
    DEFAULT_CONFIG,
    BenchmarkConfig,
    case_setup,
    read_trace_csv,
    run_benchmark,
)
from .dose import BeamConfig, dose_from_fluence
from .dvh import compute_dvh, evaluate_goals, write_dvh_csv
from .errors import ConfigurationError, DimensionError
from .optimizers import OptimizerId
from .phantom import CASE_NAMES


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _render_convergence_figures(out_dir: Path, summary: dict) -> list[Path]:
    """One figure per case next to the trace CSVs: cost vs. iteration and
    cost vs. wall-time, one line per optimizer."""
    plt = _pyplot()
    written = []
    for case, per_opt in summary.items():
        traced = [opt for opt, entry in sorted(per_opt.items()) if "error" not in entry]
        if not traced:
            continue
        fig, (ax_it, ax_t) = plt.subplots(2, 1, figsize=(7.0, 8.0), sharey=True)
        for opt in traced:
            rows = read_trace_csv(out_dir / f"trace_{case}__{opt}.csv")
            costs = [r["cost"] for r in rows]
            ax_it.plot([r["iteration"] for r in rows], costs, label=opt, linewidth=1.2)
            ax_t.plot([r["elapsed_seconds"] for r in rows], costs, label=opt, linewidth=1.2)
        for ax, xlabel in ((ax_it, "iteration"), (ax_t, "elapsed time (s)")):
            ax.set_yscale("log")
            ax.set_xlabel(xlabel)
            ax.set_ylabel("cost")
            ax.grid(True, which="both", alpha=0.3)
            ax.legend(fontsize=8)
        fig.suptitle(f"Convergence: {case}")
        fig.tight_layout()
        path = out_dir / f"convergence_{case}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def _render_dvh_figure(path: Path, curves: dict, goals) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7.0, 5.0))
    colors = {}
    for name, curve in curves.items():
        (line,) = ax.plot(curve.bin_edges, curve.volume_fractions, label=name, linewidth=1.4)
        colors[name] = line.get_color()
    for g in goals:
        marker = "v" if g.kind.value == "max_dose" else "^"
        ax.plot([g.dose], [g.volume_fraction], marker=marker, markersize=9,
                linestyle="none", color=colors.get(g.structure, "black"),
                markeredgecolor="black")
    ax.set_xlabel("dose (Gy)")
    ax.set_ylabel("volume fraction ≥ dose")
    ax.set_ylim(-0.02, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fmopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a benchmark from a JSON config")
    p_run.add_argument("--config", help="JSON config file (omit for the default benchmark)")
    p_run.add_argument("--out", help="output directory (overrides the config)")

    sub.add_parser("list-optimizers", help="print all optimizer names")
    sub.add_parser("list-cases", help="print all built-in case names")

    p_dvh = sub.add_parser("dvh", help="recompute dose from a trace's final fluence and emit DVH CSVs")
    p_dvh.add_argument("--case", required=True, choices=CASE_NAMES)
    p_dvh.add_argument("--trace", required=True, help="trace CSV written by `run`")
    p_dvh.add_argument("--out", default=".", help="output directory for DVH CSV + goal checks")

    p_exp = sub.add_parser("export-matrix", help="write a case's influence matrix as a binary triplet file")
    p_exp.add_argument("--case", required=True, choices=CASE_NAMES)
    p_exp.add_argument("--out", required=True)
    return parser


def _cmd_run(args) -> int:
    if args.config:
        config = BenchmarkConfig.from_json_file(args.config, output_dir=args.out)
    else:
        config = BenchmarkConfig.from_dict(dict(DEFAULT_CONFIG), output_dir=args.out)
    summary = run_benchmark(config)
    for case, per_opt in summary.items():
        for opt, entry in per_opt.items():
            if "error" in entry:
                print(f"{case:14s} {opt:10s} FAILED: {entry['error']}")
            else:
                print(
                    f"{case:14s} {opt:10s} final_cost={entry['final_cost']:.6g} "
                    f"iters_to_1pct={entry['iterations_to_threshold']} "
                    f"s/iter={entry['mean_seconds_per_iteration']:.4g}"
                )
    for fig_path in _render_convergence_figures(Path(config.output_dir), summary):
        print(f"figure written to {fig_path}")
    print(f"outputs written to {config.output_dir}")
    return 0


def _cmd_dvh(args) -> int:
    trace = Path(args.trace)
    read_trace_csv(trace)  # schema check
    fl_path = trace.with_name(trace.name.replace("trace_", "fluence_", 1))
    if not fl_path.exists():
        raise ConfigurationError(f"no fluence file next to trace: {fl_path}")
    b = np.loadtxt(fl_path)
    phantom, objective, _ = case_setup(args.case)
    d = dose_from_fluence(objective.matrix, b)
    curves = {"body": compute_dvh(d, phantom.body)}
    for s in phantom.structures:
        curves[s.name] = compute_dvh(d, s)
    checks = evaluate_goals(curves, objective.spec.goals)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = trace.stem.replace("trace_", "", 1)
    csv_path = out / f"dvh_{stem}.csv"
    write_dvh_csv(csv_path, curves.values())
    (out / f"goals_{args.case}.json").write_text(objective.spec.goals_to_json())
    fig_path = out / f"dvh_{stem}.png"
    _render_dvh_figure(fig_path, curves, objective.spec.goals)
    for c in checks:
        g = c.goal
        print(
            f"{g.structure:12s} {g.kind.value:8s} {g.dose:5.1f} Gy @ {g.volume_fraction:.0%}: "
            f"achieved {c.achieved_fraction:.1%} -> {'PASS' if c.passed else 'FAIL'}"
        )
    print(f"DVH written to {csv_path}")
    print(f"figure written to {fig_path}")
    return 0


def _cmd_export_matrix(args) -> int:
    phantom, objective, _ = case_setup(args.case)
    objective.matrix.save(args.out)
    print(
        f"{args.case}: {objective.matrix.n_voxels} voxels x "
        f"{objective.matrix.n_bixels} bixels, {objective.matrix.nnz} nonzeros -> {args.out}"
    )
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "list-optimizers":
            for opt in OptimizerId:
                print(opt.value)
            return 0
        if args.command == "list-cases":
            for name in CASE_NAMES:
                print(name)
            return 0
        if args.command == "dvh":
            return _cmd_dvh(args)
        if args.command == "export-matrix":
            return _cmd_export_matrix(args)
    except (ConfigurationError, DimensionError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
