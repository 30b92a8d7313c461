"""Renders benchmark harness outputs (trace CSVs, DVH CSVs, goal JSON) into
figures: per case, two stacked convergence panels (cost vs. iteration and
cost vs. wall-time), plus DVH curves with goal markers.

Pure presentation: nothing here computes costs or doses.
"""
from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

TRACE_COLUMNS = ("iteration", "cost", "gradient_norm", "elapsed_seconds", "function_evals")
DVH_COLUMNS = ("structure", "dose_gy", "volume_fraction")

_TRACE_RE = re.compile(r"^trace_(?P<case>.+)__(?P<optimizer>[^_]+)\.csv$")


class SchemaError(ValueError):
    """A CSV/JSON input does not match the documented harness format."""


@dataclass(frozen=True)
class PlotSpec:
    input_dir: Path
    output_dir: Path
    cases: tuple[str, ...] = ()  # empty = all cases found
    log_y: bool = True
    image_format: str = "png"
    dpi: int = 150


def _read_csv_columns(path: Path, required: tuple[str, ...]) -> dict[str, list[str]]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        have = set(reader.fieldnames or ())
        missing = [c for c in required if c not in have]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        cols: dict[str, list[str]] = {c: [] for c in required}
        for row in reader:
            for c in required:
                cols[c].append(row[c])
    return cols


def _numeric(path: Path, column: str, values: list[str]) -> np.ndarray:
    try:
        return np.asarray(values, dtype=float)
    except ValueError:
        raise SchemaError(f"{path}: column {column!r} contains non-numeric data") from None


def read_trace(path: Path) -> dict[str, np.ndarray]:
    cols = _read_csv_columns(path, TRACE_COLUMNS)
    out = {c: _numeric(path, c, v) for c, v in cols.items()}
    if out["iteration"].size == 0:
        raise SchemaError(f"{path}: trace has no data rows")
    return out


def discover_traces(spec: PlotSpec) -> dict[str, dict[str, Path]]:
    """Map case -> optimizer -> trace path for the input directory."""
    found: dict[str, dict[str, Path]] = {}
    for path in sorted(Path(spec.input_dir).glob("trace_*.csv")):
        m = _TRACE_RE.match(path.name)
        if not m:
            continue
        case, opt = m.group("case"), m.group("optimizer")
        if spec.cases and case not in spec.cases:
            continue
        found.setdefault(case, {})[opt] = path
    return found


def render_convergence(spec: PlotSpec) -> list[Path]:
    """One figure per case: cost vs. iteration over cost vs. elapsed seconds,
    one line per optimizer. Returns the written image paths."""
    by_case = discover_traces(spec)
    if not by_case:
        raise SchemaError(f"no trace CSVs found in {spec.input_dir}")
    out_dir = Path(spec.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for case, per_opt in by_case.items():
        fig, (ax_it, ax_t) = plt.subplots(2, 1, figsize=(7.0, 8.0), sharey=True)
        for opt in sorted(per_opt):
            trace = read_trace(per_opt[opt])
            ax_it.plot(trace["iteration"], trace["cost"], label=opt, linewidth=1.2)
            ax_t.plot(trace["elapsed_seconds"], trace["cost"], label=opt, linewidth=1.2)
        for ax, xlabel in ((ax_it, "iteration"), (ax_t, "elapsed time (s)")):
            if spec.log_y:
                ax.set_yscale("log")
            ax.set_xlabel(xlabel)
            ax.set_ylabel("cost")
            ax.grid(True, which="both", alpha=0.3)
            ax.legend(fontsize=8)
        fig.suptitle(f"Convergence: {case}")
        fig.tight_layout()
        path = out_dir / f"convergence_{case}.{spec.image_format}"
        fig.savefig(path, dpi=spec.dpi)
        plt.close(fig)
        written.append(path)
    return written


def read_dvh(path: Path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """structure -> (dose edges, volume fractions), in file order."""
    cols = _read_csv_columns(path, DVH_COLUMNS)
    dose = _numeric(path, "dose_gy", cols["dose_gy"])
    frac = _numeric(path, "volume_fraction", cols["volume_fraction"])
    curves: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    names = np.asarray(cols["structure"])
    if names.size == 0:
        raise SchemaError(f"{path}: DVH file has no data rows")
    for name in dict.fromkeys(cols["structure"]):  # preserve order
        sel = names == name
        curves[name] = (dose[sel], frac[sel])
    return curves


def read_goals(path: Path) -> list[dict]:
    try:
        goals = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: not valid JSON: {e}") from None
    if not isinstance(goals, list):
        raise SchemaError(f"{path}: expected a JSON list of goals")
    for g in goals:
        for key in ("structure", "kind", "dose_gy", "volume_fraction"):
            if key not in g:
                raise SchemaError(f"{path}: goal entry missing field {key!r}")
    return goals


def render_dvh(dvh_csv: Path, out_dir: Path, goals_json: Path | None = None,
               image_format: str = "png", dpi: int = 150) -> Path:
    """One DVH figure: a curve per structure, goal markers at (dose, fraction)."""
    curves = read_dvh(Path(dvh_csv))
    goals = read_goals(goals_json) if goals_json else []
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7.0, 5.0))
    colors = {}
    for name, (dose, frac) in curves.items():
        (line,) = ax.plot(dose, frac, label=name, linewidth=1.4)
        colors[name] = line.get_color()
    for g in goals:
        marker = "^" if g["kind"] == "min_dose" else "v"
        ax.plot(
            [g["dose_gy"]], [g["volume_fraction"]],
            marker=marker, markersize=9, linestyle="none",
            color=colors.get(g["structure"], "black"),
            markeredgecolor="black",
        )
    ax.set_xlabel("dose (Gy)")
    ax.set_ylabel("volume fraction ≥ dose")
    ax.set_ylim(-0.02, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    stem = Path(dvh_csv).stem
    path = out_dir / f"{stem}.{image_format}"
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return path
