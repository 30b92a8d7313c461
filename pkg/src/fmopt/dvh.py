"""Cumulative dose-volume histograms and goal evaluation."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .objective import DoseGoal, GoalKind
from .phantom import StructureMask


@dataclass(frozen=True)
class DVHCurve:
    """Cumulative DVH: volume_fractions[k] is the fraction of the structure
    receiving at least bin_edges[k] Gy."""

    structure: str
    bin_edges: np.ndarray
    volume_fractions: np.ndarray


@dataclass(frozen=True)
class GoalCheck:
    goal: DoseGoal
    achieved_fraction: float
    passed: bool


def compute_dvh(d: np.ndarray, mask: StructureMask, bin_width: float = 0.1) -> DVHCurve:
    """Cumulative histogram of structure doses on uniform edges from 0 to one
    bin past the structure maximum."""
    if mask.size == 0:
        raise ConfigurationError(f"cannot compute DVH of empty structure {mask.name!r}")
    if bin_width <= 0:
        raise ConfigurationError("bin_width must be > 0")
    doses = np.asarray(d, dtype=float)[mask.indices]
    n_edges = int(np.floor(doses.max() / bin_width)) + 2
    edges = np.arange(n_edges) * bin_width
    fractions = (doses[None, :] >= edges[:, None]).mean(axis=1)
    return DVHCurve(mask.name, edges, fractions)


def achieved_fraction(curve: DVHCurve, dose: float) -> float:
    """Volume fraction at an arbitrary dose, linearly interpolated between
    edges (0 beyond the last edge)."""
    return float(np.interp(dose, curve.bin_edges, curve.volume_fractions, right=0.0))


def evaluate_goals(curves: dict[str, DVHCurve], goals) -> list[GoalCheck]:
    checks = []
    for goal in goals:
        curve = curves.get(goal.structure)
        if curve is None:
            raise ConfigurationError(f"no DVH for structure {goal.structure!r}")
        frac = achieved_fraction(curve, goal.dose)
        if goal.kind is GoalKind.MAX_DOSE:
            passed = frac <= goal.volume_fraction
        else:
            passed = frac >= goal.volume_fraction
        checks.append(GoalCheck(goal, frac, passed))
    return checks


def write_dvh_csv(path, curves) -> None:
    """Columns: structure, dose_gy, volume_fraction."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["structure", "dose_gy", "volume_fraction"])
        for curve in curves:
            for dose, frac in zip(curve.bin_edges, curve.volume_fractions):
                writer.writerow([curve.structure, f"{dose:.6g}", f"{frac:.10g}"])
