"""Convex dose-volume objective: weighted squared over/underdose penalties
per structure plus a squared smoothness penalty on neighboring bixels,
with analytic gradient and Hessian-vector products with respect to the
(sign-free) fluence variable b, where dose = L |b|.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .dose import BeamConfig, DoseInfluenceMatrix, adjoint_apply, dose_from_fluence
from .errors import ConfigurationError, DimensionError
from .phantom import Phantom


class GoalKind(str, Enum):
    MAX_DOSE = "max_dose"
    MIN_DOSE = "min_dose"


@dataclass(frozen=True)
class DoseGoal:
    """One dose-volume goal: at most / at least `dose` Gy over the stated
    volume fraction of the structure. The volume fraction is used for DVH
    pass/fail reporting; the cost penalizes every structure voxel."""

    structure: str
    kind: GoalKind
    dose: float
    volume_fraction: float
    weight: float = 1.0

    def __post_init__(self):
        if self.dose < 0:
            raise ConfigurationError("goal dose must be >= 0")
        if not 0.0 <= self.volume_fraction <= 1.0:
            raise ConfigurationError("volume_fraction must be in [0, 1]")
        if self.weight < 0:
            raise ConfigurationError("goal weight must be >= 0")

    def to_dict(self) -> dict:
        return {
            "structure": self.structure,
            "kind": self.kind.value,
            "dose_gy": self.dose,
            "volume_fraction": self.volume_fraction,
            "weight": self.weight,
        }

    @staticmethod
    def from_dict(d: dict) -> "DoseGoal":
        return DoseGoal(
            structure=d["structure"],
            kind=GoalKind(d["kind"]),
            dose=float(d["dose_gy"]),
            volume_fraction=float(d["volume_fraction"]),
            weight=float(d.get("weight", 1.0)),
        )


@dataclass(frozen=True)
class ObjectiveSpec:
    goals: tuple[DoseGoal, ...]
    smoothness_weight: float = 0.01
    neighbor_pairs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.smoothness_weight < 0:
            raise ConfigurationError("smoothness_weight must be >= 0")
        seen = set()
        for i, j in self.neighbor_pairs:
            key = (min(i, j), max(i, j))
            if i == j or key in seen:
                raise ConfigurationError(f"bad or duplicate neighbor pair ({i}, {j})")
            seen.add(key)

    def goals_to_json(self) -> str:
        return json.dumps([g.to_dict() for g in self.goals], indent=2)


@dataclass(frozen=True)
class EvalResult:
    total_cost: float
    per_goal_costs: tuple[tuple[DoseGoal, float], ...]  # unweighted f_o values
    smoothness_cost: float


def bixel_neighbor_pairs(beams: BeamConfig) -> tuple[tuple[int, int], ...]:
    """4-neighborhood pairs within each beam's bixel grid (no cross-beam pairs)."""
    pairs = []
    rows, cols = beams.bixel_rows, beams.bixel_cols
    for beam in range(beams.n_beams):
        base = beam * rows * cols
        for r in range(rows):
            for c in range(cols):
                i = base + r * cols + c
                if c + 1 < cols:
                    pairs.append((i, i + 1))
                if r + 1 < rows:
                    pairs.append((i, i + cols))
    return tuple(pairs)


class DoseObjective:
    """Callable objective bound to one phantom + influence matrix + spec.

    Exposes cost / grad / hvp over the fluence variable b, and the pure
    dose-space cost used for convexity checks.
    """

    # f depends on b only through |b|, so minimization can be folded onto the
    # nonnegative orthant; NewtonCG exploits this with a projected solver.
    mirror_symmetric = True

    def __init__(self, phantom: Phantom, matrix: DoseInfluenceMatrix, spec: ObjectiveSpec):
        self.phantom = phantom
        self.matrix = matrix
        self.spec = spec
        names = set(phantom.structure_names) | {"body"}
        for g in spec.goals:
            if g.structure not in names:
                raise ConfigurationError(
                    f"goal references missing structure {g.structure!r}"
                )
        self._goal_idx = []
        for g in spec.goals:
            mask = phantom.body if g.structure == "body" else phantom.structure(g.structure)
            if mask.size == 0:
                raise ConfigurationError(f"goal structure {g.structure!r} is empty")
            self._goal_idx.append(mask.indices)
        n = matrix.n_bixels
        if spec.neighbor_pairs:
            pairs = np.asarray(spec.neighbor_pairs, dtype=np.int64)
            if pairs.max() >= n or pairs.min() < 0:
                raise ConfigurationError("neighbor pair references bixel out of range")
            npair = pairs.shape[0]
            data = np.concatenate([np.ones(npair), -np.ones(npair)])
            rows = np.concatenate([np.arange(npair)] * 2)
            cols = np.concatenate([pairs[:, 0], pairs[:, 1]])
            self._diff = sp.csr_matrix((data, (rows, cols)), shape=(npair, n))
        else:
            self._diff = sp.csr_matrix((0, n))

    @property
    def n_bixels(self) -> int:
        return self.matrix.n_bixels

    # -- dose-space pieces --

    def dose_space_cost(self, d: np.ndarray) -> float:
        """Sum of weighted per-goal penalties at a given dose vector (no
        smoothness term). Convex in d by construction."""
        total = 0.0
        for g, idx in zip(self.spec.goals, self._goal_idx):
            total += g.weight * self._goal_cost(g, d[idx])
        return total

    @staticmethod
    def _goal_cost(g: DoseGoal, dvals: np.ndarray) -> float:
        if g.kind is GoalKind.MAX_DOSE:
            viol = np.maximum(dvals - g.dose, 0.0)
        else:
            viol = np.maximum(g.dose - dvals, 0.0)
        return float(viol @ viol)

    def _dose_grad(self, d: np.ndarray) -> np.ndarray:
        """d(cost)/d(dose), accumulated per voxel over the goals."""
        gd = np.zeros(self.matrix.n_voxels)
        for g, idx in zip(self.spec.goals, self._goal_idx):
            if g.kind is GoalKind.MAX_DOSE:
                gd[idx] += g.weight * 2.0 * np.maximum(d[idx] - g.dose, 0.0)
            else:
                gd[idx] -= g.weight * 2.0 * np.maximum(g.dose - d[idx], 0.0)
        return gd

    def _dose_curvature(self, d: np.ndarray) -> np.ndarray:
        """Diagonal second derivative in dose space: 2 w per violated goal."""
        diag = np.zeros(self.matrix.n_voxels)
        for g, idx in zip(self.spec.goals, self._goal_idx):
            if g.kind is GoalKind.MAX_DOSE:
                viol = d[idx] > g.dose
            else:
                viol = d[idx] < g.dose
            diag[idx] += 2.0 * g.weight * viol
        return diag

    # -- fluence-space API --

    def eval_cost(self, b: np.ndarray) -> EvalResult:
        b = self._check(b)
        d = dose_from_fluence(self.matrix, b)
        per_goal = tuple(
            (g, self._goal_cost(g, d[idx]))
            for g, idx in zip(self.spec.goals, self._goal_idx)
        )
        diffs = self._diff @ np.abs(b)
        smooth = float(diffs @ diffs)
        total = sum(g.weight * c for g, c in per_goal) + self.spec.smoothness_weight * smooth
        return EvalResult(total_cost=float(total), per_goal_costs=per_goal, smoothness_cost=smooth)

    def cost(self, b: np.ndarray) -> float:
        return self.eval_cost(b).total_cost

    def grad(self, b: np.ndarray) -> np.ndarray:
        b = self._check(b)
        sgn = np.sign(b)  # sign(0) = 0: valid subgradient at the kink
        d = dose_from_fluence(self.matrix, b)
        g = sgn * adjoint_apply(self.matrix, self._dose_grad(d))
        if self.spec.smoothness_weight:
            diffs = self._diff @ np.abs(b)
            g += self.spec.smoothness_weight * sgn * (2.0 * (self._diff.T @ diffs))
        return g

    def hvp(self, b: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Gauss-Newton-exact Hessian product (the |.| kink at b_i = 0 is
        measure-zero and ignored)."""
        b = self._check(b)
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n_bixels,):
            raise DimensionError(f"hvp vector length {v.shape} != n_bixels {self.n_bixels}")
        sgn = np.sign(b)
        d = dose_from_fluence(self.matrix, b)
        diag = self._dose_curvature(d)
        inner = self.matrix.matrix @ (sgn * v)
        out = sgn * (self.matrix.matrix.T @ (diag * inner))
        if self.spec.smoothness_weight:
            out += self.spec.smoothness_weight * sgn * (
                2.0 * (self._diff.T @ (self._diff @ (sgn * v)))
            )
        return out

    def _check(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape != (self.n_bixels,):
            raise DimensionError(f"fluence length {b.shape} != n_bixels {self.n_bixels}")
        return b


# module-level forms of the operations, for one-off use


def eval_cost(b, L, spec, phantom) -> EvalResult:
    return DoseObjective(phantom, L, spec).eval_cost(b)


def eval_grad(b, L, spec, phantom) -> np.ndarray:
    return DoseObjective(phantom, L, spec).grad(b)


def hessian_vec_product(b, v, L, spec, phantom) -> np.ndarray:
    return DoseObjective(phantom, L, spec).hvp(b, v)


# --- shipped goal sets ---------------------------------------------------

_DEFAULT_GOALS = {
    "multi_ptv": (
        DoseGoal("ptv_central", GoalKind.MIN_DOSE, 50.0, 0.95),
        DoseGoal("ptv_central", GoalKind.MAX_DOSE, 60.0, 0.10),
        DoseGoal("ptv_superior", GoalKind.MIN_DOSE, 25.0, 0.95),
        DoseGoal("ptv_superior", GoalKind.MAX_DOSE, 35.0, 0.10),
        DoseGoal("ptv_inferior", GoalKind.MIN_DOSE, 12.5, 0.95),
        DoseGoal("ptv_inferior", GoalKind.MAX_DOSE, 25.0, 0.10),
        DoseGoal("body", GoalKind.MAX_DOSE, 55.0, 0.05),
    ),
    "head_neck": (
        DoseGoal("ptv", GoalKind.MIN_DOSE, 50.0, 0.95),
        DoseGoal("cord", GoalKind.MAX_DOSE, 20.0, 0.05),
        DoseGoal("body", GoalKind.MAX_DOSE, 55.0, 0.05),
    ),
    "prostate": (
        DoseGoal("ptv", GoalKind.MIN_DOSE, 70.0, 0.95),
        DoseGoal("rectum", GoalKind.MAX_DOSE, 30.0, 0.20),
        DoseGoal("bladder", GoalKind.MAX_DOSE, 40.0, 0.30),
        DoseGoal("body", GoalKind.MAX_DOSE, 75.0, 0.05),
    ),
}
_DEFAULT_GOALS["icm_prostate"] = _DEFAULT_GOALS["prostate"]


def default_goals(case_name: str) -> tuple[DoseGoal, ...]:
    """Shipped goal set for a built-in case; all weights are 1.0."""
    try:
        return _DEFAULT_GOALS[case_name]
    except KeyError:
        raise ConfigurationError(f"no default goals for case {case_name!r}") from None


def default_objective_spec(case_name: str, beams: BeamConfig) -> ObjectiveSpec:
    return ObjectiveSpec(
        goals=default_goals(case_name),
        smoothness_weight=0.01,
        neighbor_pairs=bixel_neighbor_pairs(beams),
    )


def standard_initial_fluence(objective: DoseObjective) -> np.ndarray:
    """Uniform nonzero starting fluence scaled so the mean dose over the union
    of min-dose target structures matches the largest min-dose goal."""
    min_goals = [g for g in objective.spec.goals if g.kind is GoalKind.MIN_DOSE]
    if not min_goals:
        return np.ones(objective.n_bixels)
    target = max(g.dose for g in min_goals)
    union = np.unique(
        np.concatenate(
            [
                idx
                for g, idx in zip(objective.spec.goals, objective._goal_idx)
                if g.kind is GoalKind.MIN_DOSE
            ]
        )
    )
    d1 = dose_from_fluence(objective.matrix, np.ones(objective.n_bixels))
    mean = float(d1[union].mean())
    if mean <= 0:
        raise ConfigurationError("unit fluence deposits no dose in the target volumes")
    return np.full(objective.n_bixels, target / mean)
