"""Shared fixtures: small toy setups plus one session-cached real case."""
import numpy as np
import pytest
import scipy.sparse as sp

from fmopt import (
    BeamConfig,
    DoseGoal,
    DoseInfluenceMatrix,
    DoseObjective,
    GoalKind,
    ObjectiveSpec,
    Phantom,
    StructureMask,
    VoxelGrid,
    build_builtin_case,
    compute_influence_matrix,
)
from fmopt.objective import default_objective_spec, standard_initial_fluence


@pytest.fixture(scope="session")
def toy_grid():
    return VoxelGrid.centered(dims=(4, 4, 1), spacing=(5.0, 5.0, 5.0))


@pytest.fixture(scope="session")
def toy_phantom(toy_grid):
    """4x4x1 slab whose body covers every voxel, one 'target' sub-block."""
    all_idx = np.arange(toy_grid.voxel_count)
    body = StructureMask("body", all_idx)
    target = StructureMask("target", all_idx[:8])
    return Phantom(grid=toy_grid, body=body, structures=(target,), case_name="toy")


@pytest.fixture(scope="session")
def toy_beams():
    return BeamConfig(n_beams=1, bixel_rows=2, bixel_cols=2, bixel_size=(5.0, 5.0))


@pytest.fixture(scope="session")
def toy_matrix(toy_phantom, toy_beams):
    return compute_influence_matrix(toy_phantom, toy_beams)


@pytest.fixture(scope="session")
def toy_objective(toy_phantom, toy_beams, toy_matrix):
    spec = ObjectiveSpec(
        goals=(
            DoseGoal("target", GoalKind.MIN_DOSE, 10.0, 0.95),
            DoseGoal("body", GoalKind.MAX_DOSE, 12.0, 0.05),
        ),
        smoothness_weight=0.01,
        neighbor_pairs=((0, 1), (2, 3), (0, 2), (1, 3)),
    )
    return DoseObjective(toy_phantom, toy_matrix, spec)


def _real_case(name):
    phantom = build_builtin_case(name)
    beams = BeamConfig()
    matrix = compute_influence_matrix(phantom, beams)
    spec = default_objective_spec(name, beams)
    objective = DoseObjective(phantom, matrix, spec)
    return phantom, objective, standard_initial_fluence(objective)


@pytest.fixture(scope="session")
def multi_ptv_case():
    """(phantom, objective, b0) for the multi-target case; built once."""
    return _real_case("multi_ptv")


@pytest.fixture(scope="session")
def random_sparse_matrix():
    rng = np.random.default_rng(7)
    dense = rng.random((20, 12))
    dense[dense < 0.6] = 0.0
    return DoseInfluenceMatrix(sp.csr_matrix(dense)), dense
