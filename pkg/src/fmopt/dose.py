"""Pencil-beam dose-influence matrix: builds the sparse linear map from bixel
fluences to voxel doses and applies it (forward and adjoint).

The model for entry (v, j) is exp(-mu * depth(v, beam_j)) multiplied by a
Gaussian lateral falloff around bixel j's ray, zeroed below a per-bixel
relative cutoff. Depth is geometric path length through the body mask,
found by ray marching from the voxel toward the beam source.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, DimensionError
from .phantom import Phantom


@dataclass(frozen=True)
class BeamConfig:
    n_beams: int = 9
    gantry_angles: tuple[float, ...] | None = None  # degrees; default evenly spaced
    isocenter: tuple[float, float, float] = (0.0, 0.0, 0.0)
    bixel_rows: int = 10
    bixel_cols: int = 10
    bixel_size: tuple[float, float] = (5.0, 10.0)  # mm (col direction, row/axial direction)
    source_distance: float = 1000.0  # mm

    def __post_init__(self):
        if self.n_beams < 1:
            raise ConfigurationError("n_beams must be >= 1")
        if self.bixel_rows < 1 or self.bixel_cols < 1:
            raise ConfigurationError("bixel grid must be at least 1x1")
        if any(s <= 0 for s in self.bixel_size):
            raise ConfigurationError("bixel_size must be > 0")
        angles = self.angles
        if len({round(a % 360.0, 9) for a in angles}) != len(angles):
            raise ConfigurationError("gantry angles must be distinct modulo 360")

    @property
    def angles(self) -> tuple[float, ...]:
        if self.gantry_angles is not None:
            if len(self.gantry_angles) != self.n_beams:
                raise ConfigurationError("gantry_angles length must equal n_beams")
            return tuple(self.gantry_angles)
        return tuple(360.0 * i / self.n_beams for i in range(self.n_beams))

    @property
    def bixels_per_beam(self) -> int:
        return self.bixel_rows * self.bixel_cols

    @property
    def n_bixels(self) -> int:
        return self.n_beams * self.bixels_per_beam


@dataclass(frozen=True)
class PencilBeamParams:
    mu: float = 0.005  # attenuation, 1/mm
    sigma: float = 6.0  # lateral Gaussian width, mm
    cutoff: float = 1e-4  # drop entries below cutoff * per-bixel max


@dataclass(frozen=True)
class DoseInfluenceMatrix:
    """Sparse voxel-by-bixel influence matrix (Gy per unit fluence)."""

    matrix: sp.csr_matrix

    @property
    def n_voxels(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_bixels(self) -> int:
        return self.matrix.shape[1]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def save(self, path) -> None:
        """Binary triplet file: u64 header (n_voxels, n_bixels, nnz), then
        (row: u64, col: u64, value: f64) records, little-endian."""
        coo = self.matrix.tocoo()
        rec = np.empty(coo.nnz, dtype=[("row", "<u8"), ("col", "<u8"), ("value", "<f8")])
        rec["row"] = coo.row
        rec["col"] = coo.col
        rec["value"] = coo.data
        with open(path, "wb") as f:
            f.write(struct.pack("<QQQ", self.n_voxels, self.n_bixels, coo.nnz))
            rec.tofile(f)

    @staticmethod
    def load(path) -> "DoseInfluenceMatrix":
        with open(path, "rb") as f:
            header = f.read(24)
            if len(header) != 24:
                raise ConfigurationError(f"truncated influence-matrix file: {path}")
            n_vox, n_bix, nnz = struct.unpack("<QQQ", header)
            rec = np.fromfile(f, dtype=[("row", "<u8"), ("col", "<u8"), ("value", "<f8")])
        if rec.size != nnz:
            raise ConfigurationError(f"influence-matrix file has {rec.size} records, header says {nnz}")
        m = sp.coo_matrix(
            (rec["value"], (rec["row"].astype(np.int64), rec["col"].astype(np.int64))),
            shape=(n_vox, n_bix),
        ).tocsr()
        return DoseInfluenceMatrix(m)


def dose_from_fluence(L: DoseInfluenceMatrix, b: np.ndarray) -> np.ndarray:
    """d = L |b|. Negative bixel values are folded to their absolute value so
    physical fluence is always non-negative."""
    b = np.asarray(b, dtype=float)
    if b.shape != (L.n_bixels,):
        raise DimensionError(f"fluence length {b.shape} != n_bixels {L.n_bixels}")
    return L.matrix @ np.abs(b)


def adjoint_apply(L: DoseInfluenceMatrix, v: np.ndarray) -> np.ndarray:
    """L^T v, mapping a dose-space vector back to bixel space."""
    v = np.asarray(v, dtype=float)
    if v.shape != (L.n_voxels,):
        raise DimensionError(f"dose vector length {v.shape} != n_voxels {L.n_voxels}")
    return L.matrix.T @ v


def _beam_frame(angle_deg: float):
    t = np.deg2rad(angle_deg)
    toward_iso = -np.array([np.cos(t), np.sin(t), 0.0])
    u_axis = np.array([-np.sin(t), np.cos(t), 0.0])  # in-plane transverse
    w_axis = np.array([0.0, 0.0, 1.0])  # axial transverse
    return toward_iso, u_axis, w_axis


def _body_depths(centers: np.ndarray, source: np.ndarray, body_grid: np.ndarray,
                 grid) -> np.ndarray:
    """Path length through the body from each voxel center toward the source,
    by ray marching with step = half the minimum voxel spacing."""
    lo, hi = grid.bounds()
    spacing = np.asarray(grid.spacing)
    dims = np.asarray(grid.dims)
    step = spacing.min() / 2.0
    to_src = source[None, :] - centers
    dist = np.linalg.norm(to_src, axis=1)
    unit = to_src / dist[:, None]
    # nothing outside the grid is body, so marching can stop at the far corner
    max_t = float(np.linalg.norm(hi - lo))
    n_steps = int(np.ceil(max_t / step))
    depth = np.zeros(centers.shape[0])
    for k in range(n_steps):
        t = (k + 0.5) * step
        pos = centers + t * unit
        idx = np.floor((pos - lo[None, :]) / spacing[None, :]).astype(np.int64)
        valid = np.all((idx >= 0) & (idx < dims[None, :]), axis=1)
        if not valid.any():
            break
        flat = (idx[valid, 0] * dims[1] + idx[valid, 1]) * dims[2] + idx[valid, 2]
        hit = np.zeros(centers.shape[0], dtype=bool)
        hit[valid] = body_grid[flat]
        depth += step * hit
    return depth


def compute_influence_matrix(
    phantom: Phantom,
    beams: BeamConfig | None = None,
    params: PencilBeamParams | None = None,
) -> DoseInfluenceMatrix:
    """Build the sparse influence matrix for a phantom. Deterministic; only
    voxels inside the body receive dose."""
    beams = beams or BeamConfig()
    params = params or PencilBeamParams()
    if phantom.body.size == 0:
        raise ConfigurationError("phantom body mask is empty")

    grid = phantom.grid
    body_idx = phantom.body.indices
    body_grid = phantom.body.as_bool(grid.voxel_count)
    centers = grid.voxel_centers()[body_idx]
    iso = np.asarray(beams.isocenter, dtype=float)

    # lateral reach of one pencil beam at the entry cutoff, with slack for
    # divergence between the iso plane and the body extent
    r_lat = params.sigma * np.sqrt(2.0 * np.log(1.0 / params.cutoff)) + params.sigma
    r_lat *= 1.25

    rows_out: list[np.ndarray] = []
    cols_out: list[np.ndarray] = []
    vals_out: list[np.ndarray] = []

    off_u = (np.arange(beams.bixel_cols) - (beams.bixel_cols - 1) / 2.0) * beams.bixel_size[0]
    off_w = (np.arange(beams.bixel_rows) - (beams.bixel_rows - 1) / 2.0) * beams.bixel_size[1]

    for bi, angle in enumerate(beams.angles):
        toward_iso, u_axis, w_axis = _beam_frame(angle)
        source = iso - beams.source_distance * toward_iso
        atten = np.exp(-params.mu * _body_depths(centers, source, body_grid, grid))

        rel = centers - source[None, :]
        t_along = rel @ toward_iso
        # project each voxel onto the iso plane along its diverging ray
        scale = beams.source_distance / t_along
        xi_u = (rel @ u_axis) * scale
        xi_w = (rel @ w_axis) * scale

        for r in range(beams.bixel_rows):
            near_w = np.abs(xi_w - off_w[r]) <= r_lat
            if not near_w.any():
                continue
            for c in range(beams.bixel_cols):
                cand = near_w & (np.abs(xi_u - off_u[c]) <= r_lat)
                if not cand.any():
                    continue
                q = iso + off_u[c] * u_axis + off_w[r] * w_axis
                ray = q - source
                ray = ray / np.linalg.norm(ray)
                vec = rel[cand]
                proj = vec @ ray
                d2 = np.einsum("ij,ij->i", vec, vec) - proj**2
                np.maximum(d2, 0.0, out=d2)
                vals = atten[cand] * np.exp(-d2 / (2.0 * params.sigma**2))
                vmax = vals.max()
                if vmax <= 0.0:
                    continue
                keep = vals >= params.cutoff * vmax
                if not keep.any():
                    continue
                j = bi * beams.bixels_per_beam + r * beams.bixel_cols + c
                rows_out.append(body_idx[cand][keep])
                cols_out.append(np.full(int(keep.sum()), j, dtype=np.int64))
                vals_out.append(vals[keep])

    if rows_out:
        rows = np.concatenate(rows_out)
        cols = np.concatenate(cols_out)
        vals = np.concatenate(vals_out)
    else:
        rows = np.empty(0, dtype=np.int64)
        cols = np.empty(0, dtype=np.int64)
        vals = np.empty(0)
    m = sp.coo_matrix((vals, (rows, cols)), shape=(grid.voxel_count, beams.n_bixels)).tocsr()
    return DoseInfluenceMatrix(m)
