"""Synthetic voxelized patient cases: grids, structure masks, and the four
built-in benchmark geometries (three TG-119-style analogs plus a larger
prostate analog).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

CASE_NAMES = ("multi_ptv", "head_neck", "prostate", "icm_prostate")


@dataclass(frozen=True)
class VoxelGrid:
    """Regular 3-D voxel grid. Spacing and origin are in mm; the origin is the
    corner of voxel (0, 0, 0)."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]

    def __post_init__(self):
        if any(int(d) < 1 for d in self.dims):
            raise ConfigurationError(f"grid dims must be >= 1, got {self.dims}")
        if any(s <= 0 for s in self.spacing):
            raise ConfigurationError(f"grid spacing must be > 0, got {self.spacing}")

    @property
    def voxel_count(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def voxel_volume(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def voxel_centers(self) -> np.ndarray:
        """(voxel_count, 3) array of voxel center coordinates in mm,
        C-order over (ix, iy, iz)."""
        nx, ny, nz = self.dims
        sx, sy, sz = self.spacing
        ox, oy, oz = self.origin
        xs = ox + (np.arange(nx) + 0.5) * sx
        ys = oy + (np.arange(ny) + 0.5) * sy
        zs = oz + (np.arange(nz) + 0.5) * sz
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(self.origin, dtype=float)
        hi = lo + np.asarray(self.dims, dtype=float) * np.asarray(self.spacing, dtype=float)
        return lo, hi

    @staticmethod
    def centered(dims: tuple[int, int, int], spacing: tuple[float, float, float]) -> "VoxelGrid":
        """Grid whose geometric center sits at the coordinate origin."""
        origin = tuple(-d * s / 2.0 for d, s in zip(dims, spacing))
        return VoxelGrid(tuple(dims), tuple(spacing), origin)


@dataclass(frozen=True)
class StructureMask:
    name: str
    indices: np.ndarray  # sorted unique voxel indices into the grid

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return int(self.indices.size)

    def as_bool(self, voxel_count: int) -> np.ndarray:
        mask = np.zeros(voxel_count, dtype=bool)
        mask[self.indices] = True
        return mask


# --- geometric primitives ------------------------------------------------

_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float

    def contains(self, points: np.ndarray) -> np.ndarray:
        rel = points - np.asarray(self.center)
        return np.einsum("ij,ij->i", rel, rel) < self.radius**2


@dataclass(frozen=True)
class Ellipsoid:
    center: tuple[float, float, float]
    semi_axes: tuple[float, float, float]

    def contains(self, points: np.ndarray) -> np.ndarray:
        rel = (points - np.asarray(self.center)) / np.asarray(self.semi_axes)
        return np.einsum("ij,ij->i", rel, rel) < 1.0


@dataclass(frozen=True)
class Cylinder:
    """Finite circular cylinder; `length` measured along `axis`."""

    center: tuple[float, float, float]
    radius: float
    length: float
    axis: str = "z"

    def contains(self, points: np.ndarray) -> np.ndarray:
        k = _AXES[self.axis]
        rel = points - np.asarray(self.center)
        along = rel[:, k]
        perp = np.delete(rel, k, axis=1)
        r2 = np.einsum("ij,ij->i", perp, perp)
        return (r2 < self.radius**2) & (np.abs(along) < self.length / 2.0)


@dataclass(frozen=True)
class HalfShell:
    """Half of a cylindrical shell (a C-shape in cross-section). The half
    facing `open_direction` (unit vector in the cross-sectional plane) is
    removed."""

    center: tuple[float, float, float]
    inner_radius: float
    outer_radius: float
    length: float
    axis: str = "z"
    open_direction: tuple[float, float] = (0.0, 1.0)

    def contains(self, points: np.ndarray) -> np.ndarray:
        k = _AXES[self.axis]
        rel = points - np.asarray(self.center)
        along = rel[:, k]
        perp = np.delete(rel, k, axis=1)
        r2 = np.einsum("ij,ij->i", perp, perp)
        open_dir = np.asarray(self.open_direction, dtype=float)
        open_dir = open_dir / np.linalg.norm(open_dir)
        keep_side = perp @ open_dir <= 0.0
        return (
            (r2 >= self.inner_radius**2)
            & (r2 < self.outer_radius**2)
            & (np.abs(along) < self.length / 2.0)
            & keep_side
        )


Primitive = Sphere | Ellipsoid | Cylinder | HalfShell

_PRIMITIVE_TYPES = {
    "sphere": Sphere,
    "ellipsoid": Ellipsoid,
    "cylinder": Cylinder,
    "half_shell": HalfShell,
}


def _primitive_to_dict(p: Primitive) -> dict:
    name = {v: k for k, v in _PRIMITIVE_TYPES.items()}[type(p)]
    d = {"type": name}
    d.update({k: list(v) if isinstance(v, tuple) else v for k, v in p.__dict__.items()})
    return d


def _primitive_from_dict(d: dict) -> Primitive:
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in _PRIMITIVE_TYPES:
        raise ConfigurationError(f"unknown primitive type: {kind!r}")
    cls = _PRIMITIVE_TYPES[kind]
    for k, v in d.items():
        if isinstance(v, list):
            d[k] = tuple(v)
    return cls(**d)


def _validate_primitive(p: Primitive) -> None:
    if isinstance(p, Sphere) and p.radius < 0:
        raise ConfigurationError("sphere radius must be non-negative")
    if isinstance(p, Ellipsoid) and any(a <= 0 for a in p.semi_axes):
        raise ConfigurationError("ellipsoid semi-axes must be positive")
    if isinstance(p, Cylinder) and (p.radius < 0 or p.length < 0):
        raise ConfigurationError("cylinder dimensions must be non-negative")
    if isinstance(p, HalfShell):
        if not (0 <= p.inner_radius < p.outer_radius) or p.length < 0:
            raise ConfigurationError("half-shell radii must satisfy 0 <= inner < outer")


# --- case specification --------------------------------------------------


@dataclass(frozen=True)
class StructureSpec:
    """One named structure: the union of its primitives, minus any voxels
    belonging to the structures listed in `carve`."""

    name: str
    primitives: tuple[Primitive, ...]
    carve: tuple[str, ...] = ()


@dataclass(frozen=True)
class CaseSpec:
    case_name: str
    grid: VoxelGrid
    body: Primitive
    structures: tuple[StructureSpec, ...]

    def __post_init__(self):
        names = [s.name for s in self.structures]
        if len(names) != len(set(names)):
            raise ConfigurationError(f"duplicate structure names in case {self.case_name!r}")
        _validate_primitive(self.body)
        for s in self.structures:
            for p in s.primitives:
                _validate_primitive(p)

    def to_json(self) -> str:
        doc = {
            "case_name": self.case_name,
            "grid": {
                "dims": list(self.grid.dims),
                "spacing_mm": list(self.grid.spacing),
                "origin_mm": list(self.grid.origin),
            },
            "body": _primitive_to_dict(self.body),
            "structures": [
                {
                    "name": s.name,
                    "primitives": [_primitive_to_dict(p) for p in s.primitives],
                    "carve": list(s.carve),
                }
                for s in self.structures
            ],
        }
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_json(text: str) -> "CaseSpec":
        doc = json.loads(text)
        try:
            g = doc["grid"]
            grid = VoxelGrid(tuple(g["dims"]), tuple(g["spacing_mm"]), tuple(g["origin_mm"]))
            structures = tuple(
                StructureSpec(
                    s["name"],
                    tuple(_primitive_from_dict(p) for p in s["primitives"]),
                    tuple(s.get("carve", ())),
                )
                for s in doc["structures"]
            )
            return CaseSpec(doc["case_name"], grid, _primitive_from_dict(doc["body"]), structures)
        except KeyError as e:
            raise ConfigurationError(f"case spec missing field {e.args[0]!r}") from e


@dataclass(frozen=True)
class Phantom:
    grid: VoxelGrid
    body: StructureMask
    structures: tuple[StructureMask, ...]
    case_name: str

    def __post_init__(self):
        names = [s.name for s in self.structures]
        if len(names) != len(set(names)):
            raise ConfigurationError("duplicate structure names")
        body_set = self.body.as_bool(self.grid.voxel_count)
        for s in self.structures:
            if s.size and not body_set[s.indices].all():
                raise ConfigurationError(f"structure {s.name!r} extends outside the body")

    def structure(self, name: str) -> StructureMask:
        for s in self.structures:
            if s.name == name:
                return s
        raise ConfigurationError(f"no structure named {name!r} in case {self.case_name!r}")

    @property
    def structure_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.structures)


# --- rasterization -------------------------------------------------------


def rasterize_primitive(primitive: Primitive, grid: VoxelGrid, name: str = "") -> StructureMask:
    """Mask of voxels whose centers lie inside the primitive."""
    _validate_primitive(primitive)
    inside = primitive.contains(grid.voxel_centers())
    return StructureMask(name, np.nonzero(inside)[0])


def build_case(spec: CaseSpec) -> Phantom:
    """Rasterize a case spec into a phantom. Deterministic; the body is the
    union of the enclosing body primitive with every structure."""
    grid = spec.grid
    centers = grid.voxel_centers()
    raw: dict[str, np.ndarray] = {}
    for s in spec.structures:
        inside = np.zeros(grid.voxel_count, dtype=bool)
        for p in s.primitives:
            _validate_primitive(p)
            inside |= p.contains(centers)
        raw[s.name] = inside
    # carving runs against the pre-carve masks so order cannot matter
    masks = []
    for s in spec.structures:
        inside = raw[s.name].copy()
        for other in s.carve:
            if other not in raw:
                raise ConfigurationError(
                    f"structure {s.name!r} carves unknown structure {other!r}"
                )
            inside &= ~raw[other]
        masks.append(StructureMask(s.name, np.nonzero(inside)[0]))
    body_inside = spec.body.contains(centers)
    for m in masks:
        body_inside[m.indices] = True
    body = StructureMask("body", np.nonzero(body_inside)[0])
    return Phantom(grid=grid, body=body, structures=tuple(masks), case_name=spec.case_name)


# --- built-in cases ------------------------------------------------------


def builtin_case_spec(case_name: str) -> CaseSpec:
    """Spec for one of the four shipped benchmark cases."""
    if case_name == "multi_ptv":
        grid = VoxelGrid.centered((48, 48, 48), (3.0, 3.0, 3.0))
        return CaseSpec(
            case_name,
            grid,
            body=Ellipsoid((0, 0, 0), (60.0, 60.0, 66.0)),
            structures=(
                StructureSpec("ptv_central", (Cylinder((0, 0, 0), 20.0, 40.0),)),
                StructureSpec("ptv_superior", (Cylinder((0, 0, 40.0), 10.0, 20.0),)),
                StructureSpec("ptv_inferior", (Cylinder((0, 0, -40.0), 10.0, 20.0),)),
            ),
        )
    if case_name == "head_neck":
        grid = VoxelGrid.centered((48, 48, 48), (3.0, 3.0, 3.0))
        return CaseSpec(
            case_name,
            grid,
            body=Ellipsoid((0, 0, 0), (55.0, 55.0, 66.0)),
            structures=(
                StructureSpec(
                    "ptv",
                    (HalfShell((0, 0, 0), 15.0, 35.0, 40.0, open_direction=(0.0, 1.0)),),
                ),
                StructureSpec("cord", (Cylinder((0, 0, 0), 10.0, 100.0),)),
            ),
        )
    if case_name in ("prostate", "icm_prostate"):
        # icm analog: prostate geometry scaled x1.5 on a larger grid
        k = 1.5 if case_name == "icm_prostate" else 1.0
        dims = (64, 64, 64) if case_name == "icm_prostate" else (48, 48, 48)
        grid = VoxelGrid.centered(dims, (3.0, 3.0, 3.0))
        body_axes = (58.0 * k, 58.0 * k, 64.0 * k)
        return CaseSpec(
            case_name,
            grid,
            body=Ellipsoid((0, 0, 0), body_axes),
            structures=(
                StructureSpec(
                    "ptv",
                    (Ellipsoid((0, 0, 0), (20.0 * k, 15.0 * k, 15.0 * k)),),
                    carve=("rectum", "bladder"),
                ),
                StructureSpec(
                    "rectum", (Ellipsoid((0, 22.0 * k, 0), (15.0 * k, 7.5 * k, 7.5 * k)),)
                ),
                StructureSpec("bladder", (Sphere((0, -35.0 * k, 0), 30.0 * k),)),
            ),
        )
    raise ConfigurationError(
        f"unknown case {case_name!r}; available: {', '.join(CASE_NAMES)}"
    )


def build_builtin_case(case_name: str) -> Phantom:
    return build_case(builtin_case_spec(case_name))
