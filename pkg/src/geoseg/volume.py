"""Volume data model and the GVOL on-disk format.

A volume is a scalar value per voxel over a regular 3D grid with anisotropic
physical spacing. In-memory data is always float64 with shape ``(nx, ny, nz)``,
indexed ``data[ix, iy, iz]``. The canonical linear order is x-fastest:

    index(ix, iy, iz) = ix + nx * (iy + ny * iz)

which is Fortran-order raveling of the ``(nx, ny, nz)`` array.

GVOL files come in pairs: ``<name>.gvol.json`` holds the header
``{"dims", "spacing", "kind", "dtype", "order"}`` and ``<name>.gvol.raw``
holds ``nx*ny*nz`` little-endian float32 values in the linear order above.
Masks store 0.0/1.0. On-disk precision is f32; all arithmetic upcasts to
float64 on read.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "VolumeError",
    "GvolError",
    "GridSpec",
    "VoxelIndex",
    "ScalarField",
    "ProbabilityMap",
    "BinaryMask",
    "new_volume",
    "binarize",
    "read_gvol",
    "write_gvol",
]


class VolumeError(ValueError):
    """A grid or volume invariant is violated."""


class GvolError(ValueError):
    """A .gvol header/payload pair is missing fields, inconsistent, or corrupt."""


# (ix, iy, iz), componentwise within the dims of its grid
VoxelIndex = tuple[int, int, int]


@dataclass(frozen=True)
class GridSpec:
    """Spatial domain: voxel counts per axis and physical spacing in mm."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        if len(dims) != 3:
            raise VolumeError(f"dims must have 3 entries, got {self.dims!r}")
        if len(spacing) != 3:
            raise VolumeError(f"spacing must have 3 entries, got {self.spacing!r}")
        if any(d < 1 for d in dims):
            raise VolumeError(f"invalid grid: all dims must be >= 1, got {dims}")
        if any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise VolumeError(f"invalid grid: all spacings must be > 0, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)

    @property
    def voxel_count(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def extent_mm(self) -> tuple[float, float, float]:
        """Physical size of the volume per axis."""
        return tuple(d * s for d, s in zip(self.dims, self.spacing))

    def linear_index(self, ix: int, iy: int, iz: int) -> int:
        """Flat position of voxel (ix, iy, iz) in the canonical x-fastest order."""
        nx, ny, nz = self.dims
        if not (0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz):
            raise VolumeError(f"voxel ({ix},{iy},{iz}) outside grid {self.dims}")
        return ix + nx * (iy + ny * iz)

    def voxel_from_linear(self, index: int) -> VoxelIndex:
        nx, ny, nz = self.dims
        if not 0 <= index < self.voxel_count:
            raise VolumeError(f"linear index {index} outside grid of {self.voxel_count} voxels")
        ix = index % nx
        iy = (index // nx) % ny
        iz = index // (nx * ny)
        return ix, iy, iz


def _coerce_data(grid: GridSpec, data, what: str) -> np.ndarray:
    arr = np.array(data, dtype=np.float64, copy=True)
    if arr.ndim == 1 and arr.size == grid.voxel_count:
        arr = arr.reshape(grid.dims, order="F")
    if arr.shape != grid.dims:
        raise VolumeError(f"{what} shape {arr.shape} does not match grid dims {grid.dims}")
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real scalar field over a grid. Immutable after construction."""

    grid: GridSpec
    data: np.ndarray

    def __post_init__(self):
        arr = _coerce_data(self.grid, self.data, type(self).__name__)
        self._validate(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def _validate(self, arr: np.ndarray) -> None:
        if not np.isfinite(arr).all():
            raise VolumeError(f"{type(self).__name__} contains non-finite values")

    def ravel(self) -> np.ndarray:
        """Values in the canonical x-fastest linear order."""
        return self.data.ravel(order="F")


class ProbabilityMap(ScalarField):
    """Scalar field constrained to [0, 1]; the soft segmentation output."""

    def _validate(self, arr: np.ndarray) -> None:
        super()._validate(arr)
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise VolumeError("ProbabilityMap values must lie in [0, 1]")


class BinaryMask(ScalarField):
    """Field whose values are exactly 0.0 or 1.0; the hard segmentation."""

    def _validate(self, arr: np.ndarray) -> None:
        super()._validate(arr)
        if not np.isin(arr, (0.0, 1.0)).all():
            raise VolumeError("BinaryMask values must be exactly 0 or 1")

    def bool_data(self) -> np.ndarray:
        return self.data.astype(bool)

    @property
    def foreground_count(self) -> int:
        return int(self.data.sum())


def new_volume(grid: GridSpec, fill: float = 0.0) -> ScalarField:
    """Constant scalar field over the grid."""
    return ScalarField(grid, np.full(grid.dims, float(fill)))


def binarize(s: ProbabilityMap, t: float) -> BinaryMask:
    """Threshold a probability map; ties at exactly t count as foreground.

    Requires t in the open interval (0, 1).
    """
    t = float(t)
    if not 0.0 < t < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {t}")
    return BinaryMask(s.grid, (s.data >= t).astype(np.float64))


def require_same_grid(a: ScalarField, b: ScalarField) -> GridSpec:
    if a.grid != b.grid:
        raise VolumeError(f"grid mismatch: {a.grid} vs {b.grid}")
    return a.grid


_KIND_TO_CLASS = {"scalar": ScalarField, "prob": ProbabilityMap, "mask": BinaryMask}


def _gvol_paths(path) -> tuple[Path, Path]:
    p = str(path)
    if p.endswith(".gvol.json"):
        base = p[: -len(".gvol.json")]
    elif p.endswith(".gvol.raw"):
        base = p[: -len(".gvol.raw")]
    else:
        base = p
    return Path(base + ".gvol.json"), Path(base + ".gvol.raw")


def _kind_of(field: ScalarField) -> str:
    if isinstance(field, BinaryMask):
        return "mask"
    if isinstance(field, ProbabilityMap):
        return "prob"
    return "scalar"


def write_gvol(field: ScalarField, path) -> Path:
    """Write a field as a .gvol.json/.gvol.raw pair; returns the header path.

    ``path`` may be a bare prefix or either of the two file names.
    """
    header_path, raw_path = _gvol_paths(path)
    header = {
        "dims": list(field.grid.dims),
        "spacing": list(field.grid.spacing),
        "kind": _kind_of(field),
        "dtype": "f32",
        "order": "x-fastest",
    }
    header_path.write_text(json.dumps(header) + "\n")
    raw_path.write_bytes(field.ravel().astype("<f4").tobytes())
    return header_path


def read_gvol(path) -> ScalarField:
    """Read a .gvol pair; the header's kind selects the returned type.

    The type's invariant is validated on read; violations raise VolumeError,
    structural problems (missing fields, size mismatch) raise GvolError.
    """
    header_path, raw_path = _gvol_paths(path)
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise GvolError(f"unparseable gvol header {header_path}: {exc}") from exc
    for key in ("dims", "spacing", "kind", "dtype", "order"):
        if key not in header:
            raise GvolError(f"gvol header {header_path} missing field {key!r}")
    if header["dtype"] != "f32":
        raise GvolError(f"unsupported gvol dtype {header['dtype']!r}")
    if header["order"] != "x-fastest":
        raise GvolError(f"unsupported gvol order {header['order']!r}")
    kind = header["kind"]
    if kind not in _KIND_TO_CLASS:
        raise GvolError(f"unknown gvol kind {kind!r}")
    try:
        grid = GridSpec(tuple(header["dims"]), tuple(header["spacing"]))
    except (VolumeError, TypeError) as exc:
        raise GvolError(f"invalid dims/spacing in gvol header {header_path}: {exc}") from exc
    raw = raw_path.read_bytes()
    expected = grid.voxel_count * 4
    if len(raw) != expected:
        raise GvolError(
            f"gvol payload {raw_path} has {len(raw)} bytes, header implies {expected}"
        )
    values = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    return _KIND_TO_CLASS[kind](grid, values)
