"""Spatially invariant geometric operators on volumes.

Three families:

* first-order derivatives per axis (``fog``), central or forward stencils,
  scaled by 1/spacing, with replicate or zero handling at the volume edge,
  plus the exact adjoint (transpose) of that linear map (``fog_adjoint``);
* the second-order operator ``sog``: per-axis (f[i-1] - 2 f[i] + f[i+1]) / h^2
  summed over the three axes (self-adjoint for both boundary rules);
* the exact Euclidean distance transform ``edt``: per-voxel distance in mm to
  the nearest boundary voxel of a mask, computed by the separable
  lower-envelope-of-parabolas algorithm, one linear pass per axis, with
  per-axis anisotropic spacing.

Boundary voxels of a mask are foreground voxels with at least one 6-neighbor
in the background; foreground voxels on the volume edge count as boundary
(the volume is treated as surrounded by background).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .volume import BinaryMask, GridSpec, ScalarField, VolumeError

__all__ = [
    "OpKind",
    "Stencil",
    "Boundary",
    "GeometricOperator",
    "VectorField",
    "DistanceMap",
    "NoBoundaryError",
    "fog",
    "fog_adjoint",
    "sog",
    "edt",
    "boundary_voxels",
]


class OpKind(Enum):
    FOG_FULL = "fog-full"
    FOG_X = "fog-x"
    FOG_Y = "fog-y"
    FOG_Z = "fog-z"
    SOG = "sog"
    DTM_UNSIGNED = "dtm"
    DTM_SIGNED = "dtm-signed"


class Stencil(Enum):
    CENTRAL = "central"
    FORWARD = "forward"


class Boundary(Enum):
    REPLICATE = "replicate"
    ZERO = "zero"


_FOG_AXES = {
    OpKind.FOG_FULL: (0, 1, 2),
    OpKind.FOG_X: (0,),
    OpKind.FOG_Y: (1,),
    OpKind.FOG_Z: (2,),
}


@dataclass(frozen=True)
class GeometricOperator:
    """Selects an operator kind plus stencil/boundary configuration.

    Stencil and boundary only apply to the derivative kinds; the distance
    transform kinds ignore them.
    """

    kind: OpKind
    stencil: Stencil = Stencil.CENTRAL
    boundary: Boundary = Boundary.REPLICATE

    @property
    def axes(self) -> tuple[int, ...]:
        if self.kind not in _FOG_AXES:
            raise ValueError(f"operator kind {self.kind} has no derivative axes")
        return _FOG_AXES[self.kind]


DEFAULT_FOG_OP = GeometricOperator(OpKind.FOG_FULL)
DEFAULT_SOG_OP = GeometricOperator(OpKind.SOG)


class NoBoundaryError(ValueError):
    """Mask is all-foreground or all-background, so no boundary exists."""


@dataclass(frozen=True, eq=False)
class VectorField:
    """Per-axis derivative components; absent axes are None (planar variants)."""

    grid: GridSpec
    components: tuple[ScalarField | None, ScalarField | None, ScalarField | None]
    op: GeometricOperator | None = None

    def __post_init__(self):
        present = [c for c in self.components if c is not None]
        if not present:
            raise VolumeError("VectorField needs at least one component")
        for c in present:
            if c.grid != self.grid:
                raise VolumeError("VectorField components must share the grid")

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.components) if c is not None)

    def __sub__(self, other: "VectorField") -> "VectorField":
        grid = require_same_grid_vf(self, other)
        if self.axes != other.axes:
            raise VolumeError(f"component mismatch: axes {self.axes} vs {other.axes}")
        comps = tuple(
            None if a is None else ScalarField(grid, a.data - b.data)
            for a, b in zip(self.components, other.components)
        )
        op = self.op if self.op == other.op else None
        return VectorField(grid, comps, op)


def require_same_grid_vf(a: VectorField, b: VectorField) -> GridSpec:
    if a.grid != b.grid:
        raise VolumeError(f"grid mismatch: {a.grid} vs {b.grid}")
    return a.grid


class DistanceMap(ScalarField):
    """Distances in mm to the nearest mask-boundary voxel; optionally signed."""

    def __init__(self, grid: GridSpec, data, signed: bool = False):
        object.__setattr__(self, "signed", bool(signed))
        super().__init__(grid, data)

    def _validate(self, arr: np.ndarray) -> None:
        super()._validate(arr)
        if not self.signed and arr.min() < 0.0:
            raise VolumeError("unsigned DistanceMap must be >= 0 everywhere")


def _axis_slice(axis: int, sl: slice) -> tuple:
    out = [slice(None)] * 3
    out[axis] = sl
    return tuple(out)


def _pad1(data: np.ndarray, axis: int, boundary: Boundary) -> np.ndarray:
    width = [(0, 0)] * 3
    width[axis] = (1, 1)
    if boundary is Boundary.REPLICATE:
        return np.pad(data, width, mode="edge")
    return np.pad(data, width, mode="constant", constant_values=0.0)


def _diff(data: np.ndarray, axis: int, h: float, stencil: Stencil, boundary: Boundary) -> np.ndarray:
    p = _pad1(data, axis, boundary)
    hi = p[_axis_slice(axis, slice(2, None))]
    if stencil is Stencil.CENTRAL:
        lo = p[_axis_slice(axis, slice(0, -2))]
        return (hi - lo) / (2.0 * h)
    # forward: (f[i+1] - f[i]) / h with the padded value standing in for f[n]
    mid = p[_axis_slice(axis, slice(1, -1))]
    return (hi - mid) / h


def _diff_adjoint(w: np.ndarray, axis: int, h: float, stencil: Stencil, boundary: Boundary) -> np.ndarray:
    # Transpose of _diff as (select from padded) composed with padding:
    # scatter into the padded shape, then fold the pad rows back per boundary rule.
    n = w.shape[axis]
    shape = list(w.shape)
    shape[axis] = n + 2
    u = np.zeros(shape, dtype=np.float64)
    if stencil is Stencil.CENTRAL:
        u[_axis_slice(axis, slice(2, None))] += w / (2.0 * h)
        u[_axis_slice(axis, slice(0, -2))] -= w / (2.0 * h)
    else:
        u[_axis_slice(axis, slice(2, None))] += w / h
        u[_axis_slice(axis, slice(1, -1))] -= w / h
    out = u[_axis_slice(axis, slice(1, -1))].copy()
    if boundary is Boundary.REPLICATE:
        first = u[_axis_slice(axis, slice(0, 1))]
        last = u[_axis_slice(axis, slice(-1, None))]
        out[_axis_slice(axis, slice(0, 1))] += first
        out[_axis_slice(axis, slice(-1, None))] += last
    return out


def _check_fog_op(op: GeometricOperator) -> None:
    if op.kind not in _FOG_AXES:
        raise ValueError(f"fog requires a derivative operator kind, got {op.kind}")


def fog(f: ScalarField, axes: tuple[int, ...] | None = None, op: GeometricOperator = DEFAULT_FOG_OP) -> VectorField:
    """First-order derivative components of f along the requested axes.

    ``axes`` defaults to the operator kind's axes. Central stencil
    (f[i+1] - f[i-1]) / (2 h) or forward (f[i+1] - f[i]) / h, where h is the
    physical spacing along the axis.
    """
    _check_fog_op(op)
    if axes is None:
        axes = op.axes
    axes = tuple(sorted(set(int(a) for a in axes)))
    if not axes or any(a not in (0, 1, 2) for a in axes):
        raise ValueError(f"axes must be a nonempty subset of (0, 1, 2), got {axes}")
    comps: list[ScalarField | None] = [None, None, None]
    for a in axes:
        d = _diff(f.data, a, f.grid.spacing[a], op.stencil, op.boundary)
        comps[a] = ScalarField(f.grid, d)
    return VectorField(f.grid, tuple(comps), op)


def fog_adjoint(vf: VectorField, op: GeometricOperator | None = None) -> ScalarField:
    """Apply the transpose of the derivative map: <fog(f), w> == <f, fog_adjoint(w)>."""
    if op is None:
        op = vf.op
    if op is None:
        raise ValueError("fog_adjoint needs the operator used for the forward pass")
    _check_fog_op(op)
    if vf.op is not None and (vf.op.stencil, vf.op.boundary) != (op.stencil, op.boundary):
        raise ValueError(
            f"stencil metadata mismatch: field built with {vf.op}, adjoint asked for {op}"
        )
    out = np.zeros(vf.grid.dims, dtype=np.float64)
    for a in vf.axes:
        comp = vf.components[a]
        out += _diff_adjoint(comp.data, a, vf.grid.spacing[a], op.stencil, op.boundary)
    return ScalarField(vf.grid, out)


def sog(f: ScalarField, op: GeometricOperator = DEFAULT_SOG_OP) -> ScalarField:
    """Sum over axes of the second difference (f[i-1] - 2 f[i] + f[i+1]) / h^2.

    Self-adjoint for both boundary rules, so it serves as its own transpose.
    """
    if op.kind is not OpKind.SOG:
        raise ValueError(f"sog requires operator kind SOG, got {op.kind}")
    return ScalarField(f.grid, _laplacian(f.data, f.grid.spacing, op.boundary))


def _laplacian(data: np.ndarray, spacing, boundary: Boundary) -> np.ndarray:
    out = np.zeros_like(data)
    for a in (0, 1, 2):
        p = _pad1(data, a, boundary)
        lo = p[_axis_slice(a, slice(0, -2))]
        hi = p[_axis_slice(a, slice(2, None))]
        out += (lo - 2.0 * data + hi) / (spacing[a] ** 2)
    return out


def boundary_voxels(g: BinaryMask) -> np.ndarray:
    """Boolean field marking foreground voxels adjacent (6-conn) to background.

    The volume is padded with background, so foreground voxels on the volume
    edge are boundary voxels; in particular a single-voxel object is its own
    boundary.
    """
    fg = g.bool_data()
    p = np.pad(fg, 1, constant_values=False)
    near_bg = (
        ~p[:-2, 1:-1, 1:-1]
        | ~p[2:, 1:-1, 1:-1]
        | ~p[1:-1, :-2, 1:-1]
        | ~p[1:-1, 2:, 1:-1]
        | ~p[1:-1, 1:-1, :-2]
        | ~p[1:-1, 1:-1, 2:]
    )
    return fg & near_bg


def _envelope_pass(f: np.ndarray, h: float) -> np.ndarray:
    """One axis of the exact squared-EDT: rows of f are independent scan lines.

    For each line computes min_j ((x_i - x_j)^2 + f[j]) with x_j = j * h via
    the lower envelope of parabolas; +inf entries are skipped as sources.
    """
    n_lines, n = f.shape
    x = np.arange(n, dtype=np.float64) * h
    x2 = x * x
    out = np.empty_like(f)
    v = np.empty(n, dtype=np.int64)  # parabola site indices
    z = np.empty(n + 1, dtype=np.float64)  # envelope breakpoints
    for r in range(n_lines):
        row = f[r]
        sites = np.flatnonzero(np.isfinite(row))
        if sites.size == 0:
            out[r] = np.inf
            continue
        k = 0
        v[0] = sites[0]
        z[0] = -np.inf
        z[1] = np.inf
        for j in sites[1:]:
            rj = row[j] + x2[j]
            while True:
                q = v[k]
                s = (rj - (row[q] + x2[q])) / (2.0 * (x[j] - x[q]))
                if s <= z[k]:
                    k -= 1
                else:
                    break
            k += 1
            v[k] = j
            z[k] = s
            z[k + 1] = np.inf
        k = 0
        for i in range(n):
            while z[k + 1] < x[i]:
                k += 1
            q = v[k]
            out[r, i] = (x[i] - x[q]) ** 2 + row[q]
    return out


def _edt_squared(seeds: np.ndarray, spacing) -> np.ndarray:
    """Exact squared Euclidean distance (mm^2) to the nearest True seed voxel."""
    d2 = np.where(seeds, 0.0, np.inf)
    for a in (0, 1, 2):
        moved = np.moveaxis(d2, a, -1)
        lines = moved.reshape(-1, moved.shape[-1])
        solved = _envelope_pass(lines, spacing[a])
        d2 = np.moveaxis(solved.reshape(moved.shape), -1, a)
    return d2


def edt(g: BinaryMask, signed: bool = False) -> DistanceMap:
    """Exact Euclidean distance (mm) from every voxel to the nearest boundary voxel of g.

    Distances are measured between voxel centers using the grid spacing. The
    signed variant negates values strictly inside the foreground; boundary
    voxels are 0 either way. Raises NoBoundaryError if g is all-foreground or
    all-background.
    """
    fg = g.bool_data()
    n_fg = int(fg.sum())
    if n_fg == 0 or n_fg == g.grid.voxel_count:
        raise NoBoundaryError(
            "mask needs at least one foreground and one background voxel"
        )
    d = np.sqrt(_edt_squared(boundary_voxels(g), g.grid.spacing))
    if signed:
        d = np.where(fg, -d, d)
    return DistanceMap(g.grid, d, signed=signed)
