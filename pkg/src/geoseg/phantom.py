"""Seeded synthetic lesion volumes for desk-scale experiments.

A phantom is a handful of small ellipsoidal foreground objects placed inside
a central "brain ball" on an otherwise empty grid, mimicking the extreme
foreground/background imbalance of lesion segmentation. Generation is
bit-reproducible: the PRNG is NumPy's PCG64 seeded from the spec, and the
draw sequence is fixed:

1. one center per lesion, in lesion order: 3 standard normals (direction)
   plus 1 uniform (radial factor u, radius = ball_radius * u^(1/3));
2. then the sizes, in lesion order: 1 uniform radius in radius_range_mm for
   spheres, or 3 uniform semi-axes in radius_range_mm for ellipsoids.

All geometry is in physical mm: the voxel (ix, iy, iz) has its center at
((ix + 0.5) sx, (iy + 0.5) sy, (iz + 0.5) sz), and a voxel is foreground iff
its center lies inside at least one lesion. Overlapping lesions merge.

``perturb`` turns a ground-truth mask into an imperfect probability map
(component drops, spurious blobs, box blur, clipped Gaussian noise), with its
own seed and fixed draw sequence:

1. one uniform per ground-truth component (drop when u < drop_fraction),
   in deterministic component-label order;
2. per spurious blob: 3 uniforms for the center (uniform in the volume box)
   plus 1 uniform for its radius in [half_diag, 2 * half_diag], where
   half_diag is half the voxel diagonal (guarantees at least one voxel);
3. one standard normal per voxel for the noise field, drawn only when
   noise_std > 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .metrics import connected_components
from .volume import BinaryMask, GridSpec, ProbabilityMap

__all__ = [
    "PhantomSpec",
    "PerturbSpec",
    "Lesion",
    "sample_lesions",
    "generate_phantom",
    "phantom_manifest",
    "perturb",
    "phantom_spec_from_json",
    "phantom_spec_to_json",
    "perturb_spec_from_json",
    "perturb_spec_to_json",
]


@dataclass(frozen=True)
class PhantomSpec:
    seed: int
    grid: GridSpec
    n_lesions: int
    radius_range_mm: tuple[float, float]
    brain_radius_fraction: float = 0.8
    shape: str = "sphere"  # "sphere" | "ellipsoid"

    def __post_init__(self):
        if self.n_lesions < 0:
            raise ValueError("n_lesions must be >= 0")
        lo, hi = self.radius_range_mm
        if not (0 < lo <= hi):
            raise ValueError(f"radius range must satisfy 0 < min <= max, got {self.radius_range_mm}")
        if not 0 < self.brain_radius_fraction <= 1:
            raise ValueError("brain_radius_fraction must lie in (0, 1]")
        if self.shape not in ("sphere", "ellipsoid"):
            raise ValueError(f"shape must be 'sphere' or 'ellipsoid', got {self.shape!r}")
        if hi > self.ball_radius_mm:
            raise ValueError(
                f"max radius {hi} mm exceeds the brain ball radius "
                f"{self.ball_radius_mm:.3f} mm"
            )

    @property
    def ball_radius_mm(self) -> float:
        return self.brain_radius_fraction * min(self.grid.extent_mm) / 2.0


@dataclass(frozen=True)
class Lesion:
    center_mm: tuple[float, float, float]
    semi_axes_mm: tuple[float, float, float]


def sample_lesions(spec: PhantomSpec) -> list[Lesion]:
    """Draw the lesion geometry for a spec (see the module draw-order contract)."""
    rng = np.random.default_rng(spec.seed)
    volume_center = tuple(e / 2.0 for e in spec.grid.extent_mm)
    centers = []
    for _ in range(spec.n_lesions):
        direction = rng.standard_normal(3)
        norm = float(np.linalg.norm(direction))
        if norm < 1e-12:
            direction, norm = np.array([1.0, 0.0, 0.0]), 1.0
        r = spec.ball_radius_mm * rng.uniform() ** (1.0 / 3.0)
        centers.append(tuple(c + r * d / norm for c, d in zip(volume_center, direction)))
    lo, hi = spec.radius_range_mm
    lesions = []
    for center in centers:
        if spec.shape == "sphere":
            radius = rng.uniform(lo, hi)
            axes = (radius, radius, radius)
        else:
            axes = tuple(rng.uniform(lo, hi, size=3))
        lesions.append(Lesion(center, axes))
    return lesions


def _voxel_centers(grid: GridSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return tuple(
        (np.arange(n) + 0.5) * s for n, s in zip(grid.dims, grid.spacing)
    )


def _fill_ellipsoid(fg: np.ndarray, centers, lesion: Lesion) -> None:
    xs, ys, zs = centers
    ranges = []
    for coords, c, a in zip(centers, lesion.center_mm, lesion.semi_axes_mm):
        i0 = int(np.searchsorted(coords, c - a, side="left"))
        i1 = int(np.searchsorted(coords, c + a, side="right"))
        if i0 >= i1:
            return
        ranges.append((i0, i1))
    (x0, x1), (y0, y1), (z0, z1) = ranges
    cx, cy, cz = lesion.center_mm
    ax, ay, az = lesion.semi_axes_mm
    u = ((xs[x0:x1] - cx) / ax)[:, None, None] ** 2
    v = ((ys[y0:y1] - cy) / ay)[None, :, None] ** 2
    w = ((zs[z0:z1] - cz) / az)[None, None, :] ** 2
    fg[x0:x1, y0:y1, z0:z1] |= (u + v + w) <= 1.0


def generate_phantom(spec: PhantomSpec) -> BinaryMask:
    """Deterministic lesion mask for the spec; overlapping lesions merge."""
    fg = np.zeros(spec.grid.dims, dtype=bool)
    centers = _voxel_centers(spec.grid)
    for lesion in sample_lesions(spec):
        _fill_ellipsoid(fg, centers, lesion)
    return BinaryMask(spec.grid, fg.astype(np.float64))


def phantom_manifest(spec: PhantomSpec, mask: BinaryMask) -> dict:
    """Spec echo plus realized statistics (component count, foreground size)."""
    n_components = connected_components(mask, 26).n_components
    return {
        "spec": phantom_spec_to_json(spec),
        "intended_lesions": spec.n_lesions,
        "realized_components": n_components,
        "foreground_voxels": mask.foreground_count,
        "foreground_fraction": mask.foreground_count / spec.grid.voxel_count,
    }


@dataclass(frozen=True)
class PerturbSpec:
    seed: int
    blur_radius_mm: float = 0.0
    noise_std: float = 0.0
    drop_fraction: float = 0.0
    spurious_count: int = 0

    def __post_init__(self):
        if self.blur_radius_mm < 0 or self.noise_std < 0 or self.spurious_count < 0:
            raise ValueError("blur radius, noise std, and spurious count must be >= 0")
        if not 0.0 <= self.drop_fraction <= 1.0:
            raise ValueError("drop_fraction must lie in [0, 1]")


def perturb(gt: BinaryMask, p: PerturbSpec) -> ProbabilityMap:
    """Simulate an imperfect model output for a ground-truth mask.

    Drops components, adds spurious blobs, box-blurs at the given physical
    radius, adds clipped Gaussian noise; the result is always a valid
    probability map. With all settings at zero the output equals gt.
    """
    rng = np.random.default_rng(p.seed)
    grid = gt.grid
    labels = connected_components(gt, 26)
    data = gt.data.copy()
    for label in range(1, labels.n_components + 1):
        if rng.uniform() < p.drop_fraction:
            data[labels.data == label] = 0.0

    if p.spurious_count:
        half_diag = float(np.linalg.norm(grid.spacing)) / 2.0
        centers = _voxel_centers(grid)
        extent = grid.extent_mm
        fg = np.zeros(grid.dims, dtype=bool)
        for _ in range(p.spurious_count):
            center = tuple(rng.uniform(0.0, e) for e in extent)
            radius = rng.uniform(half_diag, 2.0 * half_diag)
            _fill_ellipsoid(fg, centers, Lesion(center, (radius, radius, radius)))
        data[fg] = 1.0

    if p.blur_radius_mm > 0:
        size = [2 * int(p.blur_radius_mm / s) + 1 for s in grid.spacing]
        if any(k > 1 for k in size):
            data = ndimage.uniform_filter(data, size=size, mode="nearest")

    if p.noise_std > 0:
        data = data + rng.standard_normal(grid.dims) * p.noise_std

    return ProbabilityMap(grid, np.clip(data, 0.0, 1.0))


def phantom_spec_to_json(spec: PhantomSpec) -> dict:
    return {
        "seed": spec.seed,
        "dims": list(spec.grid.dims),
        "spacing": list(spec.grid.spacing),
        "n_lesions": spec.n_lesions,
        "radius_range_mm": list(spec.radius_range_mm),
        "brain_radius_fraction": spec.brain_radius_fraction,
        "shape": spec.shape,
    }


def phantom_spec_from_json(obj: dict) -> PhantomSpec:
    try:
        return PhantomSpec(
            seed=int(obj["seed"]),
            grid=GridSpec(tuple(obj["dims"]), tuple(obj.get("spacing", (1.0, 1.0, 1.0)))),
            n_lesions=int(obj["n_lesions"]),
            radius_range_mm=tuple(obj["radius_range_mm"]),
            brain_radius_fraction=float(obj.get("brain_radius_fraction", 0.8)),
            shape=obj.get("shape", "sphere"),
        )
    except KeyError as exc:
        raise ValueError(f"phantom spec JSON missing field {exc}") from exc


def perturb_spec_to_json(p: PerturbSpec) -> dict:
    return {
        "seed": p.seed,
        "blur_radius_mm": p.blur_radius_mm,
        "noise_std": p.noise_std,
        "drop_fraction": p.drop_fraction,
        "spurious_count": p.spurious_count,
    }


def perturb_spec_from_json(obj: dict) -> PerturbSpec:
    try:
        return PerturbSpec(
            seed=int(obj["seed"]),
            blur_radius_mm=float(obj.get("blur_radius_mm", 0.0)),
            noise_std=float(obj.get("noise_std", 0.0)),
            drop_fraction=float(obj.get("drop_fraction", 0.0)),
            spurious_count=int(obj.get("spurious_count", 0)),
        )
    except KeyError as exc:
        raise ValueError(f"perturb spec JSON missing field {exc}") from exc
