import numpy as np
import pytest
from scipy import ndimage

from geoseg import (
    BinaryMask,
    Boundary,
    GeometricOperator,
    GridSpec,
    NoBoundaryError,
    OpKind,
    ScalarField,
    Stencil,
    VectorField,
    boundary_voxels,
    edt,
    fog,
    fog_adjoint,
    sog,
)
from conftest import random_mask

ALL_STENCIL_BOUNDARY = [
    (st, bd) for st in Stencil for bd in Boundary
]


def _op(stencil=Stencil.CENTRAL, boundary=Boundary.REPLICATE, kind=OpKind.FOG_FULL):
    return GeometricOperator(kind, stencil, boundary)


class TestFog:
    @pytest.mark.parametrize("stencil,boundary", ALL_STENCIL_BOUNDARY)
    def test_constant_field(self, stencil, boundary):
        f = ScalarField(GridSpec((5, 4, 3)), np.full((5, 4, 3), 2.5))
        vf = fog(f, op=_op(stencil, boundary))
        for a in range(3):
            d = vf.components[a].data
            if boundary is Boundary.REPLICATE:
                assert np.abs(d).max() == 0.0
            else:
                # zero padding responds at the edge by design; interior stays 0
                interior = [slice(1, -1)] * 3
                assert np.abs(d[tuple(interior)]).max() == 0.0

    def test_hand_enummerated_strip(self):
        grid = GridSpec((4, 1, 1))
        f = ScalarField(grid, [0.0, 1.0, 1.0, 0.0])
        vf = fog(f, (0,), _op())
        assert list(vf.components[0].ravel()) == [0.5, 0.5, -0.5, -0.5]

    def test_linear_ramp_central_exact(self):
        grid = GridSpec((6, 2, 2))
        data = np.broadcast_to(np.arange(6, dtype=float)[:, None, None], (6, 2, 2))
        vf = fog(ScalarField(grid, data.copy()), (0,), _op())
        d = vf.components[0].data
        assert np.allclose(d[1:-1], 1.0)
        # replicate boundary halves the one-sided difference at the edges
        assert np.allclose(d[0], 0.5) and np.allclose(d[-1], 0.5)

    def test_forward_stencil_on_ramp(self):
        grid = GridSpec((5, 1, 1))
        f = ScalarField(grid, np.arange(5, dtype=float))
        d = fog(f, (0,), _op(Stencil.FORWARD)).components[0].ravel()
        assert list(d[:-1]) == [1.0] * 4
        assert d[-1] == 0.0  # replicate: f[n] == f[n-1]

    def test_spacing_scales_derivative(self):
        data = np.arange(4, dtype=float)
        unit = fog(ScalarField(GridSpec((4, 1, 1)), data), (0,), _op())
        wide = fog(ScalarField(GridSpec((4, 1, 1), (2.0, 1.0, 1.0)), data), (0,), _op())
        assert np.allclose(wide.components[0].data, unit.components[0].data / 2.0)

    def test_planar_subset(self):
        f = ScalarField(GridSpec((3, 3, 3)), np.zeros((3, 3, 3)))
        vf = fog(f, (1,), _op())
        assert vf.axes == (1,)
        assert vf.components[0] is None and vf.components[2] is None

    def test_empty_axes_rejected(self):
        f = ScalarField(GridSpec((3, 3, 3)), np.zeros((3, 3, 3)))
        with pytest.raises(ValueError):
            fog(f, (), _op())

    def test_linearity(self, rng):
        grid = GridSpec((5, 4, 3), (0.7, 1.0, 2.0))
        f = ScalarField(grid, rng.random(grid.dims))
        h = ScalarField(grid, rng.random(grid.dims))
        combo = ScalarField(grid, 2.0 * f.data - 3.0 * h.data)
        for a in range(3):
            lhs = fog(combo, (a,), _op()).components[a].data
            rhs = (
                2.0 * fog(f, (a,), _op()).components[a].data
                - 3.0 * fog(h, (a,), _op()).components[a].data
            )
            assert np.allclose(lhs, rhs, atol=1e-12)

    def test_nonzero_only_near_mask_edges(self, rng):
        g = random_mask(rng, (8, 8, 8), p=0.2)
        vf = fog(g, op=_op())
        hit = np.zeros(g.grid.dims, dtype=bool)
        for a in range(3):
            hit |= vf.components[a].data != 0.0
        # voxels whose 6-neighborhood is not constant, dilated by one voxel
        fg = g.bool_data()
        interface = np.zeros_like(fg)
        for a in range(3):
            sl_lo = [slice(None)] * 3
            sl_hi = [slice(None)] * 3
            sl_lo[a] = slice(None, -1)
            sl_hi[a] = slice(1, None)
            d = fg[tuple(sl_lo)] != fg[tuple(sl_hi)]
            interface[tuple(sl_lo)] |= d
            interface[tuple(sl_hi)] |= d
        near = ndimage.binary_dilation(interface, np.ones((3, 3, 3), bool))
        assert (~hit | near).all()


class TestFogAdjoint:
    @pytest.mark.parametrize("stencil,boundary", ALL_STENCIL_BOUNDARY)
    def test_dot_product_identity(self, rng, stencil, boundary):
        grid = GridSpec((5, 5, 5), (0.7, 0.7, 3.0))
        op = _op(stencil, boundary)
        f = ScalarField(grid, rng.random(grid.dims))
        w = VectorField(
            grid,
            tuple(ScalarField(grid, rng.random(grid.dims)) for _ in range(3)),
            op,
        )
        vf = fog(f, op=op)
        lhs = sum(
            float(np.sum(vf.components[a].data * w.components[a].data)) for a in range(3)
        )
        rhs = float(np.sum(f.data * fog_adjoint(w, op).data))
        assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))

    def test_zero_input(self):
        grid = GridSpec((4, 4, 4))
        w = VectorField(grid, (ScalarField(grid, np.zeros(grid.dims)), None, None), _op())
        assert np.abs(fog_adjoint(w, _op()).data).max() == 0.0

    def test_single_voxel_grid(self):
        grid = GridSpec((1, 1, 1))
        w = VectorField(grid, (ScalarField(grid, [3.0]), None, None), _op())
        # central stencil on one voxel sees only the replicated value: zero map
        assert fog_adjoint(w, _op()).data.item() == 0.0

    def test_stencil_metadata_mismatch(self):
        grid = GridSpec((4, 4, 4))
        w = VectorField(
            grid, (ScalarField(grid, np.zeros(grid.dims)), None, None), _op(Stencil.CENTRAL)
        )
        with pytest.raises(ValueError):
            fog_adjoint(w, _op(Stencil.FORWARD))


class TestSog:
    def test_constant_field(self):
        f = ScalarField(GridSpec((4, 4, 4)), np.full((4, 4, 4), 7.0))
        assert np.abs(sog(f).data).max() == 0.0

    def test_hand_enumerated_strip(self):
        f = ScalarField(GridSpec((3, 1, 1)), [0.0, 1.0, 0.0])
        assert list(sog(f).ravel()) == [1.0, -2.0, 1.0]

    def test_linear_ramp_interior_zero(self):
        grid = GridSpec((6, 1, 1))
        f = ScalarField(grid, np.arange(6, dtype=float))
        vals = sog(f).ravel()
        assert np.abs(vals[1:-1]).max() == 0.0

    def test_spacing_scaling(self):
        f1 = ScalarField(GridSpec((3, 1, 1)), [0.0, 1.0, 0.0])
        f2 = ScalarField(GridSpec((3, 1, 1), (2.0, 1.0, 1.0)), [0.0, 1.0, 0.0])
        assert np.allclose(sog(f2).data, sog(f1).data / 4.0)

    @pytest.mark.parametrize("boundary", list(Boundary))
    def test_self_adjoint(self, rng, boundary):
        grid = GridSpec((5, 4, 6), (0.7, 0.7, 3.0))
        op = GeometricOperator(OpKind.SOG, boundary=boundary)
        f = ScalarField(grid, rng.random(grid.dims))
        h = ScalarField(grid, rng.random(grid.dims))
        lhs = float(np.sum(sog(f, op).data * h.data))
        rhs = float(np.sum(f.data * sog(h, op).data))
        assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))

    def test_linearity(self, rng):
        grid = GridSpec((5, 4, 3))
        f = ScalarField(grid, rng.random(grid.dims))
        h = ScalarField(grid, rng.random(grid.dims))
        combo = ScalarField(grid, 1.5 * f.data + 0.5 * h.data)
        assert np.allclose(
            sog(combo).data, 1.5 * sog(f).data + 0.5 * sog(h).data, atol=1e-12
        )

    def test_wrong_kind_rejected(self):
        f = ScalarField(GridSpec((3, 3, 3)), np.zeros((3, 3, 3)))
        with pytest.raises(ValueError):
            sog(f, _op(kind=OpKind.FOG_X))


def brute_force_edt(mask: BinaryMask, signed: bool) -> np.ndarray:
    """O(n * boundary) nearest-boundary search in physical coordinates."""
    spacing = np.asarray(mask.grid.spacing)
    b = np.argwhere(boundary_voxels(mask)) * spacing
    pos = np.argwhere(np.ones(mask.grid.dims, bool)) * spacing
    d = np.sqrt(((pos[:, None, :] - b[None, :, :]) ** 2).sum(-1)).min(1)
    d = d.reshape(mask.grid.dims)
    if signed:
        d = np.where(mask.bool_data(), -d, d)
    return d


class TestEdt:
    def test_single_center_voxel(self):
        m = np.zeros((3, 3, 3))
        m[1, 1, 1] = 1.0
        d = edt(BinaryMask(GridSpec((3, 3, 3)), m))
        assert d.data[1, 1, 1] == 0.0
        assert d.data[0, 1, 1] == 1.0
        assert abs(d.data[0, 0, 0] - np.sqrt(3.0)) < 1e-12

    def test_anisotropic_spacing(self):
        m = np.zeros((3, 3, 3))
        m[1, 1, 1] = 1.0
        d = edt(BinaryMask(GridSpec((3, 3, 3), (1.0, 1.0, 3.0)), m))
        assert d.data[1, 1, 0] == 3.0
        assert d.data[0, 1, 1] == 1.0

    def test_no_boundary_errors(self):
        grid = GridSpec((3, 3, 3))
        with pytest.raises(NoBoundaryError):
            edt(BinaryMask(grid, np.zeros(grid.dims)))
        with pytest.raises(NoBoundaryError):
            edt(BinaryMask(grid, np.ones(grid.dims)))

    @pytest.mark.parametrize("signed", [False, True])
    def test_matches_brute_force(self, rng, signed):
        for _ in range(8):
            spacing = tuple(rng.uniform(0.5, 3.0, 3))
            m = random_mask(rng, (12, 12, 12), p=rng.uniform(0.05, 0.5), spacing=spacing)
            d = edt(m, signed=signed)
            assert np.abs(d.data - brute_force_edt(m, signed)).max() < 1e-9

    def test_matches_scipy(self, rng):
        # independent third route: scipy's exact EDT seeded on the boundary set
        m = random_mask(rng, (10, 10, 10), p=0.2, spacing=(0.7, 1.1, 2.0))
        ref = ndimage.distance_transform_edt(
            ~boundary_voxels(m), sampling=m.grid.spacing
        )
        assert np.abs(edt(m).data - ref).max() < 1e-9

    def test_zero_exactly_on_boundary(self, rng):
        m = random_mask(rng, (9, 9, 9), p=0.25)
        d = edt(m)
        b = boundary_voxels(m)
        assert (d.data[b] == 0.0).all()
        assert (d.data[~b] > 0.0).all()

    def test_sign_convention(self):
        # ball of radius 1.9 in 5^3: the center voxel is strictly inside
        grid = GridSpec((5, 5, 5))
        idx = np.indices(grid.dims).reshape(3, -1).T
        m = (np.linalg.norm(idx - 2.0, axis=1) <= 1.9).astype(float).reshape(grid.dims)
        d = edt(BinaryMask(grid, m), signed=True)
        assert d.data[2, 2, 2] < 0.0
        assert d.data[0, 0, 0] > 0.0
        unsigned = edt(BinaryMask(grid, m), signed=False)
        assert unsigned.data.min() >= 0.0

    @pytest.mark.parametrize("signed", [False, True])
    def test_lipschitz_across_neighbors(self, rng, signed):
        spacing = (0.7, 1.3, 2.1)
        m = random_mask(rng, (10, 10, 10), p=0.3, spacing=spacing)
        d = edt(m, signed=signed).data
        for a in range(3):
            sl_lo = [slice(None)] * 3
            sl_hi = [slice(None)] * 3
            sl_lo[a] = slice(None, -1)
            sl_hi[a] = slice(1, None)
            jump = np.abs(d[tuple(sl_hi)] - d[tuple(sl_lo)])
            assert jump.max() <= spacing[a] + 1e-9


class TestBoundaryVoxels:
    def test_single_voxel_is_its_own_boundary(self):
        m = np.zeros((3, 3, 3))
        m[1, 1, 1] = 1.0
        b = boundary_voxels(BinaryMask(GridSpec((3, 3, 3)), m))
        assert b[1, 1, 1] and b.sum() == 1

    def test_volume_edge_foreground_counts(self):
        grid = GridSpec((3, 3, 3))
        b = boundary_voxels(BinaryMask(grid, np.ones(grid.dims)))
        assert b[0, 0, 0] and b[2, 2, 2]
        assert not b[1, 1, 1]
