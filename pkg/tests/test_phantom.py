import numpy as np
import pytest

from geoseg import (
    GridSpec,
    PerturbSpec,
    PhantomSpec,
    binarize,
    connected_components,
    generate_phantom,
    lesion_metrics,
    perturb,
    phantom_manifest,
    sample_lesions,
)
from geoseg.phantom import (
    perturb_spec_from_json,
    perturb_spec_to_json,
    phantom_spec_from_json,
    phantom_spec_to_json,
)


def spec_32(seed=3, n=3):
    return PhantomSpec(
        seed=seed,
        grid=GridSpec((32, 32, 32)),
        n_lesions=n,
        radius_range_mm=(2.5, 4.5),
    )


class TestGeneratePhantom:
    def test_zero_lesions(self):
        mask = generate_phantom(spec_32(n=0))
        assert mask.foreground_count == 0

    def test_deterministic(self):
        a = generate_phantom(spec_32())
        b = generate_phantom(spec_32())
        assert (a.data == b.data).all()

    def test_different_seed_differs(self):
        a = generate_phantom(spec_32(seed=3))
        b = generate_phantom(spec_32(seed=4))
        assert (a.data != b.data).any()

    def test_screened_seed_gives_three_components(self):
        # seed 3 was pre-screened: three well-separated lesions on this grid
        mask = generate_phantom(spec_32(seed=3))
        assert connected_components(mask).n_components == 3

    def test_foreground_fraction_small(self):
        for seed in range(5):
            mask = generate_phantom(spec_32(seed=seed))
            frac = mask.foreground_count / mask.grid.voxel_count
            assert 0.0 < frac < 0.05

    def test_membership_matches_sampled_geometry(self):
        spec = spec_32(seed=11)
        mask = generate_phantom(spec)
        lesions = sample_lesions(spec)
        grid = spec.grid
        centers = [
            (np.arange(n) + 0.5) * s for n, s in zip(grid.dims, grid.spacing)
        ]
        xs, ys, zs = np.meshgrid(*centers, indexing="ij")
        inside = np.zeros(grid.dims, dtype=bool)
        for les in lesions:
            cx, cy, cz = les.center_mm
            ax, ay, az = les.semi_axes_mm
            inside |= (
                ((xs - cx) / ax) ** 2 + ((ys - cy) / ay) ** 2 + ((zs - cz) / az) ** 2
            ) <= 1.0
        assert (mask.bool_data() == inside).all()

    def test_ellipsoid_shape(self):
        spec = PhantomSpec(
            seed=1,
            grid=GridSpec((24, 24, 24)),
            n_lesions=2,
            radius_range_mm=(2.0, 5.0),
            shape="ellipsoid",
        )
        mask = generate_phantom(spec)
        assert mask.foreground_count > 0
        axes = {les.semi_axes_mm for les in sample_lesions(spec)}
        assert all(len(set(a)) > 1 for a in axes)  # distinct semi-axes

    def test_anisotropic_grid(self):
        spec = PhantomSpec(
            seed=2,
            grid=GridSpec((32, 32, 8), (0.7, 0.7, 3.0)),
            n_lesions=2,
            radius_range_mm=(2.0, 3.0),
        )
        mask = generate_phantom(spec)
        assert 0 < mask.foreground_count < mask.grid.voxel_count

    def test_manifest(self):
        spec = spec_32(seed=3)
        mask = generate_phantom(spec)
        man = phantom_manifest(spec, mask)
        assert man["intended_lesions"] == 3
        assert man["realized_components"] == 3
        assert man["foreground_voxels"] == mask.foreground_count
        assert man["spec"]["seed"] == 3

    def test_invalid_specs(self):
        grid = GridSpec((16, 16, 16))
        with pytest.raises(ValueError):
            PhantomSpec(seed=0, grid=grid, n_lesions=1, radius_range_mm=(3.0, 2.0))
        with pytest.raises(ValueError):
            # radius exceeds the brain ball (fraction 0.5 of 16 mm -> 4 mm)
            PhantomSpec(
                seed=0, grid=grid, n_lesions=1, radius_range_mm=(1.0, 5.0),
                brain_radius_fraction=0.5,
            )
        with pytest.raises(ValueError):
            PhantomSpec(seed=0, grid=grid, n_lesions=1, radius_range_mm=(1.0, 2.0), shape="cube")


class TestPerturb:
    def test_identity_settings(self):
        gt = generate_phantom(spec_32())
        out = perturb(gt, PerturbSpec(seed=0))
        assert (out.data == gt.data).all()

    def test_drop_everything(self):
        gt = generate_phantom(spec_32())
        out = perturb(gt, PerturbSpec(seed=0, drop_fraction=1.0))
        assert out.data.max() == 0.0

    def test_deterministic(self):
        gt = generate_phantom(spec_32())
        p = PerturbSpec(seed=9, blur_radius_mm=1.0, noise_std=0.05, drop_fraction=0.3, spurious_count=2)
        assert (perturb(gt, p).data == perturb(gt, p).data).all()

    def test_output_is_valid_probability_map(self):
        gt = generate_phantom(spec_32())
        p = PerturbSpec(seed=4, blur_radius_mm=1.5, noise_std=0.4, drop_fraction=0.2, spurious_count=3)
        out = perturb(gt, p)
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0

    def test_screened_drop_and_spurious_metrics(self):
        # seeds pre-screened: one of two lesions dropped, one disjoint spurious blob
        spec = PhantomSpec(
            seed=5, grid=GridSpec((24, 24, 24)), n_lesions=2, radius_range_mm=(2.0, 3.0)
        )
        gt = generate_phantom(spec)
        assert connected_components(gt).n_components == 2
        pred = perturb(gt, PerturbSpec(seed=0, drop_fraction=0.5, spurious_count=1))
        m = lesion_metrics(binarize(pred, 0.5), gt)
        assert (m.ltpr, m.lppv, m.lf1) == (0.5, 0.5, 0.5)

    def test_blur_spreads_mass(self):
        gt = generate_phantom(spec_32())
        out = perturb(gt, PerturbSpec(seed=0, blur_radius_mm=2.0))
        fractional = (out.data > 0.0) & (out.data < 1.0)
        assert fractional.any()  # edges soften
        # blur is normalized: total mass is preserved away from the volume edge
        assert out.data.sum() == pytest.approx(gt.data.sum(), rel=0.05)

    def test_invalid_perturb_spec(self):
        with pytest.raises(ValueError):
            PerturbSpec(seed=0, drop_fraction=1.5)
        with pytest.raises(ValueError):
            PerturbSpec(seed=0, noise_std=-0.1)


class TestJson:
    def test_phantom_spec_round_trip(self):
        spec = PhantomSpec(
            seed=7,
            grid=GridSpec((16, 20, 12), (0.7, 0.7, 3.0)),
            n_lesions=4,
            radius_range_mm=(1.5, 3.0),
            brain_radius_fraction=0.9,
            shape="ellipsoid",
        )
        assert phantom_spec_from_json(phantom_spec_to_json(spec)) == spec

    def test_perturb_spec_round_trip(self):
        p = PerturbSpec(seed=1, blur_radius_mm=0.5, noise_std=0.1, drop_fraction=0.3, spurious_count=2)
        assert perturb_spec_from_json(perturb_spec_to_json(p)) == p

    def test_missing_field(self):
        with pytest.raises(ValueError):
            phantom_spec_from_json({"seed": 1})
