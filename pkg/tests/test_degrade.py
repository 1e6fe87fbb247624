"""Tests for radon/FBP resimulation and scan degradation."""

import numpy as np
import pytest

from porovox.calculators.degrade import (
    DegradeError,
    DegradeSpec,
    Sinogram,
    base_angles,
    degrade_volume,
    fbp2d,
    radon2d,
    relative_rmse,
    select_angles,
    simulate_projection_noise,
)
from porovox.data.models import PhantomSpec, Volume
from porovox.data.phantom import generate_phantom


def _blob(n=64, center=(32, 32), sigma=4.0):
    y, x = np.mgrid[:n, :n]
    return np.exp(-((y - center[0]) ** 2 + (x - center[1]) ** 2) / (2 * sigma ** 2))


@pytest.fixture
def phantom_slice() -> np.ndarray:
    volume, _ = generate_phantom(
        PhantomSpec(grid_dims=(64, 64, 3), extent=(44.0, 44.0, 3.0), blur_sigma=1.5)
    )
    return volume.data[:, :, 1].astype(np.float64)


@pytest.mark.unit
class TestRadon:
    """Parallel-beam forward projection."""

    def test_zero_slice(self):
        sino = radon2d(np.zeros((16, 16)), base_angles(12))
        assert np.all(sino.values == 0)
        assert sino.n_angles == 12
        assert sino.n_detectors == 16

    def test_centered_blob_is_rotation_invariant(self):
        sino = radon2d(_blob(), base_angles(36))
        spread = np.max(np.abs(sino.values - sino.values[0]))
        assert spread <= 1e-2 * sino.values.max()

    def test_projection_conserves_mass(self):
        image = _blob(center=(24, 38), sigma=2.0)
        sino = radon2d(image, base_angles(24))
        assert np.allclose(sino.values.sum(axis=1), image.sum(), rtol=0.01)

    def test_non_square_slice(self):
        with pytest.raises(DegradeError):
            radon2d(np.zeros((8, 9)), base_angles(4))

    def test_sinogram_shape_is_validated(self):
        with pytest.raises(ValueError):
            Sinogram(angles=np.zeros(3), values=np.zeros((4, 8)))


@pytest.mark.unit
class TestFbp:
    """Ramp-filtered backprojection."""

    def test_round_trip_fidelity(self, phantom_slice):
        recon = fbp2d(radon2d(phantom_slice, base_angles(720)))
        assert relative_rmse(phantom_slice, recon) < 0.05

    def test_linearity(self, phantom_slice):
        sino = radon2d(phantom_slice, base_angles(90))
        scaled = Sinogram(angles=sino.angles, values=3.0 * sino.values)
        assert np.allclose(fbp2d(scaled), 3.0 * fbp2d(sino), atol=1e-6)

    def test_fewer_angles_increase_error(self, phantom_slice):
        many = fbp2d(radon2d(phantom_slice, base_angles(64)))
        few = fbp2d(radon2d(phantom_slice, base_angles(16)))
        assert relative_rmse(phantom_slice, few) > relative_rmse(phantom_slice, many)

    def test_too_few_angles(self):
        with pytest.raises(DegradeError):
            fbp2d(Sinogram(angles=[0.0], values=np.zeros((1, 8))))


@pytest.mark.unit
class TestAngleSelection:
    """Uniform angle subsampling."""

    @pytest.mark.parametrize("fraction,count", [(1.0, 720), (0.5, 360), (0.333, 240), (0.25, 180)])
    def test_counts(self, fraction, count):
        assert select_angles(720, fraction).size == count

    def test_selection_is_uniform_and_sorted(self):
        picks = select_angles(10, 0.5)
        assert picks.tolist() == [0, 2, 4, 6, 8]

    def test_invalid_fraction(self):
        with pytest.raises(DegradeError):
            select_angles(720, 0.0)
        with pytest.raises(ValueError):
            DegradeSpec(exposure_fraction=1.5)


@pytest.mark.unit
class TestProjectionNoise:
    """Poisson transmission noise."""

    def test_noise_scales_with_exposure(self):
        p = np.full(200_000, 1.0)
        reference = simulate_projection_noise(p, 1.0, 1e5, np.random.default_rng(0)).std()
        for exposure in (0.75, 0.5, 0.25):
            noisy = simulate_projection_noise(p, exposure, 1e5, np.random.default_rng(1))
            assert noisy.std() * np.sqrt(exposure) == pytest.approx(reference, rel=0.1)

    def test_quarter_exposure_quadruples_variance(self):
        p = np.full(200_000, 0.5)
        full = simulate_projection_noise(p, 1.0, 1e5, np.random.default_rng(2)).var()
        quarter = simulate_projection_noise(p, 0.25, 1e5, np.random.default_rng(3)).var()
        assert quarter / full == pytest.approx(4.0, rel=0.1)

    def test_photon_starvation_is_clamped(self):
        out = simulate_projection_noise(np.full(100, 50.0), 1.0, 10.0, np.random.default_rng(0))
        assert np.all(np.isfinite(out))
        assert np.all(out == -np.log(1 / 10.0))


@pytest.mark.unit
class TestDegradeVolume:
    """Slice-wise degradation of volumes."""

    @pytest.fixture
    def small_volume(self) -> Volume:
        volume, _ = generate_phantom(
            PhantomSpec(grid_dims=(32, 32, 4), extent=(22.0, 22.0, 4.0), blur_sigma=1.5)
        )
        return volume

    def test_noise_free_round_trip(self, small_volume):
        out = degrade_volume(small_volume, DegradeSpec(add_noise=False))
        assert relative_rmse(small_volume.data, out.data) < 0.05

    def test_same_seed_is_identical(self, small_volume):
        spec = DegradeSpec(exposure_fraction=0.5, projection_fraction=0.5, base_angles=180, seed=7)
        first = degrade_volume(small_volume, spec)
        second = degrade_volume(small_volume, spec, workers=3)
        assert np.array_equal(first.data, second.data)

    def test_different_seed_differs(self, small_volume):
        spec = DegradeSpec(exposure_fraction=0.25, base_angles=90, seed=1)
        first = degrade_volume(small_volume, spec)
        second = degrade_volume(small_volume, spec.model_copy(update={"seed": 2}))
        assert not np.array_equal(first.data, second.data)

    def test_lower_exposure_adds_error(self, small_volume):
        errors = []
        for exposure in (1.0, 0.25):
            spec = DegradeSpec(exposure_fraction=exposure, base_angles=180, i0=1e4, seed=3)
            errors.append(relative_rmse(small_volume.data, degrade_volume(small_volume, spec).data))
        assert errors[1] > errors[0]

    def test_non_square_slices(self):
        with pytest.raises(DegradeError):
            degrade_volume(Volume.from_array(np.zeros((8, 6, 2))), DegradeSpec())

    def test_relative_rmse_of_zero_reference(self):
        with pytest.raises(DegradeError):
            relative_rmse(np.zeros((4, 4)), np.ones((4, 4)))
