"""Tests for Otsu/flood-fill pore labeling."""

from collections import deque

import numpy as np
import pytest
from scipy import ndimage

from porovox.calculators.labeler import (
    DEFAULT_SURFACE_MARGIN,
    SIX_CONNECTED,
    EmptyObjectError,
    components_to_mask,
    connected_components,
    extract_pore_labels,
    filter_small_pores,
    object_mask,
    otsu_threshold,
    pore_mask_raw,
)
from porovox.data.filters import DegenerateHistogramError, histogram_of_values
from porovox.data.models import PhantomSpec, PoreComponent, PoreSpec, Volume
from porovox.data.phantom import generate_phantom, scatter_pores


def _between_class_variance(counts, centers, k):
    """Between-class variance with class 0 = bins ``0..k``."""
    w0, w1 = counts[: k + 1].sum(), counts[k + 1:].sum()
    if w0 == 0 or w1 == 0:
        return -np.inf
    mu0 = np.dot(counts[: k + 1], centers[: k + 1]) / w0
    mu1 = np.dot(counts[k + 1:], centers[k + 1:]) / w1
    return w0 * w1 * (mu0 - mu1) ** 2


def _components_by_bfs(mask):
    """Reference 6-connected labeling by breadth-first search."""
    seen = np.zeros(mask.shape, dtype=bool)
    groups = []
    for start in zip(*np.nonzero(mask)):
        if seen[start]:
            continue
        seen[start] = True
        queue, group = deque([start]), set()
        while queue:
            voxel = queue.popleft()
            group.add(voxel)
            for axis in range(3):
                for step in (-1, 1):
                    n = list(voxel)
                    n[axis] += step
                    n = tuple(n)
                    if all(0 <= c < s for c, s in zip(n, mask.shape)) and mask[n] and not seen[n]:
                        seen[n] = True
                        queue.append(n)
        groups.append(frozenset(group))
    return groups


@pytest.mark.unit
class TestOtsuThreshold:
    """Otsu threshold on histograms."""

    def test_two_class_data_cuts_inside_range(self):
        h = histogram_of_values(np.array([0.0] * 4 + [10.0] * 4), 256)
        t = otsu_threshold(h)
        assert 0.0 < t <= 10.0
        # every interior edge separates the classes equally well; the smallest wins
        assert t == pytest.approx(10.0 / 256)

    def test_matches_exhaustive_search(self, rng):
        for _ in range(5):
            values = np.concatenate([rng.normal(0.0, 1.0, 120), rng.normal(4.0, 1.5, 80)])
            h = histogram_of_values(values, 64)
            t = otsu_threshold(h)
            k = int(np.flatnonzero(h.bin_edges == t)[0]) - 1
            variances = [_between_class_variance(h.counts, h.centers, j) for j in range(h.n_bins - 1)]
            best = max(variances)
            assert variances[k] >= best * (1 - 1e-9)
            assert all(v < best * (1 - 1e-9) for v in variances[:k])

    def test_constant_samples_raise(self):
        with pytest.raises(DegenerateHistogramError):
            otsu_threshold(histogram_of_values(np.full(20, 3.0), 16))


@pytest.mark.unit
class TestObjectMask:
    """Watertight object masking."""

    def test_internal_pore_belongs_to_object(self):
        spec = PhantomSpec(
            shape="cube",
            grid_dims=(24, 24, 24),
            pores=[PoreSpec(center=(12.0, 12.0, 12.0), radii=(3.0, 3.0, 3.0))],
        )
        volume, truth = generate_phantom(spec)
        obj = object_mask(volume)
        assert np.all(obj[truth.mask])
        assert not np.any(obj[0, :, :])

    def test_pure_background_has_no_object(self):
        with pytest.raises(EmptyObjectError):
            object_mask(Volume.from_array(np.zeros((8, 8, 8))))

    def test_cylinder_volume_matches_analytic(self):
        spec = PhantomSpec(shape="cylinder", grid_dims=(48, 48, 48))
        volume, _ = generate_phantom(spec)
        ex, ey, ez = spec.solid_extent
        analytic = np.pi * (ex / 2) * (ey / 2) * ez
        assert int(object_mask(volume).sum()) == pytest.approx(analytic, rel=0.02)


@pytest.mark.unit
class TestPoreMaskRaw:
    """Second-stage Otsu inside the object."""

    def test_poreless_solid_gives_near_empty_mask(self):
        volume, _ = generate_phantom(
            PhantomSpec(grid_dims=(32, 32, 32), noise_sigma=0.01, seed=9)
        )
        obj = object_mask(volume)
        pores = pore_mask_raw(volume, obj)
        assert pores.sum() <= 0.005 * obj.sum()

    def test_dark_pore_is_recovered(self, clean_single_pore_spec):
        volume, truth = generate_phantom(clean_single_pore_spec)
        pores = pore_mask_raw(volume, object_mask(volume))
        overlap = np.count_nonzero(pores & truth.mask)
        assert overlap >= 0.9 * truth.n_voxels

    def test_all_equal_interior_raises(self):
        volume = Volume.from_array(np.ones((6, 6, 6)))
        with pytest.raises(DegenerateHistogramError):
            pore_mask_raw(volume, np.ones((6, 6, 6), dtype=bool))

    def test_empty_or_eroded_away_object(self):
        volume = Volume.from_array(np.ones((6, 6, 6)))
        with pytest.raises(EmptyObjectError):
            pore_mask_raw(volume, np.zeros((6, 6, 6), dtype=bool))
        obj = np.zeros((6, 6, 6), dtype=bool)
        obj[2:4, 2:4, 2:4] = True
        with pytest.raises(EmptyObjectError):
            pore_mask_raw(volume, obj, surface_margin=2)

    def test_output_is_inside_object(self, porous_phantom):
        volume, _ = porous_phantom
        obj = object_mask(volume)
        pores = pore_mask_raw(volume, obj, surface_margin=2)
        assert not np.any(pores & ~obj)


@pytest.mark.unit
class TestComponents:
    """6-connected components and the size rule."""

    def test_diagonal_neighbours_are_separate(self):
        mask = np.zeros((3, 3, 3), dtype=bool)
        mask[0, 0, 0] = mask[1, 1, 0] = True
        assert len(connected_components(mask)) == 2

    def test_empty_mask(self):
        assert connected_components(np.zeros((4, 4, 4), dtype=bool)) == []

    def test_partition_matches_bfs_oracle(self, rng):
        mask = rng.random((16, 16, 16)) < 0.3
        components = connected_components(mask)
        ours = {frozenset(map(tuple, c.voxels.tolist())) for c in components}
        assert ours == set(_components_by_bfs(mask))
        first = [tuple(c.voxels[0]) for c in components]
        assert first == sorted(first)

    def test_single_voxel_is_removed(self):
        assert filter_small_pores([PoreComponent(voxels=[[1, 1, 1]])]) == []

    def test_two_cube_is_kept(self):
        block = PoreComponent(voxels=np.argwhere(np.ones((2, 2, 2))))
        assert filter_small_pores([block]) == [block]

    def test_flat_plate_is_removed(self):
        plate = PoreComponent(voxels=np.argwhere(np.ones((1, 3, 3))))
        assert filter_small_pores([plate]) == []
        assert filter_small_pores([plate], min_dims=1) == [plate]

    def test_mask_round_trip_is_idempotent(self, rng):
        mask = rng.random((12, 12, 12)) < 0.25
        components = connected_components(mask)
        labels = components_to_mask(components, mask.shape)
        again = connected_components(labels.mask)
        assert len(again) == len(components)
        assert all(np.array_equal(a.voxels, b.voxels) for a, b in zip(again, components))


@pytest.mark.integration
class TestExtractPoreLabels:
    """Full object → pore → component → filter chain."""

    def test_recovers_twenty_clean_pores(self):
        base = PhantomSpec(grid_dims=(64, 64, 64))
        spec = scatter_pores(base, count=20, radius_range=(2.0, 3.0), seed=21)
        volume, truth = generate_phantom(spec)
        labels = extract_pore_labels(volume, surface_margin=0)
        assert labels.n_components == 20
        assert np.array_equal(labels.mask, truth.mask)

    def test_single_voxel_pore_is_rejected(self):
        spec = PhantomSpec(
            grid_dims=(24, 24, 24),
            pores=[PoreSpec(center=(12.0, 12.0, 12.0), radii=(0.5, 0.5, 0.5))],
        )
        volume, truth = generate_phantom(spec)
        assert truth.n_voxels == 1
        assert extract_pore_labels(volume).n_components == 0

    def test_poreless_noisy_phantom_has_no_pores(self, poreless_phantom):
        volume, _ = poreless_phantom
        assert extract_pore_labels(volume).n_components == 0

    def test_blurred_noisy_phantom(self, porous_phantom):
        volume, truth = porous_phantom
        labels = extract_pore_labels(volume)
        assert labels.n_components >= truth.n_components - 1
        assert all(min(c.extents) >= 2 for c in labels.components)
        overlap = np.count_nonzero(labels.mask & truth.mask)
        dice = 2 * overlap / (labels.n_voxels + truth.n_voxels)
        assert dice >= 0.75

    def test_doubling_intensities_gives_same_labels(self, porous_phantom):
        volume, _ = porous_phantom
        scaled = volume.with_data(volume.data * 2.0)
        first = extract_pore_labels(volume)
        second = extract_pore_labels(scaled)
        assert np.array_equal(first.mask, second.mask)

    def test_default_run_ignores_blurred_surface_shell(self, porous_phantom):
        volume, truth = porous_phantom
        obj = object_mask(volume)
        shell = obj & ~ndimage.binary_erosion(obj, structure=SIX_CONNECTED, iterations=DEFAULT_SURFACE_MARGIN)

        labels = extract_pore_labels(volume, min_dims=2)

        assert DEFAULT_SURFACE_MARGIN == 2
        assert not np.any(labels.mask & shell)
        assert labels.n_components >= truth.n_components - 1
