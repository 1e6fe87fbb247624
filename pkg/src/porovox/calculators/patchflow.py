"""Overlapping 3D patch plans, extraction, mean aggregation and augmentation.

Volumes are padded at the high end of each axis with replicated border
values until ``(padded - patch_size)`` is a multiple of the stride; a patch
larger than the volume is rejected. Aggregation is a running sum plus a
per-voxel coverage count, applied in placement order.
"""

import itertools
import math
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy import ndimage

from ..data.models import DEFAULT_SPACING, Spacing, Volume

Triple = Tuple[int, int, int]
PatchLike = Union[np.ndarray, Volume]


class PatchPlanError(ValueError):
    """Raised for invalid patch plans or patch sequences."""


class PatchGrid(BaseModel):
    """Placement plan of overlapping cubic patches."""

    dims: Triple
    patch_size: int
    stride: int
    padded_dims: Triple
    placements: List[Triple]

    @property
    def padding(self) -> Triple:
        """Voxels appended at the high end of each axis."""
        return tuple(p - d for p, d in zip(self.padded_dims, self.dims))  # type: ignore[return-value]

    @property
    def overlap(self) -> int:
        return self.patch_size - self.stride

    @property
    def n_patches(self) -> int:
        return len(self.placements)

    def window(self, index: int) -> Tuple[slice, slice, slice]:
        if not 0 <= index < self.n_patches:
            raise PatchPlanError(f"Patch index {index} out of range [0, {self.n_patches})")
        return tuple(slice(o, o + self.patch_size) for o in self.placements[index])  # type: ignore[return-value]

    def crop(self) -> Tuple[slice, slice, slice]:
        return tuple(slice(0, d) for d in self.dims)  # type: ignore[return-value]


class AugmentSpec(BaseModel):
    """Random flips per axis plus optional elastic distortion."""

    flip_probs: Tuple[float, float, float] = (0.5, 0.5, 0.5)
    elastic: bool = False
    control_spacing: float = Field(default=16.0, gt=0)
    max_displacement: float = Field(default=4.0, ge=0)
    seed: int = 0

    @field_validator("flip_probs", mode="after")
    @classmethod
    def validate_probs(cls, v):
        if any(not 0.0 <= p <= 1.0 for p in v):
            raise ValueError(f"Flip probabilities must lie in [0, 1], got {v}")
        return v

    @model_validator(mode="after")
    def validate_displacement(self):
        """Displacement must stay below half the control spacing to keep the warp invertible."""
        if self.max_displacement >= self.control_spacing / 2:
            raise ValueError(
                f"max_displacement ({self.max_displacement}) must be below half the "
                f"control spacing ({self.control_spacing})"
            )
        return self


def plan_patches(dims: Sequence[int], patch_size: int = 64, stride: Optional[int] = None) -> PatchGrid:
    """Lattice of patch origins covering ``dims``.

    Raises:
        PatchPlanError: If the patch size or stride is out of range, or the
            patch does not fit inside the volume.
    """
    if stride is None:
        stride = max(patch_size // 2, 1)
    if patch_size < 1:
        raise PatchPlanError(f"Patch size must be positive, got {patch_size}")
    if not 1 <= stride <= patch_size:
        raise PatchPlanError(f"Stride must lie in [1, {patch_size}], got {stride}")
    if len(dims) != 3 or any(int(d) < 1 for d in dims):
        raise PatchPlanError(f"Volume dims must be 3 positive integers, got {list(dims)}")
    if any(int(d) < patch_size for d in dims):
        raise PatchPlanError(f"Patch of {patch_size} voxels is larger than volume dims {list(dims)}")

    padded = [patch_size + math.ceil((int(d) - patch_size) / stride) * stride for d in dims]

    axes = [range(0, p - patch_size + 1, stride) for p in padded]
    placements = [tuple(o) for o in itertools.product(*axes)]
    grid = PatchGrid(
        dims=tuple(int(d) for d in dims),
        patch_size=patch_size,
        stride=stride,
        padded_dims=tuple(padded),
        placements=placements,
    )
    logger.debug(
        f"Planned {grid.n_patches} patch(es) of {patch_size} voxels, stride {stride}, "
        f"padded dims {list(grid.padded_dims)}"
    )
    return grid


def _as_array(x: PatchLike) -> np.ndarray:
    return x.data if isinstance(x, Volume) else np.asarray(x)


def pad_volume(data: PatchLike, grid: PatchGrid) -> np.ndarray:
    """Replicate-pad to the plan's padded dims."""
    array = _as_array(data)
    if tuple(array.shape) != grid.dims:
        raise PatchPlanError(f"Volume dims {list(array.shape)} do not match plan {list(grid.dims)}")
    return np.pad(array, [(0, p) for p in grid.padding], mode="edge")


def extract_patch(v: PatchLike, grid: PatchGrid, index: int, padded: Optional[np.ndarray] = None) -> Volume:
    """Copy of one padded window as a volume.

    Pass ``padded`` (from :func:`pad_volume`) to avoid re-padding per call.
    """
    window = grid.window(index)
    if padded is None:
        padded = pad_volume(v, grid)
    spacing = v.spacing if isinstance(v, Volume) else DEFAULT_SPACING
    return Volume(data=padded[window], spacing=spacing)


def iter_patches(v: PatchLike, grid: PatchGrid) -> Iterator[np.ndarray]:
    """Patches in placement order, padding once."""
    padded = pad_volume(v, grid)
    for index in range(grid.n_patches):
        yield padded[grid.window(index)].copy()


def coverage(grid: PatchGrid, cropped: bool = True) -> np.ndarray:
    """Number of patches covering each voxel."""
    counts = np.zeros(grid.padded_dims, dtype=np.int32)
    for index in range(grid.n_patches):
        counts[grid.window(index)] += 1
    return counts[grid.crop()] if cropped else counts


class PatchAccumulator:
    """Running sum and coverage count for mean aggregation."""

    def __init__(self, grid: PatchGrid):
        self.grid = grid
        self._sum = np.zeros(grid.padded_dims, dtype=np.float64)
        self._count = np.zeros(grid.padded_dims, dtype=np.int32)
        self._seen = np.zeros(grid.n_patches, dtype=bool)

    def add(self, index: int, patch: PatchLike) -> None:
        array = _as_array(patch)
        size = self.grid.patch_size
        if array.shape != (size, size, size):
            raise PatchPlanError(f"Patch {index} has shape {list(array.shape)}, expected {size}³")
        window = self.grid.window(index)
        self._sum[window] += array
        self._count[window] += 1
        self._seen[index] = True

    def result(self) -> np.ndarray:
        if not self._seen.all():
            missing = np.flatnonzero(~self._seen)
            raise PatchPlanError(f"Missing {missing.size} patch(es), first index {int(missing[0])}")
        crop = self.grid.crop()
        return self._sum[crop] / self._count[crop]


def aggregate(
    patches: Iterable[PatchLike], grid: PatchGrid, spacing: Spacing = DEFAULT_SPACING
) -> Volume:
    """Per-voxel mean over all patches covering it, cropped to the original dims.

    Raises:
        PatchPlanError: If the number of patches differs from the plan.
    """
    acc = PatchAccumulator(grid)
    n = 0
    for index, patch in enumerate(patches):
        if index >= grid.n_patches:
            raise PatchPlanError(f"Got more patches than the {grid.n_patches} planned")
        acc.add(index, patch)
        n += 1
    if n != grid.n_patches:
        raise PatchPlanError(f"Got {n} patch(es), plan has {grid.n_patches}")
    return Volume(data=acc.result(), spacing=spacing)


def _elastic_positions(shape: Triple, spec: AugmentSpec, rng: np.random.Generator) -> np.ndarray:
    """Sampling positions of a coarse random displacement grid, trilinearly upsampled."""
    ctrl_shape = tuple(math.ceil((n - 1) / spec.control_spacing) + 1 if n > 1 else 1 for n in shape)
    ctrl_shape = tuple(max(c, 2) for c in ctrl_shape)
    control = rng.uniform(-spec.max_displacement, spec.max_displacement, size=(3,) + ctrl_shape)

    axes = np.meshgrid(*(np.arange(n, dtype=np.float64) for n in shape), indexing="ij")
    ctrl_coords = np.stack([a / spec.control_spacing for a in axes])
    positions = np.empty((3,) + tuple(shape), dtype=np.float64)
    for axis in range(3):
        displacement = ndimage.map_coordinates(control[axis], ctrl_coords, order=1, mode="nearest")
        positions[axis] = axes[axis] + displacement
    return positions


def augment(
    image_patch: np.ndarray, label_patch: np.ndarray, spec: AugmentSpec
) -> Tuple[np.ndarray, np.ndarray]:
    """Apply one random flip/warp draw identically to an image and its label.

    The image is resampled trilinearly, the label by nearest neighbour.
    """
    image = np.asarray(image_patch)
    label = np.asarray(label_patch)
    if image.shape != label.shape:
        raise PatchPlanError(
            f"Image and label shapes differ: {list(image.shape)} vs {list(label.shape)}"
        )

    rng = np.random.default_rng(spec.seed)
    flips = rng.random(3) < np.array(spec.flip_probs)
    for axis in np.flatnonzero(flips):
        image = np.flip(image, axis=int(axis))
        label = np.flip(label, axis=int(axis))

    if spec.elastic and spec.max_displacement > 0:
        positions = _elastic_positions(image.shape, spec, rng)
        image = ndimage.map_coordinates(
            image.astype(np.float64), positions, order=1, mode="nearest"
        ).astype(image.dtype)
        label = ndimage.map_coordinates(
            label.astype(np.float64), positions, order=0, mode="nearest"
        ).astype(label.dtype)

    return np.ascontiguousarray(image), np.ascontiguousarray(label)
