"""
Core data models for Porovox.

This module defines the Pydantic models shared by every pipeline stage. Array
payloads are carried as numpy arrays (``arbitrary_types_allowed``) and are
validated on construction so downstream code can rely on the invariants.

Key Model Categories:

1. **Volumes**:
   - Volume: dense 3D float32 grid indexed ``[x, y, z]`` with spacing in µm.
     The CT scan, the anomaly score A and the reconstruction V̂ all use it.
   - Histogram: equal-width intensity histogram with a degenerate flag

2. **Phantoms**:
   - PoreSpec: one ellipsoidal pore (center, radii in voxels)
   - PhantomSpec: cylinder or cube sample with pores, blur and noise

3. **Pore labels**:
   - PoreComponent: one 6-connected pore with bounding box and centroid
   - PoreMask: binary pore mask plus its component list

Validation Features:
✅ Finite data and strictly positive spacing
✅ Histogram counts consistent with edges
✅ Component bounding boxes tight by construction
✅ Mask/component agreement checked voxel by voxel

Example Usage:
    volume = Volume.from_array(np.zeros((32, 32, 32)), spacing=(10.0, 10.0, 10.0))
    spec = PhantomSpec(shape="cylinder", grid_dims=(64, 64, 64), pores=[...])
"""

from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Spacing = Tuple[float, float, float]
DEFAULT_SPACING: Spacing = (10.0, 10.0, 10.0)


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class Volume(BaseModel):
    """Dense 3D scalar grid with voxel spacing metadata."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: np.ndarray
    spacing: Spacing = DEFAULT_SPACING

    @field_validator("data", mode="before")
    @classmethod
    def coerce_data(cls, v):
        """Copy into a read-only float32 array."""
        array = np.array(v, dtype=np.float32, copy=True)
        if array.ndim != 3:
            raise ValueError(f"Volume data must be 3D, got {array.ndim}D")
        if array.size == 0:
            raise ValueError("Volume data cannot be empty")
        if not np.isfinite(array).all():
            raise ValueError("Volume data must be finite")
        return _readonly(array)

    @field_validator("spacing", mode="after")
    @classmethod
    def validate_spacing(cls, v):
        """Spacing must be strictly positive."""
        if any(not np.isfinite(s) or s <= 0 for s in v):
            raise ValueError(f"Spacing must be strictly positive, got {v}")
        return v

    @classmethod
    def from_array(cls, data: np.ndarray, spacing: Spacing = DEFAULT_SPACING) -> "Volume":
        return cls(data=data, spacing=spacing)

    def with_data(self, data: np.ndarray) -> "Volume":
        """New volume on the same grid."""
        if tuple(np.shape(data)) != self.dims:
            raise ValueError(f"Shape {np.shape(data)} does not match volume dims {self.dims}")
        return Volume(data=data, spacing=self.spacing)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)  # type: ignore[return-value]

    @property
    def n_voxels(self) -> int:
        return int(self.data.size)


class Histogram(BaseModel):
    """Equal-width intensity histogram.

    A constant input yields a single bin with equal edges and
    ``degenerate=True``.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    bin_edges: np.ndarray
    counts: np.ndarray
    degenerate: bool = False

    @field_validator("bin_edges", mode="before")
    @classmethod
    def coerce_edges(cls, v):
        edges = np.asarray(v, dtype=np.float64)
        if edges.ndim != 1 or edges.size < 2:
            raise ValueError("Histogram needs at least two bin edges")
        if np.any(np.diff(edges) < 0):
            raise ValueError("Histogram bin edges must be monotone")
        return _readonly(edges.copy())

    @field_validator("counts", mode="before")
    @classmethod
    def coerce_counts(cls, v):
        counts = np.asarray(v, dtype=np.int64)
        if np.any(counts < 0):
            raise ValueError("Histogram counts cannot be negative")
        return _readonly(counts.copy())

    @model_validator(mode="after")
    def validate_shape(self):
        if self.counts.size != self.bin_edges.size - 1:
            raise ValueError(
                f"Histogram has {self.counts.size} counts for {self.bin_edges.size} edges"
            )
        return self

    @property
    def n_bins(self) -> int:
        return int(self.counts.size)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


class PoreSpec(BaseModel):
    """Ellipsoidal pore in voxel coordinates."""

    center: Tuple[float, float, float]
    radii: Tuple[float, float, float]

    @field_validator("radii", mode="after")
    @classmethod
    def validate_radii(cls, v):
        """Radii below half a voxel would rasterize to nothing."""
        if any(r < 0.5 for r in v):
            raise ValueError(f"Pore radii must be at least 0.5 voxel, got {v}")
        return v


class PhantomSpec(BaseModel):
    """Synthetic sample definition.

    The solid is centered in the grid. A cylinder has its axis along z with
    cross-section semi-axes ``extent[0]/2`` and ``extent[1]/2`` and length
    ``extent[2]``; a cube is the box with those edge lengths. ``extent``
    defaults to the grid dims minus a four-voxel background margin per side.
    """

    shape: Literal["cylinder", "cube"] = "cylinder"
    grid_dims: Tuple[int, int, int]
    extent: Optional[Tuple[float, float, float]] = None
    pores: List[PoreSpec] = Field(default_factory=list)
    background: float = 0.0
    material: float = 1.0
    blur_sigma: float = Field(default=0.0, ge=0.0)
    noise_sigma: float = Field(default=0.0, ge=0.0)
    spacing: Spacing = DEFAULT_SPACING
    seed: int = 0

    @field_validator("grid_dims", mode="after")
    @classmethod
    def validate_dims(cls, v):
        if any(n < 1 for n in v):
            raise ValueError(f"Grid dims must be positive, got {v}")
        return v

    @field_validator("extent", mode="after")
    @classmethod
    def validate_extent(cls, v):
        if v is not None and any(e <= 0 for e in v):
            raise ValueError(f"Solid extent must be positive, got {v}")
        return v

    @model_validator(mode="after")
    def validate_intensities(self):
        if self.material <= self.background:
            raise ValueError(
                f"Material intensity ({self.material}) must exceed background ({self.background})"
            )
        return self

    @property
    def solid_extent(self) -> Tuple[float, float, float]:
        if self.extent is not None:
            return self.extent
        return tuple(max(float(n) - 8.0, 1.0) for n in self.grid_dims)  # type: ignore[return-value]

    @property
    def center(self) -> Tuple[float, float, float]:
        return tuple((n - 1) / 2.0 for n in self.grid_dims)  # type: ignore[return-value]


class PoreComponent(BaseModel):
    """One 6-connected pore.

    ``voxels`` is an ``(n, 3)`` integer array in lexicographic order; the
    bounding box is derived from it so it is tight by construction.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    voxels: np.ndarray

    @field_validator("voxels", mode="before")
    @classmethod
    def coerce_voxels(cls, v):
        voxels = np.asarray(v, dtype=np.int64).reshape(-1, 3)
        if voxels.shape[0] == 0:
            raise ValueError("A pore component needs at least one voxel")
        order = np.lexsort((voxels[:, 2], voxels[:, 1], voxels[:, 0]))
        return _readonly(voxels[order].copy())

    @property
    def voxel_count(self) -> int:
        return int(self.voxels.shape[0])

    @property
    def bbox_min(self) -> Tuple[int, int, int]:
        return tuple(int(c) for c in self.voxels.min(axis=0))  # type: ignore[return-value]

    @property
    def bbox_max(self) -> Tuple[int, int, int]:
        return tuple(int(c) for c in self.voxels.max(axis=0))  # type: ignore[return-value]

    @property
    def extents(self) -> Tuple[int, int, int]:
        """Bounding-box extent per axis in voxels."""
        return tuple(hi - lo + 1 for lo, hi in zip(self.bbox_min, self.bbox_max))  # type: ignore[return-value]

    @property
    def centroid(self) -> Tuple[float, float, float]:
        return tuple(float(c) for c in self.voxels.mean(axis=0))  # type: ignore[return-value]


class PoreMask(BaseModel):
    """Binary pore mask and the components it is made of."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mask: np.ndarray
    components: List[PoreComponent] = Field(default_factory=list)
    spacing: Spacing = DEFAULT_SPACING

    @field_validator("mask", mode="before")
    @classmethod
    def coerce_mask(cls, v):
        mask = np.array(v, dtype=bool, copy=True)
        if mask.ndim != 3:
            raise ValueError(f"Pore mask must be 3D, got {mask.ndim}D")
        return _readonly(mask)

    @model_validator(mode="after")
    def validate_partition(self):
        """Components must tile the mask exactly once."""
        cover = np.zeros(self.mask.shape, dtype=np.int32)
        for component in self.components:
            idx = tuple(component.voxels.T)
            if np.any(component.voxels < 0) or np.any(
                component.voxels >= np.array(self.mask.shape)
            ):
                raise ValueError("Pore component lies outside the mask grid")
            np.add.at(cover, idx, 1)
        if not np.array_equal(cover, self.mask.astype(np.int32)):
            raise ValueError("Pore components do not partition the mask")
        return self

    @classmethod
    def from_components(
        cls,
        components: Sequence[PoreComponent],
        dims: Tuple[int, int, int],
        spacing: Spacing = DEFAULT_SPACING,
    ) -> "PoreMask":
        mask = np.zeros(dims, dtype=bool)
        for component in components:
            mask[tuple(component.voxels.T)] = True
        return cls(mask=mask, components=list(components), spacing=spacing)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.mask.shape)  # type: ignore[return-value]

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def n_voxels(self) -> int:
        return int(self.mask.sum())

    def to_volume(self) -> Volume:
        """Binary mask as a 0/1 volume."""
        return Volume(data=self.mask.astype(np.float32), spacing=self.spacing)
