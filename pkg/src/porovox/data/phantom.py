"""Synthetic cylinder/cube samples with ellipsoidal pores.

Phantoms are rasterized first, then blurred (partial-volume surrogate) and
finally given additive Gaussian noise. Generation is a pure function of the
spec: the same spec always yields the same volume bit for bit.
"""

import math
from typing import List, Tuple

import numpy as np
from loguru import logger
from scipy import ndimage

from ..calculators.labeler import connected_components
from .filters import gaussian_blur_array
from .models import PhantomSpec, PoreMask, PoreSpec, Volume


class PhantomSpecError(ValueError):
    """Raised for phantom specs that cannot be rasterized as described."""


def solid_mask(spec: PhantomSpec) -> np.ndarray:
    """Rasterized solid without pores."""
    cx, cy, cz = spec.center
    ex, ey, ez = spec.solid_extent
    x, y, z = np.ogrid[: spec.grid_dims[0], : spec.grid_dims[1], : spec.grid_dims[2]]

    if spec.shape == "cylinder":
        disc = ((x - cx) / (ex / 2)) ** 2 + ((y - cy) / (ey / 2)) ** 2 <= 1.0
        return disc & (np.abs(z - cz) <= ez / 2)
    return (np.abs(x - cx) <= ex / 2) & (np.abs(y - cy) <= ey / 2) & (np.abs(z - cz) <= ez / 2)


def rasterize_pore(pore: PoreSpec, dims: Tuple[int, int, int]) -> Tuple[Tuple[slice, ...], np.ndarray]:
    """Voxels with ``Σ((i − c)/r)² ≤ 1``, evaluated in the pore's bounding box.

    Returns the bounding-box slices and the local boolean mask.
    """
    lo = [math.floor(c - r) for c, r in zip(pore.center, pore.radii)]
    hi = [math.ceil(c + r) for c, r in zip(pore.center, pore.radii)]
    if any(l < 0 for l in lo) or any(h >= n for h, n in zip(hi, dims)):
        raise PhantomSpecError(f"Pore at {pore.center} extends outside the grid {list(dims)}")

    x, y, z = np.ogrid[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1]
    (cx, cy, cz), (rx, ry, rz) = pore.center, pore.radii
    local = ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 + ((z - cz) / rz) ** 2 <= 1.0
    window = tuple(slice(l, h + 1) for l, h in zip(lo, hi))
    return window, local


def pore_ground_truth(spec: PhantomSpec, solid: np.ndarray) -> np.ndarray:
    # pores must sit strictly inside: every pore voxel keeps all 6 neighbours in the solid
    interior = ndimage.binary_erosion(solid, structure=ndimage.generate_binary_structure(3, 1))
    pores = np.zeros(spec.grid_dims, dtype=bool)
    for i, pore in enumerate(spec.pores):
        window, local = rasterize_pore(pore, spec.grid_dims)
        if not local.any():
            raise PhantomSpecError(f"Pore {i} at {pore.center} rasterizes to no voxels")
        if not np.all(interior[window][local]):
            raise PhantomSpecError(f"Pore {i} at {pore.center} is not strictly inside the solid")
        pores[window] |= local
    return pores


def generate_phantom(spec: PhantomSpec) -> Tuple[Volume, PoreMask]:
    """Render ``spec`` and return the volume with its ground-truth pore mask.

    Raises:
        PhantomSpecError: If a pore is not strictly inside the solid.
    """
    solid = solid_mask(spec)
    if not solid.any():
        raise PhantomSpecError("Solid extent rasterizes to no voxels")
    pores = pore_ground_truth(spec, solid)

    data = np.where(solid & ~pores, spec.material, spec.background).astype(np.float64)
    if spec.blur_sigma > 0:
        data = gaussian_blur_array(data, spec.blur_sigma)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        data = data + rng.normal(0.0, spec.noise_sigma, size=data.shape)

    components = connected_components(pores)
    logger.info(
        f"Generated {spec.shape} phantom {list(spec.grid_dims)} with {len(spec.pores)} pore(s), "
        f"{int(pores.sum())} pore voxels"
    )
    return (
        Volume(data=data, spacing=spec.spacing),
        PoreMask(mask=pores, components=components, spacing=spec.spacing),
    )


def _fits(spec: PhantomSpec, center: np.ndarray, reach: float) -> bool:
    """Whether a ball of radius ``reach`` around ``center`` lies inside the solid."""
    d = np.abs(center - np.array(spec.center))
    ex, ey, ez = (e / 2 for e in spec.solid_extent)
    if spec.shape == "cylinder":
        # the square of half-size reach around (dx, dy) must fit in the ellipse
        inside = ((d[0] + reach) / ex) ** 2 + ((d[1] + reach) / ey) ** 2 <= 1.0
        return bool(inside and d[2] + reach <= ez)
    return bool(np.all(d + reach <= np.array([ex, ey, ez])))


def scatter_pores(
    spec: PhantomSpec,
    count: int,
    radius_range: Tuple[float, float] = (2.0, 6.0),
    seed: int = 0,
    margin: float = 2.0,
    decoys: int = 0,
    max_attempts: int = 100_000,
) -> PhantomSpec:
    """Add ``count`` random non-overlapping ellipsoidal pores to ``spec``.

    Every pore keeps ``margin`` voxels of material to the surface and to the
    other pores. ``decoys`` single-voxel pores (radius 0.5 at voxel centers)
    are added after the regular ones.
    """
    lo, hi = radius_range
    if not 0.5 <= lo <= hi:
        raise PhantomSpecError(f"Invalid pore radius range {radius_range}")
    if margin < 1:
        raise PhantomSpecError(f"Pore margin must be at least 1 voxel, got {margin}")

    rng = np.random.default_rng(seed)
    half = np.array(spec.solid_extent) / 2
    box_lo = np.array(spec.center) - half
    placed: List[Tuple[np.ndarray, float]] = [
        (np.array(p.center), max(p.radii)) for p in spec.pores
    ]
    new_pores: List[PoreSpec] = []

    def place(n: int, draw) -> None:
        attempts = 0
        added = 0
        while added < n:
            attempts += 1
            if attempts > max_attempts:
                raise PhantomSpecError(
                    f"Placed only {added} of {n} pores after {max_attempts} attempts"
                )
            center, radii = draw()
            reach = float(max(radii))
            if not _fits(spec, center, reach + margin):
                continue
            if any(np.linalg.norm(center - c) < reach + r + margin for c, r in placed):
                continue
            placed.append((center, reach))
            new_pores.append(PoreSpec(center=tuple(center), radii=tuple(radii)))
            added += 1

    def draw_pore():
        return box_lo + rng.random(3) * 2 * half, rng.uniform(lo, hi, size=3)

    def draw_decoy():
        return np.round(box_lo + rng.random(3) * 2 * half), np.full(3, 0.5)

    place(count, draw_pore)
    place(decoys, draw_decoy)
    logger.debug(f"Scattered {count} pore(s) and {decoys} decoy(s) with seed {seed}")
    return spec.model_copy(update={"pores": list(spec.pores) + new_pores})
