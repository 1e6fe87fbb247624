"""
Pore-mask extraction from CT volumes.

The labeler turns a scan into a voxel-wise pore mask in three steps:

1. **Object masking**: Otsu threshold over the whole volume, then a
   6-connected flood fill of the background from the volume boundary. The
   object mask is the complement of that background, so internal cavities
   belong to the object (the mask is watertight).
2. **Pore masking**: a second Otsu threshold computed only over voxels
   inside the object; pores are object voxels below it.
3. **Noise removal**: 6-connected components whose bounding box is smaller
   than ``min_dims`` on any axis are dropped.

Two options harden step 2 for real scans:

- ``surface_margin`` erodes the object mask before the second threshold so
  the partial-volume shell at the sample surface does not form its own class.
  ``extract_pore_labels`` erodes 2 voxels unless told otherwise; 0 runs the
  plain three-step chain.
- ``unimodal_separation`` detects a pore-free interior. Otsu always splits a
  histogram, so a single material bell would be cut at its mean. When the
  upper class mean lies fewer than ``unimodal_separation`` class standard
  deviations above the threshold, the pore mask is empty.

Example Usage:
    labels = extract_pore_labels(volume, min_dims=2)
    for pore in labels.components:
        print(pore.centroid, pore.extents)
"""

from typing import List, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import ndimage

from ..data.filters import DegenerateHistogramError, histogram, histogram_of_values
from ..data.models import DEFAULT_SPACING, Histogram, PoreComponent, PoreMask, Spacing, Volume

SIX_CONNECTED = ndimage.generate_binary_structure(3, 1)

# erosion that clears the partial-volume shell of a sigma~1 blurred scan
DEFAULT_SURFACE_MARGIN = 2


class EmptyObjectError(ValueError):
    """Raised when no object (or no object interior) can be found."""


def otsu_threshold(h: Histogram) -> float:
    """Bin edge maximizing the between-class variance.

    Class 0 holds the bins below the edge, class 1 the bins at or above it.
    Ties resolve to the smallest edge.

    Raises:
        DegenerateHistogramError: If fewer than two bins are non-empty.
    """
    if h.degenerate or np.count_nonzero(h.counts) < 2:
        raise DegenerateHistogramError("Otsu threshold needs at least two non-empty bins")

    counts = h.counts
    centers = h.centers
    total = counts.sum()

    w0 = np.cumsum(counts)[:-1].astype(np.float64)
    s0 = np.cumsum(counts * centers)[:-1]
    w1 = total - w0
    s_total = float(np.dot(counts, centers))

    valid = (w0 > 0) & (w1 > 0)
    between = np.full(w0.shape, -np.inf)
    mu0 = s0[valid] / w0[valid]
    mu1 = (s_total - s0[valid]) / w1[valid]
    between[valid] = w0[valid] * w1[valid] * (mu0 - mu1) ** 2

    k = int(np.argmax(between))
    return float(h.bin_edges[k + 1])


def object_mask(v: Volume, n_bins: int = 256) -> np.ndarray:
    """Watertight object mask of ``v``.

    Raises:
        EmptyObjectError: If no voxel lies above the threshold.
    """
    h = histogram(v, n_bins)
    if h.degenerate:
        raise EmptyObjectError("Volume is constant; no object to mask")
    threshold = otsu_threshold(h)
    foreground = v.data > threshold
    if not foreground.any():
        raise EmptyObjectError(f"No voxel above the object threshold {threshold:.6g}")

    # background reachable from the boundary through 6-connected voxels
    obj = ndimage.binary_fill_holes(foreground, structure=SIX_CONNECTED)
    logger.info(
        f"Object threshold {threshold:.6g}: {int(obj.sum())} object voxels "
        f"({int((obj & ~foreground).sum())} enclosed cavity voxels)"
    )
    return obj


def pore_mask_raw(
    v: Volume,
    obj: np.ndarray,
    n_bins: int = 256,
    surface_margin: int = 0,
    unimodal_separation: float = 3.0,
) -> np.ndarray:
    """Object voxels darker than the Otsu threshold of the object interior.

    Raises:
        EmptyObjectError: If ``obj`` (after erosion) holds no voxel.
        DegenerateHistogramError: If all interior voxels share one intensity.
    """
    obj = np.asarray(obj, dtype=bool)
    if obj.shape != v.dims:
        raise ValueError(f"Object mask dims {list(obj.shape)} do not match volume {list(v.dims)}")
    if not obj.any():
        raise EmptyObjectError("Object mask is empty")

    region = obj
    if surface_margin > 0:
        region = ndimage.binary_erosion(obj, structure=SIX_CONNECTED, iterations=surface_margin)
        if not region.any():
            raise EmptyObjectError(
                f"Object mask vanishes after eroding {surface_margin} surface voxel(s)"
            )

    values = v.data[region]
    threshold = otsu_threshold(histogram_of_values(values, n_bins))

    if unimodal_separation > 0:
        upper = values[values >= threshold].astype(np.float64)
        spread = float(upper.std())
        gap = float(upper.mean()) - threshold
        if spread > 0 and gap < unimodal_separation * spread:
            logger.warning(
                f"Interior histogram looks unimodal (upper class {gap / spread:.2f} std above "
                f"threshold {threshold:.6g}); no pores extracted"
            )
            return np.zeros(v.dims, dtype=bool)

    pores = (v.data < threshold) & region
    logger.info(f"Pore threshold {threshold:.6g}: {int(pores.sum())} raw pore voxels")
    return pores


def connected_components(mask: np.ndarray) -> List[PoreComponent]:
    """6-connected components ordered by their lexicographically smallest voxel."""
    mask = np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(mask, structure=SIX_CONNECTED)
    if n == 0:
        return []

    # first C-order occurrence of each label is its lexicographic min voxel
    ids, first = np.unique(labels.ravel(), return_index=True)
    keep = ids > 0
    order = ids[keep][np.argsort(first[keep], kind="stable")]

    slices = ndimage.find_objects(labels)
    components = []
    for label in order:
        window = slices[label - 1]
        offset = np.array([s.start for s in window])
        voxels = np.argwhere(labels[window] == label) + offset
        components.append(PoreComponent(voxels=voxels))
    logger.debug(f"Found {len(components)} connected component(s)")
    return components


def filter_small_pores(
    comps: Sequence[PoreComponent], min_dims: int = 2
) -> List[PoreComponent]:
    """Keep components whose bounding box spans at least ``min_dims`` on every axis."""
    kept = [c for c in comps if min(c.extents) >= min_dims]
    if len(kept) < len(comps):
        logger.debug(f"Removed {len(comps) - len(kept)} pore(s) smaller than {min_dims} voxels")
    return kept


def components_to_mask(
    comps: Sequence[PoreComponent],
    dims: Tuple[int, int, int],
    spacing: Spacing = DEFAULT_SPACING,
) -> PoreMask:
    return PoreMask.from_components(comps, dims, spacing)


def extract_pore_labels(
    v: Volume,
    min_dims: int = 2,
    n_bins: int = 256,
    surface_margin: int = DEFAULT_SURFACE_MARGIN,
    unimodal_separation: float = 3.0,
) -> PoreMask:
    """Run the full object → pore → component → filter chain."""
    obj = object_mask(v, n_bins)
    raw = pore_mask_raw(
        v, obj, n_bins, surface_margin=surface_margin, unimodal_separation=unimodal_separation
    )
    kept = filter_small_pores(connected_components(raw), min_dims)
    labels = components_to_mask(kept, v.dims, v.spacing)
    logger.info(f"Extracted {labels.n_components} pore(s), {labels.n_voxels} voxels")
    return labels
