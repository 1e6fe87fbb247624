"""Histograms and shared 3D filters.

Blur and gradients use replicate borders: the Gaussian kernel is truncated at
``ceil(3σ)`` and normalized, gradients are central differences with one-sided
differences on the border voxels.
"""

import math
from typing import List, Optional

import numpy as np
from loguru import logger
from pydantic import BaseModel
from scipy import ndimage, signal

from .models import Histogram, Volume


class DegenerateHistogramError(ValueError):
    """Raised when a histogram cannot be split into two classes."""


class HistogramPeak(BaseModel):
    """Local maximum of a smoothed histogram."""

    index: int
    center: float
    height: float
    prominence: float  # relative to the highest smoothed bin


class HistogramQuality(BaseModel):
    """Background/material peak characterisation of a scan histogram."""

    n_peaks: int
    background_peak: Optional[float] = None
    material_peak: Optional[float] = None
    separation: Optional[float] = None
    background_width: Optional[float] = None
    material_width: Optional[float] = None

    @property
    def bimodal(self) -> bool:
        return self.material_peak is not None

    @property
    def contrast_index(self) -> Optional[float]:
        """Peak separation over the mean half-maximum width."""
        if self.separation is None or not self.background_width or not self.material_width:
            return None
        return self.separation / (0.5 * (self.background_width + self.material_width))


def histogram_of_values(values: np.ndarray, n_bins: int) -> Histogram:
    """Equal-width histogram of a flat sample over its own [min, max]."""
    if n_bins < 2:
        raise ValueError(f"Histogram needs at least 2 bins, got {n_bins}")
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise DegenerateHistogramError("Cannot build a histogram of zero values")

    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        logger.debug(f"Constant input ({lo}); returning degenerate histogram")
        return Histogram(bin_edges=[lo, hi], counts=[values.size], degenerate=True)

    counts, edges = np.histogram(values, bins=n_bins, range=(lo, hi))
    return Histogram(bin_edges=edges, counts=counts)


def histogram(v: Volume, n_bins: int = 256) -> Histogram:
    return histogram_of_values(v.data, n_bins)


def gaussian_blur_array(data: np.ndarray, sigma: float) -> np.ndarray:
    """Float64 Gaussian blur with replicate borders."""
    if sigma < 0:
        raise ValueError(f"Blur sigma must be non-negative, got {sigma}")
    data = np.asarray(data, dtype=np.float64)
    if sigma == 0:
        return data.copy()
    return ndimage.gaussian_filter(
        data, sigma=sigma, mode="nearest", radius=int(math.ceil(3 * sigma))
    )


def gaussian_blur3d(v: Volume, sigma: float) -> Volume:
    if sigma == 0:
        return v
    return v.with_data(gaussian_blur_array(v.data, sigma))


def gradient_l1_array(data: np.ndarray) -> np.ndarray:
    """Per-voxel ``|∂x| + |∂y| + |∂z|`` in voxel units."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 3 or min(data.shape) < 2:
        raise ValueError(f"Gradient needs at least 2 voxels per axis, got dims {list(data.shape)}")
    return sum(np.abs(g) for g in np.gradient(data))


def gradient_l1(v: Volume) -> Volume:
    return v.with_data(gradient_l1_array(v.data))


def histogram_peaks(
    h: Histogram, smooth: int = 3, min_prominence: float = 0.05
) -> List[HistogramPeak]:
    """Local maxima of the box-smoothed histogram.

    End bins can be peaks. Only maxima whose prominence reaches
    ``min_prominence`` times the highest smoothed bin are returned.
    """
    if h.degenerate:
        return []
    kernel = np.ones(smooth) / smooth
    smoothed = np.convolve(h.counts.astype(np.float64), kernel, mode="same")
    top = smoothed.max()
    if top <= 0:
        return []

    padded = np.pad(smoothed, 1)
    indices, props = signal.find_peaks(padded, prominence=min_prominence * top)
    centers = h.centers
    peaks = []
    for idx, prominence in zip(indices - 1, props["prominences"]):
        peaks.append(
            HistogramPeak(
                index=int(idx),
                center=float(centers[idx]),
                height=float(smoothed[idx]),
                prominence=float(prominence / top),
            )
        )
    return peaks


def _half_max_width(smoothed: np.ndarray, idx: int, bin_width: float) -> float:
    half = smoothed[idx] / 2.0
    left = idx
    while left > 0 and smoothed[left - 1] > half:
        left -= 1
    right = idx
    while right < smoothed.size - 1 and smoothed[right + 1] > half:
        right += 1
    return (right - left + 1) * bin_width


def characterize_histogram(v: Volume, n_bins: int = 256) -> HistogramQuality:
    """Peak positions, separation and widths of the background and material bells."""
    h = histogram(v, n_bins)
    peaks = histogram_peaks(h)
    if len(peaks) < 2:
        logger.warning(f"Histogram has {len(peaks)} peak(s); expected background and material")
        return HistogramQuality(
            n_peaks=len(peaks),
            background_peak=peaks[0].center if peaks else None,
        )

    # the two most prominent maxima, ordered by intensity
    background, material = sorted(
        sorted(peaks, key=lambda p: -p.prominence)[:2], key=lambda p: p.center
    )
    smoothed = np.convolve(h.counts.astype(np.float64), np.ones(3) / 3, mode="same")
    bin_width = float(h.bin_edges[1] - h.bin_edges[0])
    quality = HistogramQuality(
        n_peaks=len(peaks),
        background_peak=background.center,
        material_peak=material.center,
        separation=material.center - background.center,
        background_width=_half_max_width(smoothed, background.index, bin_width),
        material_width=_half_max_width(smoothed, material.index, bin_width),
    )
    logger.info(
        f"Histogram peaks at {quality.background_peak:.4g} and {quality.material_peak:.4g} "
        f"(separation {quality.separation:.4g})"
    )
    return quality
