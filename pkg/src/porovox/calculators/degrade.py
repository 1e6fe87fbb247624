"""
Scan degradation by slice-wise parallel-beam resimulation.

Each z-slice is forward projected, optionally corrupted with transmission
noise and reconstructed by ramp-filtered backprojection:

1. Intensities are converted to attenuation with ``mu_scale`` and projected
   at ``ceil(f·N)`` uniformly spaced angles out of ``N`` base angles over
   180 degrees.
2. Transmission counts are drawn as ``Poisson(e·I₀·exp(−p))`` and mapped
   back to line integrals ``p′ = −ln(max(c, 1)/(e·I₀))``. Lower exposure
   ``e`` raises the projection noise variance as ``1/e``.
3. The slice is reconstructed and rescaled to intensity units.

The slice geometry is the inscribed reconstruction circle: values outside
it are zero before projection and after reconstruction. Every slice draws
from its own generator seeded with ``(seed, z)``, so results do not depend
on thread scheduling.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from skimage.transform import iradon, radon

from ..data.models import Volume


class DegradeError(ValueError):
    """Raised for invalid slices, sinograms or degradation settings."""


class Sinogram(BaseModel):
    """Line integrals, one row per projection angle."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    angles: np.ndarray  # radians
    values: np.ndarray  # (n_angles, n_detectors)

    @field_validator("angles", "values", mode="before")
    @classmethod
    def coerce(cls, v):
        array = np.array(v, dtype=np.float64, copy=True)
        if not np.isfinite(array).all():
            raise ValueError("Sinogram data must be finite")
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def validate_rows(self):
        if self.values.ndim != 2 or self.values.shape[0] != self.angles.size:
            raise ValueError(
                f"Sinogram has shape {list(self.values.shape)} for {self.angles.size} angle(s)"
            )
        return self

    @property
    def n_angles(self) -> int:
        return int(self.angles.size)

    @property
    def n_detectors(self) -> int:
        return int(self.values.shape[1])


class DegradeSpec(BaseModel):
    """Exposure and projection-count reduction of one degradation run."""

    exposure_fraction: float = Field(default=1.0, gt=0.0, le=1.0)
    projection_fraction: float = Field(default=1.0, gt=0.0, le=1.0)
    base_angles: int = Field(default=720, ge=2)
    i0: float = Field(default=1e5, gt=0.0)
    mu_scale: float = Field(default=0.01, gt=0.0)
    add_noise: bool = True
    seed: int = 0


def base_angles(n: int) -> np.ndarray:
    """``n`` uniformly spaced angles over [0, π)."""
    return np.arange(n) * (np.pi / n)


def select_angles(n: int, fraction: float) -> np.ndarray:
    """Indices of ``ceil(fraction·n)`` uniformly spaced angles out of ``n``."""
    if not 0 < fraction <= 1:
        raise DegradeError(f"Projection fraction must lie in (0, 1], got {fraction}")
    m = max(math.ceil(round(fraction * n, 9)), 1)
    return (np.arange(m) * n) // m


def _circle(n: int) -> np.ndarray:
    # same circle as the projector: center n // 2, radius n // 2
    c = n // 2
    y, x = np.ogrid[:n, :n]
    return (x - c) ** 2 + (y - c) ** 2 <= c ** 2


def radon2d(slice_: np.ndarray, angles: Sequence[float]) -> Sinogram:
    """Parallel-beam line integrals of a square slice (detector pitch = voxel pitch).

    Values outside the inscribed circle are ignored.
    """
    image = np.asarray(slice_, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise DegradeError(f"Radon transform needs a square slice, got {list(image.shape)}")
    angles = np.asarray(angles, dtype=np.float64)
    image = np.where(_circle(image.shape[0]), image, 0.0)
    values = radon(image, theta=np.degrees(angles), circle=True)
    return Sinogram(angles=angles, values=values.T)


def fbp2d(s: Sinogram) -> np.ndarray:
    """Ram-Lak filtered backprojection onto the ``n_det × n_det`` grid, zero outside the circle."""
    if s.n_angles < 2:
        raise DegradeError(f"Filtered backprojection needs at least 2 angles, got {s.n_angles}")
    return iradon(
        s.values.T,
        theta=np.degrees(s.angles),
        output_size=s.n_detectors,
        filter_name="ramp",
        interpolation="linear",
        circle=True,
    )


def simulate_projection_noise(
    p: np.ndarray, exposure_fraction: float, i0: float, rng: np.random.Generator
) -> np.ndarray:
    """Resample line integrals through Poisson transmission counts."""
    flux = exposure_fraction * i0
    counts = rng.poisson(flux * np.exp(-np.asarray(p, dtype=np.float64)))
    return -np.log(np.maximum(counts, 1) / flux)


def degrade_slice(
    slice_: np.ndarray, spec: DegradeSpec, z: int, angles: Optional[np.ndarray] = None
) -> np.ndarray:
    if angles is None:
        angles = base_angles(spec.base_angles)[select_angles(spec.base_angles, spec.projection_fraction)]
    sino = radon2d(np.asarray(slice_, dtype=np.float64) * spec.mu_scale, angles)
    values = sino.values
    if spec.add_noise:
        rng = np.random.default_rng([spec.seed, z])
        values = simulate_projection_noise(values, spec.exposure_fraction, spec.i0, rng)
    recon = fbp2d(Sinogram(angles=sino.angles, values=values))
    return recon / spec.mu_scale


def degrade_volume(v: Volume, spec: DegradeSpec, workers: int = 1) -> Volume:
    """Resimulate every z-slice of ``v`` under ``spec``."""
    nx, ny, nz = v.dims
    if nx != ny:
        raise DegradeError(f"Slices must be square, got {nx}×{ny}")

    angles = base_angles(spec.base_angles)[select_angles(spec.base_angles, spec.projection_fraction)]
    logger.info(
        f"Degrading {nz} slice(s): exposure {spec.exposure_fraction:g}, "
        f"{angles.size}/{spec.base_angles} projections, I0={spec.i0:g}"
    )

    def run(z: int) -> np.ndarray:
        out = degrade_slice(v.data[:, :, z], spec, z, angles)
        logger.debug(f"Degraded slice {z + 1}/{nz}")
        return out

    out = np.empty(v.dims, dtype=np.float64)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for z, slice_ in enumerate(pool.map(run, range(nz))):
                out[:, :, z] = slice_
    else:
        for z in range(nz):
            out[:, :, z] = run(z)
    return v.with_data(out)


def relative_rmse(reference: np.ndarray, estimate: np.ndarray, circle: bool = True) -> float:
    """RMSE of ``estimate`` over the RMS of ``reference``, per slice circle when ``circle``."""
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if reference.shape != estimate.shape:
        raise DegradeError(f"Shapes differ: {list(reference.shape)} vs {list(estimate.shape)}")
    if circle:
        region = _circle(reference.shape[0])
        if reference.ndim == 3:
            region = np.broadcast_to(region[:, :, None], reference.shape)
        reference, estimate = reference[region], estimate[region]
    norm = float(np.sqrt(np.mean(reference ** 2)))
    if norm == 0:
        raise DegradeError("Reference is zero; relative RMSE is undefined")
    return float(np.sqrt(np.mean((estimate - reference) ** 2))) / norm
