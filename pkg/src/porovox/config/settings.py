"""
Configuration settings for Porovox.

This module defines the application configuration using Pydantic Settings
for type-safe, environment-aware configuration management. Settings can be
overridden via environment variables, CLI arguments, or a ``.env`` file.

Key Configuration Categories:

1. **Pore labeling** (Otsu/flood-fill pore-mask extraction):
   - otsu_bins: histogram bins used by both Otsu thresholds (256)
   - min_dims: smallest bounding-box extent a pore keeps on every axis (2)
   - surface_margin: object-mask erosion before the pore threshold (2)
   - unimodal_separation: guard against splitting a pore-free histogram (3.0)

2. **Patch scoring**:
   - patch_size / patch_stride: inference patches (64 / 32)
   - pca_patch_edge / pca_stride / pca_components / pca_samples:
     reference PCA scorer (8 / 4 / 16 / 4000)
   - workers: threads used for patch scoring and slice degradation (1)

3. **Post-processing and evaluation**:
   - sigma_grid_min / sigma_grid_max / sigma_grid_steps: log-spaced sigma
     grid of the surface suppression fit (0.5 / 8 / 8)
   - eval_max_voxels: voxel count above which curves are subsampled (1e8)

4. **Degradation**:
   - degrade_angles: projections per 180 degrees (720)
   - degrade_i0: incident photon count per detector bin (1e5)
   - degrade_mu_scale: attenuation per voxel per intensity unit (0.01)

5. **Output Settings**:
   - output_dir: Directory for generated reports
   - log_level / log_file: Logging verbosity and optional log file
   - excel_reports: also write table.xlsx next to table.csv

Environment Variable Overrides (also accepted from ``.env``):
- POROVOX_OUTPUT_DIR: Override output directory
- POROVOX_LOG_LEVEL: Override logging level
- POROVOX_WORKERS: Number of worker threads
- POROVOX_SURFACE_MARGIN: Erode the object mask before pore thresholding

Example Usage:
    from porovox.config.settings import settings

    grid = settings.default_sigma_grid()
    bins = settings.otsu_bins
"""

from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import ConfigDict, Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings."""

    # ===================================================================================
    # PORE LABELING
    # ===================================================================================

    otsu_bins: int = Field(
        default=256, ge=2,
        description="Equal-width histogram bins over [min, max] used for Otsu thresholds"
    )

    min_dims: int = Field(
        default=2, ge=1,
        description="Pores whose bounding box is smaller than this on any axis are removed"
    )

    surface_margin: int = Field(
        default=2, ge=0,
        description=(
            "Voxels eroded from the object mask before the pore threshold. "
            "2 voxels exclude the partial-volume shell of blurred scans; "
            "0 keeps the plain object mask."
        ),
    )

    unimodal_separation: float = Field(
        default=3.0, ge=0.0,
        description=(
            "The interior histogram is treated as pore-free when the upper "
            "Otsu class mean lies fewer than this many class standard "
            "deviations above the threshold. 0 disables the guard."
        ),
    )

    # ===================================================================================
    # PATCH SCORING
    # ===================================================================================

    patch_size: int = Field(default=64, ge=1, description="Edge of inference patches in voxels")
    patch_stride: int = Field(default=32, ge=1, description="Stride between inference patches")

    pca_patch_edge: int = Field(default=8, ge=2, description="Edge of PCA sub-patches")
    pca_stride: int = Field(default=4, ge=1, description="Stride of PCA sub-patches inside a patch")
    pca_components: int = Field(default=16, ge=1, description="Principal directions kept")
    pca_samples: int = Field(default=4000, ge=1, description="Sub-patches sampled for fitting")

    workers: int = Field(default=1, ge=1, description="Worker threads for patches and slices")

    # ===================================================================================
    # POST-PROCESSING AND EVALUATION
    # ===================================================================================

    sigma_grid_min: float = Field(default=0.5, gt=0.0)
    sigma_grid_max: float = Field(default=8.0, gt=0.0)
    sigma_grid_steps: int = Field(default=8, ge=1)

    eval_max_voxels: int = Field(
        default=100_000_000, ge=1,
        description="Curves are computed on a stratified voxel sample above this size"
    )

    # ===================================================================================
    # DEGRADATION
    # ===================================================================================

    degrade_angles: int = Field(default=720, ge=2, description="Projections per 180 degrees")
    degrade_i0: float = Field(default=1e5, gt=0.0, description="Incident counts per detector bin")
    degrade_mu_scale: float = Field(
        default=0.01, gt=0.0,
        description="Attenuation per voxel length per intensity unit"
    )

    # ===================================================================================
    # EXPERIMENTS AND OUTPUT
    # ===================================================================================

    folds: int = Field(default=5, ge=2, description="Cross-validation folds")

    output_dir: Path = Field(
        default=Path("output"),
        description="Directory for generated volumes and reports"
    )

    excel_reports: bool = Field(
        default=False,
        description="Also write an Excel copy of tabular experiment reports"
    )

    # Logging settings
    log_level: str = Field(default="INFO", description="Log level")
    log_file: Optional[Path] = Field(default=None, description="Log file path")

    def default_sigma_grid(self) -> np.ndarray:
        """Log-spaced sigma grid for the surface suppression fit."""
        return np.geomspace(self.sigma_grid_min, self.sigma_grid_max, self.sigma_grid_steps)

    model_config = ConfigDict(
        env_file=".env",
        env_prefix="POROVOX_",
        case_sensitive=False,
        extra="ignore"
    )


# Global settings instance
settings = Settings()
