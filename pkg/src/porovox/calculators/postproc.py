"""Surface suppression of anomaly scores.

Reconstruction-based scorers respond strongly at the sample surface. The
suppressed score is ``max(0, A − λ·G_σ(‖∇V̂‖₁))`` where ``G_σ`` is a Gaussian
blur and ``‖∇V̂‖₁`` the per-voxel L1 gradient magnitude of the
reconstruction. ``(λ, σ)`` are fitted per volume by minimizing the mean L1
distance between A and the scaled field: exactly in λ (weighted median) and
over a grid in σ.
"""

import re
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..data.filters import gaussian_blur_array, gradient_l1_array
from ..data.models import Volume
from .scorer import ScoreVolume

DEFAULT_SIGMA_GRID = tuple(float(s) for s in np.geomspace(0.5, 8.0, 8))


class PostprocError(ValueError):
    """Raised when surface suppression cannot be computed or fitted."""


class PostprocParams(BaseModel):
    """Scale λ and blur σ of the suppression field."""

    model_config = ConfigDict(populate_by_name=True)

    lambda_: float = Field(ge=0.0, alias="lambda")
    sigma: float = Field(ge=0.0)
    objective: Optional[float] = None  # mean L1 at the fitted parameters

    @field_validator("lambda_", "sigma", mode="after")
    @classmethod
    def validate_finite(cls, v):
        if not np.isfinite(v):
            raise ValueError("Post-processing parameters must be finite")
        return v


def _recon(sv: ScoreVolume) -> Volume:
    if sv.recon is None:
        raise PostprocError("Surface suppression needs the reconstruction volume")
    return sv.recon


def surface_field(recon: Volume, sigma: float) -> np.ndarray:
    """``G_σ(‖∇V̂‖₁)`` in float64."""
    return gaussian_blur_array(gradient_l1_array(recon.data), sigma)


def suppress_surface(sv: ScoreVolume, p: PostprocParams) -> Volume:
    field = surface_field(_recon(sv), p.sigma)
    suppressed = np.maximum(0.0, sv.score.data.astype(np.float64) - p.lambda_ * field)
    logger.info(f"Suppressed surface response with λ={p.lambda_:.6g}, σ={p.sigma:.4g}")
    return sv.score.with_data(suppressed)


def l1_objective(
    a: np.ndarray, b: np.ndarray, lam: float, mask: Optional[np.ndarray] = None
) -> float:
    """Mean ``|A − λ·B|`` over the volume or over ``mask``."""
    residual = np.abs(np.asarray(a, dtype=np.float64) - lam * np.asarray(b, dtype=np.float64))
    if mask is not None:
        residual = residual[np.asarray(mask, dtype=bool)]
    return float(residual.mean())


def optimal_lambda(
    a: np.ndarray, b: np.ndarray, mask: Optional[np.ndarray] = None
) -> float:
    """Exact minimizer of the mean ``|A − λ·B|`` over λ ≥ 0.

    The objective is ``Σ B_i·|A_i/B_i − λ|`` plus a constant over voxels
    with ``B_i > 0``, so the minimizer is the lower weighted median of the
    ratios ``A_i/B_i`` with weights ``B_i``.

    Raises:
        PostprocError: If ``B`` has no positive voxel (inside ``mask``).
    """
    a = np.asarray(a.data if isinstance(a, Volume) else a, dtype=np.float64)
    b = np.asarray(b.data if isinstance(b, Volume) else b, dtype=np.float64)
    if a.shape != b.shape:
        raise PostprocError(f"A and B shapes differ: {list(a.shape)} vs {list(b.shape)}")

    support = b > 0
    if mask is not None:
        support &= np.asarray(mask, dtype=bool)
    if not support.any():
        raise PostprocError("Suppression field is zero everywhere; λ is undefined")

    weights = b[support]
    ratios = a[support] / weights
    order = np.argsort(ratios, kind="stable")
    cumulative = np.cumsum(weights[order])
    idx = int(np.searchsorted(cumulative, cumulative[-1] / 2.0, side="left"))
    return max(float(ratios[order][idx]), 0.0)


def optimize_params(
    sv: ScoreVolume,
    sigma_grid: Optional[Sequence[float]] = None,
    mask: Optional[np.ndarray] = None,
    workers: int = 1,
) -> PostprocParams:
    """Grid search over σ with the exact λ per σ.

    Ties in the objective resolve to the smaller σ. With ``mask`` the
    objective (and λ) is restricted to the masked voxels.
    """
    grid = sorted(float(s) for s in (DEFAULT_SIGMA_GRID if sigma_grid is None else sigma_grid))
    if not grid:
        raise PostprocError("Sigma grid is empty")
    if any(s < 0 for s in grid):
        raise PostprocError(f"Sigma grid values must be non-negative, got {grid}")

    a = sv.score.data.astype(np.float64)
    gradient = gradient_l1_array(_recon(sv).data)

    def evaluate(sigma: float) -> Tuple[float, float]:
        b = gaussian_blur_array(gradient, sigma)
        lam = optimal_lambda(a, b, mask)
        objective = l1_objective(a, b, lam, mask)
        logger.debug(f"σ={sigma:.4g}: λ={lam:.6g}, objective={objective:.6g}")
        return lam, objective

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, grid))
    else:
        results = [evaluate(s) for s in grid]

    best = 0
    for i, (_, objective) in enumerate(results):
        if objective < results[best][1]:
            best = i
    lam, objective = results[best]
    params = PostprocParams(lambda_=lam, sigma=grid[best], objective=objective)
    logger.info(
        f"Selected σ={params.sigma:.4g}, λ={params.lambda_:.6g} (mean L1 {objective:.6g})"
    )
    return params


def parse_sigma_grid(text: str) -> Tuple[float, ...]:
    """Parse ``start:stop:count[log|lin]`` or a comma-separated list.

    ``0.5:8:8log`` is the default 8-point log-spaced grid.
    """
    text = text.strip()
    match = re.fullmatch(r"([0-9.eE+-]+):([0-9.eE+-]+):(\d+)(log|lin)?", text)
    try:
        if match:
            start, stop, count = float(match.group(1)), float(match.group(2)), int(match.group(3))
            if match.group(4) == "lin":
                values = np.linspace(start, stop, count)
            else:
                values = np.geomspace(start, stop, count)
            return tuple(float(v) for v in values)
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as e:
        raise PostprocError(f"Invalid sigma grid '{text}': {e}") from e
