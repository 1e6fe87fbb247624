"""
Voxel-wise anomaly scoring.

A scorer maps a patch to a non-negative anomaly score and a reconstruction of
the same shape. Patches are aggregated back into a ScoreVolume holding the
anomaly score A and the reconstruction V̂ used by surface suppression.

Scorers:

1. **IdentityScorer**: reconstruction equals the input, scores are zero.
   Used to check the patch plumbing end to end.
2. **PcaScorer**: mean plus top-k principal directions of small cubic
   sub-patches sampled from object interiors. A patch is cut into
   overlapping sub-patches, each is projected onto the fitted subspace, the
   reconstructions are mean-aggregated and the score is ``|patch − V̂|``.

Scores computed elsewhere enter through :func:`import_scores`.

Example Usage:
    scorer = fit_pca_scorer([train_volume], PcaSpec(), seed=7)
    grid = plan_patches(volume.dims, 64, 32)
    scores = score_volume(scorer, volume, grid, workers=4)
    labels = scores_to_labels(scores, threshold=0.2)
"""

import itertools
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, List, Optional, Protocol, Sequence, Tuple, Union, runtime_checkable

import numpy as np
from loguru import logger
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field, model_validator
from sklearn.decomposition import PCA

from ..data.loaders import load_volume, save_volume
from ..data.models import PoreMask, Volume
from .labeler import components_to_mask, connected_components, filter_small_pores, object_mask
from .patchflow import AugmentSpec, PatchAccumulator, PatchGrid, augment, pad_volume, plan_patches


class ScorerError(ValueError):
    """Raised for unfitted scorers, mismatched grids and unusable training data."""


@runtime_checkable
class AnomalyScorer(Protocol):
    """Patch scorer returning ``(score_patch, reconstruction_patch)``."""

    def score(self, patch: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        ...


class IdentityScorer:
    """Reconstructs every patch exactly."""

    def score(self, patch: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        patch = np.asarray(patch, dtype=np.float64)
        return np.zeros_like(patch), patch.copy()


class PcaSpec(BaseModel):
    """Sub-patch geometry and sampling budget of the PCA scorer."""

    patch_edge: int = Field(default=8, ge=2)
    stride: int = Field(default=4, ge=1)
    n_components: int = Field(default=16, ge=1)
    n_samples: int = Field(default=4000, ge=1)

    @model_validator(mode="after")
    def validate_geometry(self):
        if self.n_components >= self.patch_edge ** 3:
            raise ValueError(
                f"n_components ({self.n_components}) must be below patch_edge³ ({self.patch_edge ** 3})"
            )
        if self.stride > self.patch_edge:
            raise ValueError(f"stride ({self.stride}) cannot exceed patch_edge ({self.patch_edge})")
        return self


class PcaScorer(BaseModel):
    """Fitted mean and orthonormal basis of vectorized sub-patches."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    patch_edge: int
    stride: int
    mean: np.ndarray
    basis: np.ndarray  # (k, patch_edge³), rows orthonormal
    fitted: bool = True

    @property
    def n_components(self) -> int:
        return int(self.basis.shape[0])

    def reconstruct(self, vectors: np.ndarray) -> np.ndarray:
        """Project rows onto the fitted affine subspace."""
        centered = vectors - self.mean
        return self.mean + (centered @ self.basis.T) @ self.basis

    def score(self, patch: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if not self.fitted:
            raise ScorerError("PCA scorer has not been fitted")
        patch = np.asarray(patch, dtype=np.float64)
        inner = plan_patches(patch.shape, self.patch_edge, self.stride)
        windows = _windows(pad_volume(patch, inner), inner)
        recon_vectors = self.reconstruct(windows.reshape(-1, self.patch_edge ** 3))
        recon = _fold_windows(recon_vectors.reshape(windows.shape), inner)
        return np.abs(patch - recon), recon


class ScoreVolume(BaseModel):
    """Anomaly score volume A with its companion reconstruction V̂."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    score: Volume
    recon: Optional[Volume] = None
    clamped_voxels: int = 0

    @model_validator(mode="after")
    def validate_volumes(self):
        if self.recon is not None and self.recon.dims != self.score.dims:
            raise ValueError(
                f"Score dims {list(self.score.dims)} differ from reconstruction dims "
                f"{list(self.recon.dims)}"
            )
        if np.any(self.score.data < 0):
            raise ValueError("Anomaly scores must be non-negative")
        return self

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.score.dims

    def require_recon(self) -> Volume:
        if self.recon is None:
            raise ScorerError("Reconstruction volume is required for post-processing")
        return self.recon


def _windows(padded: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """All planned windows as an ``(nx, ny, nz, e, e, e)`` view."""
    e, s = grid.patch_size, grid.stride
    return sliding_window_view(padded, (e, e, e))[::s, ::s, ::s]


def _fold_windows(windows: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Mean-aggregate an ``(nx, ny, nz, e, e, e)`` window array back onto the grid."""
    e, s = grid.patch_size, grid.stride
    nx, ny, nz = windows.shape[:3]

    if e % s != 0:
        acc = PatchAccumulator(grid)
        for index, (i, j, k) in enumerate(itertools.product(range(nx), range(ny), range(nz))):
            acc.add(index, windows[i, j, k])
        return acc.result()

    # each stride-sized phase of the windows tiles its region without overlap
    total = np.zeros(grid.padded_dims, dtype=np.float64)
    count = np.zeros(grid.padded_dims, dtype=np.int32)
    m = e // s
    for qa, qb, qc in itertools.product(range(m), repeat=3):
        block = windows[:, :, :, qa * s:(qa + 1) * s, qb * s:(qb + 1) * s, qc * s:(qc + 1) * s]
        tiled = block.transpose(0, 3, 1, 4, 2, 5).reshape(nx * s, ny * s, nz * s)
        region = (
            slice(qa * s, (qa + nx) * s),
            slice(qb * s, (qb + ny) * s),
            slice(qc * s, (qc + nz) * s),
        )
        total[region] += tiled
        count[region] += 1
    crop = grid.crop()
    return total[crop] / count[crop]


def _interior_origins(mask: np.ndarray, edge: int) -> np.ndarray:
    """Boolean map of window origins whose whole ``edge³`` window lies in ``mask``."""
    integral = np.pad(mask.astype(np.int64), [(1, 0)] * 3).cumsum(0).cumsum(1).cumsum(2)
    n = [d - edge + 1 for d in mask.shape]
    if min(n) < 1:
        return np.zeros([max(d, 0) for d in n], dtype=bool)
    hi = [slice(edge, edge + k) for k in n]
    lo = [slice(0, k) for k in n]
    box = np.zeros(n, dtype=np.int64)
    for corner in itertools.product((0, 1), repeat=3):
        sign = (-1) ** (3 - sum(corner))
        box += sign * integral[tuple(hi[a] if corner[a] else lo[a] for a in range(3))]
    return box == edge ** 3


def _sample_windows(
    volumes: Sequence[Volume],
    masks: Sequence[np.ndarray],
    spec: PcaSpec,
    rng: np.random.Generator,
    augment_spec: Optional[AugmentSpec],
) -> np.ndarray:
    e = spec.patch_edge
    candidates = [np.flatnonzero(_interior_origins(m, e)) for m in masks]
    shapes = [tuple(d - e + 1 for d in v.dims) for v in volumes]
    counts = np.array([c.size for c in candidates], dtype=np.int64)
    total = int(counts.sum())
    n = min(spec.n_samples, total)
    if n < 10 * spec.n_components:
        raise ScorerError(
            f"Only {total} interior sub-patches of edge {e} available; "
            f"need at least {10 * spec.n_components} for {spec.n_components} components"
        )

    picks = np.sort(rng.choice(total, size=n, replace=False))
    owner = np.searchsorted(np.cumsum(counts), picks, side="right")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])

    samples = np.empty((n, e ** 3), dtype=np.float64)
    for row, (pick, vol) in enumerate(zip(picks, owner)):
        origin = np.unravel_index(candidates[vol][pick - starts[vol]], shapes[vol])
        window = tuple(slice(o, o + e) for o in origin)
        image = volumes[vol].data[window].astype(np.float64)
        if augment_spec is not None:
            label = masks[vol][window]
            image, _ = augment(image, label, augment_spec.model_copy(update={"seed": augment_spec.seed + row}))
        samples[row] = image.ravel()
    logger.debug(f"Sampled {n} sub-patches from {total} interior candidates")
    return samples


def fit_pca_scorer(
    volumes: Sequence[Volume],
    spec: Optional[PcaSpec] = None,
    seed: int = 0,
    masks: Optional[Sequence[np.ndarray]] = None,
    augment_spec: Optional[AugmentSpec] = None,
) -> PcaScorer:
    """Fit the PCA scorer on sub-patches lying inside the object masks.

    ``masks`` default to the object mask of each volume. When the sampled
    data has rank below ``n_components`` the basis is truncated with a
    warning; constant data yields an empty basis.

    Raises:
        ScorerError: If too few interior sub-patches are available.
    """
    spec = spec or PcaSpec()
    if not volumes:
        raise ScorerError("At least one training volume is required")
    if masks is None:
        masks = [object_mask(v) for v in volumes]
    if len(masks) != len(volumes):
        raise ScorerError(f"Got {len(masks)} mask(s) for {len(volumes)} volume(s)")
    for v, m in zip(volumes, masks):
        if tuple(np.shape(m)) != v.dims:
            raise ScorerError(f"Mask dims {list(np.shape(m))} do not match volume {list(v.dims)}")

    rng = np.random.default_rng(seed)
    samples = _sample_windows(volumes, [np.asarray(m, dtype=bool) for m in masks], spec, rng, augment_spec)
    mean = samples.mean(axis=0)
    centered = samples - mean

    scale = float(np.abs(centered).max())
    if scale == 0.0:
        logger.warning("Training sub-patches are constant; PCA basis is empty")
        basis = np.zeros((0, spec.patch_edge ** 3))
    else:
        k = min(spec.n_components, samples.shape[0])
        pca = PCA(n_components=k, svd_solver="full", random_state=seed).fit(samples)
        singular = pca.singular_values_
        tol = singular.max() * max(samples.shape) * np.finfo(np.float64).eps
        rank = int(np.count_nonzero(singular > tol))
        if rank < spec.n_components:
            logger.warning(f"Training data has rank {rank}; reducing components from {spec.n_components}")
        basis = pca.components_[:rank]
        mean = pca.mean_

    scorer = PcaScorer(patch_edge=spec.patch_edge, stride=spec.stride, mean=mean, basis=basis)
    logger.info(
        f"Fitted PCA scorer with {scorer.n_components} component(s) on {samples.shape[0]} sub-patches"
    )
    return scorer


def score_volume(
    s: AnomalyScorer,
    v: Volume,
    grid: PatchGrid,
    workers: int = 1,
    on_patch: Optional[Callable[[int], None]] = None,
) -> ScoreVolume:
    """Score every planned patch and mean-aggregate scores and reconstructions.

    Patches are scored in a thread pool when ``workers > 1``; results are
    accumulated in placement order either way. ``on_patch`` receives each
    patch index once it has been aggregated.
    """
    if grid.dims != v.dims:
        raise ScorerError(f"Patch plan dims {list(grid.dims)} do not match volume {list(v.dims)}")

    padded = pad_volume(v, grid)

    def run(index: int) -> Tuple[np.ndarray, np.ndarray]:
        patch = padded[grid.window(index)]
        score_patch, recon_patch = s.score(patch)
        if np.shape(score_patch) != patch.shape or np.shape(recon_patch) != patch.shape:
            raise ScorerError(f"Scorer changed the shape of patch {index}")
        return np.asarray(score_patch, dtype=np.float64), np.asarray(recon_patch, dtype=np.float64)

    score_acc = PatchAccumulator(grid)
    recon_acc = PatchAccumulator(grid)
    clamped = 0

    def consume(index: int, score_patch: np.ndarray, recon_patch: np.ndarray) -> None:
        nonlocal clamped
        negative = score_patch < 0
        if negative.any():
            clamped += int(negative.sum())
            score_patch = np.maximum(score_patch, 0.0)
        score_acc.add(index, score_patch)
        recon_acc.add(index, recon_patch)
        if on_patch is not None:
            on_patch(index)
        logger.debug(f"Scored patch {index + 1}/{grid.n_patches}")

    if workers > 1:
        # bounded batches keep at most a few patches per worker in memory
        batch = workers * 4
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for start in range(0, grid.n_patches, batch):
                indices = range(start, min(start + batch, grid.n_patches))
                for index, result in zip(indices, pool.map(run, indices)):
                    consume(index, *result)
    else:
        for index in range(grid.n_patches):
            consume(index, *run(index))

    if clamped:
        logger.warning(f"Clamped {clamped} negative patch score(s) to 0")
    logger.info(f"Scored {grid.n_patches} patch(es) over volume {list(v.dims)}")
    return ScoreVolume(
        score=Volume(data=score_acc.result(), spacing=v.spacing),
        recon=Volume(data=recon_acc.result(), spacing=v.spacing),
        clamped_voxels=clamped,
    )


def import_scores(
    score_path: Union[str, Path],
    recon_path: Optional[Union[str, Path]] = None,
    require_recon: bool = False,
) -> ScoreVolume:
    """Load externally computed scores; negative scores are clamped to 0."""
    score = load_volume(score_path)
    recon = load_volume(recon_path) if recon_path is not None else None
    if recon is None and require_recon:
        raise ScorerError("A reconstruction volume is required for post-processing")
    if recon is not None and recon.dims != score.dims:
        raise ScorerError(
            f"Score dims {list(score.dims)} differ from reconstruction dims {list(recon.dims)}"
        )

    negative = int(np.count_nonzero(score.data < 0))
    if negative:
        logger.warning(f"Clamped {negative} negative score voxel(s) to 0")
        score = score.with_data(np.maximum(score.data, 0.0))
    return ScoreVolume(score=score, recon=recon, clamped_voxels=negative)


def export_scores(
    sv: ScoreVolume, score_path: Union[str, Path], recon_path: Optional[Union[str, Path]] = None
) -> None:
    save_volume(sv.score, score_path)
    if recon_path is not None:
        save_volume(sv.require_recon(), recon_path)


def binarize_scores(score: Union[ScoreVolume, Volume, np.ndarray], threshold: float) -> np.ndarray:
    """``A ≥ threshold`` as a boolean mask."""
    if not np.isfinite(threshold):
        raise ScorerError(f"Threshold must be finite, got {threshold}")
    if isinstance(score, ScoreVolume):
        data = score.score.data
    elif isinstance(score, Volume):
        data = score.data
    else:
        data = np.asarray(score)
    return data >= threshold


def scores_to_labels(sv: ScoreVolume, threshold: float, min_dims: int = 2) -> PoreMask:
    """Binarize scores and drop pores smaller than ``min_dims`` on any axis."""
    binary = binarize_scores(sv, threshold)
    kept = filter_small_pores(connected_components(binary), min_dims)
    labels = components_to_mask(kept, sv.dims, sv.score.spacing)
    logger.info(
        f"Score threshold {threshold:.6g}: {int(binary.sum())} voxels, {labels.n_components} pore(s) kept"
    )
    return labels


def scorer_from_name(
    name: str,
    train: Sequence[Volume] = (),
    spec: Optional[PcaSpec] = None,
    seed: int = 0,
) -> AnomalyScorer:
    """Build a scorer by CLI name (``pca`` or ``identity``)."""
    if name == "identity":
        return IdentityScorer()
    if name == "pca":
        if not train:
            raise ScorerError("The PCA scorer needs at least one training volume")
        return fit_pca_scorer(list(train), spec, seed)
    raise ScorerError(f"Unknown scorer '{name}'; expected 'pca' or 'identity'")


SCORER_NAMES: List[str] = ["pca", "identity"]
