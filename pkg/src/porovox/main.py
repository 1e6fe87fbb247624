"""
Main CLI interface for Porovox.

Porovox analyses porosity in volumetric X-CT scans: it labels pores with a
histogram heuristic, scores volumes patch by patch with an anomaly scorer,
suppresses the scorer's surface response, evaluates voxel-wise ROC/PR
curves and simulates degraded scans.

Commands:
- phantom: Generate a synthetic sample with ellipsoidal pores
- histogram: Characterise the intensity histogram of a volume
- label: Extract pore labels with the Otsu/flood-fill heuristic
- score / import-scores: Produce or import anomaly score volumes
- postproc: Fit and apply surface suppression
- score-labels: Turn scores into pore labels
- eval: ROC/PR evaluation against labels
- degrade: Resimulate a scan at reduced exposure or projection count
- xval / grid / sweep: Cross-validation, FTL grid search, degradation sweep

Example Usage:
    porovox phantom --out data/ph0 --pores 30 --seed 1
    porovox label data/ph0.json --out output/ph0_labels --report output/pores.csv
    porovox grid --config exp.json --grid grid.json
"""

import sys
from pathlib import Path
from typing import List, Optional, Tuple

import click
import numpy as np
from loguru import logger
from pydantic import ValidationError
from rich.console import Console
from rich.panel import Panel
from rich.text import Text

from porovox import __version__
from porovox.calculators.degrade import DegradeSpec, degrade_volume
from porovox.calculators.labeler import EmptyObjectError, extract_pore_labels, object_mask
from porovox.calculators.patchflow import PatchPlanError, plan_patches
from porovox.calculators.pipeline_service import PipelineService
from porovox.calculators.postproc import PostprocError, optimize_params, parse_sigma_grid, suppress_surface
from porovox.calculators.scorer import (
    SCORER_NAMES,
    PcaSpec,
    ScoreVolume,
    ScorerError,
    export_scores,
    import_scores,
    score_volume,
    scorer_from_name,
    scores_to_labels,
)
from porovox.config.settings import settings
from porovox.data.filters import DegenerateHistogramError, characterize_histogram
from porovox.data.loaders import VolumeFormatError, load_mask, load_volume, save_mask, save_volume
from porovox.data.models import PhantomSpec
from porovox.data.phantom import PhantomSpecError, generate_phantom, scatter_pores
from porovox.evaluation.metrics import MetricError
from porovox.reports import CSVReporter, JSONReporter, emit_report
from porovox.utils.format_utils import format_metric, format_params, rows_table
from porovox.validation import CrossValidator, ExperimentError, GridSpec, load_config, load_grid

console = Console()


def setup_logging(log_level: str, log_file: Optional[Path] = None) -> None:
    """Set up logging configuration."""
    logger.remove()

    logger.add(
        sys.stderr,
        level=log_level,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | "
               "<level>{level: <8}</level> | "
               "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - "
               "<level>{message}</level>",
        colorize=True,
    )

    if log_file:
        logger.add(
            log_file,
            level=log_level,
            format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}",
            rotation="10 MB",
            retention="1 week",
        )


def _parse_floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise click.BadParameter(f"expected comma-separated numbers, got '{text}'") from e


def _parse_dims(text: str) -> Tuple[int, int, int]:
    values = [int(v) for v in text.split(",") if v.strip()]
    if len(values) == 1:
        values = values * 3
    if len(values) != 3:
        raise click.BadParameter(f"expected one or three integers, got '{text}'")
    return tuple(values)  # type: ignore[return-value]


def _banner(title: str) -> None:
    console.print(Panel.fit(
        Text(title, style="bold purple"),
        title="[bold green]Porovox[/bold green]",
        border_style="purple",
    ))


def _handle_command_error(error: Exception, command: str) -> None:
    """Print a failure line with recovery hints and exit with status 1."""
    console.print(f"\n[red]❌ {command} failed: {error}[/red]")
    console.print("\n💡 [bold yellow]Troubleshooting:[/bold yellow]")

    if isinstance(error, FileNotFoundError):
        console.print("   • Check the path; volumes are given by their .json header")
        console.print("   • The .raw payload must sit next to the header")
    elif isinstance(error, VolumeFormatError):
        console.print("   • The header needs dims, spacing_um, dtype, order and data_file")
        console.print("   • The payload length must equal the product of dims")
    elif isinstance(error, (EmptyObjectError, DegenerateHistogramError)):
        console.print("   • The volume histogram has no usable contrast")
        console.print("   • Run 'porovox histogram <volume>' to inspect it")
    elif isinstance(error, (ScorerError, PatchPlanError)):
        console.print("   • Check --patch/--stride and the training volumes")
        console.print(f"   • Available scorers: {', '.join(SCORER_NAMES)}")
    elif isinstance(error, PostprocError):
        console.print("   • Surface suppression needs a non-constant reconstruction volume")
        console.print("   • Check --sigma-grid, e.g. 0.5:8:8log")
    elif isinstance(error, MetricError):
        console.print("   • Labels must contain both pore and non-pore voxels")
        console.print("   • Score and label volumes must have equal dims")
    elif isinstance(error, (ExperimentError, PhantomSpecError, ValidationError)):
        console.print("   • Check the JSON configuration against the documented fields")
    elif isinstance(error, PermissionError):
        console.print("   • Ensure the output directory is writable")
    else:
        console.print("   • Re-run with --log-level DEBUG for details")

    logger.error(f"{command} error: {error}")
    sys.exit(1)


@click.group()
@click.option(
    "--log-level",
    type=click.Choice(["TRACE", "DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]),
    default=None,
    help="Set logging verbosity level (defaults to POROVOX_LOG_LEVEL or INFO)",
)
@click.option(
    "--log-file",
    type=click.Path(),
    help="Save logs to specified file path",
)
@click.version_option(version=__version__)
@click.pass_context
def cli(ctx: click.Context, log_level: Optional[str], log_file: Optional[str]) -> None:
    """🔬 Porovox - porosity analysis for volumetric X-CT scans.

    \b
    QUICK START:
      porovox phantom --out data/ph0 --pores 30 --seed 1
      porovox label data/ph0.json --out output/ph0_labels --report output/pores.csv

    \b
    EXPERIMENTS:
      porovox xval --config exp.json
      porovox grid --config exp.json --grid grid.json
      porovox sweep --config exp.json --exposures 1,0.75,0.5,0.25 --projections 1,0.5,0.333

    Use porovox COMMAND --help for command-specific options.
    """
    log_file_path = Path(log_file) if log_file else settings.log_file
    setup_logging(log_level or settings.log_level, log_file_path)

    ctx.ensure_object(dict)
    ctx.obj["log_level"] = log_level
    ctx.obj["log_file"] = log_file_path


# =======================================================================================
# VOLUMES AND LABELS
# =======================================================================================


@cli.command()
@click.option("--out", "out", type=click.Path(), required=True, help="Output volume path (header .json)")
@click.option("--labels", "labels_out", type=click.Path(), help="Ground-truth mask path (default <out>_labels)")
@click.option("--shape", type=click.Choice(["cylinder", "cube"]), default="cylinder", show_default=True)
@click.option("--dims", default="64", show_default=True, help="Grid dims: N or NX,NY,NZ")
@click.option("--pores", "n_pores", type=int, default=10, show_default=True, help="Number of pores")
@click.option("--radius-min", type=float, default=2.0, show_default=True)
@click.option("--radius-max", type=float, default=6.0, show_default=True)
@click.option("--decoys", type=int, default=0, show_default=True, help="Single-voxel decoy pores")
@click.option("--blur", type=float, default=0.8, show_default=True, help="Gaussian blur sigma (voxels)")
@click.option("--noise", type=float, default=0.02, show_default=True, help="Additive noise sigma")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--spec", "spec_path", type=click.Path(exists=True), help="Phantom spec JSON instead of the options above")
def phantom(
    out: str,
    labels_out: Optional[str],
    shape: str,
    dims: str,
    n_pores: int,
    radius_min: float,
    radius_max: float,
    decoys: int,
    blur: float,
    noise: float,
    seed: int,
    spec_path: Optional[str],
) -> None:
    """Generate a synthetic sample with ellipsoidal pores.

    Writes the volume, its ground-truth pore mask and the phantom spec
    (<out>_spec.json) so the sample can be regenerated exactly.

    Examples:
        porovox phantom --out data/ph0 --pores 30 --decoys 5 --seed 1
        porovox phantom --out data/ph1 --spec ph1_spec.json
    """
    _banner("Phantom Generation")
    try:
        if spec_path:
            spec = PhantomSpec.model_validate_json(Path(spec_path).read_text(encoding="utf-8"))
        else:
            base = PhantomSpec(shape=shape, grid_dims=_parse_dims(dims), blur_sigma=blur, noise_sigma=noise, seed=seed)
            spec = scatter_pores(base, n_pores, radius_range=(radius_min, radius_max), seed=seed, decoys=decoys)

        volume, truth = generate_phantom(spec)
        out_path = Path(out)
        header = save_volume(volume, out_path)
        mask_path = Path(labels_out) if labels_out else out_path.with_name(out_path.stem + "_labels")
        save_mask(truth.mask, mask_path, volume.spacing)
        spec_file = JSONReporter(out_path.parent).write(spec, out_path.stem + "_spec.json")

        console.print(f"\n✅ Volume saved: [cyan]{header}[/cyan]")
        console.print(f"✅ Labels saved: [cyan]{mask_path.with_suffix('.json')}[/cyan]")
        console.print(f"✅ Spec saved: [cyan]{spec_file}[/cyan]")
        console.print(f"   {len(spec.pores)} pore(s) placed, {truth.n_components} labeled component(s)")
    except Exception as e:
        _handle_command_error(e, "Phantom generation")


@cli.command()
@click.argument("volume_path", type=click.Path())
@click.option("--bins", type=int, default=None, help="Histogram bins (default from settings)")
def histogram(volume_path: str, bins: Optional[int]) -> None:
    """Characterise the intensity histogram of a volume.

    Reports the background and material peaks, their separation and widths.
    """
    _banner("Histogram Quality")
    try:
        volume = load_volume(volume_path)
        quality = characterize_histogram(volume, bins or settings.otsu_bins)
        rows = [
            {"peak": "background", "center": quality.background_peak, "half-max width": quality.background_width},
            {"peak": "material", "center": quality.material_peak, "half-max width": quality.material_width},
        ]
        console.print(rows_table("📊 Histogram Peaks", ["peak", "center", "half-max width"], rows))
        console.print(f"   Peaks found: [cyan]{quality.n_peaks}[/cyan], bimodal: [cyan]{quality.bimodal}[/cyan]")
        if quality.separation is not None:
            console.print(f"   Peak separation: [cyan]{quality.separation:.6g}[/cyan]")
        if quality.contrast_index is not None:
            console.print(f"   Peak separation / mean width: [cyan]{quality.contrast_index:.3f}[/cyan]")
    except Exception as e:
        _handle_command_error(e, "Histogram characterisation")


@cli.command()
@click.argument("volume_path", type=click.Path())
@click.option("--out", "out", type=click.Path(), required=True, help="Output mask path")
@click.option("--min-dims", type=int, default=None, help="Smallest kept pore extent on every axis")
@click.option("--surface-margin", type=int, default=None, help="Object-mask erosion before the pore threshold")
@click.option("--bins", type=int, default=None, help="Otsu histogram bins")
@click.option("--report", "report_path", type=click.Path(), help="Write the pore table as CSV")
def label(
    volume_path: str,
    out: str,
    min_dims: Optional[int],
    surface_margin: Optional[int],
    bins: Optional[int],
    report_path: Optional[str],
) -> None:
    """Extract pore labels with the Otsu/flood-fill heuristic.

    Examples:
        porovox label scan.json --out scan_labels --report pores.csv
        porovox label scan.json --out scan_labels --min-dims 3 --surface-margin 2
    """
    _banner("Pore Labeling")
    try:
        volume = load_volume(volume_path)
        labels = extract_pore_labels(
            volume,
            min_dims=min_dims if min_dims is not None else settings.min_dims,
            n_bins=bins or settings.otsu_bins,
            surface_margin=surface_margin if surface_margin is not None else settings.surface_margin,
            unimodal_separation=settings.unimodal_separation,
        )
        mask_path = save_mask(labels.mask, out, volume.spacing)
        console.print(f"\n✅ Mask saved: [cyan]{mask_path}[/cyan]")
        console.print(f"   {labels.n_components} pore(s), {labels.n_voxels} voxel(s)")
        if report_path:
            path = Path(report_path)
            csv_file = CSVReporter(path.parent).write_pores(labels, path.name)
            console.print(f"✅ Pore table saved: [cyan]{csv_file}[/cyan]")
    except Exception as e:
        _handle_command_error(e, "Pore labeling")


# =======================================================================================
# SCORING
# =======================================================================================


@cli.command()
@click.argument("volume_path", type=click.Path())
@click.option("--scorer", "scorer_name", type=click.Choice(SCORER_NAMES), default="pca", show_default=True)
@click.option("--fit", "fit_paths", multiple=True, type=click.Path(), help="Training volume (repeatable)")
@click.option("--out-score", type=click.Path(), required=True, help="Anomaly score volume path")
@click.option("--out-recon", type=click.Path(), help="Reconstruction volume path")
@click.option("--patch", "patch_size", type=int, default=None, help="Inference patch edge")
@click.option("--stride", type=int, default=None, help="Inference patch stride")
@click.option("--workers", type=int, default=None, help="Scoring threads")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for PCA sub-patch sampling")
def score(
    volume_path: str,
    scorer_name: str,
    fit_paths: Tuple[str, ...],
    out_score: str,
    out_recon: Optional[str],
    patch_size: Optional[int],
    stride: Optional[int],
    workers: Optional[int],
    seed: int,
) -> None:
    """Score a volume patch by patch.

    The PCA scorer is fitted on the --fit volumes (the scored volume itself
    when none are given).

    Examples:
        porovox score scan.json --scorer pca --fit ref1.json --fit ref2.json --out-score A --out-recon V
        porovox score scan.json --patch 64 --stride 32 --workers 4 --out-score A
    """
    _banner("Anomaly Scoring")
    try:
        volume = load_volume(volume_path)
        train = [load_volume(p) for p in fit_paths] or [volume]
        spec = PcaSpec(
            patch_edge=settings.pca_patch_edge,
            stride=settings.pca_stride,
            n_components=settings.pca_components,
            n_samples=settings.pca_samples,
        )
        scorer = scorer_from_name(scorer_name, train, spec, seed)
        grid = plan_patches(volume.dims, patch_size or settings.patch_size, stride or settings.patch_stride)
        with console.status(f"[blue]Scoring {grid.n_patches} patch(es)..."):
            sv = score_volume(scorer, volume, grid, workers=workers or settings.workers)
        export_scores(sv, out_score, out_recon)
        console.print(f"\n✅ Scores saved: [cyan]{out_score}[/cyan]")
        if out_recon:
            console.print(f"✅ Reconstruction saved: [cyan]{out_recon}[/cyan]")
        if sv.clamped_voxels:
            console.print(f"[yellow]⚠️ {sv.clamped_voxels} negative score(s) clamped to 0[/yellow]")
    except Exception as e:
        _handle_command_error(e, "Scoring")


@cli.command("import-scores")
@click.option("--score", "score_path", type=click.Path(), required=True, help="External score volume")
@click.option("--recon", "recon_path", type=click.Path(), help="External reconstruction volume")
@click.option("--out-score", type=click.Path(), help="Write the validated (clamped) scores here")
def import_scores_cmd(score_path: str, recon_path: Optional[str], out_score: Optional[str]) -> None:
    """Validate externally computed score and reconstruction volumes."""
    _banner("Score Import")
    try:
        sv = import_scores(score_path, recon_path)
        data = sv.score.data
        console.print(f"\n✅ Scores imported: dims {list(sv.dims)}, range [{data.min():.6g}, {data.max():.6g}]")
        console.print(f"   Reconstruction: {'yes' if sv.recon is not None else 'no'}")
        if sv.clamped_voxels:
            console.print(f"[yellow]⚠️ {sv.clamped_voxels} negative score(s) clamped to 0[/yellow]")
        if out_score:
            save_volume(sv.score, out_score)
            console.print(f"✅ Scores saved: [cyan]{out_score}[/cyan]")
    except Exception as e:
        _handle_command_error(e, "Score import")


def _mask_or_none(path: Optional[str]) -> Optional[np.ndarray]:
    return load_mask(path) if path else None


@cli.command()
@click.option("--score", "score_path", type=click.Path(), required=True)
@click.option("--recon", "recon_path", type=click.Path(), required=True)
@click.option("--sigma-grid", default=None, help="start:stop:count[log|lin] or a comma list")
@click.option("--mask", "mask_path", type=click.Path(), help="Restrict the fit to this mask")
@click.option("--out", "out", type=click.Path(), required=True, help="Suppressed score volume path")
@click.option("--params-out", type=click.Path(), help="Write fitted λ and σ as JSON")
def postproc(
    score_path: str,
    recon_path: str,
    sigma_grid: Optional[str],
    mask_path: Optional[str],
    out: str,
    params_out: Optional[str],
) -> None:
    """Fit (λ, σ) and suppress the surface response of anomaly scores.

    Example:
        porovox postproc --score A.json --recon V.json --sigma-grid 0.5:8:8log --out Apores --params-out params.json
    """
    _banner("Surface Suppression")
    try:
        sv = import_scores(score_path, recon_path, require_recon=True)
        grid = parse_sigma_grid(sigma_grid) if sigma_grid else settings.default_sigma_grid()
        params = optimize_params(sv, grid, mask=_mask_or_none(mask_path), workers=settings.workers)
        suppressed = suppress_surface(sv, params)
        save_volume(suppressed, out)
        console.print(f"\n✅ Suppressed scores saved: [cyan]{out}[/cyan]")
        console.print(f"   λ = [cyan]{params.lambda_:.6g}[/cyan], σ = [cyan]{params.sigma:.4g}[/cyan]")
        if params_out:
            path = Path(params_out)
            params_file = JSONReporter(path.parent).write(params, path.name)
            console.print(f"✅ Parameters saved: [cyan]{params_file}[/cyan]")
    except Exception as e:
        _handle_command_error(e, "Post-processing")


@cli.command("score-labels")
@click.option("--score", "score_path", type=click.Path(), required=True)
@click.option("--recon", "recon_path", type=click.Path(), help="Reconstruction; enables surface suppression")
@click.option("--threshold", type=float, required=True, help="Voxels with score ≥ threshold are pores")
@click.option("--sigma-grid", default=None, help="Sigma grid for surface suppression")
@click.option("--min-dims", type=int, default=None, help="Smallest kept pore extent on every axis")
@click.option("--out", "out", type=click.Path(), required=True, help="Output mask path")
@click.option("--report", "report_path", type=click.Path(), help="Write the pore table as CSV")
def score_labels(
    score_path: str,
    recon_path: Optional[str],
    threshold: float,
    sigma_grid: Optional[str],
    min_dims: Optional[int],
    out: str,
    report_path: Optional[str],
) -> None:
    """Derive pore labels from anomaly scores.

    Scores are surface-suppressed first when a reconstruction is given,
    then thresholded; pores smaller than --min-dims on any axis are dropped.
    """
    _banner("Score-Derived Labels")
    try:
        sv = import_scores(score_path, recon_path)
        if sv.recon is not None:
            grid = parse_sigma_grid(sigma_grid) if sigma_grid else settings.default_sigma_grid()
            params = optimize_params(sv, grid, workers=settings.workers)
            sv = ScoreVolume(score=suppress_surface(sv, params), recon=sv.recon)
        labels = scores_to_labels(sv, threshold, min_dims if min_dims is not None else settings.min_dims)
        mask_path = save_mask(labels.mask, out, sv.score.spacing)
        console.print(f"\n✅ Mask saved: [cyan]{mask_path}[/cyan] ({labels.n_components} pore(s))")
        if report_path:
            path = Path(report_path)
            csv_file = CSVReporter(path.parent).write_pores(labels, path.name)
            console.print(f"✅ Pore table saved: [cyan]{csv_file}[/cyan]")
    except Exception as e:
        _handle_command_error(e, "Score labeling")


@cli.command("eval")
@click.option("--score", "score_path", type=click.Path(), required=True)
@click.option("--labels", "labels_path", type=click.Path(), required=True, help="Ground-truth mask")
@click.option("--mask", "mask_path", type=click.Path(), help="Evaluate inside this mask only")
@click.option("--object-only", is_flag=True, help="Evaluate inside the object mask of --volume")
@click.option("--volume", "volume_path", type=click.Path(), help="Volume used for --object-only")
@click.option("--out", "out", type=click.Path(), required=True, help="curves.csv path")
@click.option("--summary", "summary_path", type=click.Path(), help="summary.json path")
@click.option("--max-voxels", type=int, default=None, help="Subsample above this many voxels")
@click.option("--seed", type=int, default=0, show_default=True)
def eval_cmd(
    score_path: str,
    labels_path: str,
    mask_path: Optional[str],
    object_only: bool,
    volume_path: Optional[str],
    out: str,
    summary_path: Optional[str],
    max_voxels: Optional[int],
    seed: int,
) -> None:
    """ROC/PR evaluation of a score volume against labels.

    Example:
        porovox eval --score Apores.json --labels gt.json --out curves.csv --summary summary.json
    """
    _banner("Evaluation")
    try:
        scores = load_volume(score_path)
        labels = load_mask(labels_path)
        region = _mask_or_none(mask_path)
        if object_only:
            if not volume_path:
                raise click.UsageError("--object-only needs --volume")
            obj = object_mask(load_volume(volume_path), settings.otsu_bins)
            region = obj if region is None else region & obj

        service = PipelineService.from_settings(settings)
        service.stages.eval.max_voxels = max_voxels or settings.eval_max_voxels
        curves = service.evaluate(scores, labels, region, seed=seed)

        path = Path(out)
        CSVReporter(path.parent).write_curves(curves, path.name)
        console.print(f"\n✅ Curves saved: [cyan]{out}[/cyan]")
        console.print(f"   AUC [cyan]{format_metric(curves.auc, digits=4)}[/cyan], AP [cyan]{format_metric(curves.ap, digits=4)}[/cyan]")
        if summary_path:
            summary = JSONReporter(Path(summary_path).parent).write_dict(
                {"auc": curves.auc, "ap": curves.ap, "n_voxels": curves.n_voxels, "n_positive": curves.n_positive},
                Path(summary_path).name,
            )
            console.print(f"✅ Summary saved: [cyan]{summary}[/cyan]")
    except Exception as e:
        _handle_command_error(e, "Evaluation")


@cli.command()
@click.argument("volume_path", type=click.Path())
@click.option("--exposure", type=float, default=1.0, show_default=True, help="Exposure fraction in (0, 1]")
@click.option("--projections", type=float, default=1.0, show_default=True, help="Projection fraction in (0, 1]")
@click.option("--angles", type=int, default=None, help="Full projection count over 180°")
@click.option("--i0", type=float, default=None, help="Incident counts per detector bin")
@click.option("--mu-scale", type=float, default=None, help="Attenuation per intensity unit")
@click.option("--no-noise", is_flag=True, help="Skip the Poisson noise step")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=None, help="Slice threads")
@click.option("--out", "out", type=click.Path(), required=True)
def degrade(
    volume_path: str,
    exposure: float,
    projections: float,
    angles: Optional[int],
    i0: Optional[float],
    mu_scale: Optional[float],
    no_noise: bool,
    seed: int,
    workers: Optional[int],
    out: str,
) -> None:
    """Resimulate a scan at reduced exposure and projection count.

    Example:
        porovox degrade scan.json --exposure 0.5 --projections 0.333 --angles 720 --i0 1e5 --seed 7 --out deg
    """
    _banner("Scan Degradation")
    try:
        volume = load_volume(volume_path)
        spec = DegradeSpec(
            exposure_fraction=exposure,
            projection_fraction=projections,
            base_angles=angles or settings.degrade_angles,
            i0=i0 or settings.degrade_i0,
            mu_scale=mu_scale or settings.degrade_mu_scale,
            add_noise=not no_noise,
            seed=seed,
        )
        with console.status(f"[blue]Degrading {volume.dims[2]} slice(s)..."):
            degraded = degrade_volume(volume, spec, workers=workers or settings.workers)
        header = save_volume(degraded, out)
        console.print(f"\n✅ Degraded volume saved: [cyan]{header}[/cyan]")
    except Exception as e:
        _handle_command_error(e, "Degradation")


# =======================================================================================
# EXPERIMENTS
# =======================================================================================


def _experiment_dir(config_output: Path, output_dir: Optional[str], kind: str) -> Path:
    return Path(output_dir) if output_dir else config_output / kind


def _print_written(paths: List[Path]) -> None:
    for p in paths:
        if p.parent.name != "curves":
            console.print(f"✅ Report saved: [cyan]{p}[/cyan]")


@cli.command()
@click.option("--config", "config_path", type=click.Path(), required=True, help="Experiment JSON")
@click.option("--output-dir", type=click.Path(), help="Report directory (default <output_dir>/xval)")
def xval(config_path: str, output_dir: Optional[str]) -> None:
    """K-fold scorer evaluation before and after surface suppression.

    Example:
        porovox xval --config exp.json
    """
    _banner("Cross-Validation")
    try:
        config = load_config(config_path)
        report = CrossValidator(config, show_progress=True).run_xval()
        target = _experiment_dir(config.output_dir, output_dir, "xval")
        _print_written(emit_report(report, target, excel=settings.excel_reports))

        rows = [{"metric": k, "value": format_metric(v.mean, v.stderr)} for k, v in report.metrics.items()]
        console.print(rows_table("📈 Cross-Validated Metrics", ["metric", "value"], rows))
        if report.welch_p is not None:
            console.print(f"   Welch t = {report.welch_t:.4f}, p = {report.welch_p:.4g} (raw vs post-processed AP)")
    except Exception as e:
        _handle_command_error(e, "Cross-validation")


@cli.command()
@click.option("--config", "config_path", type=click.Path(), required=True, help="Experiment JSON")
@click.option("--grid", "grid_path", type=click.Path(), help="Grid JSON (default 4×4 α/β then 8 γ)")
@click.option("--two-phase/--full", default=True, show_default=True, help="α/β at fixed γ, then a γ sweep")
@click.option("--output-dir", type=click.Path(), help="Report directory (default <output_dir>/grid)")
def grid(config_path: str, grid_path: Optional[str], two_phase: bool, output_dir: Optional[str]) -> None:
    """Focal Tversky (α, β, γ) grid search over k folds.

    Examples:
        porovox grid --config exp.json --grid grid.json
        porovox grid --config exp.json --full
    """
    _banner("FTL Grid Search")
    try:
        config = load_config(config_path)
        spec = load_grid(grid_path) if grid_path else GridSpec()
        validator = CrossValidator(config, show_progress=True)
        report = validator.run_two_phase_search(spec) if two_phase else validator.run_grid_search(spec)
        target = _experiment_dir(config.output_dir, output_dir, "grid")
        _print_written(emit_report(report, target, excel=settings.excel_reports))

        best = report.best
        if best is None:
            console.print("[red]❌ No grid cell produced a valid result[/red]")
            sys.exit(1)
        console.print(
            f"\n🏆 Best cell: [bold green]{format_params(best.alpha, best.beta, best.gamma)}[/bold green] "
            f"({format_metric(best.mean, best.stderr)})"
        )
        if report.issues:
            console.print(f"[yellow]⚠️ {len(report.issues)} issue(s) recorded; see summary.json[/yellow]")
    except Exception as e:
        _handle_command_error(e, "Grid search")


@cli.command()
@click.option("--config", "config_path", type=click.Path(), required=True, help="Experiment JSON")
@click.option("--exposures", default="1,0.75,0.5,0.25", show_default=True)
@click.option("--projections", default="1,0.5,0.333", show_default=True)
@click.option("--output-dir", type=click.Path(), help="Report directory (default <output_dir>/sweep)")
def sweep(config_path: str, exposures: str, projections: str, output_dir: Optional[str]) -> None:
    """AUC/AP of degraded scans over an (exposure, projection) matrix.

    Example:
        porovox sweep --config exp.json --exposures 1,0.75,0.5,0.25 --projections 1,0.5,0.333
    """
    _banner("Degradation Sweep")
    try:
        config = load_config(config_path)
        report = CrossValidator(config, show_progress=True).run_degradation_sweep(
            _parse_floats(exposures), _parse_floats(projections)
        )
        target = _experiment_dir(config.output_dir, output_dir, "sweep")
        _print_written(emit_report(report, target, excel=settings.excel_reports))

        table = report.table()
        columns = ["exposure", "projections", "n_angles", "auc", "ap", "auc_post", "ap_post"]
        console.print(rows_table("📉 Degradation Sweep", columns, table[columns].replace({np.nan: None}).to_dict("records")))
    except Exception as e:
        _handle_command_error(e, "Degradation sweep")


if __name__ == "__main__":
    cli()
