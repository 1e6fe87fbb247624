"""
Experiment harness for Porovox.

Classes:
    CrossValidator: Runs grid searches, degradation sweeps and k-fold
        scorer evaluation over one experiment roster
    ExperimentConfig / GridSpec: Validated experiment and grid files
    CrossValReport / TwoPhaseReport / SweepReport / XvalReport: Results
"""

from .cross_validator import (
    METRICS,
    CrossValidator,
    CrossValReport,
    ExperimentConfig,
    ExperimentError,
    FoldAssignment,
    FtlCalibratedDice,
    GridCell,
    GridSpec,
    HarnessIssue,
    IssueLog,
    SweepReport,
    TwoPhaseReport,
    VolumeEntry,
    XvalReport,
    ftl_threshold,
    load_config,
    load_grid,
    make_folds,
    run_degradation_sweep,
    run_grid_search,
    run_two_phase_search,
    run_xval,
    select_best,
)

__all__ = [
    "METRICS",
    "CrossValidator",
    "CrossValReport",
    "ExperimentConfig",
    "ExperimentError",
    "FoldAssignment",
    "FtlCalibratedDice",
    "GridCell",
    "GridSpec",
    "HarnessIssue",
    "IssueLog",
    "SweepReport",
    "TwoPhaseReport",
    "VolumeEntry",
    "XvalReport",
    "ftl_threshold",
    "load_config",
    "load_grid",
    "make_folds",
    "run_degradation_sweep",
    "run_grid_search",
    "run_two_phase_search",
    "run_xval",
    "select_best",
]
