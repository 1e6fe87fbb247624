"""CSV report generation for pore tables, evaluation curves and experiment tables."""

from pathlib import Path
from typing import Dict, List, Union

import pandas as pd
from loguru import logger

from ..data.models import PoreMask
from ..evaluation.metrics import EvalCurves

PORE_COLUMNS = ["id", "cx", "cy", "cz", "bbox_x", "bbox_y", "bbox_z", "voxels"]
CURVE_COLUMNS = ["kind", "x", "y", "threshold"]


def pore_table(labels: PoreMask) -> pd.DataFrame:
    """One row per pore: 1-based id, centroid, bounding-box extents and voxel count."""
    rows = []
    for i, c in enumerate(labels.components, start=1):
        cx, cy, cz = c.centroid
        bx, by, bz = c.extents
        rows.append({"id": i, "cx": cx, "cy": cy, "cz": cz, "bbox_x": bx, "bbox_y": by, "bbox_z": bz, "voxels": c.voxel_count})
    return pd.DataFrame(rows, columns=PORE_COLUMNS)


def curve_table(curves: EvalCurves) -> pd.DataFrame:
    """ROC rows (x = FPR, y = TPR) followed by PR rows (x = recall, y = precision)."""
    roc = pd.DataFrame(
        {"kind": "roc", "x": curves.roc.fpr, "y": curves.roc.tpr, "threshold": curves.roc.thresholds}
    )
    pr = pd.DataFrame(
        {"kind": "pr", "x": curves.pr.recall, "y": curves.pr.precision, "threshold": curves.pr.thresholds}
    )
    return pd.concat([roc, pr], ignore_index=True)[CURVE_COLUMNS]


class CSVReporter:
    """CSV report generator."""

    def __init__(self, output_dir: Union[str, Path] = "output"):
        """Initialize CSV reporter.

        Args:
            output_dir: Directory to save CSV reports
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def _write(self, frame: pd.DataFrame, filename: str) -> Path:
        path = self.output_dir / filename
        path.parent.mkdir(parents=True, exist_ok=True)
        # default float formatting is repr, i.e. full precision
        frame.to_csv(path, index=False, lineterminator="\n")
        logger.info(f"CSV report saved: {path}")
        return path

    def write_pores(self, labels: PoreMask, filename: str = "pores.csv") -> Path:
        return self._write(pore_table(labels), filename)

    def write_curves(self, curves: EvalCurves, filename: str = "curves.csv") -> Path:
        return self._write(curve_table(curves), filename)

    def write_table(self, report, filename: str = "table.csv") -> Path:
        return self._write(report.table(), filename)

    def write_curve_tables(self, report, filename: str = "curves.csv") -> List[Path]:
        """Combined ``curves.csv`` with a ``cell`` column plus ``curves/<cell>.csv`` per cell."""
        tables: Dict[str, pd.DataFrame] = report.curve_tables()
        paths = []
        combined = [t.assign(cell=label)[["cell"] + CURVE_COLUMNS] for label, t in tables.items() if len(t)]
        frame = pd.concat(combined, ignore_index=True) if combined else pd.DataFrame(columns=["cell"] + CURVE_COLUMNS)
        paths.append(self._write(frame, filename))
        for label, table in tables.items():
            paths.append(self._write(table, f"curves/{label}.csv"))
        return paths
