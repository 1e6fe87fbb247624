"""Report generation for Porovox experiments and evaluations."""

from pathlib import Path
from typing import List, Union

from loguru import logger

from .csv_reporter import CSVReporter, curve_table, pore_table
from .excel_reporter import ExcelReporter
from .json_reporter import JSONReporter


def emit_report(report, output_dir: Union[str, Path], excel: bool = False) -> List[Path]:
    """Write ``summary.json``, ``table.csv``, ``curves.csv`` and per-cell curves.

    ``table.xlsx`` is added when ``excel`` is set.
    """
    output_dir = Path(output_dir)
    paths = [JSONReporter(output_dir).write_report(report)]
    csv = CSVReporter(output_dir)
    paths.append(csv.write_table(report))
    paths.extend(csv.write_curve_tables(report))
    if excel:
        paths.append(ExcelReporter(output_dir).write_table(report))
    logger.info(f"Wrote {len(paths)} report file(s) to {output_dir}")
    return paths


__all__ = ["CSVReporter", "ExcelReporter", "JSONReporter", "curve_table", "emit_report", "pore_table"]
