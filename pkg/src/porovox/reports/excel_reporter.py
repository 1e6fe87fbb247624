"""Excel copy of experiment tables."""

from pathlib import Path
from typing import Union

import pandas as pd
from loguru import logger
from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter
from openpyxl.utils.dataframe import dataframe_to_rows


class ExcelReporter:
    """Excel report generator for grid, sweep and cross-validation tables."""

    def __init__(self, output_dir: Union[str, Path] = "output"):
        """Initialize Excel reporter.

        Args:
            output_dir: Directory to save Excel reports
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

        self.header_font = Font(bold=True, color="FFFFFF", size=12)
        self.header_fill = PatternFill(start_color="366092", end_color="366092", fill_type="solid")
        self.best_fill = PatternFill(start_color="C6EFCE", end_color="C6EFCE", fill_type="solid")
        self.number_format = "0.0000"

        thin_border = Side(border_style="thin", color="000000")
        self.border = Border(left=thin_border, right=thin_border, top=thin_border, bottom=thin_border)

    def write_table(self, report, filename: str = "table.xlsx") -> Path:
        """Write ``report.table()`` with a title row; the best grid row is highlighted."""
        filepath = self.output_dir / filename
        wb = Workbook()
        wb.remove(wb.active)
        self._table_sheet(wb, report.table(), f"Porovox {report.kind} report", self._best_row(report))
        wb.save(filepath)
        logger.info(f"Excel report saved: {filepath}")
        return filepath

    @staticmethod
    def _best_row(report):
        best = getattr(report, "best", None)
        if best is None:
            return None
        table = report.table()
        match = table.index[
            (table["alpha"] == best.alpha) & (table["beta"] == best.beta) & (table["gamma"] == best.gamma)
        ]
        return int(match[-1]) if len(match) else None

    def _table_sheet(self, wb: Workbook, df: pd.DataFrame, title: str, highlight=None) -> None:
        ws = wb.create_sheet("Results")
        n_cols = max(len(df.columns), 1)
        ws.merge_cells(start_row=1, start_column=1, end_row=1, end_column=n_cols)
        title_cell = ws.cell(row=1, column=1, value=title)
        title_cell.font = Font(bold=True, size=14, color="FFFFFF")
        title_cell.fill = self.header_fill
        title_cell.alignment = Alignment(horizontal="center")

        data_start_row = 3
        for r_idx, row in enumerate(dataframe_to_rows(df, index=False, header=True), start=data_start_row):
            for c_idx, value in enumerate(row, start=1):
                if isinstance(value, float) and value != value:
                    value = None
                cell = ws.cell(row=r_idx, column=c_idx, value=value)
                if r_idx == data_start_row:
                    cell.font = self.header_font
                    cell.fill = self.header_fill
                    cell.alignment = Alignment(horizontal="center", wrap_text=True)
                else:
                    if isinstance(value, float):
                        cell.number_format = self.number_format
                    if highlight is not None and r_idx - data_start_row - 1 == highlight:
                        cell.fill = self.best_fill
                cell.border = self.border

        for c_idx, name in enumerate(df.columns, start=1):
            ws.column_dimensions[get_column_letter(c_idx)].width = max(12, min(len(str(name)) + 4, 40))
