"""Console formatting of metrics and result tables."""

from typing import Iterable, Mapping, Optional, Sequence

from rich.table import Table


def format_metric(mean: Optional[float], stderr: Optional[float] = None, digits: int = 3) -> str:
    """``0.830 ± 0.003`` style text; missing values render as ``-``."""
    if mean is None:
        return "-"
    if stderr is None:
        return f"{mean:.{digits}f}"
    return f"{mean:.{digits}f} ± {stderr:.{digits}f}"


def format_params(alpha: float, beta: float, gamma: float) -> str:
    return f"α={alpha:.4g}, β={beta:.4g}, γ={gamma:.4g}"


def rows_table(
    title: str,
    columns: Sequence[str],
    rows: Iterable[Mapping[str, object]],
    highlight: Optional[int] = None,
) -> Table:
    """Rich table of dict rows; the ``highlight`` row is shown in bold green."""
    table = Table(title=title, show_header=True, header_style="bold magenta")
    for i, name in enumerate(columns):
        table.add_column(name, style="cyan" if i == 0 else "white", justify="left" if i == 0 else "right")
    for i, row in enumerate(rows):
        cells = []
        for name in columns:
            value = row.get(name)
            if isinstance(value, float):
                cells.append(f"{value:.4f}")
            elif value is None:
                cells.append("-")
            else:
                cells.append(str(value))
        table.add_row(*cells, style="bold green" if i == highlight else None)
    return table
