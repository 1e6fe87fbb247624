"""JSON summaries with sorted keys and full float precision."""

from pathlib import Path
from typing import Any, Dict, Union

from loguru import logger

from ..utils.provenance import canonical_json


class JSONReporter:
    def __init__(self, output_dir: Union[str, Path] = "output"):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def write(self, payload: Any, filename: str = "summary.json") -> Path:
        """Write any model or plain structure as canonical JSON."""
        path = self.output_dir / filename
        path.write_text(canonical_json(payload, indent=2) + "\n", encoding="utf-8")
        logger.info(f"JSON report saved: {path}")
        return path

    def write_report(self, report, filename: str = "summary.json") -> Path:
        """Full report dump; it validates back into the same report model."""
        return self.write(report, filename)

    def write_dict(self, data: Dict[str, Any], filename: str) -> Path:
        return self.write(data, filename)
