#!/usr/bin/env python
"""
Export Tool for self-check and benchmark reports
Saves reports under the results directory instead of only printing them
"""
import csv
import io
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from io_formats import atomic_write_bytes

logger = logging.getLogger(__name__)


class ExportTool:
    """Tool to export reports to files"""

    def __init__(self, output_dir: str = "results"):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def _default_name(self, kind: str, extension: str) -> str:
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        return f"{kind}_{timestamp}.{extension}"

    def export_to_tsv(
        self,
        rows: List[List[Any]],
        columns: List[str],
        kind: str = "report",
        filename: Optional[str] = None
    ) -> Dict[str, Any]:
        """
        Export table rows as tab-separated values

        Args:
            rows: Table rows
            columns: Column names
            kind: Prefix for the generated filename
            filename: Optional custom filename

        Returns:
            Export summary
        """
        filepath = self.output_dir / (filename or self._default_name(kind, "tsv"))

        try:
            buffer = io.StringIO()
            writer = csv.writer(buffer, delimiter="\t", lineterminator="\n")
            writer.writerow(columns)
            writer.writerows(rows)
            atomic_write_bytes(filepath, buffer.getvalue().encode("utf-8"))

            return {
                "success": True,
                "filepath": str(filepath.absolute()),
                "rows_exported": len(rows),
                "columns": len(columns),
                "format": "tsv"
            }

        except Exception as e:
            logger.error(f"TSV export to {filepath} failed: {e}")
            return {
                "success": False,
                "error": str(e)
            }

    def export_to_json(
        self,
        report: Dict[str, Any],
        kind: str = "report",
        filename: Optional[str] = None
    ) -> Dict[str, Any]:
        """
        Export a report dict as JSON with an export metadata block

        Args:
            report: Report contents (e.g. SelfCheckReport.model_dump())
            kind: Prefix for the generated filename
            filename: Optional custom filename

        Returns:
            Export summary
        """
        filepath = self.output_dir / (filename or self._default_name(kind, "json"))

        try:
            document = {
                "metadata": {
                    "exported_at": datetime.now().isoformat(),
                    "kind": kind
                },
                "report": report
            }
            payload = json.dumps(document, indent=2, default=str).encode("utf-8")
            atomic_write_bytes(filepath, payload)

            return {
                "success": True,
                "filepath": str(filepath.absolute()),
                "format": "json"
            }

        except Exception as e:
            logger.error(f"JSON export to {filepath} failed: {e}")
            return {
                "success": False,
                "error": str(e)
            }
