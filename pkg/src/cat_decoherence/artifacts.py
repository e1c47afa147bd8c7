"""Preservation of run outputs: CSV tables, SVG figures, the manifest and the run summary."""

import json
import os
from collections.abc import Callable, Iterable, Sequence
from datetime import datetime

from rich.console import Console

from cat_decoherence.utils.file import write_csv


class ArtifactManager:
    """Owns every file written by one run and keeps an index of them."""

    def __init__(self, output_dir: str, console: Console):
        self.output_dir = output_dir
        self.console = console
        self.artifact_index: dict[str, list[str]] = {}
        os.makedirs(output_dir, exist_ok=True)

    def _write_file(self, directory: str, filename: str, content: str | None) -> None:
        """Write content to a file if content is provided."""
        if content:
            with open(os.path.join(directory, filename), "w", encoding="utf-8") as f:
                f.write(content)

    def save_csv(
        self, filename: str, header: Sequence[str], rows: Iterable[Sequence], kind: str = "tables"
    ) -> str:
        """Write one CSV table below the output directory."""
        path = write_csv(os.path.join(self.output_dir, filename), header, rows)
        self._record_artifact(kind, path)
        return path

    def save_svg(self, filename: str, draw: Callable[[str], str]) -> str:
        """Render a figure through ``draw(path)`` and record it."""
        path = draw(os.path.join(self.output_dir, filename))
        self._record_artifact("figures", path)
        return path

    def save_text(self, filename: str, content: str, kind: str = "text") -> str:
        self._write_file(self.output_dir, filename, content)
        path = os.path.join(self.output_dir, filename)
        self._record_artifact(kind, path)
        return path

    def save_manifest(
        self,
        *,
        command: str,
        version: str,
        config: dict,
        tolerances: dict[str, float] | None = None,
        oracle_records: list[dict] | None = None,
        timing: dict | None = None,
        duration_human: str = "",
        results: dict | None = None,
    ) -> str:
        """Write manifest.txt (keyed lines) and run_summary.json (the same content)."""
        summary = {
            "tool": "cat-decoherence",
            "version": version,
            "command": command,
            "timestamp": datetime.now().isoformat(),
            "config": config,
            "tolerances": tolerances or {},
            "results": results or {},
            "oracle_records": oracle_records or [],
            "timing": {
                "total_time_seconds": (timing or {}).get("total_time", 0.0),
                "total_time_human": duration_human,
                "stages": (timing or {}).get("stages", []),
            },
            "artifacts": self.artifact_index,
        }

        lines = [
            f"tool: {summary['tool']}",
            f"version: {version}",
            f"command: {command}",
            f"timestamp: {summary['timestamp']}",
            f"config: {json.dumps(config, sort_keys=True)}",
        ]
        for name, value in summary["tolerances"].items():
            lines.append(f"tolerance.{name}: {value!r}")
        for name, value in summary["results"].items():
            lines.append(f"result.{name}: {json.dumps(value, default=str)}")
        for index, record in enumerate(summary["oracle_records"]):
            lines.append(f"oracle.{index}: {json.dumps(record, default=str)}")
        for stage in summary["timing"]["stages"]:
            lines.append(f"timing.{stage['stage']}: {stage['seconds']:.3f}")
        for kind, paths in sorted(self.artifact_index.items()):
            lines.append(f"artifacts.{kind}: {', '.join(paths)}")

        self._write_file(self.output_dir, "manifest.txt", "\n".join(lines) + "\n")
        summary_file = os.path.join(self.output_dir, "run_summary.json")
        with open(summary_file, "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2, default=str)

        self.console.print(f"[bold cyan]Run summary saved to: {summary_file}[/bold cyan]")
        return os.path.join(self.output_dir, "manifest.txt")

    def _record_artifact(self, kind: str, path: str) -> None:
        """Record a relative reference to an artifact for inclusion in the summary."""
        self.artifact_index.setdefault(kind, []).append(os.path.relpath(path, self.output_dir))
