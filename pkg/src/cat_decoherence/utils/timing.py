import time
from collections.abc import Iterator
from contextlib import contextmanager

from rich.console import Console
from rich.table import Table


class StageTimer:
    """Tracks wall time and item counts across the stages of a run."""

    def __init__(self):
        self.timing_tracking = {
            "stages": [],
            "total_time": 0.0,
            "total_items": 0,
        }

    def add_stage(self, stage_name: str, seconds: float, items: int = 0) -> None:
        """Add a finished stage to tracking."""
        self.timing_tracking["stages"].append(
            {"stage": stage_name, "seconds": seconds, "items": items}
        )
        self.timing_tracking["total_time"] += seconds
        self.timing_tracking["total_items"] += items

    @contextmanager
    def stage(self, stage_name: str, items: int = 0) -> Iterator[None]:
        """Time the enclosed block as one stage."""
        start = time.perf_counter()
        try:
            yield
        finally:
            self.add_stage(stage_name, time.perf_counter() - start, items)

    def get_tracking_data(self) -> dict:
        """Get the complete tracking data."""
        return self.timing_tracking


def display_timing_summary(console: Console, timing_tracking: dict) -> None:
    """Display a summary table of stage timings."""
    table = Table(title="Stage Timing Summary")
    table.add_column("Stage", style="cyan")
    table.add_column("Items", justify="right", style="blue")
    table.add_column("Time", justify="right", style="green")

    for stage in timing_tracking["stages"]:
        table.add_row(stage["stage"], str(stage["items"]), format_duration(stage["seconds"]))

    table.add_section()
    table.add_row(
        "[bold]TOTAL",
        f"[bold]{timing_tracking['total_items']}",
        f"[bold]{format_duration(timing_tracking['total_time'])}",
    )

    console.print(table)


def format_duration(seconds: float) -> str:
    """Format duration in seconds to human-readable format."""
    if seconds < 60:
        return f"{seconds:.1f} seconds"
    elif seconds < 3600:
        minutes = int(seconds // 60)
        remaining_seconds = seconds % 60
        return f"{minutes}m {remaining_seconds:.1f}s"
    else:
        hours = int(seconds // 3600)
        remaining_minutes = int((seconds % 3600) // 60)
        remaining_seconds = seconds % 60
        return f"{hours}h {remaining_minutes}m {remaining_seconds:.1f}s"
