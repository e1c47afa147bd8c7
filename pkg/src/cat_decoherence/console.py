import threading

from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn


class RunProgressManager:
    """Manages a single progress bar over the work items of a run."""

    def __init__(self, console: Console, total_steps: int = 0):
        self.console = console
        self.total_steps = total_steps
        self.completed = 0
        self._lock = threading.Lock()
        self.progress = Progress(
            SpinnerColumn(),
            TextColumn("[bold blue]{task.description}"),
            BarColumn(),
            TextColumn("[progress.percentage]{task.percentage:>3.0f}%"),
            TimeElapsedColumn(),
            console=console,
            transient=False,
        )
        self.task_id = None
        self.progress_started = False

    def start(self):
        """Start the progress display."""
        if not self.progress_started:
            self.progress.start()
            self.task_id = self.progress.add_task("Initializing...", total=self.total_steps)
            self.progress_started = True

    def add_steps(self, count: int):
        """Grow the bar by ``count`` items."""
        self.total_steps += count
        if self.task_id is not None:
            self.progress.update(self.task_id, total=self.total_steps)

    def set_stage(self, stage: str):
        """Show the running stage and how many work items are done so far."""
        if not self.progress_started:
            self.start()
        if self.task_id is None:
            return
        with self._lock:
            done = self.completed
        self.progress.update(self.task_id, description=f"{stage} [dim]({done} done)[/dim]")

    def advance(self, count: int = 1):
        """Mark ``count`` items as done; safe to call from worker threads."""
        with self._lock:
            self.completed += count
        if self.task_id is not None:
            self.progress.advance(self.task_id, count)

    def stop(self):
        """Stop the progress display."""
        if self.progress_started:
            self.progress.stop()
            self.progress_started = False
