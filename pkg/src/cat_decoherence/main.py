import logging
import sys
import time

from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.text import Text

from cat_decoherence.errors import CatDecoherenceError
from cat_decoherence.utils.config import Config, default_config_text
from cat_decoherence.utils.timing import display_timing_summary, format_duration
from cat_decoherence.workflow import DecoherenceWorkflow

LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


def setup_logging(verbosity: int, console: Console) -> None:
    """Route library logging through rich; -v for INFO, -vv for DEBUG."""
    level = LOG_LEVELS[min(verbosity, len(LOG_LEVELS) - 1)]
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=verbosity >= 2)],
        force=True,
    )


def main(argv: list[str] | None = None) -> int:
    start_time = time.time()
    console = Console()
    verbosity = 0

    try:
        config_manager = Config(console)
        command, run_config, options = config_manager.parse_arguments(argv)
        if command == "print-defaults":
            sys.stdout.write(default_config_text())
            return 0

        verbosity = options["verbosity"]
        quiet = options["quiet"]
        setup_logging(verbosity, console)

        workflow = DecoherenceWorkflow(run_config, options, console)
        workflow.execute(command)
        workflow_duration = time.time() - start_time
        workflow.finalize(command, format_duration(workflow_duration))
        workflow.raise_for_failures()
    except CatDecoherenceError as e:
        console.print(Panel(Text(f"{type(e).__name__}: {e}", style="bold red"), border_style="red"))
        if verbosity >= 2:
            console.print_exception()
        return e.exit_code

    if not quiet:
        console.rule("[bold cyan]Run Summary", style="cyan")
        console.print(
            f"[bold cyan]Total run time:[/bold cyan] {format_duration(workflow_duration)}"
        )
        display_timing_summary(console, workflow.timer.get_tracking_data())
    else:
        elapsed = format_duration(workflow_duration)
        console.print(f"\n[bold green]✓ {command} complete in {elapsed}[/bold green]")
    console.print(f"[green]Output saved to: {options['output_dir']}[/green]")
    return 0


if __name__ == "__main__":
    sys.exit(main())
