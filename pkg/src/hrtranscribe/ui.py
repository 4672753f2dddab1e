from typing import Dict, Sequence, Tuple

import pandas as pd
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from hrtranscribe.core import TimeGrid
from hrtranscribe.evaluation import EvalResult

console = Console()


def _pct(value: float) -> str:
    return f"{value * 100:.2f}%"


def display_error(message: str):
    """Displays a failed command."""
    console.print(Panel(f"[bold red]Error:[/bold red] {message}", title="Error", border_style="red"))


def display_grid_dimensions(title: str, grids: Dict[str, TimeGrid]):
    """Displays the T x K shape of each written grid."""
    table = Table(title=f"[bold]{title}[/bold]", show_header=True, header_style="bold magenta")
    table.add_column("Grid", style="dim", width=20)
    table.add_column("Frames (T)", justify="right")
    table.add_column("Keys (K)", justify="right")
    table.add_column("Hop", justify="right")
    for name, grid in grids.items():
        table.add_row(f"[bold blue]{name}[/bold blue]", str(grid.num_frames), str(grid.num_keys), f"{grid.hop_seconds * 1000:g} ms")
    console.print(table)


def display_metrics(title: str, report: Dict[str, EvalResult]):
    """Displays one row per metric group, like a transcription results table."""
    table = Table(title=f"[bold]{title}[/bold]", show_header=True, header_style="bold magenta")
    table.add_column("Metric", style="dim", width=28)
    table.add_column("Precision", justify="right")
    table.add_column("Recall", justify="right")
    table.add_column("F1", justify="right", style="bold")
    for name, result in report.items():
        table.add_row(name, _pct(result.precision), _pct(result.recall), _pct(result.f1))
    console.print(table)


def display_sweep(title: str, results: Sequence[Tuple[float, EvalResult]]):
    table = Table(title=f"[bold]{title}[/bold]", show_header=True, header_style="bold magenta")
    table.add_column("Tolerance", justify="right")
    table.add_column("Precision", justify="right")
    table.add_column("Recall", justify="right")
    table.add_column("F1", justify="right", style="bold")
    for tolerance, result in results:
        table.add_row(f"{tolerance * 1000:g} ms", _pct(result.precision), _pct(result.recall), _pct(result.f1))
    console.print(table)


def display_frame(title: str, frame: pd.DataFrame, milliseconds: Sequence[str] = ()):
    """Displays a DataFrame; columns listed in `milliseconds` are seconds shown as ms."""
    table = Table(title=f"[bold]{title}[/bold]", show_header=True, header_style="bold magenta")
    for column in frame.columns:
        table.add_column(str(column), justify="right")
    for row in frame.itertuples(index=False):
        cells = []
        for column, value in zip(frame.columns, row):
            if column in milliseconds:
                cells.append(f"{value * 1000:.6f} ms")
            elif isinstance(value, float):
                cells.append(f"{value:.6g}")
            else:
                cells.append(str(value))
        table.add_row(*cells)
    console.print(table)


def display_roundtrip(report):
    """Displays onset/offset/velocity error statistics and the note F1 of a round trip."""
    table = Table(title="[bold]Round trip[/bold]", show_header=True, header_style="bold magenta")
    table.add_column("Statistic", style="dim", width=28)
    table.add_column("Value", justify="right")
    table.add_row("Reference notes", str(report.num_reference_notes))
    table.add_row("Decoded notes", str(report.num_decoded_notes))
    table.add_row("Max onset error", f"{report.max_onset_error * 1000:.6f} ms")
    table.add_row("Mean onset error", f"{report.mean_onset_error * 1000:.6f} ms")
    table.add_row("Max offset error", f"{report.max_offset_error * 1000:.6f} ms")
    table.add_row("Max velocity error", str(report.max_velocity_error))
    if report.pedal_onset_errors.size:
        table.add_row("Max pedal onset error", f"{report.max_pedal_onset_error * 1000:.6f} ms")
        table.add_row("Max pedal offset error", f"{report.max_pedal_offset_error * 1000:.6f} ms")
    console.print(table)
    display_metrics("Metrics", report.metrics)
