import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

import typer
from rich.logging import RichHandler

from hrtranscribe import ui
from hrtranscribe.config import load_settings, parse_duration, parse_duration_list, parse_int_list
from hrtranscribe.core import Thresholds
from hrtranscribe.errors import ConfigError, HRTError
from hrtranscribe.evaluation import (
    OFFSET_SWEEP_TOLERANCES,
    ONSET_SWEEP_TOLERANCES,
    MatchConfig,
    evaluate_sequences,
    report_to_frame,
    sweep_to_frame,
    tolerance_sweep,
)
from hrtranscribe.grid_io import (
    has_pedal_bundle,
    read_note_bundle,
    read_pedal_bundle,
    write_note_bundle,
    write_pedal_bundle,
)
from hrtranscribe.midi_io import NoteSequence, extend_notes_with_pedals, read_midi_file, write_midi_file
from hrtranscribe.noise_lab import NoiseConfig, curves_frame, perturb_events, robustness_report
from hrtranscribe.note_decoder import decode_notes
from hrtranscribe.pedal_decoder import decode_pedals
from hrtranscribe.pipeline import encode_sequence, encoding_grid, j_sweep, j_sweep_to_frame, roundtrip

app = typer.Typer(help="High-resolution piano transcription: target encoding, decoding and evaluation.")
console = ui.console
logger = logging.getLogger("hrtranscribe")

FORMATS = {"hrtg": ".hrtg", "csv": ".csv"}


@contextmanager
def handled_errors():
    """Muestra los errores del dominio en un panel rojo y sale con código 1."""
    try:
        yield
    except HRTError as e:
        ui.display_error(str(e))
        raise typer.Exit(code=1)
    except OSError as e:
        ui.display_error(f"I/O error: {e}")
        raise typer.Exit(code=1)


def _suffix(fmt: str) -> str:
    if fmt not in FORMATS:
        raise ConfigError(f"Unknown grid format '{fmt}': expected one of {', '.join(FORMATS)}")
    return FORMATS[fmt]


def _thresholds(**overrides: Optional[float]) -> Thresholds:
    # Valores por defecto desde .env / entorno; los flags sólo sobreescriben lo que se pasa
    s = load_settings()
    base = Thresholds(
        onset=s.onset_threshold,
        offset=s.offset_threshold,
        frame=s.frame_threshold,
        pedal_onset=s.pedal_onset_threshold,
        pedal_offset=s.pedal_offset_threshold,
        pedal_frame=s.pedal_frame_threshold,
    )
    return base.with_overrides(**overrides)


def _match_config(onset_tolerance: str, offset_tolerance: str, offset_ratio: float, velocity_tolerance: float) -> MatchConfig:
    return MatchConfig(
        onset_tolerance_seconds=parse_duration(onset_tolerance),
        offset_tolerance_seconds=parse_duration(offset_tolerance),
        offset_ratio=offset_ratio,
        velocity_tolerance=velocity_tolerance,
        empty_score=load_settings().empty_score,
    )


def _default_hop() -> str:
    return f"{load_settings().hop_seconds!r}s"


def _load(path: Path, extend_pedal: bool = False) -> NoteSequence:
    seq = read_midi_file(path)
    return extend_notes_with_pedals(seq) if extend_pedal else seq


@app.callback()
def cli(
    log_level: str = typer.Option(
        lambda: load_settings().log_level,
        "--log-level",
        help="Logging level (DEBUG, INFO, WARNING, ERROR).",
    ),
):
    """
    High-resolution piano transcription toolkit.
    """
    level = logging.getLevelName(log_level.upper())
    if not isinstance(level, int):
        raise typer.BadParameter(f"Unknown log level '{log_level}'", param_hint="--log-level")
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, rich_tracebacks=True, show_path=False)],
        force=True,
    )


@app.command()
def encode(
    midi: Path = typer.Argument(..., help="Input MIDI file."),
    out_dir: Path = typer.Argument(..., help="Directory for the grid bundle."),
    hop: str = typer.Option(_default_hop, "--hop", help="Frame hop, e.g. '10ms'."),
    j: int = typer.Option(lambda: load_settings().j, "--j", help="Target half-width in frames."),
    fmt: str = typer.Option("hrtg", "--format", help="Grid file format: hrtg or csv."),
    extend_pedal: bool = typer.Option(False, "--extend-pedal", help="Hold notes released under the sustain pedal."),
):
    """
    Encode a MIDI file into onset/offset regression, frame and velocity grids.
    """
    with handled_errors():
        hop_seconds = parse_duration(hop)
        suffix = _suffix(fmt)
        seq = _load(midi, extend_pedal)

        notes, pedals = encode_sequence(seq, encoding_grid(seq, hop_seconds), j)
        write_note_bundle(out_dir, notes.as_bundle(), suffix)
        write_pedal_bundle(out_dir, pedals.as_bundle(), suffix)

        console.print(f"[bold green]Encoded[/bold green] {len(seq.notes)} notes and {len(seq.pedals)} pedal spans from {midi}")
        ui.display_grid_dimensions(
            f"Grids written to {out_dir}", {"notes": notes.grid, "pedal": pedals.grid}
        )


@app.command()
def decode(
    grid_dir: Path = typer.Argument(..., help="Directory holding a grid bundle."),
    out_midi: Path = typer.Argument(..., help="Output MIDI file."),
    onset_threshold: Optional[float] = typer.Option(None, "--onset-threshold"),
    offset_threshold: Optional[float] = typer.Option(None, "--offset-threshold"),
    frame_threshold: Optional[float] = typer.Option(None, "--frame-threshold"),
    pedal_onset_threshold: Optional[float] = typer.Option(None, "--pedal-onset-threshold"),
    pedal_offset_threshold: Optional[float] = typer.Option(None, "--pedal-offset-threshold"),
    pedal_frame_threshold: Optional[float] = typer.Option(None, "--pedal-frame-threshold"),
    fmt: str = typer.Option("hrtg", "--format", help="Grid file format: hrtg or csv."),
    hop: str = typer.Option(_default_hop, "--hop", help="Frame hop of CSV grids."),
    ticks_per_quarter: int = typer.Option(lambda: load_settings().ticks_per_quarter, "--ticks-per-quarter"),
    tempo_bpm: float = typer.Option(lambda: load_settings().tempo_bpm, "--tempo"),
):
    """
    Decode a grid bundle into a MIDI file with notes and sustain-pedal events.
    """
    with handled_errors():
        thresholds = _thresholds(
            onset=onset_threshold,
            offset=offset_threshold,
            frame=frame_threshold,
            pedal_onset=pedal_onset_threshold,
            pedal_offset=pedal_offset_threshold,
            pedal_frame=pedal_frame_threshold,
        )
        suffix = _suffix(fmt)
        hop_seconds = parse_duration(hop) if suffix == ".csv" else None

        bundle = read_note_bundle(grid_dir, suffix, hop_seconds)
        notes = decode_notes(bundle, thresholds)
        pedals = []
        if has_pedal_bundle(grid_dir, suffix):
            pedals = decode_pedals(read_pedal_bundle(grid_dir, suffix, hop_seconds), thresholds)
        else:
            logger.info("No pedal grids in %s; writing notes only", grid_dir)

        seq = NoteSequence.build(notes, pedals, duration_seconds=bundle.grid.duration_seconds)
        write_midi_file(seq, out_midi, ticks_per_quarter=ticks_per_quarter, tempo_bpm=tempo_bpm)
        console.print(f"[bold green]Decoded[/bold green] {len(seq.notes)} notes and {len(seq.pedals)} pedal spans into {out_midi}")


@app.command("eval")
def evaluate(
    ref: Path = typer.Argument(..., help="Reference MIDI file."),
    est: Path = typer.Argument(..., help="Estimated MIDI file."),
    hop: str = typer.Option(_default_hop, "--hop", help="Hop of the frame-level rolls."),
    onset_tolerance: str = typer.Option("50ms", "--onset-tolerance"),
    offset_tolerance: str = typer.Option("50ms", "--offset-tolerance"),
    offset_ratio: float = typer.Option(0.2, "--offset-ratio"),
    velocity_tolerance: float = typer.Option(0.1, "--velocity-tolerance"),
    sweep_onset: Optional[str] = typer.Option(None, "--sweep-onset", help="Comma-separated onset tolerances with units, e.g. '2ms,5ms,10ms,20ms,50ms,100ms'; bare numbers are rejected."),
    csv: Optional[Path] = typer.Option(None, "--csv", help="Write the metrics table as CSV."),
):
    """
    Compare an estimated MIDI file with a reference: frame, note and pedal metrics.
    """
    with handled_errors():
        hop_seconds = parse_duration(hop)
        cfg = _match_config(onset_tolerance, offset_tolerance, offset_ratio, velocity_tolerance)
        tolerances = parse_duration_list(sweep_onset) if sweep_onset else None

        reference = read_midi_file(ref)
        estimate = read_midi_file(est)
        report = evaluate_sequences(reference, estimate, hop_seconds, cfg)
        ui.display_metrics(f"{est.name} vs {ref.name}", report)

        if tolerances:
            results = tolerance_sweep(reference.notes, estimate.notes, tolerances, "onset", cfg)
            ui.display_sweep("Onset tolerance sweep", results)
        if csv is not None:
            report_to_frame(report).to_csv(csv, index=False)
            console.print(f"[dim]Metrics written to {csv}[/dim]")


@app.command("roundtrip")
def roundtrip_command(
    midi: Path = typer.Argument(..., help="Input MIDI file."),
    hop: str = typer.Option(_default_hop, "--hop"),
    j: int = typer.Option(lambda: load_settings().j, "--j"),
    noise: Optional[str] = typer.Option(None, "--noise", help="Shift labels by Uniform(-A, +A) before encoding, e.g. '50ms'."),
    seed: int = typer.Option(lambda: load_settings().seed, "--seed"),
    extend_pedal: bool = typer.Option(False, "--extend-pedal"),
):
    """
    Encode a MIDI file, decode the targets back and report the errors against the original.
    """
    with handled_errors():
        hop_seconds = parse_duration(hop)
        noise_cfg = NoiseConfig(parse_duration(noise), seed) if noise else None
        seq = _load(midi, extend_pedal)

        report = roundtrip(seq, hop_seconds, j, _thresholds(), noise_cfg)
        ui.display_roundtrip(report)


@app.command()
def perturb(
    midi: Path = typer.Argument(..., help="Input MIDI file."),
    out_midi: Path = typer.Argument(..., help="Output MIDI file."),
    noise: str = typer.Option("50ms", "--noise", help="Half-width A of the uniform shift."),
    seed: int = typer.Option(lambda: load_settings().seed, "--seed"),
):
    """
    Shift every note onset and offset by Uniform(-A, +A) and write the result.
    """
    with handled_errors():
        cfg = NoiseConfig(parse_duration(noise), seed)
        settings = load_settings()
        seq = perturb_events(read_midi_file(midi), cfg)
        write_midi_file(seq, out_midi, ticks_per_quarter=settings.ticks_per_quarter, tempo_bpm=settings.tempo_bpm)
        console.print(f"[bold green]Perturbed[/bold green] {len(seq.notes)} notes (A={cfg.half_width_seconds * 1000:g} ms, seed {seed}) into {out_midi}")


@app.command()
def sweep(
    ref: Path = typer.Argument(..., help="Reference MIDI file (the only input in 'j' mode)."),
    est: Optional[Path] = typer.Argument(None, help="Estimated MIDI file (onset/offset modes)."),
    mode: str = typer.Option("onset", "--mode", help="onset, offset or j."),
    tolerances: Optional[str] = typer.Option(None, "--tolerances", help="Comma-separated tolerances, e.g. '10ms,20ms'."),
    js: str = typer.Option("2,5,10,20", "--js", help="J values of the 'j' mode."),
    hop: str = typer.Option(_default_hop, "--hop"),
    pedals: bool = typer.Option(False, "--pedals", help="Sweep the pedal events instead of the notes."),
    csv: Optional[Path] = typer.Option(None, "--csv", help="Write the sweep table as CSV."),
):
    """
    Evaluate across a grid of onset or offset tolerances, or round trip across target widths J.
    """
    with handled_errors():
        if mode not in ("onset", "offset", "j"):
            raise ConfigError(f"Unknown sweep mode '{mode}': expected onset, offset or j")

        if mode == "j":
            hop_seconds = parse_duration(hop)
            j_values = parse_int_list(js)
            rows = j_sweep(read_midi_file(ref), hop_seconds, j_values, _thresholds())
            frame = j_sweep_to_frame(rows)
            ui.display_frame("J sweep", frame, milliseconds=("max_onset_error", "mean_onset_error"))
        else:
            if est is None:
                raise ConfigError(f"The '{mode}' sweep needs an estimated MIDI file")
            default = ONSET_SWEEP_TOLERANCES if mode == "onset" else OFFSET_SWEEP_TOLERANCES
            values = parse_duration_list(tolerances) if tolerances else list(default)
            reference, estimate = read_midi_file(ref), read_midi_file(est)
            if pedals:
                results = tolerance_sweep(reference.pedals, estimate.pedals, values, mode)
            else:
                results = tolerance_sweep(reference.notes, estimate.notes, values, mode)
            ui.display_sweep(f"{mode.capitalize()} tolerance sweep", results)
            frame = sweep_to_frame(results)

        if csv is not None:
            frame.to_csv(csv, index=False)
            console.print(f"[dim]Sweep written to {csv}[/dim]")


@app.command()
def robustness(
    j: int = typer.Option(lambda: load_settings().j, "--j"),
    hop: str = typer.Option(_default_hop, "--hop"),
    noise: str = typer.Option("50ms", "--noise", help="Half-width A of the label noise."),
    trials: int = typer.Option(1000, "--trials"),
    seed: int = typer.Option(lambda: load_settings().seed, "--seed"),
    csv: Optional[Path] = typer.Option(None, "--csv", help="Per-trial records (trial, kind, t0, estimate, abs_error)."),
    curve_csv: Optional[Path] = typer.Option(None, "--curve-csv", help="Expected-target curves of both target kinds."),
    resolution: str = typer.Option("0.1ms", "--resolution", help="Sampling step of the expected-target curves."),
):
    """
    Measure how precisely onsets are recovered from triangular and two-frame targets under label noise.
    """
    with handled_errors():
        hop_seconds = parse_duration(hop)
        noise_seconds = parse_duration(noise)
        resolution_seconds = parse_duration(resolution)

        # Curvas primero: nada se escribe si la resolución no es válida
        curves = curves_frame(j, hop_seconds, noise_seconds, resolution_seconds) if curve_csv is not None else None
        report = robustness_report(j, hop_seconds, noise_seconds, trials, seed)
        summary = report.summary().reset_index()
        ui.display_frame(
            f"Onset error over {trials} trials (A={noise_seconds * 1000:g} ms)", summary, milliseconds=("max", "mean")
        )

        if csv is not None:
            report.to_frame().to_csv(csv, index=False)
            console.print(f"[dim]Trials written to {csv}[/dim]")
        if curves is not None:
            curves.to_csv(curve_csv, index=False)
            console.print(f"[dim]Curves written to {curve_csv}[/dim]")


if __name__ == "__main__":
    app()
