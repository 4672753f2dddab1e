"""High-resolution piano transcription targets: encoding, decoding and evaluation."""

__version__ = "0.1.0"

__all__ = [
    "core",
    "midi_io",
    "grid_io",
    "target_encoder",
    "peak_refine",
    "note_decoder",
    "pedal_decoder",
    "evaluation",
    "noise_lab",
    "pipeline",
]
