"""
Standard MIDI File (format 0/1) reading and writing.

Messages are decoded and encoded with mido; the chunk layout is scanned first
so malformed files are reported with the byte offset of the offending chunk.
"""

from __future__ import annotations

import io
import logging
import math
import struct
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

import mido

from .core import MAX_PITCH, MIN_PITCH, NoteEvent, PedalEvent, check_pedals_disjoint
from .errors import MidiParseError, MidiWriteError, ValidationError

logger = logging.getLogger(__name__)

SUSTAIN_CONTROL = 64
PEDAL_ON_VALUE = 64  # CC64 >= 64 counts as pressed
DEFAULT_TEMPO = 500000  # microseconds per quarter note (120 BPM)
MAX_DELTA_TICKS = 0x0FFFFFFF  # largest variable-length quantity

# A note that must be sounded and released at the same tick would vanish on re-parse.
_MIN_NOTE_TICKS = 1


@dataclass(frozen=True)
class NoteSequence:
    """Notes sorted by (onset, pitch), pedals sorted by onset, and the clip duration."""

    notes: Tuple[NoteEvent, ...] = ()
    pedals: Tuple[PedalEvent, ...] = ()
    duration_seconds: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "notes", tuple(self.notes))
        object.__setattr__(self, "pedals", tuple(self.pedals))
        keys = [note.sort_key for note in self.notes]
        if keys != sorted(keys):
            raise ValidationError("Notes must be sorted by (onset, pitch)")
        if [p.onset_seconds for p in self.pedals] != sorted(p.onset_seconds for p in self.pedals):
            raise ValidationError("Pedals must be sorted by onset")
        check_pedals_disjoint(list(self.pedals))
        latest = max(
            [n.offset_seconds for n in self.notes] + [p.offset_seconds for p in self.pedals],
            default=0.0,
        )
        if latest > self.duration_seconds + 1e-9:
            raise ValidationError(f"Events end at {latest} s, after the sequence duration {self.duration_seconds} s")

    @classmethod
    def build(
        cls,
        notes: Iterable[NoteEvent] = (),
        pedals: Iterable[PedalEvent] = (),
        duration_seconds: Optional[float] = None,
    ) -> "NoteSequence":
        """Sort the events and default the duration to the latest offset."""
        notes = sorted(notes, key=lambda n: n.sort_key)
        pedals = sorted(pedals, key=lambda p: p.onset_seconds)
        latest = max([n.offset_seconds for n in notes] + [p.offset_seconds for p in pedals], default=0.0)
        duration = latest if duration_seconds is None else max(duration_seconds, latest)
        return cls(tuple(notes), tuple(pedals), duration)

    def notes_for_pitch(self, pitch: int) -> List[NoteEvent]:
        return [note for note in self.notes if note.pitch == pitch]


# ---------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------
def _scan_chunks(data: bytes) -> Tuple[int, int, List[Tuple[int, bytes]]]:
    """Validate the MThd header and split the MTrk chunks.

    Returns (format, ticks_per_quarter, [(chunk byte offset, chunk bytes)]).
    """
    if len(data) < 14:
        raise MidiParseError(f"File is {len(data)} bytes, too short for an MThd header", offset=len(data))
    if data[:4] != b"MThd":
        raise MidiParseError(f"Expected magic b'MThd', found {data[:4]!r}", offset=0)

    length, fmt, ntrks, division = struct.unpack(">IHHH", data[4:14])
    if length < 6:
        raise MidiParseError(f"MThd length {length} is shorter than 6", offset=4)
    if fmt == 2:
        raise MidiParseError("SMF format 2 (independent sequences) is not supported", offset=8)
    if fmt not in (0, 1):
        raise MidiParseError(f"Unknown SMF format {fmt}", offset=8)
    if division & 0x8000:
        raise MidiParseError("SMPTE time division is not supported", offset=12)
    if division == 0:
        raise MidiParseError("Ticks per quarter note is 0", offset=12)
    if fmt == 0 and ntrks != 1:
        raise MidiParseError(f"Format 0 file declares {ntrks} tracks", offset=10)

    tracks: List[Tuple[int, bytes]] = []
    pos = 8 + length
    if pos > len(data):
        raise MidiParseError(f"MThd length {length} runs past the end of the file", offset=4)
    while pos < len(data) and len(tracks) < ntrks:
        if pos + 8 > len(data):
            raise MidiParseError("Truncated chunk header", offset=pos)
        chunk_id, chunk_length = struct.unpack(">4sI", data[pos:pos + 8])
        end = pos + 8 + chunk_length
        if end > len(data):
            raise MidiParseError(
                f"Chunk {chunk_id!r} declares {chunk_length} bytes but only {len(data) - pos - 8} remain",
                offset=pos,
            )
        if chunk_id == b"MTrk":
            tracks.append((pos, data[pos:end]))
        else:
            # Los chunks desconocidos se ignoran, como pide el estándar SMF
            logger.debug("Skipping unknown chunk %r at byte %d", chunk_id, pos)
        pos = end

    if len(tracks) < ntrks:
        raise MidiParseError(f"Header declares {ntrks} tracks, found {len(tracks)}", offset=pos)
    return fmt, division, tracks


def _decode_track(chunk: bytes, offset: int, ticks_per_quarter: int) -> mido.MidiTrack:
    # Each MTrk chunk is decoded on its own so a failure points at its chunk.
    single = b"MThd" + struct.pack(">IHHH", 6, 0, 1, ticks_per_quarter) + chunk
    try:
        midi_file = mido.MidiFile(file=io.BytesIO(single), clip=False)
    except Exception as e:
        raise MidiParseError(f"Malformed track chunk: {e}", offset=offset) from e
    return midi_file.tracks[0]


def parse_midi(data: bytes, drop_out_of_range: bool = False) -> NoteSequence:
    """Parse an SMF byte string into notes and sustain-pedal spans.

    Notes and pedals are independent streams: pedal state never extends note
    offsets here (see extend_notes_with_pedals).
    """
    _, ticks_per_quarter, chunks = _scan_chunks(bytes(data))
    tracks = [_decode_track(chunk, offset, ticks_per_quarter) for offset, chunk in chunks]

    tempo = DEFAULT_TEMPO
    now = 0.0
    open_notes: dict[int, Tuple[float, int]] = {}
    pedal_onset: Optional[float] = None
    notes: List[NoteEvent] = []
    pedals: List[PedalEvent] = []

    def close_note(pitch: int, at: float) -> None:
        onset, velocity = open_notes.pop(pitch)
        if at > onset:
            notes.append(NoteEvent(pitch, onset, at, velocity))
        else:
            logger.debug("Dropping zero-length note %d at %.6f s", pitch, onset)

    try:
        merged = mido.merge_tracks(tracks)
    except Exception as e:
        raise MidiParseError(f"Could not merge tracks: {e}") from e

    for message in merged:
        if message.time:
            now += mido.tick2second(message.time, ticks_per_quarter, tempo)

        if message.type == "set_tempo":
            tempo = message.tempo
        elif message.type == "note_on" and message.velocity > 0:
            pitch = message.note
            if not MIN_PITCH <= pitch <= MAX_PITCH:
                if drop_out_of_range:
                    logger.warning("Skipping note %d at %.3f s: outside the piano range", pitch, now)
                    continue
                raise MidiParseError(
                    f"Note {pitch} at {now:.3f} s is outside the piano range [{MIN_PITCH}, {MAX_PITCH}]"
                )
            if pitch in open_notes:
                # Nota repetida antes del note-off: se trunca la anterior
                close_note(pitch, now)
            open_notes[pitch] = (now, message.velocity)
        elif message.type in ("note_off", "note_on"):
            if message.note in open_notes:
                close_note(message.note, now)
        elif message.type == "control_change" and message.control == SUSTAIN_CONTROL:
            if message.value >= PEDAL_ON_VALUE:
                if pedal_onset is None:
                    pedal_onset = now
            elif pedal_onset is not None:
                if now > pedal_onset:
                    pedals.append(PedalEvent(pedal_onset, now))
                pedal_onset = None

    if open_notes:
        logger.warning("%d notes were still sounding at the end of the file; closing them there", len(open_notes))
        for pitch in list(open_notes):
            close_note(pitch, now)
    if pedal_onset is not None and now > pedal_onset:
        pedals.append(PedalEvent(pedal_onset, now))

    return NoteSequence.build(notes, pedals, duration_seconds=now)


def read_midi_file(path: str | Path, drop_out_of_range: bool = False) -> NoteSequence:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise MidiParseError(f"Cannot read file: {e}", path=str(path)) from e
    try:
        return parse_midi(data, drop_out_of_range=drop_out_of_range)
    except MidiParseError as e:
        e.path = str(path)
        raise


# ---------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------
def _to_ticks(seconds: float, ticks_per_second: float) -> int:
    if not math.isfinite(seconds) or seconds < 0:
        raise MidiWriteError(f"Event time {seconds} cannot be written")
    return int(round(seconds * ticks_per_second))


def write_midi(seq: NoteSequence, ticks_per_quarter: int = 384, tempo_bpm: float = 120.0) -> bytes:
    """Encode a NoteSequence as a two-track SMF (tempo track + performance track)."""
    if ticks_per_quarter < 1 or ticks_per_quarter > 0x7FFF:
        raise MidiWriteError(f"ticks_per_quarter must be in [1, 32767], got {ticks_per_quarter}")
    if not tempo_bpm > 0:
        raise MidiWriteError(f"tempo_bpm must be positive, got {tempo_bpm}")

    tempo = mido.bpm2tempo(tempo_bpm)
    ticks_per_second = ticks_per_quarter * 1e6 / tempo

    # (tick, priority, message): releases sort before presses at the same tick
    roll: List[Tuple[int, int, mido.Message]] = []
    for note in seq.notes:
        on_tick = _to_ticks(note.onset_seconds, ticks_per_second)
        off_tick = max(_to_ticks(note.offset_seconds, ticks_per_second), on_tick + _MIN_NOTE_TICKS)
        roll.append((on_tick, 1, mido.Message("note_on", note=note.pitch, velocity=note.velocity)))
        roll.append((off_tick, 0, mido.Message("note_on", note=note.pitch, velocity=0)))
    for pedal in seq.pedals:
        on_tick = _to_ticks(pedal.onset_seconds, ticks_per_second)
        off_tick = max(_to_ticks(pedal.offset_seconds, ticks_per_second), on_tick + 1)
        roll.append((on_tick, 1, mido.Message("control_change", control=SUSTAIN_CONTROL, value=127)))
        roll.append((off_tick, 0, mido.Message("control_change", control=SUSTAIN_CONTROL, value=0)))
    roll.sort(key=lambda item: (item[0], item[1]))

    midi_file = mido.MidiFile(type=1, ticks_per_beat=ticks_per_quarter)

    track0 = mido.MidiTrack()
    track0.append(mido.MetaMessage("set_tempo", tempo=tempo, time=0))
    track0.append(mido.MetaMessage("time_signature", numerator=4, denominator=4, time=0))
    track0.append(mido.MetaMessage("end_of_track", time=0))
    midi_file.tracks.append(track0)

    track1 = mido.MidiTrack()
    previous = 0
    for tick, _, message in roll:
        delta = tick - previous
        if delta > MAX_DELTA_TICKS:
            raise MidiWriteError(f"Gap of {delta} ticks exceeds the largest MIDI delta time")
        track1.append(message.copy(time=delta))
        previous = tick
    end_tick = max(_to_ticks(seq.duration_seconds, ticks_per_second), previous)
    if end_tick - previous > MAX_DELTA_TICKS:
        raise MidiWriteError(f"Sequence duration {seq.duration_seconds} s exceeds the representable tick range")
    track1.append(mido.MetaMessage("end_of_track", time=end_tick - previous))
    midi_file.tracks.append(track1)

    buffer = io.BytesIO()
    midi_file.save(file=buffer)
    return buffer.getvalue()


def write_midi_file(seq: NoteSequence, path: str | Path, ticks_per_quarter: int = 384, tempo_bpm: float = 120.0) -> None:
    data = write_midi(seq, ticks_per_quarter=ticks_per_quarter, tempo_bpm=tempo_bpm)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


# ---------------------------------------------------------------------
# Sustain extension
# ---------------------------------------------------------------------
def extend_notes_with_pedals(seq: NoteSequence) -> NoteSequence:
    """Hold every note released under a pressed pedal until the pedal is lifted.

    A later note of the same pitch cuts the held note at its own onset.
    """
    extended: List[NoteEvent] = []
    for note in seq.notes:
        offset = note.offset_seconds
        for pedal in seq.pedals:
            if pedal.onset_seconds < offset < pedal.offset_seconds:
                offset = pedal.offset_seconds
                break
        extended.append(NoteEvent(note.pitch, note.onset_seconds, offset, note.velocity))

    by_pitch: dict[int, List[NoteEvent]] = defaultdict(list)
    for note in extended:
        by_pitch[note.pitch].append(note)

    result: List[NoteEvent] = []
    for pitch_notes in by_pitch.values():
        pitch_notes.sort(key=lambda n: n.onset_seconds)
        for current, following in zip(pitch_notes, pitch_notes[1:] + [None]):
            offset = current.offset_seconds
            if following is not None and following.onset_seconds < offset:
                offset = following.onset_seconds
            if offset > current.onset_seconds:
                result.append(NoteEvent(current.pitch, current.onset_seconds, offset, current.velocity))
    return NoteSequence.build(result, seq.pedals, duration_seconds=seq.duration_seconds)
