"""
Serialization of T x K grids: the HRTG binary format, CSV interop, and grid
bundle directories.

HRTG layout (little-endian):
    magic "HRTG" | version u32 = 1 | num_frames u32 | num_keys u32 | hop_microseconds u32
    followed by num_frames * num_keys float32 values, time-major.
"""

from __future__ import annotations

import io
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import chardet
import numpy as np
import pandas as pd

from .core import RegressionGrid, TimeGrid
from .errors import BundleError, GridFormatError

logger = logging.getLogger(__name__)

MAGIC = b"HRTG"
VERSION = 1
HEADER = struct.Struct("<4sIIII")
VALUE_SLACK = 1e-6

NOTE_BUNDLE_FILES = {
    "frame": "frame.hrtg",
    "onset_reg": "onset.hrtg",
    "offset_reg": "offset.hrtg",
    "velocity": "velocity.hrtg",
}
PEDAL_BUNDLE_FILES = {
    "frame": "ped_frame.hrtg",
    "onset_reg": "ped_onset.hrtg",
    "offset_reg": "ped_offset.hrtg",
}


@dataclass(frozen=True)
class GridFileHeader:
    magic: bytes
    version: int
    num_frames: int
    num_keys: int
    hop_microseconds: int

    @property
    def payload_bytes(self) -> int:
        return self.num_frames * self.num_keys * 4


def _hop_to_microseconds(hop_seconds: float) -> int:
    return int(round(hop_seconds * 1e6))


def _validated_values(values: np.ndarray, where: str) -> np.ndarray:
    """Apply the read-side tolerance: values within 1e-6 of [0, 1] are clamped, the rest rejected."""
    if np.isnan(values).any():
        raise GridFormatError(f"{where}: payload contains NaN")
    if values.size and (values.min() < -VALUE_SLACK or values.max() > 1.0 + VALUE_SLACK):
        raise GridFormatError(
            f"{where}: values must lie in [0, 1], found range [{values.min()}, {values.max()}]"
        )
    clamped = np.clip(values, 0.0, 1.0)
    if not np.array_equal(clamped, values):
        logger.debug("%s: clamped %d values into [0, 1]", where, int(np.count_nonzero(clamped != values)))
    return clamped


# ---------------------------------------------------------------------
# Binary format
# ---------------------------------------------------------------------
def write_grid(grid: RegressionGrid) -> bytes:
    header = HEADER.pack(
        MAGIC, VERSION, grid.grid.num_frames, grid.grid.num_keys, _hop_to_microseconds(grid.grid.hop_seconds)
    )
    payload = np.ascontiguousarray(grid.values, dtype="<f4").tobytes(order="C")
    return header + payload


def read_grid_header(data: bytes) -> GridFileHeader:
    if len(data) < HEADER.size:
        raise GridFormatError(f"Header needs {HEADER.size} bytes, got {len(data)}")
    header = GridFileHeader(*HEADER.unpack_from(data, 0))
    if header.magic != MAGIC:
        raise GridFormatError(f"Bad magic: expected {MAGIC!r}, found {header.magic!r}")
    if header.version != VERSION:
        raise GridFormatError(f"Unsupported version: expected {VERSION}, found {header.version}")
    if header.num_frames < 1 or header.num_keys < 1 or header.hop_microseconds < 1:
        raise GridFormatError(
            f"Invalid dimensions T={header.num_frames}, K={header.num_keys}, hop={header.hop_microseconds} us"
        )
    return header


def read_grid(data: bytes) -> RegressionGrid:
    header = read_grid_header(data)
    expected = HEADER.size + header.payload_bytes
    if len(data) < expected:
        raise GridFormatError(
            f"Truncated payload: expected {header.payload_bytes} bytes of values, found {len(data) - HEADER.size}"
        )
    if len(data) > expected:
        logger.warning("Ignoring %d trailing bytes after the grid payload", len(data) - expected)
    values = np.frombuffer(data, dtype="<f4", count=header.num_frames * header.num_keys, offset=HEADER.size)
    values = values.astype(np.float64).reshape(header.num_frames, header.num_keys)
    time_grid = TimeGrid(header.hop_microseconds / 1e6, header.num_frames, header.num_keys)
    return RegressionGrid(time_grid, _validated_values(values, "HRTG payload"))


# ---------------------------------------------------------------------
# CSV format
# ---------------------------------------------------------------------
def detect_text_encoding(raw: bytes) -> str:
    """Detect the encoding of a CSV grid (BOM first, chardet next, utf-8 as fallback)."""
    if not raw:
        return "utf-8"
    if raw.startswith(b"\xef\xbb\xbf"):
        return "utf-8-sig"
    if raw.startswith((b"\xff\xfe", b"\xfe\xff")):
        # El codec utf-16 consume el BOM
        return "utf-16"

    result = chardet.detect(raw[:32768])
    encoding = result.get("encoding") or "utf-8"
    confidence = result.get("confidence", 0) or 0
    if confidence > 0.7:
        try:
            raw.decode(encoding)
            return encoding
        except (UnicodeDecodeError, LookupError):
            pass
    for fallback in ("utf-8", "utf-16le", "latin1"):
        try:
            raw.decode(fallback)
            return fallback
        except (UnicodeDecodeError, LookupError):
            continue
    return "utf-8"


def read_grid_csv(text: str, hop_seconds: float) -> RegressionGrid:
    """Parse T lines of K comma-separated decimals into a grid."""
    rows = []
    width: Optional[int] = None
    for line_number, line in enumerate(io.StringIO(text, newline=None), start=1):
        line = line.strip()
        if not line:
            continue
        cells = line.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise GridFormatError(f"expected {width} cells, found {len(cells)}", line=line_number)
        try:
            rows.append([float(cell) for cell in cells])
        except ValueError as e:
            raise GridFormatError(f"non-numeric cell ({e})", line=line_number) from e
    if not rows:
        raise GridFormatError("CSV grid is empty")

    # Same precision as the binary payload so both formats decode identically
    values = np.array(rows, dtype=np.float64).astype(np.float32).astype(np.float64)
    values = _validated_values(values, "CSV grid")
    time_grid = TimeGrid(hop_seconds, values.shape[0], values.shape[1])
    return RegressionGrid(time_grid, values)


def write_grid_csv(grid: RegressionGrid) -> str:
    """Write a grid as CSV with 9 significant digits (exact for float32 values)."""
    frame = pd.DataFrame(grid.values.astype(np.float32))
    return frame.to_csv(header=False, index=False, float_format="%.9g", lineterminator="\n")


# ---------------------------------------------------------------------
# Files and bundles
# ---------------------------------------------------------------------
def read_grid_file(path: str | Path, hop_seconds: Optional[float] = None) -> RegressionGrid:
    path = Path(path)
    raw = path.read_bytes()
    try:
        if path.suffix.lower() == ".csv":
            if hop_seconds is None:
                raise GridFormatError("CSV grids need an explicit hop")
            return read_grid_csv(raw.decode(detect_text_encoding(raw)), hop_seconds)
        return read_grid(raw)
    except GridFormatError as e:
        raise GridFormatError(f"{path}: {e}") from e


def write_grid_file(grid: RegressionGrid, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".csv":
        path.write_text(write_grid_csv(grid), encoding="utf-8")
    else:
        path.write_bytes(write_grid(grid))


def _bundle_paths(directory: Path, names: Dict[str, str], suffix: str) -> Dict[str, Path]:
    return {field: directory / (Path(name).stem + suffix) for field, name in names.items()}


def _read_bundle(directory: str | Path, names: Dict[str, str], suffix: str, hop_seconds: Optional[float]) -> Dict[str, RegressionGrid]:
    directory = Path(directory)
    paths = _bundle_paths(directory, names, suffix)
    missing = [path.name for path in paths.values() if not path.is_file()]
    if missing:
        raise BundleError(str(directory), missing)
    return {field: read_grid_file(path, hop_seconds) for field, path in paths.items()}


def _write_bundle(directory: str | Path, names: Dict[str, str], grids: Dict[str, RegressionGrid], suffix: str) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for field, path in _bundle_paths(directory, names, suffix).items():
        write_grid_file(grids[field], path)


def has_pedal_bundle(directory: str | Path, suffix: str = ".hrtg") -> bool:
    directory = Path(directory)
    return all(path.is_file() for path in _bundle_paths(directory, PEDAL_BUNDLE_FILES, suffix).values())


def read_note_bundle(directory: str | Path, suffix: str = ".hrtg", hop_seconds: Optional[float] = None):
    from .note_decoder import NoteGridBundle

    return NoteGridBundle(**_read_bundle(directory, NOTE_BUNDLE_FILES, suffix, hop_seconds))


def read_pedal_bundle(directory: str | Path, suffix: str = ".hrtg", hop_seconds: Optional[float] = None):
    from .pedal_decoder import PedalGridBundle

    return PedalGridBundle(**_read_bundle(directory, PEDAL_BUNDLE_FILES, suffix, hop_seconds))


def write_note_bundle(directory: str | Path, bundle, suffix: str = ".hrtg") -> None:
    grids = {field: getattr(bundle, field) for field in NOTE_BUNDLE_FILES}
    _write_bundle(directory, NOTE_BUNDLE_FILES, grids, suffix)


def write_pedal_bundle(directory: str | Path, bundle, suffix: str = ".hrtg") -> None:
    grids = {field: getattr(bundle, field) for field in PEDAL_BUNDLE_FILES}
    _write_bundle(directory, PEDAL_BUNDLE_FILES, grids, suffix)
