"""
Configuración de hrtranscribe: variables de entorno (.env) y parsing de unidades.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from typing import List

from dotenv import load_dotenv

from .errors import ConfigError

# Carga .env una sola vez al importar el módulo
load_dotenv()

_DURATION_PATTERN = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*(ms|s)\s*$")


def parse_duration(text: str) -> float:
    """Parse a duration with an explicit unit ("50ms", "0.05s") into seconds.

    Bare numbers are rejected on purpose: "50" could mean seconds or milliseconds.
    """
    if text is None:
        raise ConfigError("Missing duration")
    match = _DURATION_PATTERN.match(str(text))
    if not match:
        raise ConfigError(f"Invalid duration '{text}': expected a number followed by 'ms' or 's' (e.g. '50ms', '0.05s')")
    value = float(match.group(1))
    return value / 1000.0 if match.group(2) == "ms" else value


def parse_duration_list(text: str) -> List[float]:
    """Parse a comma-separated list of durations ("2ms,5ms,0.01s")."""
    items = [item for item in (part.strip() for part in str(text).split(",")) if item]
    if not items:
        raise ConfigError(f"Empty duration list '{text}'")
    return [parse_duration(item) for item in items]


def parse_int_list(text: str) -> List[int]:
    try:
        values = [int(part) for part in str(text).split(",") if part.strip()]
    except ValueError as e:
        raise ConfigError(f"Invalid integer list '{text}': {e}") from e
    if not values:
        raise ConfigError(f"Empty integer list '{text}'")
    return values


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError as e:
        raise ConfigError(f"{name}={raw!r} is not a number") from e


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigError(f"{name}={raw!r} is not an integer") from e


def _env_duration(name: str, default: str) -> float:
    return parse_duration(os.getenv(name) or default)


@dataclass(frozen=True)
class Settings:
    hop_seconds: float = 0.01
    j: int = 5
    onset_threshold: float = 0.3
    offset_threshold: float = 0.3
    frame_threshold: float = 0.3
    pedal_onset_threshold: float = 0.3
    pedal_offset_threshold: float = 0.3
    pedal_frame_threshold: float = 0.3
    ticks_per_quarter: int = 384
    tempo_bpm: float = 120.0
    seed: int = 0
    log_level: str = "WARNING"
    empty_score: float = 1.0


def load_settings() -> Settings:
    """Build the settings from the environment (after .env has been loaded)."""
    return Settings(
        hop_seconds=_env_duration("HRT_HOP", "10ms"),
        j=_env_int("HRT_J", 5),
        onset_threshold=_env_float("HRT_ONSET_THRESHOLD", 0.3),
        offset_threshold=_env_float("HRT_OFFSET_THRESHOLD", 0.3),
        frame_threshold=_env_float("HRT_FRAME_THRESHOLD", 0.3),
        pedal_onset_threshold=_env_float("HRT_PEDAL_ONSET_THRESHOLD", 0.3),
        pedal_offset_threshold=_env_float("HRT_PEDAL_OFFSET_THRESHOLD", 0.3),
        pedal_frame_threshold=_env_float("HRT_PEDAL_FRAME_THRESHOLD", 0.3),
        ticks_per_quarter=_env_int("HRT_TICKS_PER_QUARTER", 384),
        tempo_bpm=_env_float("HRT_TEMPO_BPM", 120.0),
        seed=_env_int("HRT_SEED", 0),
        log_level=os.getenv("HRT_LOG_LEVEL", "WARNING").upper(),
        empty_score=_env_float("HRT_EMPTY_SCORE", 1.0),
    )
