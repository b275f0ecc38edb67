"""Mono audio buffers and WAV file I/O.

Audio is carried as float64 sample arrays in [-1, 1] at 24 or 48 kHz.
WAV support covers little-endian RIFF, mono, PCM 16-bit and IEEE float
32-bit, which is the interchange contract of the engine.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import ConfigError, ShapeError

SUPPORTED_RATES = (24000, 48000)


@dataclass
class AudioBuffer:
    """Mono PCM signal with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ShapeError(f"audio must be mono 1-D, got shape {self.samples.shape}")
        if self.sample_rate not in SUPPORTED_RATES:
            raise ConfigError(
                f"sample rate {self.sample_rate} unsupported, expected one of {SUPPORTED_RATES}"
            )
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ShapeError("audio contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def read_wav(path: str | Path) -> AudioBuffer:
    """Read a mono 24/48 kHz WAV file (PCM16 or float32)."""
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise ConfigError(f"{path}: expected mono audio, got {data.ndim} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    elif data.dtype == np.float64:
        samples = data.copy()
    else:
        raise ConfigError(f"{path}: unsupported sample format {data.dtype}")
    return AudioBuffer(samples, int(rate))


def write_wav(path: str | Path, buf: AudioBuffer, fmt: str = "float32") -> None:
    """Write a mono WAV file. ``fmt`` is ``float32`` or ``pcm16``."""
    if fmt == "float32":
        wavfile.write(str(path), buf.sample_rate, buf.samples.astype(np.float32))
    elif fmt == "pcm16":
        q = np.clip(np.round(buf.samples * 32768.0), -32768, 32767)
        wavfile.write(str(path), buf.sample_rate, q.astype(np.int16))
    else:
        raise ConfigError(f"unknown WAV format {fmt!r}")
