"""STFT analysis/synthesis and power-law spectral compression.

Framing contract: the signal is conceptually prefixed with
``window_len - hop`` zeros, so frame ``t`` spans original samples
``[t*hop - (window_len - hop), t*hop + hop)`` and exists from t=0 with no
look-ahead beyond the current hop. A signal of length L yields ``L // hop``
frames. The square-root periodic Hann window satisfies COLA at 50% overlap,
so analysis followed by synthesis reconstructs exactly (the final hop of the
output is single-window partial, all earlier samples are exact).

Offline and streaming paths share the same per-frame kernels, which makes
their outputs bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio import AudioBuffer
from .errors import ConfigError, FrameContractError, ShapeError

NUM_BINS = 241


def sqrt_hann(length: int) -> np.ndarray:
    """Square root of the periodic Hann window (COLA at 50% overlap)."""
    n = np.arange(length)
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * n / length))


@dataclass
class StftConfig:
    window_len: int = 480
    hop: int = 240
    dft_len: int = 480
    window: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.window_len != self.dft_len:
            raise ConfigError("window_len must equal dft_len")
        if self.hop * 2 != self.window_len:
            raise ConfigError("hop must be half the window length")
        if self.window is None:
            self.window = sqrt_hann(self.window_len)
        self.window = np.asarray(self.window, dtype=np.float64)
        if self.window.shape != (self.window_len,):
            raise ConfigError("window length mismatch")

    @property
    def bins(self) -> int:
        return self.dft_len // 2 + 1


@dataclass
class ComplexSpectrum:
    """Time-frequency grid, frames x bins, 100 frames per second."""

    data: np.ndarray
    frame_rate: int = 100

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.ndim != 2:
            raise ShapeError(f"spectrum must be 2-D, got {self.data.shape}")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def bins(self) -> int:
        return self.data.shape[1]


def analysis_frame(segment: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Window one full segment and return its half spectrum."""
    return np.fft.rfft(segment * window)


def synthesis_frame(row: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Inverse transform one frame and apply the synthesis window."""
    seg = np.fft.irfft(row, window.size)
    seg *= window
    return seg


def stft(buf: AudioBuffer | np.ndarray, cfg: StftConfig | None = None) -> ComplexSpectrum:
    cfg = cfg or StftConfig()
    x = buf.samples if isinstance(buf, AudioBuffer) else np.asarray(buf, dtype=np.float64)
    hop, win_len = cfg.hop, cfg.window_len
    frames = len(x) // hop
    out = np.zeros((frames, cfg.bins), dtype=np.complex128)
    if frames == 0:
        return ComplexSpectrum(out)
    seg = np.zeros(win_len)
    for t in range(frames):
        start = t * hop - (win_len - hop)
        if start < 0:
            seg[: -start] = 0.0
            seg[-start :] = x[: start + win_len]
        else:
            seg[:] = x[start : start + win_len]
        out[t] = analysis_frame(seg, cfg.window)
    return ComplexSpectrum(out)


def istft(spec: ComplexSpectrum, cfg: StftConfig | None = None) -> np.ndarray:
    """Overlap-add synthesis, aligned with the original signal.

    Returns ``frames * hop`` samples; the final hop is single-window
    partial, everything before it is exact under COLA.
    """
    cfg = cfg or StftConfig()
    data = spec.data if isinstance(spec, ComplexSpectrum) else np.asarray(spec)
    if data.ndim != 2 or data.shape[1] != cfg.bins:
        raise ShapeError(f"expected (frames, {cfg.bins}) spectrum, got {data.shape}")
    frames = data.shape[0]
    hop = cfg.hop
    y = np.zeros(frames * hop)
    tail = np.zeros(hop)
    for t in range(frames):
        seg = synthesis_frame(data[t], cfg.window)
        emit = tail + seg[:hop]
        if t > 0:
            y[(t - 1) * hop : t * hop] = emit
        tail = seg[hop:].copy()
    if frames > 0:
        y[(frames - 1) * hop :] = tail
    return y


class StreamingStft:
    """Per-hop analysis; feeding packets reproduces offline stft exactly."""

    def __init__(self, cfg: StftConfig | None = None):
        self.cfg = cfg or StftConfig()
        self._prev = np.zeros(self.cfg.hop)
        self._seg = np.zeros(self.cfg.window_len)

    def reset(self) -> None:
        self._prev[:] = 0.0

    def push(self, packet: np.ndarray) -> np.ndarray:
        hop = self.cfg.hop
        if packet.shape != (hop,):
            raise FrameContractError(f"expected {hop} samples, got {packet.shape}")
        self._seg[:hop] = self._prev
        self._seg[hop:] = packet
        self._prev[:] = packet
        return analysis_frame(self._seg, self.cfg.window)


class StreamingIstft:
    """Per-frame overlap-add; emits one hop of final samples per frame."""

    def __init__(self, cfg: StftConfig | None = None):
        self.cfg = cfg or StftConfig()
        self._tail = np.zeros(self.cfg.hop)
        self._emit = np.zeros(self.cfg.hop)

    def reset(self) -> None:
        self._tail[:] = 0.0
        self._emit[:] = 0.0

    def push(self, row: np.ndarray) -> np.ndarray:
        if row.shape != (self.cfg.bins,):
            raise ShapeError(f"expected {self.cfg.bins} bins, got {row.shape}")
        hop = self.cfg.hop
        seg = synthesis_frame(row, self.cfg.window)
        np.add(self._tail, seg[:hop], out=self._emit)
        self._tail[:] = seg[hop:]
        return self._emit


def compress(spec: ComplexSpectrum, exponent: float) -> ComplexSpectrum:
    """Magnitude power-law compression, phase preserved exactly."""
    if not 0.0 < exponent <= 1.0:
        raise ConfigError(f"compression exponent must be in (0, 1], got {exponent}")
    return ComplexSpectrum(compress_array(spec.data, exponent))


def decompress(spec: ComplexSpectrum, exponent: float) -> ComplexSpectrum:
    if not 0.0 < exponent <= 1.0:
        raise ConfigError(f"compression exponent must be in (0, 1], got {exponent}")
    return ComplexSpectrum(decompress_array(spec.data, exponent))


def compress_array(data: np.ndarray, exponent: float) -> np.ndarray:
    mag = np.abs(data)
    scale = np.ones_like(mag)
    np.power(mag, exponent - 1.0, where=mag > 0.0, out=scale)
    return data * scale


def decompress_array(data: np.ndarray, exponent: float) -> np.ndarray:
    mag = np.abs(data)
    return data * np.power(mag, 1.0 / exponent - 1.0)
