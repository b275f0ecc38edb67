"""Sample-rate conversion between 48 kHz and 24 kHz.

A single windowed-sinc prototype lowpass (129 taps, Kaiser window, cutoff
centered at 11 kHz) serves both directions as a polyphase filter. The
offline functions are delay-compensated; the streaming classes are causal
with a fixed, documented latency.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .audio import AudioBuffer
from .errors import ConfigError, FrameContractError

PROTOTYPE_TAPS = 129
_CUTOFF_HZ = 11000.0
_KAISER_BETA = 8.3

# Content latency of the causal streaming paths.
DOWN_LATENCY_24K = 32   # output samples at 24 kHz (filter delay 64 @ 48 kHz)
UP_LATENCY_48K = 64     # output samples at 48 kHz


def design_prototype(num_taps: int = PROTOTYPE_TAPS) -> np.ndarray:
    """Windowed-sinc lowpass at 48 kHz rate, unit DC gain."""
    if num_taps % 2 == 0:
        raise ConfigError("prototype length must be odd for integer group delay")
    mid = num_taps // 2
    n = np.arange(num_taps) - mid
    fc = 2.0 * _CUTOFF_HZ / 48000.0
    h = fc * np.sinc(fc * n) * np.kaiser(num_taps, _KAISER_BETA)
    return h / h.sum()


_H = design_prototype()
_H_REV = _H[::-1].copy()
# Interpolation phases, each normalized to unit DC gain so a constant
# input maps to the same constant regardless of output phase.
_H_UP = 2.0 * _H
_H_UP0 = (_H_UP[0::2] / _H_UP[0::2].sum())        # 65 taps
_H_UP1 = (_H_UP[1::2] / _H_UP[1::2].sum())        # 64 taps
_H_UP0_REV = _H_UP0[::-1].copy()
_H_UP1_REV = _H_UP1[::-1].copy()


def _check_rates(in_rate: int, out_rate: int) -> None:
    if in_rate not in (24000, 48000) or out_rate not in (24000, 48000):
        raise ConfigError(f"unsupported rate pair {in_rate} -> {out_rate}")


def resample(buf: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Delay-compensated offline rate conversion."""
    _check_rates(buf.sample_rate, target_rate)
    x = buf.samples
    if buf.sample_rate == target_rate:
        return AudioBuffer(x.copy(), target_rate)
    mid = PROTOTYPE_TAPS // 2
    if buf.sample_rate == 48000:
        out_len = (len(x) + 1) // 2
        full = np.convolve(x, _H)
        y = full[mid : mid + 2 * out_len : 2]
        if y.size < out_len:
            y = np.pad(y, (0, out_len - y.size))
        return AudioBuffer(y, 24000)
    # 24 kHz -> 48 kHz: zero-stuff then filter with per-phase unit gain.
    up = np.zeros(2 * len(x))
    up[0::2] = x
    hn = np.empty_like(_H)
    hn[0::2] = _H_UP0
    hn[1::2] = _H_UP1
    full = np.convolve(up, hn)
    y = full[mid : mid + 2 * len(x)]
    if y.size < 2 * len(x):
        y = np.pad(y, (0, 2 * len(x) - y.size))
    return AudioBuffer(y, 48000)


def causal_down_48k(x: np.ndarray) -> np.ndarray:
    """Offline equivalent of the streaming downsampler (no delay trim)."""
    full = np.convolve(np.asarray(x, dtype=np.float64), _H)
    return full[0 : 2 * (len(x) // 2) : 2]


def causal_up_24k(x: np.ndarray) -> np.ndarray:
    """Offline equivalent of the streaming upsampler (no delay trim)."""
    up = np.zeros(2 * len(x))
    up[0::2] = x
    hn = np.empty_like(_H)
    hn[0::2] = _H_UP0
    hn[1::2] = _H_UP1
    return np.convolve(up, hn)[: 2 * len(x)]


def _sliding_windows(ext: np.ndarray, n_out: int, width: int, step: int) -> np.ndarray:
    s = ext.strides[0]
    return as_strided(ext, shape=(n_out, width), strides=(step * s, s))


class StreamingDownsampler:
    """48 kHz -> 24 kHz, fixed 480-sample input packets, 240 out."""

    in_block = 480
    out_block = 240

    def __init__(self):
        self._hist = np.zeros(PROTOTYPE_TAPS - 1)
        self._ext = np.zeros(PROTOTYPE_TAPS - 1 + self.in_block)

    def reset(self) -> None:
        self._hist[:] = 0.0
        self._ext[:] = 0.0

    def process(self, packet: np.ndarray) -> np.ndarray:
        if packet.shape != (self.in_block,):
            raise FrameContractError(f"expected {self.in_block} samples, got {packet.shape}")
        self._ext[: PROTOTYPE_TAPS - 1] = self._hist
        self._ext[PROTOTYPE_TAPS - 1 :] = packet
        windows = _sliding_windows(self._ext, self.out_block, PROTOTYPE_TAPS, 2)
        y = windows @ _H_REV
        self._hist[:] = self._ext[-(PROTOTYPE_TAPS - 1) :]
        return y


class StreamingUpsampler:
    """24 kHz -> 48 kHz, fixed 240-sample input packets, 480 out."""

    in_block = 240
    out_block = 480

    def __init__(self):
        self._taps0 = _H_UP0.size
        self._hist = np.zeros(self._taps0 - 1)
        self._ext = np.zeros(self._taps0 - 1 + self.in_block)
        self._out = np.zeros(self.out_block)

    def reset(self) -> None:
        self._hist[:] = 0.0
        self._ext[:] = 0.0
        self._out[:] = 0.0

    def process(self, packet: np.ndarray) -> np.ndarray:
        if packet.shape != (self.in_block,):
            raise FrameContractError(f"expected {self.in_block} samples, got {packet.shape}")
        t0 = self._taps0
        self._ext[: t0 - 1] = self._hist
        self._ext[t0 - 1 :] = packet
        win0 = _sliding_windows(self._ext, self.in_block, t0, 1)
        win1 = _sliding_windows(self._ext[1:], self.in_block, t0 - 1, 1)
        self._out[0::2] = win0 @ _H_UP0_REV
        self._out[1::2] = win1 @ _H_UP1_REV
        self._hist[:] = self._ext[-(t0 - 1) :]
        return self._out
