"""Complex convolving mask: build from three-component weights, apply as a
causal deep filter over past frames and neighboring frequency bins.

The mask builder splits the incoming channels into three weight planes for
the unit vectors at 0, 120 and 240 degrees; their weighted sum sweeps the
whole complex plane with non-negative weights. The apply stage convolves
the raw microphone spectrum with the per-bin kernel, using only current and
past frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

# Components of the rotating-vector basis (0, +120, -120 degrees).
_SQRT3_2 = math.sqrt(3.0) / 2.0
V2 = complex(-0.5, _SQRT3_2)
V3 = complex(-0.5, -_SQRT3_2)


@dataclass
class CcmConfig:
    past_frames: int = 2      # m: extra past frames in the kernel
    freq_halfwidth: int = 1   # n: bins on each side

    def __post_init__(self):
        if self.past_frames < 0 or self.freq_halfwidth < 0:
            raise ConfigError("past_frames and freq_halfwidth must be >= 0")

    @property
    def kernel_slots(self) -> int:
        return (self.past_frames + 1) * (2 * self.freq_halfwidth + 1)

    @property
    def required_channels(self) -> int:
        return 3 * self.kernel_slots


def ccm_build(x: np.ndarray, cfg: CcmConfig) -> np.ndarray:
    """(c, t, f) weights -> complex kernel (m+1, 2n+1, t, f).

    Kernel slot (i, j) holds the tap for frame offset i - m (past to
    current) and frequency offset j - n; the channel axis is laid out
    component-major, then time-major, frequency-minor.
    """
    if x.shape[0] != cfg.required_channels:
        raise ConfigError(
            f"CCM needs {cfg.required_channels} channels "
            f"(3 * (m+1) * (2n+1)), got {x.shape[0]}"
        )
    k = cfg.kernel_slots
    xr = x.reshape(3, k, *x.shape[1:])
    real = xr[0] - 0.5 * (xr[1] + xr[2])
    imag = _SQRT3_2 * (xr[1] - xr[2])
    ctype = np.complex64 if real.dtype == np.float32 else np.complex128
    mask = np.empty(xr.shape[1:], dtype=ctype)
    mask.real = real
    mask.imag = imag
    return mask.reshape(
        cfg.past_frames + 1, 2 * cfg.freq_halfwidth + 1, *x.shape[1:]
    )


def ccm_apply(spec: np.ndarray, mask: np.ndarray, cfg: CcmConfig) -> np.ndarray:
    """Deep-filter the (t, f) spectrum with the per-bin kernel.

    out(t, f) = sum_{i=-m..0} sum_{j=-n..n} spec(t+i, f+j) * mask(i, j, t, f)
    with zero padding outside the grid; frame t uses only frames <= t.
    """
    m, n = cfg.past_frames, cfg.freq_halfwidth
    t, f = spec.shape
    if mask.shape != (m + 1, 2 * n + 1, t, f):
        raise ShapeError(
            f"mask shape {mask.shape} != {(m + 1, 2 * n + 1, t, f)}"
        )
    padded = np.zeros((t + m, f + 2 * n), dtype=np.complex128)
    padded[m:, n : n + f] = spec
    s = padded.strides
    windows = np.lib.stride_tricks.as_strided(
        padded, shape=(m + 1, 2 * n + 1, t, f), strides=(s[0], s[1], s[0], s[1])
    )
    prod = windows * mask
    taps = prod.reshape(-1, t, f)
    out = taps[0].copy()
    for tap in taps[1:]:
        out += tap
    return out


class CcmBuildScratch:
    """Preallocated per-frame mask builder replaying ccm_build's arithmetic."""

    def __init__(self, cfg: CcmConfig, bins: int, dtype=np.float32):
        k = cfg.kernel_slots
        self.cfg = cfg
        self.bins = bins
        self.t1 = np.zeros((k, bins), dtype=dtype)
        self.t2 = np.zeros((k, bins), dtype=dtype)
        ctype = np.complex64 if dtype == np.float32 else np.complex128
        self.mask = np.zeros((k, bins), dtype=ctype)
        self.mask_kernel = self.mask.reshape(
            cfg.past_frames + 1, 2 * cfg.freq_halfwidth + 1, bins
        )

    def build(self, frame: np.ndarray) -> np.ndarray:
        """(c, bins) weight frame -> (m+1, 2n+1, bins) complex kernel."""
        cfg = self.cfg
        if frame.shape != (cfg.required_channels, self.bins):
            raise ShapeError(
                f"expected frame shape {(cfg.required_channels, self.bins)}, got {frame.shape}"
            )
        xr = frame.reshape(3, cfg.kernel_slots, self.bins)
        np.add(xr[1], xr[2], out=self.t1)
        np.multiply(self.t1, 0.5, out=self.t1)
        np.subtract(xr[0], self.t1, out=self.t1)
        np.subtract(xr[1], xr[2], out=self.t2)
        np.multiply(self.t2, _SQRT3_2, out=self.t2)
        self.mask.real = self.t1
        self.mask.imag = self.t2
        return self.mask_kernel


class CcmStreamState:
    """Rolling spectrum history plus per-frame scratch for the apply stage."""

    def __init__(self, cfg: CcmConfig, bins: int):
        m, n = cfg.past_frames, cfg.freq_halfwidth
        self.cfg = cfg
        self.bins = bins
        self.padded = np.zeros((m + 1, bins + 2 * n), dtype=np.complex128)
        s = self.padded.strides
        # windows[i, j, f] = padded[i, j + f]: all taps as one strided gather
        self.windows = np.lib.stride_tricks.as_strided(
            self.padded, shape=(m + 1, 2 * n + 1, bins), strides=(s[0], s[1], s[1])
        )
        self.prod = np.zeros((m + 1, 2 * n + 1, bins), dtype=np.complex128)
        self.prod_flat = self.prod.reshape(-1, bins)
        self.out = np.zeros(bins, dtype=np.complex128)

    def reset(self) -> None:
        self.padded[:] = 0
        self.out[:] = 0

    def step(self, spec_row: np.ndarray, mask_frame: np.ndarray) -> np.ndarray:
        """Apply one frame's kernel; mask_frame is (m+1, 2n+1, bins)."""
        cfg = self.cfg
        m, n = cfg.past_frames, cfg.freq_halfwidth
        if spec_row.shape != (self.bins,):
            raise ShapeError(f"expected {self.bins} bins, got {spec_row.shape}")
        if mask_frame.shape != (m + 1, 2 * n + 1, self.bins):
            raise ShapeError(
                f"mask frame shape {mask_frame.shape} != {(m + 1, 2 * n + 1, self.bins)}"
            )
        if m > 0:
            self.padded[:-1] = self.padded[1:]
        self.padded[-1, n : n + self.bins] = spec_row
        np.multiply(self.windows, mask_frame, out=self.prod)
        np.copyto(self.out, self.prod_flat[0])
        for tap in self.prod_flat[1:]:
            self.out += tap
        return self.out
