"""Synthetic echo/noise/reverb scenarios and learned-model-free metrics.

A scenario mixes a delayed, reverberant copy of the far-end signal (the
echo), the near-end speech and background noise at requested SER/SNR, with
per-frame activity labels (FEST / NEST / DT). The room impulse response is
a direct-path spike plus an exponentially decaying noise tail with unit
energy, so SER is controlled purely by the echo scale factor.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .audio import AudioBuffer
from .errors import ConfigError

ERLE_CAP_DB = 80.0
_RESIDUAL_FLOOR = 1e-12


@dataclass
class ScenarioParams:
    duration_s: float = 3.0
    ser_db: float = 10.0
    snr_db: float = 25.0
    bulk_delay_frames: int = 20
    t60_s: float = 0.3
    sample_rate: int = 24000
    hop: int = 240
    max_delay_frames: int = 100
    near_active: bool = True

    def validate(self) -> None:
        if not 0.05 <= self.duration_s <= 600:
            raise ConfigError("duration_s out of range [0.05, 600]")
        if not 0.1 <= self.t60_s <= 0.6:
            raise ConfigError("t60_s out of range [0.1, 0.6]")
        if not 0 <= self.bulk_delay_frames < self.max_delay_frames:
            raise ConfigError(
                f"bulk_delay_frames out of range [0, {self.max_delay_frames})"
            )
        if np.isnan(self.ser_db) or np.isnan(self.snr_db):
            raise ConfigError("ser_db and snr_db must be numbers (+inf allowed)")
        if self.sample_rate not in (24000, 48000):
            raise ConfigError("sample_rate must be 24000 or 48000")


@dataclass
class EchoScenario:
    mic: AudioBuffer
    far_end: AudioBuffer
    near_end: AudioBuffer
    echo_component: np.ndarray
    noise_component: np.ndarray
    rir: np.ndarray
    segments: list[tuple[float, float, str]]
    params: ScenarioParams
    seed: int

    @property
    def fest_segments(self) -> list[tuple[float, float]]:
        return [(s, e) for s, e, label in self.segments if label == "FEST"]

    def truth_doc(self) -> dict:
        return {
            "scenario.seed": self.seed,
            "scenario.duration_s": self.params.duration_s,
            "scenario.ser_db": self.params.ser_db,
            "scenario.snr_db": self.params.snr_db,
            "scenario.bulk_delay_frames": self.params.bulk_delay_frames,
            "scenario.bulk_delay_samples": self.params.bulk_delay_frames * self.params.hop,
            "scenario.t60_s": self.params.t60_s,
            "scenario.sample_rate": self.params.sample_rate,
        }


def _burst_mask(rng: np.random.Generator, n: int, rate: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    pos = int(rng.integers(0, rate // 4))
    while pos < n:
        talk = int(rng.integers(rate // 4, int(0.9 * rate)))
        mask[pos : pos + talk] = True
        pos += talk + int(rng.integers(rate // 8, rate // 2))
    return mask


def _speechlike(rng: np.random.Generator, n: int, rate: int) -> tuple[np.ndarray, np.ndarray]:
    """Amplitude-modulated noise bursts plus their activity mask."""
    mask = _burst_mask(rng, n, rate)
    x = rng.standard_normal(n)
    # Slow random envelope, 25 Hz modulation grid.
    grid = max(1, rate // 25)
    env = rng.uniform(0.3, 1.0, n // grid + 2)
    envelope = np.interp(np.arange(n) / grid, np.arange(env.size), env)
    x *= envelope * mask
    rms = np.sqrt(np.mean(x**2)) if np.any(mask) else 0.0
    if rms > 0:
        x *= 0.1 / rms
    return x, mask


def make_rir(rng: np.random.Generator, t60_s: float, rate: int) -> np.ndarray:
    """Direct spike at 5 ms plus exponential noise tail, unit energy."""
    direct = int(0.005 * rate)
    length = direct + int(1.1 * t60_s * rate)
    h = np.zeros(length)
    h[direct] = 1.0
    k = np.arange(length - direct - 1, dtype=np.float64)
    decay = 10.0 ** (-3.0 * k / (t60_s * rate))
    h[direct + 1 :] = 0.4 * rng.standard_normal(k.size) * decay
    return h / np.sqrt(np.sum(h**2))


def _frame_segments(far_mask, near_mask, hop: int, rate: int):
    n_frames = far_mask.size // hop
    labels = []
    for i in range(n_frames):
        sl = slice(i * hop, (i + 1) * hop)
        f = far_mask[sl].mean() > 0.5
        nn = near_mask[sl].mean() > 0.5
        labels.append("DT" if f and nn else "FEST" if f else "NEST" if nn else "-")
    segments = []
    start = 0
    ms_per_frame = 1000.0 * hop / rate
    for i in range(1, n_frames + 1):
        if i == n_frames or labels[i] != labels[start]:
            if labels[start] != "-":
                segments.append((start * ms_per_frame, i * ms_per_frame, labels[start]))
            start = i
    return segments


def synth_scenario(seed: int, params: ScenarioParams | None = None) -> EchoScenario:
    params = params or ScenarioParams()
    params.validate()
    rng = np.random.default_rng(seed)
    rate = params.sample_rate
    hop = params.hop if rate == 24000 else params.hop * 2
    n = int(params.duration_s * rate)
    n = max(hop, (n // hop) * hop)

    far, far_mask = _speechlike(rng, n, rate)
    if params.near_active:
        near, near_mask = _speechlike(rng, n, rate)
    else:
        near, near_mask = np.zeros(n), np.zeros(n, dtype=bool)

    rir = make_rir(rng, params.t60_s, rate)
    echo = np.convolve(far, rir)[:n]
    delay_samples = params.bulk_delay_frames * hop
    echo = np.concatenate([np.zeros(delay_samples), echo])[:n]

    e_near = float(np.sum(near**2))
    e_echo = float(np.sum(echo**2))
    if np.isinf(params.ser_db):
        echo_scale = 0.0
    elif e_echo <= 0:
        echo_scale = 0.0
    elif e_near > 0:
        echo_scale = np.sqrt(e_near / (e_echo * 10.0 ** (params.ser_db / 10.0)))
    else:
        # No near-end anchor: keep the unit-RIR echo level.
        echo_scale = 1.0
    echo *= echo_scale

    anchor = e_near if e_near > 0 else float(np.sum(echo**2))
    if np.isinf(params.snr_db) or anchor <= 0:
        noise = np.zeros(n)
    else:
        noise = rng.standard_normal(n)
        noise *= np.sqrt(anchor / (np.sum(noise**2) * 10.0 ** (params.snr_db / 10.0)))

    mic = echo + near + noise
    peak = np.max(np.abs(mic)) if n else 0.0
    headroom = max(peak, np.max(np.abs(far)) if n else 0.0)
    if headroom > 0.98:
        g = 0.98 / headroom
        for arr in (mic, far, near, echo, noise):
            arr *= g

    # Echo activity at the mic follows the delayed far-end mask.
    echo_mask = np.concatenate([np.zeros(delay_samples, dtype=bool), far_mask])[:n]
    if echo_scale == 0.0:
        echo_mask = np.zeros(n, dtype=bool)
    segments = _frame_segments(echo_mask, near_mask, hop, rate)

    return EchoScenario(
        mic=AudioBuffer(mic, rate),
        far_end=AudioBuffer(far, rate),
        near_end=AudioBuffer(near, rate),
        echo_component=echo,
        noise_component=noise,
        rir=rir,
        segments=segments,
        params=params,
        seed=seed,
    )


@dataclass
class ErleReport:
    segment_db: list[float] = field(default_factory=list)
    mean_db: float = float("nan")

    def to_doc(self) -> dict:
        doc = {"erle.mean_db": self.mean_db, "erle.segments": len(self.segment_db)}
        for i, v in enumerate(self.segment_db):
            doc[f"erle.segment{i}_db"] = v
        return doc


def erle(mic: AudioBuffer, out: AudioBuffer, fest_segments) -> ErleReport:
    """Echo return loss enhancement per far-end single-talk segment."""
    if len(mic) != len(out):
        raise ConfigError(f"length mismatch: mic {len(mic)} vs out {len(out)}")
    if not fest_segments:
        raise ConfigError("no far-end single-talk segments given")
    rate = mic.sample_rate
    values = []
    for start_ms, end_ms in fest_segments:
        lo = int(round(start_ms * rate / 1000.0))
        hi = min(int(round(end_ms * rate / 1000.0)), len(mic))
        if hi <= lo:
            warnings.warn(f"skipping empty ERLE segment [{start_ms}, {end_ms}] ms")
            continue
        e_in = float(np.sum(mic.samples[lo:hi] ** 2))
        e_out = float(np.sum(out.samples[lo:hi] ** 2))
        if e_in <= 0:
            warnings.warn(f"skipping silent-mic ERLE segment [{start_ms}, {end_ms}] ms")
            continue
        if e_out < _RESIDUAL_FLOOR:
            values.append(ERLE_CAP_DB)
        else:
            values.append(min(10.0 * np.log10(e_in / e_out), ERLE_CAP_DB))
    report = ErleReport(segment_db=values)
    if values:
        report.mean_db = float(np.mean(values))
    return report


def delay_accuracy(delays: np.ndarray, true_delay: int, warmup: int) -> float:
    """Fraction of frames (argmax ties broken toward the lowest delay)."""
    delays = np.asarray(delays)
    if warmup >= delays.shape[0]:
        raise ConfigError(f"warmup {warmup} >= frame count {delays.shape[0]}")
    picks = np.argmax(delays[warmup:], axis=1)
    return float(np.mean(picks == true_delay))
