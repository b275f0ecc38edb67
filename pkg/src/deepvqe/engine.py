"""Real-time frame-by-frame processing.

One call consumes a 10 ms mic packet plus a 10 ms far-end packet and emits
one 10 ms enhanced packet. The emitted stream lags the input stream by
exactly two packets (20 ms): one hop from overlap-add reconstruction and
one packet of output buffering. Every per-frame kernel is shared with the
offline forward pass, so concatenated streaming output is bit-identical to
it on the overlapping region.

All state buffers are preallocated; per-frame work never grows the
engine's footprint.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .ccm import CcmBuildScratch, CcmStreamState
from .errors import FrameContractError
from .model import Model
from .nn_ops import elu_inplace
from .resample import StreamingDownsampler, StreamingUpsampler
from .stft import StftConfig, StreamingIstft, StreamingStft, compress_array


class _EncBlockState:
    def __init__(self, block, f_in: int):
        self.block = block
        self.conv_state = block.conv.new_state(f_in)
        self.f_out = self.conv_state.f_out
        self.scr = np.zeros((block.out_ch, self.f_out), dtype=np.float32)
        self.res_state = None
        if block.res_conv is not None:
            self.res_state = block.res_conv.new_state(self.f_out)
            self.out = np.zeros((block.out_ch, self.f_out), dtype=np.float32)

    def step(self, frame: np.ndarray) -> np.ndarray:
        block = self.block
        y = block.conv.step(frame, self.conv_state)
        elu_inplace(y, self.scr)
        if self.res_state is None:
            return y
        r = block.res_conv.step(y, self.res_state)
        elu_inplace(r, self.scr)
        np.add(y, r, out=self.out)
        return self.out

    def reset(self) -> None:
        self.conv_state.reset()
        if self.res_state is not None:
            self.res_state.reset()


class _DecBlockState:
    def __init__(self, block, f_in: int):
        self.block = block
        dec_in = block.skip.spec.out_ch
        self.skip_state = block.skip.new_state(f_in)
        self.x = np.zeros((dec_in, f_in), dtype=np.float32)
        self.scr = np.zeros((dec_in, f_in), dtype=np.float32)
        self.res_state = None
        if block.res_conv is not None:
            self.res_state = block.res_conv.new_state(f_in)
        self.sub_state = block.subpixel.new_state(f_in)
        self.shuf = np.zeros((block.filters, 2 * f_in), dtype=np.float32)
        self.out = np.zeros((block.filters, block.target_bins), dtype=np.float32)
        self.out_scr = np.zeros_like(self.out)

    def step(self, dec_frame: np.ndarray, enc_frame: np.ndarray) -> np.ndarray:
        block = self.block
        s = block.skip.step(enc_frame, self.skip_state)
        np.add(dec_frame, s, out=self.x)
        if self.res_state is not None:
            r = block.res_conv.step(self.x, self.res_state)
            elu_inplace(r, self.scr)
            self.x += r
        pre = block.subpixel.step(self.x, self.sub_state)
        c, f = block.filters, pre.shape[1]
        np.copyto(self.shuf.reshape(c, f, 2), pre.reshape(2, c, f).transpose(1, 2, 0))
        np.copyto(self.out, self.shuf[:, : block.target_bins])
        if block.has_act:
            elu_inplace(self.out, self.out_scr)
        return self.out

    def reset(self) -> None:
        self.skip_state.reset()
        if self.res_state is not None:
            self.res_state.reset()
        self.sub_state.reset()
        self.x[:] = 0
        self.shuf[:] = 0
        self.out[:] = 0


class StreamingEngine:
    """Stateful per-packet pipeline around an immutable model."""

    def __init__(self, model: Model, collect_delays: bool = False):
        cfg = model.cfg
        self.model = model
        self.cfg = cfg
        self.hop = cfg.hop
        self.sample_rate = cfg.sample_rate
        self.latency_samples = 2 * cfg.hop
        self.collect_delays = collect_delays
        self.delay_rows: list[np.ndarray] = []

        bins = cfg.bins
        self.stft_mic = StreamingStft(model.stft_cfg)
        self.stft_far = StreamingStft(model.stft_cfg)
        self.istft = StreamingIstft(model.stft_cfg)

        self.feat_mic = np.zeros((2, bins), dtype=np.float32)
        self.feat_far = np.zeros((2, bins), dtype=np.float32)

        ladder = cfg.encoder_ladder
        self.mic_states = [
            _EncBlockState(b, ladder[i]) for i, b in enumerate(model.mic_blocks)
        ]
        self.far_states = [
            _EncBlockState(b, ladder[i]) for i, b in enumerate(model.far_blocks)
        ]
        f_align = ladder[2]
        self.align_state = model.align.new_state(cfg.far_enc_filters[1], f_align)
        self.concat = np.zeros(
            (cfg.mic_enc_filters[1] + cfg.far_enc_filters[1], f_align), dtype=np.float32
        )

        c_bot, f_bot = cfg.mic_enc_filters[-1], ladder[-1]
        self.flat = np.zeros(c_bot * f_bot, dtype=np.float32)
        self.flat2d = self.flat.reshape(c_bot, f_bot)
        self.gru_state = model.gru.new_state()

        self.dec_states = []
        f_in = f_bot
        for block in model.dec_blocks:
            self.dec_states.append(_DecBlockState(block, f_in))
            f_in = block.target_bins

        self.ccm_build = CcmBuildScratch(model.ccm_cfg, bins)
        self.ccm_state = CcmStreamState(model.ccm_cfg, bins)

        self.pending = np.zeros(cfg.hop)
        self.out = np.zeros(cfg.hop)
        self.frame_counter = 0
        self.dsp_ns = 0
        self.neural_ns = 0

    def reset(self) -> None:
        for st in (self.stft_mic, self.stft_far, self.istft, self.align_state, self.gru_state, self.ccm_state):
            st.reset()
        for st in self.mic_states + self.far_states + self.dec_states:
            st.reset()
        for buf in (self.feat_mic, self.feat_far, self.concat, self.flat, self.pending, self.out):
            buf[:] = 0
        self.delay_rows.clear()
        self.frame_counter = 0
        self.dsp_ns = 0
        self.neural_ns = 0

    def _pack_features(self, spec_row: np.ndarray, out: np.ndarray) -> np.ndarray:
        comp = compress_array(spec_row, self.cfg.compress_exponent)
        np.copyto(out[0], comp.real)
        np.copyto(out[1], comp.imag)
        return out

    def process_frame(self, mic_frame: np.ndarray, far_frame: np.ndarray) -> np.ndarray:
        hop = self.hop
        mic_frame = np.asarray(mic_frame, dtype=np.float64)
        far_frame = np.asarray(far_frame, dtype=np.float64)
        if mic_frame.shape != (hop,) or far_frame.shape != (hop,):
            raise FrameContractError(
                f"packets must be exactly {hop} samples, got {mic_frame.shape} / {far_frame.shape}"
            )

        t0 = time.perf_counter_ns()
        mic_row = self.stft_mic.push(mic_frame)
        far_row = self.stft_far.push(far_frame)
        self._pack_features(mic_row, self.feat_mic)
        self._pack_features(far_row, self.feat_far)

        t1 = time.perf_counter_ns()
        e = self.feat_mic
        for st in self.mic_states[:2]:
            e = st.step(e)
        fx = self.feat_far
        for st in self.far_states:
            fx = st.step(fx)
        aligned, d_row = self.model.align.step(e, fx, self.align_state)
        if self.collect_delays:
            self.delay_rows.append(d_row.copy())
        mic_c = e.shape[0]
        self.concat[:mic_c] = e
        self.concat[mic_c:] = aligned
        e = self.concat
        for st in self.mic_states[2:]:
            e = st.step(e)

        np.copyto(self.flat2d, e)
        proj = self.model.gru.step(self.flat, self.gru_state)
        d = proj.reshape(self.flat2d.shape)
        enc_outs = [st.conv_state.out if st.res_state is None else st.out for st in self.mic_states]
        for i, st in enumerate(self.dec_states):
            d = st.step(d, enc_outs[len(enc_outs) - 1 - i])
        mask_frame = self.ccm_build.build(d)

        t2 = time.perf_counter_ns()
        enhanced = self.ccm_state.step(mic_row, mask_frame)
        emit = self.istft.push(enhanced)
        np.copyto(self.out, self.pending)
        np.copyto(self.pending, emit)

        t3 = time.perf_counter_ns()
        self.dsp_ns += (t1 - t0) + (t3 - t2)
        self.neural_ns += t2 - t1
        self.frame_counter += 1
        return self.out


class StreamingEngine48k:
    """48 kHz wrapper: resample down, enhance at 24 kHz, resample up."""

    def __init__(self, model: Model, collect_delays: bool = False):
        self.engine = StreamingEngine(model, collect_delays)
        self.down_mic = StreamingDownsampler()
        self.down_far = StreamingDownsampler()
        self.up = StreamingUpsampler()
        self.hop = 2 * model.cfg.hop
        self.sample_rate = 48000
        # 20 ms core latency plus down/up polyphase filter delays.
        self.latency_samples = 2 * self.engine.latency_samples + 2 * 32 + 64

    @property
    def frame_counter(self) -> int:
        return self.engine.frame_counter

    @property
    def delay_rows(self) -> list[np.ndarray]:
        return self.engine.delay_rows

    def reset(self) -> None:
        self.engine.reset()
        self.down_mic.reset()
        self.down_far.reset()
        self.up.reset()

    def process_frame(self, mic_frame: np.ndarray, far_frame: np.ndarray) -> np.ndarray:
        mic_frame = np.asarray(mic_frame, dtype=np.float64)
        far_frame = np.asarray(far_frame, dtype=np.float64)
        if mic_frame.shape != (self.hop,) or far_frame.shape != (self.hop,):
            raise FrameContractError(
                f"packets must be exactly {self.hop} samples, got "
                f"{mic_frame.shape} / {far_frame.shape}"
            )
        mic24 = self.down_mic.process(mic_frame)
        far24 = self.down_far.process(far_frame)
        out24 = self.engine.process_frame(mic24, far24)
        return self.up.process(out24)


class PassthroughEngine:
    """Analysis/synthesis skeleton without the network, same 20 ms latency."""

    def __init__(self, stft_cfg=None):
        cfg = stft_cfg or StftConfig()
        self.hop = cfg.hop
        self.sample_rate = 24000
        self.latency_samples = 2 * cfg.hop
        self.stft = StreamingStft(cfg)
        self.istft = StreamingIstft(cfg)
        self.pending = np.zeros(cfg.hop)
        self.out = np.zeros(cfg.hop)
        self.frame_counter = 0

    def reset(self) -> None:
        self.stft.reset()
        self.istft.reset()
        self.pending[:] = 0
        self.out[:] = 0
        self.frame_counter = 0

    def process_frame(self, mic_frame: np.ndarray, far_frame: np.ndarray | None = None) -> np.ndarray:
        if mic_frame.shape != (self.hop,):
            raise FrameContractError(f"packets must be exactly {self.hop} samples")
        row = self.stft.push(np.asarray(mic_frame, dtype=np.float64))
        emit = self.istft.push(row)
        np.copyto(self.out, self.pending)
        np.copyto(self.pending, emit)
        self.frame_counter += 1
        return self.out


class ChunkFifo:
    """Adapter feeding arbitrary chunk sizes into a fixed-packet engine."""

    def __init__(self, engine):
        self.engine = engine
        self.hop = engine.hop
        self._mic = np.zeros(0)
        self._far = np.zeros(0)

    def push(self, mic_chunk: np.ndarray, far_chunk: np.ndarray) -> np.ndarray:
        self._mic = np.concatenate([self._mic, np.asarray(mic_chunk, dtype=np.float64)])
        self._far = np.concatenate([self._far, np.asarray(far_chunk, dtype=np.float64)])
        n = min(len(self._mic), len(self._far)) // self.hop
        outs = []
        for i in range(n):
            sl = slice(i * self.hop, (i + 1) * self.hop)
            outs.append(self.engine.process_frame(self._mic[sl], self._far[sl]).copy())
        self._mic = self._mic[n * self.hop :]
        self._far = self._far[n * self.hop :]
        return np.concatenate(outs) if outs else np.zeros(0)


@dataclass


class RtfReport:
    mean_ms: float
    p95_ms: float
    max_ms: float
    rtf: float
    dsp_ms_mean: float
    neural_ms_mean: float
    frames: int
    frame_duration_ms: float = 10.0

    def to_doc(self) -> dict:
        return {
            "rtf.mean_frame_ms": self.mean_ms,
            "rtf.p95_frame_ms": self.p95_ms,
            "rtf.max_frame_ms": self.max_ms,
            "rtf.real_time_factor": self.rtf,
            "rtf.dsp_ms_mean": self.dsp_ms_mean,
            "rtf.neural_ms_mean": self.neural_ms_mean,
            "rtf.frames": self.frames,
            "rtf.frame_duration_ms": self.frame_duration_ms,
        }

    def table(self) -> str:
        rows = [
            ("frames", f"{self.frames}"),
            ("mean frame time", f"{self.mean_ms:.3f} ms"),
            ("p95 frame time", f"{self.p95_ms:.3f} ms"),
            ("max frame time", f"{self.max_ms:.3f} ms"),
            ("dsp share (mean)", f"{self.dsp_ms_mean:.3f} ms"),
            ("neural share (mean)", f"{self.neural_ms_mean:.3f} ms"),
            ("real-time factor", f"{self.rtf:.4f}"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def measure_rtf(engine, seconds: float, warmup_seconds: float = 1.0, seed: int = 0) -> RtfReport:
    """Per-frame wall-time statistics on synthetic audio, single-threaded."""
    from threadpoolctl import threadpool_limits

    rng = np.random.default_rng(seed)
    hop = engine.hop
    rate = engine.sample_rate
    frame_ms = 1000.0 * hop / rate
    n_warm = max(1, int(warmup_seconds * rate / hop))
    n_meas = max(1, int(seconds * rate / hop))
    mic = rng.uniform(-0.5, 0.5, (n_warm + n_meas) * hop)
    far = rng.uniform(-0.5, 0.5, (n_warm + n_meas) * hop)

    times = np.zeros(n_meas)
    with threadpool_limits(limits=1):
        for i in range(n_warm):
            sl = slice(i * hop, (i + 1) * hop)
            engine.process_frame(mic[sl], far[sl])
        dsp0 = getattr(engine, "dsp_ns", 0)
        neural0 = getattr(engine, "neural_ns", 0)
        for i in range(n_meas):
            sl = slice((n_warm + i) * hop, (n_warm + i + 1) * hop)
            t0 = time.perf_counter_ns()
            engine.process_frame(mic[sl], far[sl])
            times[i] = time.perf_counter_ns() - t0
    times /= 1e6
    dsp_ms = (getattr(engine, "dsp_ns", 0) - dsp0) / 1e6 / n_meas
    neural_ms = (getattr(engine, "neural_ns", 0) - neural0) / 1e6 / n_meas
    mean = float(times.mean())
    return RtfReport(
        mean_ms=mean,
        p95_ms=float(np.percentile(times, 95)),
        max_ms=float(times.max()),
        rtf=mean / frame_ms,
        dsp_ms_mean=dsp_ms,
        neural_ms_mean=neural_ms,
        frames=n_meas,
    )
