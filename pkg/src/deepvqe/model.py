"""Model assembly: encoder branches, alignment, bottleneck, decoder, mask.

``build_model`` wires prepared layers from a weight store. The offline
forward pass runs layer-major over whole utterances but computes every
frame with the same per-frame kernels the streaming engine uses, so the
two paths produce bit-identical frame outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .align import AlignBlock, AlignConfig
from .audio import AudioBuffer
from .ccm import CcmConfig, ccm_apply, ccm_build
from .config import ModelConfig, count_parameters, parameter_specs
from .errors import ConfigError, ShapeError
from .nn_ops import Conv2dLayer, ConvSpec
from .stft import StftConfig, compress_array, istft, stft
from .weights import WeightStore

BN_EPS = 1e-5


def _elu_full(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0) + np.expm1(np.minimum(x, 0))


def _bn_scale_shift(store: WeightStore, prefix: str, ch: int):
    gamma = store.get(f"{prefix}.gamma", (ch,)).astype(np.float64)
    beta = store.get(f"{prefix}.beta", (ch,)).astype(np.float64)
    mean = store.get(f"{prefix}.mean", (ch,)).astype(np.float64)
    var = store.get(f"{prefix}.var", (ch,)).astype(np.float64)
    scale = gamma / np.sqrt(var + BN_EPS)
    return scale, beta - mean * scale


def _conv_from_store(store, prefix, in_ch, out_ch, kernel, stride=(1, 1), freq_pad=(0, 0),
                     bn_prefix=None, bn_channel_of_row=None):
    """Prepared conv layer; a following batch-norm is folded into it.

    ``bn_channel_of_row`` maps each conv output row to its BN channel (the
    sub-pixel shuffle routes two conv rows to one output channel).
    """
    w = store.get(f"{prefix}.weight", (out_ch, in_ch) + kernel).astype(np.float64)
    b = store.get(f"{prefix}.bias", (out_ch,)).astype(np.float64)
    if bn_prefix is not None:
        rows = np.arange(out_ch) if bn_channel_of_row is None else bn_channel_of_row
        scale, shift = _bn_scale_shift(store, bn_prefix, len(set(rows.tolist())))
        w = w * scale[rows][:, None, None, None]
        b = b * scale[rows] + shift[rows]
    spec = ConvSpec(
        in_ch, out_ch, kernel, stride, freq_pad,
        w.astype(np.float32), b.astype(np.float32),
    )
    return Conv2dLayer(spec)


class EncoderBlock:
    """Downsampling conv, batch-norm, ELU, then an optional residual.

    Batch-norms run in inference mode and are folded into their convs.
    """

    def __init__(self, store, prefix, in_ch, out_ch, residual):
        self.conv = _conv_from_store(
            store, f"{prefix}.conv", in_ch, out_ch, (4, 3), (1, 2), (1, 1),
            bn_prefix=f"{prefix}.bn",
        )
        self.res_conv = None
        if residual:
            self.res_conv = _conv_from_store(
                store, f"{prefix}.res.conv", out_ch, out_ch, (4, 3), (1, 1), (1, 1),
                bn_prefix=f"{prefix}.res.bn",
            )
        self.out_ch = out_ch

    def forward(self, x: np.ndarray) -> np.ndarray:
        y = _elu_full(self.conv.forward(x))
        if self.res_conv is not None:
            y = y + _elu_full(self.res_conv.forward(y))
        return y


class DecoderBlock:
    """Skip projection, optional residual, sub-pixel upsample, BN + ELU.

    The post-shuffle batch-norm folds into the sub-pixel conv: output
    channel c' receives conv rows c' and filters + c'.
    """

    def __init__(self, store, prefix, dec_in, skip_src, filters, residual, last, target_bins):
        self.skip = _conv_from_store(store, f"{prefix}.skip", skip_src, dec_in, (1, 1))
        self.res_conv = None
        if residual:
            self.res_conv = _conv_from_store(
                store, f"{prefix}.res.conv", dec_in, dec_in, (4, 3), (1, 1), (1, 1),
                bn_prefix=f"{prefix}.res.bn",
            )
        self.subpixel = _conv_from_store(
            store, f"{prefix}.subpixel", dec_in, 2 * filters, (4, 3), (1, 1), (1, 1),
            bn_prefix=None if last else f"{prefix}.bn",
            bn_channel_of_row=np.tile(np.arange(filters), 2),
        )
        self.has_act = not last
        self.filters = filters
        self.target_bins = target_bins

    def forward(self, dec_in: np.ndarray, enc_feat: np.ndarray) -> np.ndarray:
        if dec_in.shape[1:] != enc_feat.shape[1:]:
            raise ShapeError(
                f"skip (t, f) mismatch: {dec_in.shape[1:]} vs {enc_feat.shape[1:]}"
            )
        x = dec_in + self.skip.forward(enc_feat)
        if self.res_conv is not None:
            x = x + _elu_full(self.res_conv.forward(x))
        pre = self.subpixel.forward(x)
        c, t, f = self.filters, pre.shape[1], pre.shape[2]
        up = np.ascontiguousarray(
            pre.reshape(2, c, t, f).transpose(1, 2, 3, 0).reshape(c, t, 2 * f)[:, :, : self.target_bins]
        )
        if self.has_act:
            up = _elu_full(up)
        return up


class GruLayer:
    """Packed single-layer GRU plus the linear projection back."""

    def __init__(self, store, input_size, hidden, out_size):
        def g(name, shape):
            return store.get(name, shape)

        self.hidden = hidden
        self.w_all = np.ascontiguousarray(
            np.vstack([g(f"bottleneck.gru.w_{k}", (hidden, input_size)) for k in "zrh"])
        )
        self.u_zr = np.ascontiguousarray(
            np.vstack([g(f"bottleneck.gru.u_{k}", (hidden, hidden)) for k in "zr"])
        )
        self.u_h = np.ascontiguousarray(g("bottleneck.gru.u_h", (hidden, hidden)))
        self.b_all = np.ascontiguousarray(
            np.concatenate([g(f"bottleneck.gru.b_{k}", (hidden,)) for k in "zrh"])
        )
        self.proj_w = np.ascontiguousarray(g("bottleneck.proj.weight", (out_size, hidden)))
        self.proj_b = np.ascontiguousarray(g("bottleneck.proj.bias", (out_size,)))

    def new_state(self) -> "GruStreamState":
        return GruStreamState(self)

    def step(self, x: np.ndarray, st: "GruStreamState") -> np.ndarray:
        h = self.hidden
        np.matmul(self.w_all, x, out=st.gates)
        st.gates += self.b_all
        np.matmul(self.u_zr, st.h, out=st.uzr)
        st.gates[: 2 * h] += st.uzr
        z = expit(st.gates[:h], out=st.gates[:h])
        r = expit(st.gates[h : 2 * h], out=st.gates[h : 2 * h])
        np.multiply(r, st.h, out=st.rh)
        np.matmul(self.u_h, st.rh, out=st.uh)
        st.gates[2 * h :] += st.uh
        cand = np.tanh(st.gates[2 * h :], out=st.gates[2 * h :])
        np.multiply(z, cand, out=st.zc)
        np.multiply(z, st.h, out=st.zh)
        st.h -= st.zh
        st.h += st.zc
        np.matmul(self.proj_w, st.h, out=st.proj)
        st.proj += self.proj_b
        return st.proj


class GruStreamState:
    def __init__(self, layer: GruLayer):
        h = layer.hidden
        self.h = np.zeros(h, dtype=np.float32)
        self.gates = np.zeros(3 * h, dtype=np.float32)
        self.uzr = np.zeros(2 * h, dtype=np.float32)
        self.rh = np.zeros(h, dtype=np.float32)
        self.uh = np.zeros(h, dtype=np.float32)
        self.zc = np.zeros(h, dtype=np.float32)
        self.zh = np.zeros(h, dtype=np.float32)
        self.proj = np.zeros(layer.proj_w.shape[0], dtype=np.float32)

    def reset(self) -> None:
        for buf in (self.h, self.gates, self.uzr, self.rh, self.uh, self.zc, self.zh, self.proj):
            buf[:] = 0


@dataclass
class BlockTrace:
    """Per-block output shapes (c, t, f) recorded during a forward pass."""

    shapes: list[tuple[str, tuple[int, int, int]]] = field(default_factory=list)

    def record(self, name: str, arr: np.ndarray) -> None:
        self.shapes.append((name, tuple(arr.shape)))

    def ladder(self, prefix: str) -> list[int]:
        return [s[2] for name, s in self.shapes if name.startswith(prefix)]


class Model:
    """Immutable runnable graph; forward passes allocate their own buffers."""

    def __init__(self, cfg: ModelConfig, store: WeightStore):
        self.cfg = cfg
        self.stft_cfg = StftConfig(cfg.window_len, cfg.hop, cfg.dft_len)
        self.ccm_cfg = CcmConfig(cfg.ccm_past_frames, cfg.ccm_freq_halfwidth)

        self.mic_blocks = [
            EncoderBlock(store, f"enc.mic{i}", cin, cout, cfg.mic_residual[i])
            for i, (cin, cout) in enumerate(zip(cfg.mic_in_channels, cfg.mic_enc_filters))
        ]
        self.far_blocks = [
            EncoderBlock(store, f"enc.far{i}", cin, cout, cfg.far_residual[i])
            for i, (cin, cout) in enumerate(zip(cfg.far_in_channels, cfg.far_enc_filters))
        ]

        h = cfg.align_channels
        align_cfg = AlignConfig(
            h=h,
            d_max=cfg.max_delay_frames,
            q_proj=ConvSpec(
                cfg.mic_enc_filters[1], h, (1, 1),
                weights=store.get("align.q_proj.weight", (h, cfg.mic_enc_filters[1], 1, 1)),
                bias=store.get("align.q_proj.bias", (h,)),
            ),
            k_proj=ConvSpec(
                cfg.far_enc_filters[1], h, (1, 1),
                weights=store.get("align.k_proj.weight", (h, cfg.far_enc_filters[1], 1, 1)),
                bias=store.get("align.k_proj.bias", (h,)),
            ),
            tdmap_conv=ConvSpec(
                h, 1, (5, 3), freq_pad=(1, 1),
                weights=store.get("align.tdmap.weight", (1, h, 5, 3)),
                bias=store.get("align.tdmap.bias", (1,)),
            ),
            scaled_dot=cfg.scaled_dot,
        )
        self.align = AlignBlock(align_cfg)

        self.gru = GruLayer(store, cfg.bottleneck_width, cfg.gru_hidden, cfg.bottleneck_width)

        n_dec = len(cfg.dec_subpixel_filters)
        self.dec_blocks = [
            DecoderBlock(
                store,
                f"dec{i}",
                cfg.dec_in_channels[i],
                cfg.skip_source_channels[i],
                cfg.dec_subpixel_filters[i],
                cfg.dec_residual[i],
                i == n_dec - 1,
                cfg.decoder_targets[i],
            )
            for i in range(n_dec)
        ]

    # Whole-utterance network over packed features --------------------------

    def features(self, spec: np.ndarray) -> np.ndarray:
        comp = compress_array(spec, self.cfg.compress_exponent)
        feats = np.empty((2,) + comp.shape, dtype=np.float32)
        np.copyto(feats[0], comp.real)
        np.copyto(feats[1], comp.imag)
        return feats

    def network(self, mic_feats: np.ndarray, far_feats: np.ndarray, trace: BlockTrace | None = None):
        """(2, t, f) feature pair -> (mask channels (c, t, f), delays (t, d))."""
        e = mic_feats
        enc_outputs = []
        for i, block in enumerate(self.mic_blocks[:2]):
            e = block.forward(e)
            enc_outputs.append(e)
            if trace:
                trace.record(f"enc.mic{i}", e)
        fx = far_feats
        for i, block in enumerate(self.far_blocks):
            fx = block.forward(fx)
            if trace:
                trace.record(f"enc.far{i}", fx)
        aligned, delays = self.align.forward(e, fx)
        e = np.concatenate([e, aligned], axis=0)
        for i, block in enumerate(self.mic_blocks[2:], start=2):
            e = block.forward(e)
            enc_outputs.append(e)
            if trace:
                trace.record(f"enc.mic{i}", e)

        c, t, fb = e.shape
        flat_scr = np.zeros(c * fb, dtype=np.float32)
        flat2d = flat_scr.reshape(c, fb)
        gru_state = self.gru.new_state()
        d = np.empty_like(e)
        for tau in range(t):
            np.copyto(flat2d, e[:, tau, :])
            y = self.gru.step(flat_scr, gru_state)
            d[:, tau, :] = y.reshape(c, fb)
        if trace:
            trace.record("bottleneck", d)

        for i, block in enumerate(self.dec_blocks):
            d = block.forward(d, enc_outputs[len(enc_outputs) - 1 - i])
            if trace:
                trace.record(f"dec{i}", d)
        return d, delays

    def forward_offline(
        self,
        mic: AudioBuffer,
        far: AudioBuffer | None = None,
        collect_delays: bool = False,
        trace: BlockTrace | None = None,
    ):
        """Full pipeline on whole buffers; output length equals input length."""
        if mic.sample_rate != self.cfg.sample_rate:
            raise ConfigError(f"mic must be {self.cfg.sample_rate} Hz, got {mic.sample_rate}")
        if far is not None and far.sample_rate != mic.sample_rate:
            raise ConfigError("mic and far-end sample rates differ")
        hop = self.cfg.hop
        mic_x = mic.samples
        far_x = far.samples if far is not None else np.zeros(0)
        length = max(len(mic_x), len(far_x))
        # One extra hop of zeros so every output sample is fully overlapped.
        padded = -(-max(length, 1) // hop) * hop + hop
        mic_x = np.pad(mic_x, (0, padded - len(mic_x)))
        far_x = np.pad(far_x, (0, padded - len(far_x)))

        mic_spec = stft(mic_x, self.stft_cfg).data
        far_spec = stft(far_x, self.stft_cfg).data
        mask_feats, delays = self.network(self.features(mic_spec), self.features(far_spec), trace)
        mask = ccm_build(mask_feats, self.ccm_cfg)
        enhanced = ccm_apply(mic_spec, mask, self.ccm_cfg)
        if trace:
            trace.record("ccm", mask_feats)
        out = istft(enhanced, self.stft_cfg)[:length]
        out_buf = AudioBuffer(out, self.cfg.sample_rate)
        if collect_delays:
            return out_buf, delays
        return out_buf

    def trace_shapes(self, frames: int = 8) -> BlockTrace:
        """Run a short zero-input forward pass recording block shapes."""
        trace = BlockTrace()
        zeros = AudioBuffer(np.zeros(frames * self.cfg.hop), self.cfg.sample_rate)
        self.forward_offline(zeros, None, trace=trace)
        return trace


def build_model(cfg: ModelConfig, store: WeightStore) -> Model:
    """Validate the store against the config's catalog and wire the graph."""
    if store.config_hash and store.config_hash != cfg.config_hash:
        raise ConfigError(
            "weight store was saved for a different configuration "
            f"(hash {store.config_hash[:12]}... != {cfg.config_hash[:12]}...)"
        )
    for spec in parameter_specs(cfg):
        store.get(spec.name, spec.shape)
    return Model(cfg, store)


def skip_project(enc_feat: np.ndarray, dec_feat: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Point-wise projection of encoder features summed onto decoder output."""
    if enc_feat.shape[1:] != dec_feat.shape[1:]:
        raise ShapeError(
            f"skip (t, f) mismatch: {enc_feat.shape[1:]} vs {dec_feat.shape[1:]}"
        )
    layer = Conv2dLayer(ConvSpec(enc_feat.shape[0], dec_feat.shape[0], (1, 1), weights=weights, bias=bias))
    return dec_feat + layer.forward(enc_feat)


__all__ = [
    "BN_EPS",
    "BlockTrace",
    "Model",
    "build_model",
    "count_parameters",
    "skip_project",
]
