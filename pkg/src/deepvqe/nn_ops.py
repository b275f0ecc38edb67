"""Neural primitives, each with an offline and a streaming form.

Feature maps are arrays of shape (channels, frames, bins). Convolutions are
causal on the time axis: all time padding sits on the past side, and the
offline form computes each output frame with the exact same patch-matrix
GEMM the streaming form uses, which makes concatenated streaming output
bit-identical to the offline result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.special import expit

from .errors import ShapeError


@dataclass
class ConvSpec:
    """Causal 2-D convolution parameters over (time, frequency)."""

    in_ch: int
    out_ch: int
    kernel: tuple[int, int]            # (k_t, k_f)
    stride: tuple[int, int] = (1, 1)   # time stride is always 1
    freq_pad: tuple[int, int] = (0, 0)
    weights: np.ndarray = None
    bias: np.ndarray = None

    def __post_init__(self):
        k_t, k_f = self.kernel
        if self.stride[0] != 1:
            raise ShapeError("time stride must be 1")
        if self.weights is None:
            self.weights = np.zeros((self.out_ch, self.in_ch, k_t, k_f))
        self.weights = np.asarray(self.weights)
        if self.weights.shape != (self.out_ch, self.in_ch, k_t, k_f):
            raise ShapeError(
                f"weights shape {self.weights.shape} != "
                f"{(self.out_ch, self.in_ch, k_t, k_f)}"
            )
        if self.bias is None:
            self.bias = np.zeros(self.out_ch, dtype=self.weights.dtype)
        self.bias = np.asarray(self.bias)
        if self.bias.shape != (self.out_ch,):
            raise ShapeError(f"bias shape {self.bias.shape} != ({self.out_ch},)")

    @property
    def time_pad_left(self) -> int:
        return self.kernel[0] - 1

    def out_bins(self, f_in: int) -> int:
        pl, pr = self.freq_pad
        return (f_in + pl + pr - self.kernel[1]) // self.stride[1] + 1


class Conv2dLayer:
    """Prepared causal convolution with shared offline/streaming kernel.

    The per-frame kernel gathers an im2col patch (row order k_t, in_ch, k_f,
    plus a constant ones row that folds the bias into the GEMM) and runs one
    matrix multiply. Both the offline time loop and the streaming step build
    bit-identical patches, so their outputs agree exactly.
    """

    RING_CYCLE = 16   # streaming history wrap period (amortized copy-back)

    def __init__(self, spec: ConvSpec):
        self.spec = spec
        k_t, k_f = spec.kernel
        w2 = spec.weights.transpose(0, 2, 1, 3).reshape(spec.out_ch, -1)
        bias_col = np.asarray(spec.bias, dtype=w2.dtype).reshape(-1, 1)
        self.w2aug = np.ascontiguousarray(np.hstack([w2, bias_col]))
        self.dtype = self.w2aug.dtype
        self.k = k_t * spec.in_ch * k_f

    def _alloc_patch(self, f_in: int):
        k_t, k_f = self.spec.kernel
        f_out = self.spec.out_bins(f_in)
        patch2 = np.zeros((self.k + 1, f_out), dtype=self.dtype)
        patch2[self.k] = 1
        patch4 = patch2[: self.k].reshape(k_t, self.spec.in_ch, k_f, f_out)
        out = np.zeros((self.spec.out_ch, f_out), dtype=self.dtype)
        return patch2, patch4, out

    def _window_view(self, base: np.ndarray, frames: int, f_out: int):
        """Strided (frames, k_t, in_ch, k_f, f_out) gather over padded rows."""
        k_t, k_f = self.spec.kernel
        s_f = self.spec.stride[1]
        s = base.strides
        view = as_strided(
            base,
            shape=(frames, k_t, self.spec.in_ch, f_out, k_f),
            strides=(s[0], s[0], s[1], s_f * s[2], s[2]),
        )
        return view.transpose(0, 1, 2, 4, 3)

    def forward(self, x: np.ndarray) -> np.ndarray:
        c, t, f = x.shape
        if c != self.spec.in_ch:
            raise ShapeError(f"expected {self.spec.in_ch} channels, got {c}")
        k_t = self.spec.kernel[0]
        pl, pr = self.spec.freq_pad
        f_out = self.spec.out_bins(f)
        xp = np.zeros((k_t - 1 + t, c, f + pl + pr), dtype=self.dtype)
        xp[k_t - 1 :, :, pl : pl + f] = x.transpose(1, 0, 2)
        patch2, patch4, scratch = self._alloc_patch(f)
        windows = self._window_view(xp, t, f_out)
        out = np.zeros((self.spec.out_ch, t, f_out), dtype=self.dtype)
        for tau in range(t):
            np.copyto(patch4, windows[tau])
            np.matmul(self.w2aug, patch2, out=scratch)
            out[:, tau, :] = scratch
        return out

    def new_state(self, f_in: int) -> "ConvStreamState":
        return ConvStreamState(self, f_in)

    def step(self, frame: np.ndarray, state: "ConvStreamState") -> np.ndarray:
        if frame.shape != (self.spec.in_ch, state.f_in):
            raise ShapeError(
                f"expected frame shape {(self.spec.in_ch, state.f_in)}, got {frame.shape}"
            )
        k_t = self.spec.kernel[0]
        pos = state.pos
        if pos == self.RING_CYCLE:
            if k_t > 1:
                state.ring[: k_t - 1] = state.ring[self.RING_CYCLE :]
            pos = 0
        state.ring[pos + k_t - 1, :, state.pad_l : state.pad_l + state.f_in] = frame
        np.copyto(state.patch4, state.views[pos])
        np.matmul(self.w2aug, state.patch2, out=state.out)
        state.pos = pos + 1
        return state.out


class ConvStreamState:
    """Ring of past input frames plus precomputed patch gather views."""

    def __init__(self, layer: Conv2dLayer, f_in: int):
        spec = layer.spec
        k_t = spec.kernel[0]
        self.layer = layer
        self.f_in = f_in
        self.f_out = spec.out_bins(f_in)
        self.pad_l = spec.freq_pad[0]
        f_pad = f_in + spec.freq_pad[0] + spec.freq_pad[1]
        cycle = layer.RING_CYCLE
        self.ring = np.zeros((k_t - 1 + cycle, spec.in_ch, f_pad), dtype=layer.dtype)
        self.views = [
            layer._window_view(self.ring[o:], 1, self.f_out)[0] for o in range(cycle)
        ]
        self.patch2, self.patch4, self.out = layer._alloc_patch(f_in)
        self.pos = 0

    def reset(self) -> None:
        self.ring[:] = 0
        self.out[:] = 0
        self.pos = 0


def causal_conv2d(x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Offline causal convolution over a (c, t, f) feature map."""
    return Conv2dLayer(spec).forward(x)


def conv_stream_state(spec: ConvSpec, f_in: int) -> ConvStreamState:
    return Conv2dLayer(spec).new_state(f_in)


def conv2d_stream_step(frame: np.ndarray, state: ConvStreamState) -> np.ndarray:
    """One streaming step; concatenated steps equal causal_conv2d exactly."""
    return state.layer.step(frame, state)


def batch_norm_infer(x, mean, var, gamma, beta, eps: float = 1e-5) -> np.ndarray:
    """Inference-mode batch norm over the channel axis of (c, t, f)."""
    c = x.shape[0]
    for name, v in (("mean", mean), ("var", var), ("gamma", gamma), ("beta", beta)):
        v = np.asarray(v)
        if v.shape != (c,):
            raise ShapeError(f"{name} must have shape ({c},), got {v.shape}")
    mean, var, gamma, beta = (np.asarray(v) for v in (mean, var, gamma, beta))
    if np.any(var < 0):
        raise ShapeError("variance must be non-negative")
    shape = (c,) + (1,) * (x.ndim - 1)
    scale = (gamma / np.sqrt(var + eps)).reshape(shape)
    shift = (beta - mean * gamma / np.sqrt(var + eps)).reshape(shape)
    return x * scale + shift


def elu(x: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    return np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0)))


def elu_inplace(x: np.ndarray, scratch: np.ndarray) -> np.ndarray:
    """ELU with alpha=1 using a preallocated scratch of x's shape."""
    np.minimum(x, 0, out=scratch)
    np.expm1(scratch, out=scratch)
    np.maximum(x, 0, out=x)
    x += scratch
    return x


@dataclass
class GruState:
    hidden: np.ndarray

    def reset(self) -> None:
        self.hidden[:] = 0


@dataclass
class GruWeights:
    """Single-layer GRU cell parameters (update z, reset r, candidate h)."""

    w_z: np.ndarray
    u_z: np.ndarray
    b_z: np.ndarray
    w_r: np.ndarray
    u_r: np.ndarray
    b_r: np.ndarray
    w_h: np.ndarray
    u_h: np.ndarray
    b_h: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.u_z.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_z.shape[1]


def gru_state(weights: GruWeights, dtype=None) -> GruState:
    return GruState(np.zeros(weights.hidden_size, dtype=dtype or weights.w_z.dtype))


def gru_step(x: np.ndarray, state: GruState, w: GruWeights) -> np.ndarray:
    """z = s(W_z x + U_z h + b_z); r likewise; h' = (1-z)h + z tanh(...)."""
    h = state.hidden
    if x.shape != (w.input_size,) or h.shape != (w.hidden_size,):
        raise ShapeError(
            f"sizes do not match weights: x {x.shape}, h {h.shape}, "
            f"expected ({w.input_size},), ({w.hidden_size},)"
        )
    z = expit(w.w_z @ x + w.u_z @ h + w.b_z)
    r = expit(w.w_r @ x + w.u_r @ h + w.b_r)
    h_cand = np.tanh(w.w_h @ x + w.u_h @ (r * h) + w.b_h)
    h_new = (1.0 - z) * h + z * h_cand
    state.hidden = h_new
    return h_new


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    if x.shape != (weight.shape[1],) or bias.shape != (weight.shape[0],):
        raise ShapeError(
            f"linear size mismatch: x {x.shape}, W {weight.shape}, b {bias.shape}"
        )
    return weight @ x + bias


def pixel_shuffle_freq(x: np.ndarray) -> np.ndarray:
    """(2c, t, f) -> (c, t, 2f); channel pairs interleave along frequency."""
    if x.shape[0] % 2 != 0:
        raise ShapeError(f"channel count must be even, got {x.shape[0]}")
    c = x.shape[0] // 2
    t, f = x.shape[1], x.shape[2]
    return np.ascontiguousarray(
        x.reshape(2, c, t, f).transpose(1, 2, 3, 0)
    ).reshape(c, t, 2 * f)


def pixel_unshuffle_freq(x: np.ndarray) -> np.ndarray:
    """Exact inverse of pixel_shuffle_freq."""
    if x.shape[2] % 2 != 0:
        raise ShapeError(f"bin count must be even, got {x.shape[2]}")
    c, t, f2 = x.shape
    return np.ascontiguousarray(
        x.reshape(c, t, f2 // 2, 2).transpose(3, 0, 1, 2)
    ).reshape(2 * c, t, f2 // 2)


def shuffle_frame(pre: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Per-frame pixel shuffle: (2c, f) into a preallocated (c, 2f)."""
    c = pre.shape[0] // 2
    f = pre.shape[1]
    np.copyto(out.reshape(c, f, 2), pre.reshape(2, c, f).transpose(1, 2, 0))
    return out


def softmax_axis(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def unfold_time(x: np.ndarray, d_max: int) -> np.ndarray:
    """(c, t, f) -> (c, t, d_max, f) where out[..., d, :] is x delayed d."""
    if d_max < 1:
        raise ShapeError(f"d_max must be >= 1, got {d_max}")
    c, t, f = x.shape
    xp = np.zeros((c, t + d_max - 1, f), dtype=x.dtype)
    xp[:, d_max - 1 :, :] = x
    s = xp.strides
    view = as_strided(
        xp[:, d_max - 1 :, :],
        shape=(c, t, d_max, f),
        strides=(s[0], s[1], -s[1], s[2]),
    )
    return view.copy()
