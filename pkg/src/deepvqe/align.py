"""Cross-attention delay alignment between mic and far-end features.

Point-wise projections produce query/key maps; a dot product over frequency
against time-unfolded keys yields a (time, delay) similarity map, which a
small causal convolution smooths before a per-frame softmax turns it into a
delay probability distribution. Far-end features are then soft-aligned as a
convex combination of their delayed copies.

Key and far-end histories live in rings of the last ``d_max`` frames. The
offline form drives the exact same per-row kernel over a transient ring, so
offline and streaming outputs are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .nn_ops import Conv2dLayer, ConvSpec

TDMAP_KERNEL = (5, 3)


@dataclass
class AlignConfig:
    """Similarity head geometry plus its three convolution specs."""

    h: int
    d_max: int
    q_proj: ConvSpec
    k_proj: ConvSpec
    tdmap_conv: ConvSpec
    scaled_dot: bool = False

    def __post_init__(self):
        if self.h < 1 or self.d_max < 1:
            raise ConfigError(f"h and d_max must be >= 1, got h={self.h} d_max={self.d_max}")
        if self.q_proj.out_ch != self.h or self.k_proj.out_ch != self.h:
            raise ConfigError("q_proj/k_proj must produce h channels")
        if self.tdmap_conv.out_ch != 1:
            raise ConfigError("tdmap_conv must have exactly 1 output filter")
        if self.tdmap_conv.in_ch != self.h:
            raise ConfigError("tdmap_conv must take h input channels")
        if self.tdmap_conv.kernel != TDMAP_KERNEL:
            raise ConfigError(f"tdmap_conv kernel must be {TDMAP_KERNEL}")


def make_align_config(
    h: int,
    mic_ch: int,
    far_ch: int,
    d_max: int = 100,
    scaled_dot: bool = False,
    rng: np.random.Generator | None = None,
    dtype=np.float64,
) -> AlignConfig:
    """AlignConfig with the standard layer geometry (zero or random weights)."""
    def draw(shape):
        if rng is None:
            return np.zeros(shape, dtype)
        fan = int(np.prod(shape[1:]))
        return rng.uniform(-1, 1, shape).astype(dtype) / np.sqrt(fan)

    return AlignConfig(
        h=h,
        d_max=d_max,
        q_proj=ConvSpec(mic_ch, h, (1, 1), weights=draw((h, mic_ch, 1, 1))),
        k_proj=ConvSpec(far_ch, h, (1, 1), weights=draw((h, far_ch, 1, 1))),
        tdmap_conv=ConvSpec(
            h, 1, TDMAP_KERNEL, freq_pad=(1, 1),
            weights=draw((1, h) + TDMAP_KERNEL),
        ),
        scaled_dot=scaled_dot,
    )


class AlignBlock:
    """Prepared alignment block; owns its three convolution layers."""

    def __init__(self, cfg: AlignConfig):
        self.cfg = cfg
        self.q_layer = Conv2dLayer(cfg.q_proj)
        self.k_layer = Conv2dLayer(cfg.k_proj)
        self.td_layer = Conv2dLayer(cfg.tdmap_conv)
        self.dtype = self.q_layer.dtype

    def _row(self, q_row, k_row, far_row, state: "AlignStreamState"):
        """One frame through the ring state; shared by both paths."""
        d_max = self.cfg.d_max
        head = state.head - 1 if state.head > 0 else d_max - 1
        state.head = head
        state.k_ring[head] = k_row
        state.f_ring[head] = far_row

        n_recent = d_max - head   # ring[head:] covers delays [0, n_recent)
        z = state.z_row
        np.einsum("hf,dhf->hd", q_row, state.k_ring[head:], out=z[:, :n_recent])
        if head:
            np.einsum("hf,dhf->hd", q_row, state.k_ring[:head], out=z[:, n_recent:])
        if self.cfg.scaled_dot:
            z *= 1.0 / np.sqrt(q_row.shape[1])

        td = self.td_layer.step(z, state.td_state)[0]
        d_row = state.d_row
        np.subtract(td, td.max(), out=d_row)
        np.exp(d_row, out=d_row)
        d_row /= d_row.sum()

        flat = state.f_ring.reshape(d_max, -1)
        np.matmul(d_row[:n_recent], flat[head:], out=state.acc_a)
        if head:
            np.matmul(d_row[n_recent:], flat[:head], out=state.acc_b)
            state.acc_a += state.acc_b
        return state.aligned, d_row

    def forward(self, mic: np.ndarray, far: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if mic.shape[1:] != far.shape[1:]:
            raise ShapeError(f"mic/far (t, f) mismatch: {mic.shape[1:]} vs {far.shape[1:]}")
        t, f = mic.shape[1], mic.shape[2]
        q = self.q_layer.forward(mic)
        k = self.k_layer.forward(far)
        state = self.new_state(far.shape[0], f)
        q_scr = np.zeros((self.cfg.h, f), dtype=self.dtype)
        aligned = np.zeros_like(far)
        delays = np.zeros((t, self.cfg.d_max), dtype=self.dtype)
        for tau in range(t):
            np.copyto(q_scr, q[:, tau, :])
            row, d_row = self._row(q_scr, k[:, tau, :], far[:, tau, :], state)
            aligned[:, tau, :] = row
            delays[tau] = d_row
        return aligned, delays

    def new_state(self, far_ch: int, f: int) -> "AlignStreamState":
        return AlignStreamState(self, far_ch, f)

    def step(self, mic_frame: np.ndarray, far_frame: np.ndarray, state: "AlignStreamState"):
        if mic_frame.shape[1] != far_frame.shape[1]:
            raise ShapeError(
                f"mic/far bin mismatch: {mic_frame.shape[1]} vs {far_frame.shape[1]}"
            )
        q = self.q_layer.step(mic_frame, state.q_state)
        k = self.k_layer.step(far_frame, state.k_state)
        return self._row(q, k, far_frame, state)


class AlignStreamState:
    """Rings of the last d_max key/far frames plus per-row scratch."""

    def __init__(self, block: AlignBlock, far_ch: int, f: int):
        cfg = block.cfg
        self.q_state = block.q_layer.new_state(f)
        self.k_state = block.k_layer.new_state(f)
        self.td_state = block.td_layer.new_state(cfg.d_max)
        self.k_ring = np.zeros((cfg.d_max, cfg.h, f), dtype=block.dtype)
        self.f_ring = np.zeros((cfg.d_max, far_ch, f), dtype=block.dtype)
        self.head = 0
        self.z_row = np.zeros((cfg.h, cfg.d_max), dtype=block.dtype)
        self.d_row = np.zeros(cfg.d_max, dtype=block.dtype)
        self.acc_a = np.zeros(far_ch * f, dtype=block.dtype)
        self.acc_b = np.zeros(far_ch * f, dtype=block.dtype)
        self.aligned = self.acc_a.reshape(far_ch, f)

    def reset(self) -> None:
        for st in (self.q_state, self.k_state, self.td_state):
            st.reset()
        for buf in (self.k_ring, self.f_ring, self.z_row, self.d_row, self.acc_a, self.acc_b):
            buf[:] = 0
        self.head = 0


def align_forward(mic: np.ndarray, far: np.ndarray, cfg: AlignConfig):
    """Offline alignment: (aligned_far, delay_distribution)."""
    return AlignBlock(cfg).forward(mic, far)
