"""Model configuration, presets, config file I/O and the parameter catalog.

The catalog enumerates every tensor of a configured model in a canonical
order with its shape and initialization kind; the weight container, the
model builder and the parameter counter all derive from it, so the weight
file contract has a single source of truth.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import kvdoc
from .errors import ConfigError

FORMAT_VERSION = 1

_INT_LIST_KEYS = ("mic_enc_filters", "far_enc_filters", "dec_subpixel_filters")
_BOOL_LIST_KEYS = ("mic_residual", "far_residual", "dec_residual")


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    mic_enc_filters: tuple[int, ...]
    far_enc_filters: tuple[int, ...]
    dec_subpixel_filters: tuple[int, ...]
    mic_residual: tuple[bool, ...]
    far_residual: tuple[bool, ...]
    dec_residual: tuple[bool, ...]
    gru_hidden: int
    align_channels: int
    max_delay_frames: int = 100
    scaled_dot: bool = False
    ccm_past_frames: int = 2
    ccm_freq_halfwidth: int = 1
    compress_exponent: float = 0.3
    sample_rate: int = 24000
    window_len: int = 480
    hop: int = 240
    dft_len: int = 480

    def __post_init__(self):
        for key in _INT_LIST_KEYS + _BOOL_LIST_KEYS:
            object.__setattr__(self, key, tuple(getattr(self, key)))
        self.validate()

    def validate(self) -> None:
        if len(self.far_enc_filters) != 2:
            raise ConfigError("far_enc_filters: far-end branch must have exactly 2 blocks")
        if len(self.mic_enc_filters) < 3:
            raise ConfigError("mic_enc_filters: need at least 3 blocks (alignment joins after block 2)")
        if len(self.dec_subpixel_filters) != len(self.mic_enc_filters):
            raise ConfigError(
                "dec_subpixel_filters: decoder must have as many blocks as the mic encoder"
            )
        if len(self.mic_residual) != len(self.mic_enc_filters):
            raise ConfigError("mic_residual: one flag per mic encoder block")
        if len(self.far_residual) != len(self.far_enc_filters):
            raise ConfigError("far_residual: one flag per far encoder block")
        if len(self.dec_residual) != len(self.dec_subpixel_filters):
            raise ConfigError("dec_residual: one flag per decoder block")
        if any(v < 1 for v in self.mic_enc_filters + self.far_enc_filters + self.dec_subpixel_filters):
            raise ConfigError("filter counts must be positive")
        if self.dec_subpixel_filters[-1] != self.ccm_channels:
            raise ConfigError(
                f"dec_subpixel_filters: last decoder block must produce {self.ccm_channels} "
                f"channels for the mask builder, got {self.dec_subpixel_filters[-1]}"
            )
        if self.gru_hidden < 1:
            raise ConfigError("gru_hidden must be >= 1")
        if self.align_channels < 1:
            raise ConfigError("align_channels must be >= 1")
        if self.max_delay_frames < 1:
            raise ConfigError("max_delay_frames must be >= 1")
        if self.ccm_past_frames < 0 or self.ccm_freq_halfwidth < 0:
            raise ConfigError("ccm_past_frames and ccm_freq_halfwidth must be >= 0")
        if not 0.0 < self.compress_exponent <= 1.0:
            raise ConfigError("compress_exponent must be in (0, 1]")
        if self.sample_rate != 24000:
            raise ConfigError("sample_rate: the model operates at 24000 Hz")
        if self.window_len != self.dft_len or self.hop * 2 != self.window_len:
            raise ConfigError("window_len must equal dft_len and be twice the hop")
        ladder = self.encoder_ladder
        if ladder[-1] < 1:
            raise ConfigError("mic_enc_filters: too many blocks, frequency ladder collapsed")

    # Shape arithmetic -----------------------------------------------------

    @property
    def bins(self) -> int:
        return self.dft_len // 2 + 1

    @property
    def ccm_channels(self) -> int:
        return 3 * (self.ccm_past_frames + 1) * (2 * self.ccm_freq_halfwidth + 1)

    @property
    def encoder_ladder(self) -> tuple[int, ...]:
        """Bin counts entering the mic branch: input plus after each block."""
        ladder = [self.bins]
        for _ in self.mic_enc_filters:
            ladder.append((ladder[-1] - 1) // 2 + 1)
        return tuple(ladder)

    @property
    def decoder_targets(self) -> tuple[int, ...]:
        """Output bin count of each decoder block (crop targets)."""
        ladder = self.encoder_ladder
        return tuple(reversed(ladder[:-1]))

    @property
    def bottleneck_width(self) -> int:
        return self.mic_enc_filters[-1] * self.encoder_ladder[-1]

    @property
    def mic_in_channels(self) -> tuple[int, ...]:
        chans = [2]
        for i, f in enumerate(self.mic_enc_filters[:-1]):
            if i == 1:
                chans.append(f + self.far_enc_filters[-1])
            else:
                chans.append(f)
        return tuple(chans)

    @property
    def far_in_channels(self) -> tuple[int, ...]:
        return (2, self.far_enc_filters[0])

    @property
    def dec_in_channels(self) -> tuple[int, ...]:
        return (self.mic_enc_filters[-1],) + tuple(self.dec_subpixel_filters[:-1])

    @property
    def skip_source_channels(self) -> tuple[int, ...]:
        return tuple(reversed(self.mic_enc_filters))

    # Serialization ---------------------------------------------------------

    def to_doc(self) -> dict:
        doc = {"format_version": FORMAT_VERSION}
        for f in fields(self):
            doc[f.name] = getattr(self, f.name)
        return doc

    @property
    def config_hash(self) -> str:
        canonical = kvdoc.dumps(dict(sorted(self.to_doc().items())))
        return hashlib.sha256(canonical.encode()).hexdigest()


def config_from_doc(entries: dict[str, str]) -> ModelConfig:
    version = kvdoc.get_int(entries, "format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(f"format_version: expected {FORMAT_VERSION}, got {version}")
    kwargs = {}
    for f in fields(ModelConfig):
        if f.name in _INT_LIST_KEYS:
            kwargs[f.name] = tuple(kvdoc.get_int_list(entries, f.name))
        elif f.name in _BOOL_LIST_KEYS:
            kwargs[f.name] = tuple(kvdoc.get_bool_list(entries, f.name))
        elif f.type == "int":
            kwargs[f.name] = kvdoc.get_int(entries, f.name)
        elif f.type == "float":
            kwargs[f.name] = kvdoc.get_float(entries, f.name)
        elif f.type == "bool":
            kwargs[f.name] = kvdoc.get_bool(entries, f.name)
        else:
            kwargs[f.name] = kvdoc.get_str(entries, f.name)
    return ModelConfig(**kwargs)


def read_config(path: str | Path) -> ModelConfig:
    return config_from_doc(kvdoc.read(path))


def write_config(cfg: ModelConfig, path: str | Path) -> None:
    kvdoc.write(path, cfg.to_doc())


def preset(name: str) -> ModelConfig:
    if name == "deepvqe":
        return ModelConfig(
            variant="deepvqe",
            mic_enc_filters=(64, 128, 128, 128, 128),
            far_enc_filters=(32, 128),
            dec_subpixel_filters=(128, 128, 128, 64, 27),
            mic_residual=(True,) * 5,
            far_residual=(True,) * 2,
            dec_residual=(True,) * 5,
            gru_hidden=512,
            align_channels=16,
        )
    if name == "deepvqe-s":
        return ModelConfig(
            variant="deepvqe-s",
            mic_enc_filters=(16, 40, 56, 24),
            far_enc_filters=(8, 24),
            dec_subpixel_filters=(40, 32, 32, 27),
            mic_residual=(False,) * 4,
            far_residual=(False,) * 2,
            dec_residual=(False, True, True, False),
            gru_hidden=192,
            align_channels=8,
        )
    raise ConfigError(f"unknown preset {name!r}, expected 'deepvqe' or 'deepvqe-s'")


# Parameter catalog ---------------------------------------------------------

@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: tuple[int, ...]
    init: str            # uniform | zeros | ones
    fan_in: int = 0
    learnable: bool = True

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


def _conv_params(prefix: str, out_ch: int, in_ch: int, k_t: int, k_f: int) -> list[ParamSpec]:
    return [
        ParamSpec(f"{prefix}.weight", (out_ch, in_ch, k_t, k_f), "uniform", in_ch * k_t * k_f),
        ParamSpec(f"{prefix}.bias", (out_ch,), "zeros"),
    ]


def _bn_params(prefix: str, ch: int) -> list[ParamSpec]:
    return [
        ParamSpec(f"{prefix}.gamma", (ch,), "ones"),
        ParamSpec(f"{prefix}.beta", (ch,), "zeros"),
        ParamSpec(f"{prefix}.mean", (ch,), "zeros", learnable=False),
        ParamSpec(f"{prefix}.var", (ch,), "ones", learnable=False),
    ]


def parameter_specs(cfg: ModelConfig) -> list[ParamSpec]:
    """Every tensor of the model, in canonical order."""
    specs: list[ParamSpec] = []

    def encoder_block(prefix, in_ch, out_ch, residual):
        specs.extend(_conv_params(f"{prefix}.conv", out_ch, in_ch, 4, 3))
        specs.extend(_bn_params(f"{prefix}.bn", out_ch))
        if residual:
            specs.extend(_conv_params(f"{prefix}.res.conv", out_ch, out_ch, 4, 3))
            specs.extend(_bn_params(f"{prefix}.res.bn", out_ch))

    for i, (cin, cout) in enumerate(zip(cfg.mic_in_channels, cfg.mic_enc_filters)):
        encoder_block(f"enc.mic{i}", cin, cout, cfg.mic_residual[i])
    for i, (cin, cout) in enumerate(zip(cfg.far_in_channels, cfg.far_enc_filters)):
        encoder_block(f"enc.far{i}", cin, cout, cfg.far_residual[i])

    h = cfg.align_channels
    specs.extend(_conv_params("align.q_proj", h, cfg.mic_enc_filters[1], 1, 1))
    specs.extend(_conv_params("align.k_proj", h, cfg.far_enc_filters[1], 1, 1))
    specs.extend(_conv_params("align.tdmap", 1, h, 5, 3))

    flat = cfg.bottleneck_width
    hid = cfg.gru_hidden
    for gate in ("z", "r", "h"):
        specs.append(ParamSpec(f"bottleneck.gru.w_{gate}", (hid, flat), "uniform", flat))
        specs.append(ParamSpec(f"bottleneck.gru.u_{gate}", (hid, hid), "uniform", hid))
        specs.append(ParamSpec(f"bottleneck.gru.b_{gate}", (hid,), "zeros"))
    specs.append(ParamSpec("bottleneck.proj.weight", (flat, hid), "uniform", hid))
    specs.append(ParamSpec("bottleneck.proj.bias", (flat,), "zeros"))

    n_dec = len(cfg.dec_subpixel_filters)
    for i in range(n_dec):
        dec_in = cfg.dec_in_channels[i]
        skip_src = cfg.skip_source_channels[i]
        specs.extend(_conv_params(f"dec{i}.skip", dec_in, skip_src, 1, 1))
        if cfg.dec_residual[i]:
            specs.extend(_conv_params(f"dec{i}.res.conv", dec_in, dec_in, 4, 3))
            specs.extend(_bn_params(f"dec{i}.res.bn", dec_in))
        filters = cfg.dec_subpixel_filters[i]
        specs.extend(_conv_params(f"dec{i}.subpixel", 2 * filters, dec_in, 4, 3))
        if i < n_dec - 1:
            specs.extend(_bn_params(f"dec{i}.bn", filters))
    return specs


def count_parameters(cfg: ModelConfig) -> int:
    """Learnable parameter total (batch-norm statistics excluded)."""
    return sum(s.size for s in parameter_specs(cfg) if s.learnable)
