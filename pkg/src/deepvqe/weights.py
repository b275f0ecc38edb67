"""Binary weight container with a self-describing manifest.

File layout (all integers little-endian):

    magic   4 bytes  "DVQE"
    u32     format version (1)
    u32     entry count
    u32     variant length, then variant bytes (UTF-8)
    u32     config-hash length, then hash bytes (hex)
    pad to 8-byte boundary
    per entry:
        u32     name length, then name bytes (UTF-8)
        u8      rank
        u32 * rank  dims
        pad to 8
        f32 * prod(dims)  tensor data, little-endian
        pad to 8

Tensors are float32 regardless of host endianness.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .config import ModelConfig, parameter_specs
from .errors import WeightFormatError

MAGIC = b"DVQE"
VERSION = 1


class WeightStore:
    """Ordered name -> float32 tensor map plus format metadata."""

    def __init__(self, variant: str = "", config_hash: str = ""):
        self.entries: dict[str, np.ndarray] = {}
        self.format_version = VERSION
        self.variant = variant
        self.config_hash = config_hash

    def put(self, name: str, tensor: np.ndarray) -> None:
        if name in self.entries:
            raise WeightFormatError(f"duplicate tensor name {name!r}")
        self.entries[name] = np.ascontiguousarray(tensor, dtype=np.float32)

    def get(self, name: str, shape: tuple[int, ...] | None = None) -> np.ndarray:
        if name not in self.entries:
            raise WeightFormatError(f"missing tensor {name!r}")
        t = self.entries[name]
        if shape is not None and t.shape != tuple(shape):
            raise WeightFormatError(
                f"tensor {name!r}: shape {t.shape} does not match expected {tuple(shape)}"
            )
        return t

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def equals(self, other: "WeightStore") -> bool:
        if list(self.entries) != list(other.entries):
            return False
        return all(
            a.shape == other.entries[k].shape
            and a.tobytes() == other.entries[k].tobytes()
            for k, a in self.entries.items()
        )


def _pad8(n: int) -> int:
    return (-n) % 8


def save(store: WeightStore, path: str | Path) -> None:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(store.entries))]
    for text in (store.variant, store.config_hash):
        raw = text.encode()
        chunks.append(struct.pack("<I", len(raw)) + raw)
    written = sum(len(c) for c in chunks)
    chunks.append(b"\x00" * _pad8(written))
    written += _pad8(written)
    for name, tensor in store.entries.items():
        raw = name.encode()
        head = struct.pack("<I", len(raw)) + raw + struct.pack("<B", tensor.ndim)
        head += struct.pack(f"<{tensor.ndim}I", *tensor.shape)
        head += b"\x00" * _pad8(written + len(head))
        data = tensor.astype("<f4").tobytes()
        data += b"\x00" * _pad8(len(data))
        chunks.append(head + data)
        written += len(head) + len(data)
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise WeightFormatError(f"{self.path}: truncated while reading {what}")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def align8(self) -> None:
        self.pos += _pad8(self.pos)


def load(path: str | Path) -> WeightStore:
    blob = Path(path).read_bytes()
    r = _Reader(blob, path)
    if r.take(4, "magic") != MAGIC:
        raise WeightFormatError(f"{path}: bad magic, not a weight file")
    version, count = struct.unpack("<II", r.take(8, "header"))
    if version != VERSION:
        raise WeightFormatError(f"{path}: unsupported format version {version}")
    (vlen,) = struct.unpack("<I", r.take(4, "variant length"))
    variant = r.take(vlen, "variant").decode()
    (hlen,) = struct.unpack("<I", r.take(4, "config hash length"))
    config_hash = r.take(hlen, "config hash").decode()
    r.align8()

    store = WeightStore(variant=variant, config_hash=config_hash)
    for i in range(count):
        what = f"entry {i} of {count}"
        (nlen,) = struct.unpack("<I", r.take(4, f"name length ({what})"))
        name = r.take(nlen, f"name ({what})").decode()
        (rank,) = struct.unpack("<B", r.take(1, f"rank of {name!r}"))
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank, f"dims of {name!r}"))
        r.align8()
        size = int(np.prod(dims)) if rank else 1
        raw = r.take(4 * size, f"data of tensor {name!r}")
        r.align8()
        tensor = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
        if name in store.entries:
            raise WeightFormatError(f"{path}: duplicate tensor {name!r}")
        store.entries[name] = tensor
    return store


def random_init(cfg: ModelConfig, seed: int) -> WeightStore:
    """Deterministic test weights: uniform(+-1/sqrt(fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    store = WeightStore(variant=cfg.variant, config_hash=cfg.config_hash)
    for spec in parameter_specs(cfg):
        if spec.init == "uniform":
            bound = 1.0 / np.sqrt(spec.fan_in)
            tensor = rng.uniform(-bound, bound, spec.shape)
        elif spec.init == "zeros":
            tensor = np.zeros(spec.shape)
        elif spec.init == "ones":
            tensor = np.ones(spec.shape)
        else:
            raise WeightFormatError(f"unknown init kind {spec.init!r}")
        store.put(spec.name, tensor.astype(np.float32))
    return store


def identity_mask_weights(cfg: ModelConfig) -> WeightStore:
    """All-zero network whose mask build yields the identity kernel.

    Every weight and bias is zero (batch-norm statistics neutral) except the
    final sub-pixel bias, which raises the component-0 channel for the
    (current frame, center bin) kernel slot to 1 in both shuffle phases.
    """
    store = WeightStore(variant=cfg.variant, config_hash=cfg.config_hash)
    for spec in parameter_specs(cfg):
        tensor = np.ones(spec.shape) if spec.init == "ones" else np.zeros(spec.shape)
        store.put(spec.name, tensor.astype(np.float32))
    last = len(cfg.dec_subpixel_filters) - 1
    bias = store.get(f"dec{last}.subpixel.bias")
    slot = cfg.ccm_past_frames * (2 * cfg.ccm_freq_halfwidth + 1) + cfg.ccm_freq_halfwidth
    out_ch = cfg.ccm_channels
    bias[slot] = 1.0
    bias[out_ch + slot] = 1.0
    return store
