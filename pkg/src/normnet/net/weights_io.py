"""Bit-exact weight serialization.

Layout, little-endian throughout: magic "NNWT", u32 version, u64 optimizer
step, u32 entry count, then per entry a u32 name length, the UTF-8 name,
u32 rank, rank u32 dims, and the float32 payload. Entries hold trainable
parameters and batch-norm running statistics alike, in network order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

WEIGHTS_MAGIC = b"NNWT"
WEIGHTS_VERSION = 1


@dataclass
class NetworkWeights:
    """Named float32 arrays plus the optimizer step they were saved at."""

    entries: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def weights_from_network(network, step: int = 0) -> NetworkWeights:
    """Snapshot a float32 network's parameters and buffers."""
    entries = {}
    for name, array in network.state().items():
        if array.dtype != np.float32:
            raise ValueError(
                f"{name}: only float32 networks serialize, got {array.dtype}"
            )
        entries[name] = array.copy()
    return NetworkWeights(entries=entries, step=step)


def apply_weights(network, weights: NetworkWeights) -> None:
    """Load entries into a network in place; shapes must match exactly."""
    state = network.state()
    missing = set(state) - set(weights.entries)
    if missing:
        raise ValueError(f"weights missing entry {sorted(missing)[0]!r}")
    extra = set(weights.entries) - set(state)
    if extra:
        raise ValueError(f"weights carry unknown entry {sorted(extra)[0]!r}")
    for name, live in state.items():
        stored = weights.entries[name]
        if stored.shape != live.shape:
            raise ValueError(
                f"{name}: shape {stored.shape} does not match network {live.shape}"
            )
        live[...] = stored.astype(live.dtype)


def save_weights(weights: NetworkWeights, path) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIQI", WEIGHTS_MAGIC, WEIGHTS_VERSION,
                             weights.step, len(weights.entries)))
        for name, array in weights.entries.items():
            if array.dtype != np.float32:
                raise ValueError(f"{name}: entries must be float32, got {array.dtype}")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", array.ndim))
            fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
            fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def _take(blob: bytes, offset: int, count: int, path) -> tuple[bytes, int]:
    if offset + count > len(blob):
        raise ValueError(f"{path}: unexpected end of weights blob")
    return blob[offset : offset + count], offset + count


def load_weights(path) -> NetworkWeights:
    with open(path, "rb") as fh:
        blob = fh.read()
    header, offset = _take(blob, 0, 20, path)
    magic, version, step, count = struct.unpack("<4sIQI", header)
    if magic != WEIGHTS_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != WEIGHTS_VERSION:
        raise ValueError(f"{path}: unsupported weights version {version}")
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        raw, offset = _take(blob, offset, 4, path)
        (name_len,) = struct.unpack("<I", raw)
        raw, offset = _take(blob, offset, name_len, path)
        name = raw.decode("utf-8")
        raw, offset = _take(blob, offset, 4, path)
        (rank,) = struct.unpack("<I", raw)
        raw, offset = _take(blob, offset, 4 * rank, path)
        dims = struct.unpack(f"<{rank}I", raw)
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw, offset = _take(blob, offset, 4 * size, path)
        entries[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    if offset != len(blob):
        raise ValueError(f"{path}: {len(blob) - offset} trailing bytes after entries")
    return NetworkWeights(entries=entries, step=step)
