"""Kernel bundle: the shipped sidecar that resolves custom operator names.

Each record maps one random custom name to the real kernel it stands for:
builtin code, real option bytes, the positions of true activation inputs in
the public operator's declared input list, and any encapsulated weights.
Decoy records carry DECOY_SENTINEL and encode only their output shape.

Wire format "OBFB", little-endian:

    magic "OBFB" | version u32=1 | record count u32
    per record: custom_name u32 len + UTF-8
                real_builtin_code u16
                options u32 len + bytes
                n_true_inputs u32 + u32 positions
                n_weights u32, per weight: dtype u8, rank u32,
                                           dims rank*u32, data u64 len + bytes
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadMagic, TruncatedSection
from .model_format import DECOY_SENTINEL, DType, _Reader

BUNDLE_MAGIC = b"OBFB"
BUNDLE_VERSION = 1

_NP_DTYPE = {DType.F32: np.float32, DType.I32: np.int32, DType.U8: np.uint8}
_DTYPE_OF = {np.dtype(np.float32): DType.F32, np.dtype(np.int32): DType.I32,
             np.dtype(np.uint8): DType.U8}


@dataclass
class BundleRecord:
    real_builtin_code: int
    real_options: bytes
    true_input_positions: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    # runtime cache for decoy zero outputs; not part of the wire format
    _decoy_output: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def is_decoy(self) -> bool:
        return self.real_builtin_code == DECOY_SENTINEL

    def decoy_shape(self) -> tuple[int, ...]:
        rank = self.real_options[0]
        return struct.unpack(f"<{rank}I", self.real_options[1:1 + 4 * rank])

    def decoy_output(self) -> np.ndarray:
        if self._decoy_output is None:
            self._decoy_output = np.zeros(self.decoy_shape(), np.float32)
        return self._decoy_output

    def __eq__(self, other) -> bool:
        if not isinstance(other, BundleRecord):
            return NotImplemented
        return (self.real_builtin_code == other.real_builtin_code
                and self.real_options == other.real_options
                and self.true_input_positions == other.true_input_positions
                and len(self.weights) == len(other.weights)
                and all(a.dtype == b.dtype and np.array_equal(a, b)
                        for a, b in zip(self.weights, other.weights)))


def encode_decoy_shape(shape: tuple[int, ...]) -> bytes:
    return struct.pack("<B", len(shape)) + struct.pack(f"<{len(shape)}I", *shape)


@dataclass
class KernelBundle:
    records: dict[str, BundleRecord]
    version: int = BUNDLE_VERSION

    def __eq__(self, other) -> bool:
        if not isinstance(other, KernelBundle):
            return NotImplemented
        return self.version == other.version and self.records == other.records


def serialize_bundle(bundle: KernelBundle) -> bytes:
    out = [BUNDLE_MAGIC, struct.pack("<I", bundle.version),
           struct.pack("<I", len(bundle.records))]
    for name, rec in bundle.records.items():
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(struct.pack("<H", rec.real_builtin_code))
        out.append(struct.pack("<I", len(rec.real_options)))
        out.append(rec.real_options)
        out.append(struct.pack("<I", len(rec.true_input_positions)))
        out.append(struct.pack(f"<{len(rec.true_input_positions)}I",
                               *rec.true_input_positions))
        out.append(struct.pack("<I", len(rec.weights)))
        for w in rec.weights:
            data = np.ascontiguousarray(w).tobytes()
            out.append(struct.pack("<BI", int(_DTYPE_OF[w.dtype]), w.ndim))
            out.append(struct.pack(f"<{w.ndim}I", *w.shape))
            out.append(struct.pack("<Q", len(data)))
            out.append(data)
    return b"".join(out)


def load_bundle(data: bytes) -> KernelBundle:
    r = _Reader(data)
    if r.take(4) != BUNDLE_MAGIC:
        raise BadMagic(f"expected {BUNDLE_MAGIC!r} header")
    version = r.u32()
    if version != BUNDLE_VERSION:
        raise BadMagic(f"unsupported bundle version {version}")
    records: dict[str, BundleRecord] = {}
    for _ in range(r.u32()):
        name = r.string()
        code = r.u16()
        options = r.take(r.u32())
        positions = r.indices()
        weights = []
        for _ in range(r.u32()):
            dtype = DType(r.u8())
            rank = r.u32()
            shape = struct.unpack(f"<{rank}I", r.take(4 * rank))
            raw = r.take(r.u64())
            arr = np.frombuffer(raw, dtype=_NP_DTYPE[dtype]).reshape(shape)
            weights.append(arr)
        records[name] = BundleRecord(code, options, positions, tuple(weights))
    if r.pos != len(data):
        raise TruncatedSection(f"{len(data) - r.pos} trailing bytes in bundle")
    return KernelBundle(records, version)
