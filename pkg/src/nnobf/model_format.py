"""On-device model container format ("NNM1") and its in-memory graph IR.

A model file is a little-endian, length-prefixed dump of five tables:

    magic "NNM1" | version u32=1
    opcode table   u32 count | per entry: builtin_code u16 (0xFFFF = CUSTOM),
                                          custom_name u32 len + UTF-8
    buffer table   u32 count | per entry: u64 len + raw bytes (entry 0 empty)
    tensor table   u32 count | per entry: name u32 len + UTF-8, dtype u8,
                                          rank u32, dims rank*u32, buffer_index u32
    operator table u32 count | per entry: opcode_index u32,
                                          n_inputs u32 + u32 indices,
                                          n_outputs u32 + u32 indices,
                                          options_kind u8, options u32 len + bytes
    graph io       n u32 + u32 indices, twice (inputs then outputs)

Serialization is canonical: a graph maps to exactly one byte string, and
``parse_model(serialize_model(g)) == g`` field for field.

Conventions baked into the format:

* buffer 0 is reserved empty; ``buffer_index == 0`` marks an activation tensor.
* operators are stored in a valid topological order.
* within one operator's input list, constant tensors follow activation tensors.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass, field
from enum import IntEnum

from .errors import (
    BadMagic,
    CycleDetected,
    IndexOutOfRange,
    InvariantViolation,
    TruncatedSection,
)

MAGIC = b"NNM1"
VERSION = 1

CUSTOM_SENTINEL = 0xFFFF
# Marks injected decoy layers inside plans/bundles; never serialized in a model.
DECOY_SENTINEL = 0xFFFE

CUSTOM_NAME_RE = re.compile(r"^[A-Z][a-z]{5}$")


class DType(IntEnum):
    F32 = 0
    I32 = 1
    U8 = 2


DTYPE_SIZE = {DType.F32: 4, DType.I32: 4, DType.U8: 1}


class BuiltinOp(IntEnum):
    CONV_2D = 1
    DEPTHWISE_CONV_2D = 2
    DENSE = 3
    RELU = 4
    RELU6 = 5
    MAX_POOL_2D = 6
    AVG_POOL_2D = 7
    ADD = 8
    CONCAT = 9
    SOFTMAX = 10
    RESHAPE = 11
    FLATTEN = 12


# Display names used by dump_json and the extraction report.
BUILTIN_NAMES = {
    BuiltinOp.CONV_2D: "Conv2D",
    BuiltinOp.DEPTHWISE_CONV_2D: "DepthwiseConv2D",
    BuiltinOp.DENSE: "Dense",
    BuiltinOp.RELU: "ReLU",
    BuiltinOp.RELU6: "ReLU6",
    BuiltinOp.MAX_POOL_2D: "MaxPool2D",
    BuiltinOp.AVG_POOL_2D: "AvgPool2D",
    BuiltinOp.ADD: "Add",
    BuiltinOp.CONCAT: "Concat",
    BuiltinOp.SOFTMAX: "Softmax",
    BuiltinOp.RESHAPE: "Reshape",
    BuiltinOp.FLATTEN: "Flatten",
}


class Padding(IntEnum):
    VALID = 0
    SAME = 1


class Activation(IntEnum):
    NONE = 0
    RELU = 1
    RELU6 = 2


class OptionsKind(IntEnum):
    BUILTIN = 0
    CUSTOM = 1


# ---------------------------------------------------------------------------
# builtin option structs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvOptions:
    stride_w: int = 1
    stride_h: int = 1
    padding: Padding = Padding.VALID
    activation: Activation = Activation.NONE


@dataclass(frozen=True)
class PoolOptions:
    filter_w: int = 2
    filter_h: int = 2
    stride_w: int = 2
    stride_h: int = 2
    padding: Padding = Padding.VALID


@dataclass(frozen=True)
class DenseOptions:
    activation: Activation = Activation.NONE


@dataclass(frozen=True)
class ConcatOptions:
    axis: int = -1


def encode_options(kind: BuiltinOp, opts) -> bytes:
    """Pack an options struct into its little-endian byte layout."""
    if kind in (BuiltinOp.CONV_2D, BuiltinOp.DEPTHWISE_CONV_2D):
        return struct.pack("<HHBB", opts.stride_w, opts.stride_h,
                           int(opts.padding), int(opts.activation))
    if kind in (BuiltinOp.MAX_POOL_2D, BuiltinOp.AVG_POOL_2D):
        return struct.pack("<HHHHB", opts.filter_w, opts.filter_h,
                           opts.stride_w, opts.stride_h, int(opts.padding))
    if kind is BuiltinOp.DENSE:
        return struct.pack("<B", int(opts.activation))
    if kind is BuiltinOp.CONCAT:
        return struct.pack("<i", opts.axis)
    return b""


OPTIONS_LENGTH = {
    BuiltinOp.CONV_2D: 6,
    BuiltinOp.DEPTHWISE_CONV_2D: 6,
    BuiltinOp.MAX_POOL_2D: 9,
    BuiltinOp.AVG_POOL_2D: 9,
    BuiltinOp.DENSE: 1,
    BuiltinOp.CONCAT: 4,
}


def decode_options(kind: BuiltinOp, raw: bytes):
    """Inverse of :func:`encode_options`; zero-length kinds return ``None``."""
    if kind in (BuiltinOp.CONV_2D, BuiltinOp.DEPTHWISE_CONV_2D):
        sw, sh, pad, act = struct.unpack("<HHBB", raw)
        return ConvOptions(sw, sh, Padding(pad), Activation(act))
    if kind in (BuiltinOp.MAX_POOL_2D, BuiltinOp.AVG_POOL_2D):
        fw, fh, sw, sh, pad = struct.unpack("<HHHHB", raw)
        return PoolOptions(fw, fh, sw, sh, Padding(pad))
    if kind is BuiltinOp.DENSE:
        return DenseOptions(Activation(raw[0]))
    if kind is BuiltinOp.CONCAT:
        return ConcatOptions(struct.unpack("<i", raw)[0])
    return None


# ---------------------------------------------------------------------------
# graph IR
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperatorCode:
    """One opcode table entry: a builtin kernel id or a named custom operator."""
    builtin_code: int
    custom_name: str = ""

    @property
    def is_custom(self) -> bool:
        return self.builtin_code == CUSTOM_SENTINEL


@dataclass(frozen=True)
class Tensor:
    name: str
    dtype: DType
    shape: tuple[int, ...]
    buffer_index: int = 0  # 0 = activation, no constant data


@dataclass(frozen=True)
class OperatorEntry:
    opcode_index: int
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]
    options_kind: OptionsKind = OptionsKind.BUILTIN
    options: bytes = b""


@dataclass(frozen=True)
class ModelGraph:
    """Immutable single-subgraph model. Safe to share across threads."""
    opcodes: tuple[OperatorCode, ...]
    buffers: tuple[bytes, ...]
    tensors: tuple[Tensor, ...]
    operators: tuple[OperatorEntry, ...]
    graph_inputs: tuple[int, ...]
    graph_outputs: tuple[int, ...]

    def is_constant(self, tensor_index: int) -> bool:
        return self.tensors[tensor_index].buffer_index != 0

    def op_kind(self, op: OperatorEntry) -> OperatorCode:
        return self.opcodes[op.opcode_index]


def empty_graph() -> ModelGraph:
    return ModelGraph(opcodes=(), buffers=(b"",), tensors=(), operators=(),
                      graph_inputs=(), graph_outputs=())


def tensor_byte_size(t: Tensor) -> int:
    n = 1
    for d in t.shape:
        n *= d
    return n * DTYPE_SIZE[t.dtype]


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate(graph: ModelGraph) -> list[str]:
    """Return a description of every violated invariant; [] means executable."""
    v: list[str] = []
    n_op = len(graph.operators)
    n_t = len(graph.tensors)

    for i, oc in enumerate(graph.opcodes):
        if oc.is_custom != bool(oc.custom_name):
            v.append(f"opcodes[{i}]: builtin_code/custom_name mismatch "
                     f"(code={oc.builtin_code:#x}, name={oc.custom_name!r})")
        if oc.custom_name and not CUSTOM_NAME_RE.match(oc.custom_name):
            v.append(f"opcodes[{i}].custom_name: {oc.custom_name!r} does not "
                     f"match [A-Z][a-z]{{5}}")
        if not oc.is_custom and oc.builtin_code not in BuiltinOp._value2member_map_:
            v.append(f"opcodes[{i}].builtin_code: unknown builtin {oc.builtin_code}")

    if not graph.buffers:
        v.append("buffers: table must contain reserved empty entry 0")
    elif graph.buffers[0] != b"":
        v.append("buffers[0]: reserved entry must be empty")

    for i, t in enumerate(graph.tensors):
        if any(d < 1 for d in t.shape):
            v.append(f"tensors[{i}].shape: dims must be >= 1, got {t.shape}")
        if not 0 <= t.buffer_index < len(graph.buffers):
            v.append(f"tensors[{i}].buffer_index: {t.buffer_index} out of range")
        elif t.buffer_index != 0:
            want = tensor_byte_size(t)
            got = len(graph.buffers[t.buffer_index])
            if want != got:
                v.append(f"tensors[{i}]: buffer {t.buffer_index} holds {got} "
                         f"bytes, shape/dtype implies {want}")

    produced_by: dict[int, int] = {}
    for i, op in enumerate(graph.operators):
        if not 0 <= op.opcode_index < len(graph.opcodes):
            v.append(f"operators[{i}].opcode_index: {op.opcode_index} out of range")
        else:
            oc = graph.opcodes[op.opcode_index]
            if oc.is_custom and op.options_kind is not OptionsKind.CUSTOM:
                v.append(f"operators[{i}]: custom opcode requires CUSTOM options")
            if not oc.is_custom:
                if op.options_kind is not OptionsKind.BUILTIN:
                    v.append(f"operators[{i}]: builtin opcode requires BUILTIN options")
                elif oc.builtin_code in BuiltinOp._value2member_map_:
                    kind = BuiltinOp(oc.builtin_code)
                    want = OPTIONS_LENGTH.get(kind, 0)
                    if len(op.options) != want:
                        v.append(f"operators[{i}].options: expected {want} bytes "
                                 f"for {BUILTIN_NAMES[kind]}, got {len(op.options)}")
        for j, tin in enumerate(op.inputs):
            if not 0 <= tin < n_t:
                v.append(f"operators[{i}].inputs[{j}]: tensor index {tin} out of range")
        if not op.outputs:
            v.append(f"operators[{i}].outputs: must be non-empty")
        for j, tout in enumerate(op.outputs):
            if not 0 <= tout < n_t:
                v.append(f"operators[{i}].outputs[{j}]: tensor index {tout} out of range")
                continue
            if tout in produced_by:
                v.append(f"operators[{i}] and operators[{produced_by[tout]}] "
                         f"both produce tensor {tout}")
            else:
                produced_by[tout] = i
        # constants must trail activations so custom-dispatch reassembly stays
        # positional
        seen_const = False
        for j, tin in enumerate(op.inputs):
            if not 0 <= tin < n_t:
                continue
            if graph.is_constant(tin):
                seen_const = True
            elif seen_const:
                v.append(f"operators[{i}].inputs: activation input at position "
                         f"{j} follows a constant input")
                break

    for io_name, idxs in (("graph_inputs", graph.graph_inputs),
                          ("graph_outputs", graph.graph_outputs)):
        for j, t in enumerate(idxs):
            if not 0 <= t < n_t:
                v.append(f"{io_name}[{j}]: tensor index {t} out of range")

    graph_input_set = set(graph.graph_inputs)
    for j, t in enumerate(graph.graph_outputs):
        if 0 <= t < n_t and t not in produced_by and t not in graph_input_set:
            v.append(f"graph_outputs[{j}]: tensor {t} is never produced")

    # stored order must be a valid execution order
    available = set(graph_input_set)
    available.update(i for i in range(n_t) if graph.tensors[i].buffer_index != 0)
    order_ok = True
    for i, op in enumerate(graph.operators):
        for tin in op.inputs:
            if 0 <= tin < n_t and tin not in available:
                order_ok = False
                v.append(f"operators[{i}]: input tensor {tin} is not a graph "
                         f"input, constant, or earlier output")
        available.update(t for t in op.outputs if 0 <= t < n_t)
    if not order_ok and _has_cycle(graph):
        v.append("operators: data-flow graph contains a cycle")

    return v


def _has_cycle(graph: ModelGraph) -> bool:
    producers = {t: i for i, op in enumerate(graph.operators)
                 for t in op.outputs if 0 <= t < len(graph.tensors)}
    n = len(graph.operators)
    deps: list[set[int]] = [set() for _ in range(n)]
    for i, op in enumerate(graph.operators):
        for tin in op.inputs:
            p = producers.get(tin)
            if p is not None and p != i:
                deps[i].add(p)
    done: set[int] = set()
    progress = True
    while progress and len(done) < n:
        progress = False
        for i in range(n):
            if i not in done and deps[i] <= done:
                done.add(i)
                progress = True
    return len(done) < n


def _raise_for_violations(violations: list[str]) -> None:
    if not violations:
        return
    msg = "; ".join(violations)
    if any("cycle" in s for s in violations):
        raise CycleDetected(msg)
    if any("out of range" in s for s in violations):
        raise IndexOutOfRange(msg)
    raise InvariantViolation(msg)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _pack_indices(idx: tuple[int, ...]) -> bytes:
    return struct.pack("<I", len(idx)) + struct.pack(f"<{len(idx)}I", *idx)


def serialize_model(graph: ModelGraph) -> bytes:
    """Canonical byte encoding; a pure function of the graph."""
    _raise_for_violations(validate(graph))
    out = [MAGIC, struct.pack("<I", VERSION)]

    out.append(struct.pack("<I", len(graph.opcodes)))
    for oc in graph.opcodes:
        out.append(struct.pack("<H", oc.builtin_code))
        out.append(_pack_str(oc.custom_name))

    out.append(struct.pack("<I", len(graph.buffers)))
    for buf in graph.buffers:
        out.append(struct.pack("<Q", len(buf)))
        out.append(buf)

    out.append(struct.pack("<I", len(graph.tensors)))
    for t in graph.tensors:
        out.append(_pack_str(t.name))
        out.append(struct.pack("<BI", int(t.dtype), len(t.shape)))
        out.append(struct.pack(f"<{len(t.shape)}I", *t.shape))
        out.append(struct.pack("<I", t.buffer_index))

    out.append(struct.pack("<I", len(graph.operators)))
    for op in graph.operators:
        out.append(struct.pack("<I", op.opcode_index))
        out.append(_pack_indices(op.inputs))
        out.append(_pack_indices(op.outputs))
        out.append(struct.pack("<B", int(op.options_kind)))
        out.append(struct.pack("<I", len(op.options)))
        out.append(op.options)

    out.append(_pack_indices(graph.graph_inputs))
    out.append(_pack_indices(graph.graph_outputs))
    return b"".join(out)


class _Reader:
    """Cursor over a byte string that raises TruncatedSection on overrun."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedSection(
                f"need {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    def indices(self) -> tuple[int, ...]:
        n = self.u32()
        return struct.unpack(f"<{n}I", self.take(4 * n))


def parse_model(data: bytes) -> ModelGraph:
    """Parse NNM1 bytes into a validated ModelGraph."""
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise BadMagic(f"expected {MAGIC!r} header")
    version = r.u32()
    if version != VERSION:
        raise BadMagic(f"unsupported version {version}")

    opcodes = []
    for _ in range(r.u32()):
        code = r.u16()
        opcodes.append(OperatorCode(code, r.string()))

    buffers = []
    for _ in range(r.u32()):
        buffers.append(r.take(r.u64()))

    tensors = []
    for _ in range(r.u32()):
        name = r.string()
        dtype_raw = r.u8()
        try:
            dtype = DType(dtype_raw)
        except ValueError:
            raise InvariantViolation(f"tensor {name!r}: unknown dtype {dtype_raw}")
        rank = r.u32()
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank))
        tensors.append(Tensor(name, dtype, shape, r.u32()))

    operators = []
    for _ in range(r.u32()):
        opcode_index = r.u32()
        inputs = r.indices()
        outputs = r.indices()
        kind_raw = r.u8()
        try:
            kind = OptionsKind(kind_raw)
        except ValueError:
            raise InvariantViolation(f"operator: unknown options kind {kind_raw}")
        options = r.take(r.u32())
        operators.append(OperatorEntry(opcode_index, inputs, outputs, kind, options))

    graph_inputs = r.indices()
    graph_outputs = r.indices()
    if r.pos != len(data):
        raise InvariantViolation(f"{len(data) - r.pos} trailing bytes after graph io")

    graph = ModelGraph(tuple(opcodes), tuple(buffers), tuple(tensors),
                       tuple(operators), graph_inputs, graph_outputs)
    _raise_for_violations(validate(graph))
    return graph


# ---------------------------------------------------------------------------
# human-readable dump
# ---------------------------------------------------------------------------

def op_type_name(graph: ModelGraph, op: OperatorEntry) -> str:
    oc = graph.op_kind(op)
    if oc.is_custom:
        return oc.custom_name
    return BUILTIN_NAMES[BuiltinOp(oc.builtin_code)] + "Options"


def options_to_dict(kind: BuiltinOp, raw: bytes):
    opts = decode_options(kind, raw)
    if opts is None:
        return {}
    if isinstance(opts, ConvOptions):
        return {"stride_w": opts.stride_w, "stride_h": opts.stride_h,
                "padding": opts.padding.name, "activation": opts.activation.name}
    if isinstance(opts, PoolOptions):
        return {"filter_w": opts.filter_w, "filter_h": opts.filter_h,
                "stride_w": opts.stride_w, "stride_h": opts.stride_h,
                "padding": opts.padding.name}
    if isinstance(opts, DenseOptions):
        return {"activation": opts.activation.name}
    return {"axis": opts.axis}


def dump_json(graph: ModelGraph) -> str:
    """Readable JSON view of the model file, with stable key order."""
    _raise_for_violations(validate(graph))
    codes = []
    for oc in graph.opcodes:
        entry = {"deprecated_builtin_code": oc.builtin_code}
        if oc.custom_name:
            entry["custom_code"] = oc.custom_name
        codes.append(entry)

    tensors = [{"shape": list(t.shape), "name": t.name,
                "dtype": t.dtype.name, "buffer": t.buffer_index}
               for t in graph.tensors]

    operators = []
    for op in graph.operators:
        entry = {"inputs": list(op.inputs), "outputs": list(op.outputs),
                 "op_type": op_type_name(graph, op)}
        if op.options_kind is OptionsKind.BUILTIN:
            oc = graph.op_kind(op)
            entry["builtin_options"] = options_to_dict(
                BuiltinOp(oc.builtin_code), op.options)
        else:
            entry["custom_options"] = list(op.options)
        operators.append(entry)

    doc = {"operator_codes": codes, "tensors": tensors, "operators": operators}
    return json.dumps(doc, indent=2)
