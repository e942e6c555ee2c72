"""Reference execution engine.

Runs plain models through builtin dispatch and obfuscated models through the
kernel bundle: a custom operator's record selects the true activation inputs
from the declared input list, appends encapsulated weights, and executes the
real kernel with the real options.  Decoy inputs and decoy layers never feed
the true computation, so obfuscated outputs are bit-identical to the
original's.

Declared tensor shapes are never consulted during execution (they may be
decoys); runtime shapes come from the actual arrays.  The leading axis of
every graph input is treated as a batch dimension and may differ from the
declared size.

Memory accounting is deliberately naive: every graph input, every constant
(model- or bundle-resident), and every operator output is assumed live for
the whole run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bundle import KernelBundle
from .errors import MissingBundle, ShapeMismatch, UnknownCustomName
from .kernels import execute_builtin
from .model_format import (
    CUSTOM_SENTINEL,
    DECOY_SENTINEL,
    BuiltinOp,
    DType,
    ModelGraph,
    decode_options,
)

_NP_DTYPE = {DType.F32: np.float32, DType.I32: np.int32, DType.U8: np.uint8}


@dataclass
class ExecutionTrace:
    output_shapes: list[tuple[tuple[int, ...], ...]] = field(default_factory=list)
    op_seconds: list[float] = field(default_factory=list)
    peak_live_bytes: int = 0


def materialize_constants(graph: ModelGraph) -> dict[int, np.ndarray]:
    """Decode every constant tensor's buffer into an array."""
    consts: dict[int, np.ndarray] = {}
    for i, t in enumerate(graph.tensors):
        if t.buffer_index != 0:
            raw = graph.buffers[t.buffer_index]
            consts[i] = np.frombuffer(raw, dtype=_NP_DTYPE[t.dtype]).reshape(t.shape)
    return consts


def _check_inputs(graph: ModelGraph, inputs: list[np.ndarray]) -> None:
    if len(inputs) != len(graph.graph_inputs):
        raise ShapeMismatch(f"graph takes {len(graph.graph_inputs)} inputs, "
                            f"got {len(inputs)}")
    for k, (arr, t_idx) in enumerate(zip(inputs, graph.graph_inputs)):
        declared = graph.tensors[t_idx].shape
        if arr.ndim != len(declared) or tuple(arr.shape[1:]) != declared[1:]:
            raise ShapeMismatch(
                f"input {k}: shape {tuple(arr.shape)} incompatible with "
                f"declared {declared} (leading axis is free)")


def run(graph: ModelGraph, bundle: KernelBundle | None,
        inputs: list[np.ndarray],
        op_timing: bool = True) -> tuple[list[np.ndarray], ExecutionTrace]:
    """Execute the graph; returns graph outputs and an execution trace.

    ``op_timing=False`` skips the per-operator clock reads so benchmark loops
    measure pure execution; shapes and the memory proxy are always recorded.
    """
    _check_inputs(graph, inputs)
    values: dict[int, np.ndarray] = {}
    peak = 0
    for arr, t_idx in zip(inputs, graph.graph_inputs):
        arr = np.ascontiguousarray(arr)
        values[t_idx] = arr
        peak += arr.nbytes

    consts = materialize_constants(graph)
    for i, arr in consts.items():
        values[i] = arr
        peak += arr.nbytes
    if bundle is not None:
        for rec in bundle.records.values():
            for w in rec.weights:
                peak += w.nbytes

    trace = ExecutionTrace()
    shapes = trace.output_shapes
    seconds = trace.op_seconds
    opcodes = graph.opcodes
    records = bundle.records if bundle is not None else None
    clock = time.perf_counter if op_timing else None
    for op in graph.operators:
        opcode = opcodes[op.opcode_index]
        t0 = clock() if clock else 0.0
        if opcode.builtin_code != CUSTOM_SENTINEL:
            kind = BuiltinOp(opcode.builtin_code)
            args = [values[t] for t in op.inputs]
            outs = execute_builtin(kind, args, decode_options(kind, op.options))
        else:
            if records is None:
                raise MissingBundle(
                    f"operator {opcode.custom_name!r} is custom but no bundle "
                    f"was supplied")
            rec = records.get(opcode.custom_name)
            if rec is None:
                raise UnknownCustomName(
                    f"bundle has no record for {opcode.custom_name!r}")
            code = rec.real_builtin_code
            if code == DECOY_SENTINEL:
                decoy = rec._decoy_output
                if decoy is None:
                    decoy = rec.decoy_output()
                outs = (decoy,)
            else:
                kind = BuiltinOp(code)
                args = [values[op.inputs[p]] for p in rec.true_input_positions]
                args.extend(rec.weights)
                outs = execute_builtin(kind, args,
                                       decode_options(kind, rec.real_options))
        if clock:
            seconds.append(clock() - t0)
        out0 = outs[0]
        if len(outs) == 1:
            shapes.append((out0.shape,))
            values[op.outputs[0]] = out0
            peak += out0.nbytes
        else:
            shapes.append(tuple(o.shape for o in outs))
            for t_idx, out in zip(op.outputs, outs):
                values[t_idx] = out
                peak += out.nbytes

    trace.peak_live_bytes = peak
    return [values[t] for t in graph.graph_outputs], trace


def peak_tensor_bytes(graph: ModelGraph, bundle: KernelBundle | None,
                      inputs: list[np.ndarray]) -> int:
    """Byte total when inputs, constants, and all operator outputs coexist."""
    _, trace = run(graph, bundle, inputs)
    return trace.peak_live_bytes
