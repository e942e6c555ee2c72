"""The five obfuscation passes and their orchestration.

Passes apply in a fixed order: rename, parameter encapsulation, shape
obfuscation, shortcut injection, extra-layer injection.  Everything is a
pure function of (graph, config): all randomness flows from per-stage PRNGs
derived from the config seed, so the same inputs always produce byte-identical
artifacts.

Three artifacts come out of :func:`obfuscate`:

* the public obfuscated model (safe to ship),
* a :class:`~nnobf.bundle.KernelBundle` sidecar the runtime needs (ships with
  the interpreter, stands in for a recompiled kernel library),
* an :class:`ObfuscationPlan`, the private inverse mapping.  Anyone holding
  the plan can reconstruct the original model, so it must never be
  distributed.
"""

from __future__ import annotations

import base64
import json
import random
import string
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .bundle import (
    BundleRecord,
    KernelBundle,
    encode_decoy_shape,
    serialize_bundle,
)
from .errors import InvariantViolation, PlanMismatch
from .model_format import (
    CUSTOM_SENTINEL,
    DECOY_SENTINEL,
    DType,
    ModelGraph,
    OperatorCode,
    OperatorEntry,
    OptionsKind,
    Tensor,
    validate,
)

_NP_DTYPE = {DType.F32: np.float32, DType.I32: np.int32, DType.U8: np.uint8}


class SharedConstantWarning(UserWarning):
    """A constant tensor feeds several operators; its data was duplicated."""


class Strategy(Enum):
    RENAME = "rename"
    ENCAPSULATE = "encapsulate"
    SHAPE = "shape"
    SHORTCUT = "shortcut"
    EXTRA_LAYER = "extra_layer"


STRATEGY_ORDER = (Strategy.RENAME, Strategy.ENCAPSULATE, Strategy.SHAPE,
                  Strategy.SHORTCUT, Strategy.EXTRA_LAYER)
ALL_STRATEGIES = frozenset(STRATEGY_ORDER)


class ShapeStrategy(Enum):
    RANDOM = "random"
    ALIGN_TO_LARGEST = "align"


@dataclass(frozen=True)
class ObfuscationConfig:
    seed: int
    n_shortcuts: int = 0
    n_extra_layers: int = 0
    shape_strategy: ShapeStrategy = ShapeStrategy.ALIGN_TO_LARGEST
    strategies: frozenset[Strategy] = ALL_STRATEGIES


def validate_config(cfg: ObfuscationConfig) -> None:
    if cfg.n_shortcuts < 0 or cfg.n_extra_layers < 0:
        raise InvariantViolation("shortcut/extra-layer counts must be >= 0")
    s = cfg.strategies
    if Strategy.ENCAPSULATE in s and Strategy.RENAME not in s:
        raise InvariantViolation(
            "parameter encapsulation requires renaming: bundle records are "
            "keyed by custom operator names")
    if (Strategy.SHORTCUT in s or Strategy.EXTRA_LAYER in s) \
            and not {Strategy.RENAME, Strategy.ENCAPSULATE} <= s:
        raise InvariantViolation(
            "shortcut/extra-layer injection requires rename+encapsulate so "
            "true wiring is hidden in the bundle")


class NameGenerator:
    """Emits unique random names matching [A-Z][a-z]{5}."""

    def __init__(self, seed: int):
        self._rng = random.Random(seed)
        self._used: set[str] = set()

    def fresh(self) -> str:
        while True:
            name = (self._rng.choice(string.ascii_uppercase)
                    + "".join(self._rng.choice(string.ascii_lowercase)
                              for _ in range(5)))
            if name not in self._used:
                self._used.add(name)
                return name


@dataclass
class ObfuscationPlan:
    """Private inverse mapping ("cache file"); never ship with the model."""
    seed: int
    config: ObfuscationConfig
    records: dict[str, BundleRecord] = field(default_factory=dict)
    injected_shortcuts: list[tuple[int, int]] = field(default_factory=list)
    injected_layers: list[tuple[int, tuple[int, ...]]] = field(default_factory=list)


def bundle_from_plan(plan: ObfuscationPlan) -> KernelBundle:
    return KernelBundle(dict(plan.records))


def emit_bundle(plan: ObfuscationPlan) -> bytes:
    return serialize_bundle(bundle_from_plan(plan))


# ---------------------------------------------------------------------------
# individual passes
# ---------------------------------------------------------------------------

def rename(graph: ModelGraph, plan: ObfuscationPlan,
           names: NameGenerator) -> ModelGraph:
    """Give every operator its own custom opcode and every tensor a fresh name.

    Identical layer types deliberately end up with unrelated names.  The plan
    records the real builtin code and options under each new name.
    """
    opcodes: list[OperatorCode] = []
    operators: list[OperatorEntry] = []
    for i, op in enumerate(graph.operators):
        real = graph.opcodes[op.opcode_index]
        if real.is_custom:
            raise InvariantViolation(
                f"operators[{i}] already carries a custom opcode; rename "
                f"expects an unobfuscated graph")
        name = names.fresh()
        opcodes.append(OperatorCode(CUSTOM_SENTINEL, name))
        operators.append(OperatorEntry(i, op.inputs, op.outputs,
                                       OptionsKind.CUSTOM, op.options))
        plan.records[name] = BundleRecord(
            real.builtin_code, op.options,
            tuple(range(len(op.inputs))), ())
    tensors = tuple(Tensor(names.fresh(), t.dtype, t.shape, t.buffer_index)
                    for t in graph.tensors)
    return replace(graph, opcodes=tuple(opcodes), tensors=tensors,
                   operators=tuple(operators))


def encapsulate_parameters(graph: ModelGraph, plan: ObfuscationPlan,
                           rng: random.Random) -> ModelGraph:
    """Move constants and real options into the plan records.

    Constant tensors and their buffers disappear from the public model;
    operator input lists keep only activations.  Public options are replaced
    by meaningless random bytes.
    """
    uses: dict[int, int] = {}
    for op in graph.operators:
        for t in op.inputs:
            if graph.is_constant(t):
                uses[t] = uses.get(t, 0) + 1
    for t, n in uses.items():
        if n > 1:
            warnings.warn(
                f"constant tensor {graph.tensors[t].name!r} feeds {n} "
                f"operators; weights duplicated into each record",
                SharedConstantWarning)

    const_arrays: dict[int, np.ndarray] = {}
    for i, t in enumerate(graph.tensors):
        if t.buffer_index != 0:
            raw = graph.buffers[t.buffer_index]
            const_arrays[i] = np.frombuffer(raw, dtype=_NP_DTYPE[t.dtype]) \
                .reshape(t.shape)

    remap: dict[int, int] = {}
    tensors: list[Tensor] = []
    for i, t in enumerate(graph.tensors):
        if t.buffer_index == 0:
            remap[i] = len(tensors)
            tensors.append(t)

    operators: list[OperatorEntry] = []
    for op in graph.operators:
        name = graph.opcodes[op.opcode_index].custom_name
        acts = [t for t in op.inputs if not graph.is_constant(t)]
        weights = tuple(const_arrays[t] for t in op.inputs
                        if graph.is_constant(t))
        rec = plan.records[name]
        plan.records[name] = BundleRecord(rec.real_builtin_code,
                                          rec.real_options,
                                          tuple(range(len(acts))), weights)
        decoy_options = rng.randbytes(rng.randint(8, 24))
        operators.append(OperatorEntry(op.opcode_index,
                                       tuple(remap[t] for t in acts),
                                       tuple(remap[t] for t in op.outputs),
                                       OptionsKind.CUSTOM, decoy_options))

    return replace(graph, buffers=(b"",), tensors=tuple(tensors),
                   operators=tuple(operators),
                   graph_inputs=tuple(remap[t] for t in graph.graph_inputs),
                   graph_outputs=tuple(remap[t] for t in graph.graph_outputs))


def obfuscate_shapes(graph: ModelGraph, strategy: ShapeStrategy,
                     rng: random.Random) -> ModelGraph:
    """Replace declared shapes with decoys; the runtime never reads them.

    Graph-input shapes stay real (callers must build inputs), and constant
    shapes stay real (their buffers must remain interpretable).
    """
    if not graph.tensors:
        return graph
    largest: tuple[int, ...] = ()
    if strategy is ShapeStrategy.ALIGN_TO_LARGEST:
        best = -1
        for t in graph.tensors:
            if t.buffer_index != 0:
                continue  # pool covers activation shapes, not weights
            n = 1
            for d in t.shape:
                n *= d
            if n > best:
                best, largest = n, t.shape
    inputs = set(graph.graph_inputs)
    tensors: list[Tensor] = []
    for i, t in enumerate(graph.tensors):
        if i in inputs or t.buffer_index != 0:
            tensors.append(t)
        elif strategy is ShapeStrategy.RANDOM:
            shape = tuple(rng.randint(1, 64) for _ in t.shape)
            tensors.append(replace(t, shape=shape))
        else:
            tensors.append(replace(t, shape=largest))
    return replace(graph, tensors=tuple(tensors))


def inject_shortcuts(graph: ModelGraph, n1: int, rng: random.Random,
                     plan: ObfuscationPlan) -> ModelGraph:
    """Append n1 decoy data-flow edges between topologically ordered pairs."""
    n_ops = len(graph.operators)
    if n_ops < 2:
        if n1 > 0:
            warnings.warn("graph has fewer than 2 operators; no shortcuts injected")
        return graph
    inputs = [list(op.inputs) for op in graph.operators]
    for _ in range(n1):
        for _attempt in range(100):
            a, b = sorted(rng.sample(range(n_ops), 2))
            out = graph.operators[a].outputs[0]
            if out in inputs[b]:
                continue
            inputs[b].append(out)
            plan.injected_shortcuts.append((a, b))
            break
        else:
            warnings.warn("no free shortcut pair found after 100 draws; skipped")
    operators = tuple(replace(op, inputs=tuple(ins))
                      for op, ins in zip(graph.operators, inputs))
    return replace(graph, operators=operators)


def inject_extra_layers(graph: ModelGraph, n2: int, rng: random.Random,
                        plan: ObfuscationPlan,
                        names: NameGenerator) -> ModelGraph:
    """Insert n2 decoy operators whose outputs feed later ops' declared inputs.

    A decoy reads some earlier operator's output and produces a small
    zero-filled tensor at runtime; the consumer ignores it.  Decoys are
    inserted right after their producer so stored order stays topological.
    """
    if len(graph.operators) < 2:
        if n2 > 0:
            warnings.warn("graph has fewer than 2 operators; no extra layers injected")
        return graph
    opcodes = list(graph.opcodes)
    tensors = list(graph.tensors)
    operators = [[op.opcode_index, list(op.inputs), list(op.outputs),
                  op.options_kind, op.options] for op in graph.operators]
    # positions of the original (non-decoy) operators in the growing list
    real_pos = list(range(len(operators)))

    for _ in range(n2):
        ai, bi = sorted(rng.sample(range(len(real_pos)), 2))
        r1, r2 = real_pos[ai], real_pos[bi]
        op_name = names.fresh()
        tensor_name = names.fresh()
        shape = (rng.randint(1, 8), rng.randint(1, 8))
        tensors.append(Tensor(tensor_name, DType.F32, shape, 0))
        t_idx = len(tensors) - 1
        opcodes.append(OperatorCode(CUSTOM_SENTINEL, op_name))
        options = rng.randbytes(rng.randint(8, 24))
        decoy = [len(opcodes) - 1, [operators[r1][2][0]], [t_idx],
                 OptionsKind.CUSTOM, options]
        insert_pos = r1 + 1
        operators.insert(insert_pos, decoy)
        real_pos = [p + 1 if p >= insert_pos else p for p in real_pos]
        plan.injected_shortcuts = [
            (i + 1 if i >= insert_pos else i, j + 1 if j >= insert_pos else j)
            for i, j in plan.injected_shortcuts]
        plan.injected_layers = [
            (i + 1 if i >= insert_pos else i, s)
            for i, s in plan.injected_layers]
        operators[real_pos[bi]][1].append(t_idx)
        plan.injected_layers.append((insert_pos, shape))
        plan.records[op_name] = BundleRecord(
            DECOY_SENTINEL, encode_decoy_shape(shape), (), ())

    frozen = tuple(OperatorEntry(oc, tuple(ins), tuple(outs), kind, opts)
                   for oc, ins, outs, kind, opts in operators)
    return replace(graph, opcodes=tuple(opcodes), tensors=tuple(tensors),
                   operators=frozen)


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

def obfuscate(graph: ModelGraph, config: ObfuscationConfig) \
        -> tuple[ModelGraph, KernelBundle, ObfuscationPlan]:
    """Apply the enabled passes in canonical order; fully deterministic."""
    validate_config(config)
    bad = validate(graph)
    if bad:
        raise InvariantViolation("; ".join(bad))

    master = random.Random(config.seed)
    stage_seed = {s: master.getrandbits(64) for s in STRATEGY_ORDER}
    names = NameGenerator(master.getrandbits(64))
    plan = ObfuscationPlan(config.seed, config)

    g = graph
    if Strategy.RENAME in config.strategies:
        g = rename(g, plan, names)
    if Strategy.ENCAPSULATE in config.strategies:
        g = encapsulate_parameters(g, plan,
                                   random.Random(stage_seed[Strategy.ENCAPSULATE]))
    if Strategy.SHAPE in config.strategies:
        g = obfuscate_shapes(g, config.shape_strategy,
                             random.Random(stage_seed[Strategy.SHAPE]))
    if Strategy.SHORTCUT in config.strategies:
        g = inject_shortcuts(g, config.n_shortcuts,
                             random.Random(stage_seed[Strategy.SHORTCUT]), plan)
    if Strategy.EXTRA_LAYER in config.strategies:
        g = inject_extra_layers(g, config.n_extra_layers,
                                random.Random(stage_seed[Strategy.EXTRA_LAYER]),
                                plan, names)

    bad = validate(g)
    if bad:
        raise InvariantViolation("obfuscation produced an invalid graph: "
                                 + "; ".join(bad))
    return g, bundle_from_plan(plan), plan


# ---------------------------------------------------------------------------
# reconstruction (requires the private plan)
# ---------------------------------------------------------------------------

def reconstruct(graph: ModelGraph, plan: ObfuscationPlan) -> ModelGraph:
    """Invert the obfuscation using the private plan.

    Declared activation shapes are restored by executing the rebuilt graph
    once on zero inputs (original models declare their true runtime shapes).
    """
    if Strategy.RENAME not in plan.config.strategies:
        for op in graph.operators:
            if graph.opcodes[op.opcode_index].is_custom:
                raise PlanMismatch("plan has no rename records but the graph "
                                   "contains custom operators")
        if Strategy.SHAPE in plan.config.strategies:
            return _restore_shapes(graph)
        return graph

    records = plan.records
    for i, op in enumerate(graph.operators):
        oc = graph.opcodes[op.opcode_index]
        if not oc.is_custom:
            raise PlanMismatch(f"operators[{i}] is not custom; graph does not "
                               f"match the plan")
        if oc.custom_name not in records:
            raise PlanMismatch(f"plan has no record for operator "
                               f"{oc.custom_name!r}")

    decoy_tensors: set[int] = set()
    real_ops: list[tuple[OperatorEntry, BundleRecord]] = []
    for op in graph.operators:
        rec = records[graph.opcodes[op.opcode_index].custom_name]
        if rec.is_decoy:
            decoy_tensors.update(op.outputs)
        else:
            real_ops.append((op, rec))

    remap: dict[int, int] = {}
    tensors: list[Tensor] = []
    for i, t in enumerate(graph.tensors):
        if i not in decoy_tensors:
            remap[i] = len(tensors)
            tensors.append(t)

    opcodes: list[OperatorCode] = []
    opcode_index: dict[int, int] = {}
    # keep existing buffers: without encapsulation, constants still live here
    buffers: list[bytes] = list(graph.buffers)
    operators: list[OperatorEntry] = []
    for op, rec in real_ops:
        code = rec.real_builtin_code
        if code not in opcode_index:
            opcode_index[code] = len(opcodes)
            opcodes.append(OperatorCode(code))
        inputs = [remap[op.inputs[p]] for p in rec.true_input_positions]
        for k, w in enumerate(rec.weights):
            dtype = {np.dtype(np.float32): DType.F32,
                     np.dtype(np.int32): DType.I32,
                     np.dtype(np.uint8): DType.U8}[w.dtype]
            buffers.append(np.ascontiguousarray(w).tobytes())
            tensors.append(Tensor(f"const{len(buffers) - 1}", dtype,
                                  tuple(w.shape), len(buffers) - 1))
            inputs.append(len(tensors) - 1)
        operators.append(OperatorEntry(opcode_index[code], tuple(inputs),
                                       tuple(remap[t] for t in op.outputs),
                                       OptionsKind.BUILTIN, rec.real_options))

    rebuilt = ModelGraph(tuple(opcodes), tuple(buffers), tuple(tensors),
                         tuple(operators),
                         tuple(remap[t] for t in graph.graph_inputs),
                         tuple(remap[t] for t in graph.graph_outputs))
    if Strategy.SHAPE in plan.config.strategies:
        rebuilt = _restore_shapes(rebuilt)
    bad = validate(rebuilt)
    if bad:
        raise PlanMismatch("reconstruction produced an invalid graph: "
                           + "; ".join(bad))
    return rebuilt


def _restore_shapes(graph: ModelGraph) -> ModelGraph:
    from .interpreter import run  # local import to avoid a cycle

    zeros = [np.zeros(graph.tensors[t].shape, _NP_DTYPE[graph.tensors[t].dtype])
             for t in graph.graph_inputs]
    _, trace = run(graph, None, zeros)
    shapes: dict[int, tuple[int, ...]] = {}
    for op, out_shapes in zip(graph.operators, trace.output_shapes):
        for t, s in zip(op.outputs, out_shapes):
            shapes[t] = s
    tensors = tuple(replace(t, shape=shapes[i]) if i in shapes else t
                    for i, t in enumerate(graph.tensors))
    return replace(graph, tensors=tensors)


# ---------------------------------------------------------------------------
# plan persistence (JSON, private)
# ---------------------------------------------------------------------------

PLAN_WARNING = ("PRIVATE ARTIFACT: this plan inverts the obfuscation. "
                "Never distribute it alongside the model or bundle.")

_DTYPE_NAME = {DType.F32: "F32", DType.I32: "I32", DType.U8: "U8"}
_NAME_DTYPE = {v: k for k, v in _DTYPE_NAME.items()}


def plan_to_json(plan: ObfuscationPlan) -> str:
    records = []
    for name, rec in plan.records.items():
        weights = []
        for w in rec.weights:
            dtype = {np.dtype(np.float32): DType.F32,
                     np.dtype(np.int32): DType.I32,
                     np.dtype(np.uint8): DType.U8}[w.dtype]
            weights.append({
                "dtype": _DTYPE_NAME[dtype],
                "shape": list(w.shape),
                "data": base64.b64encode(
                    np.ascontiguousarray(w).tobytes()).decode("ascii"),
            })
        records.append({
            "custom_name": name,
            "real_builtin_code": rec.real_builtin_code,
            "real_options": rec.real_options.hex(),
            "true_input_positions": list(rec.true_input_positions),
            "weights": weights,
        })
    doc = {
        "warning": PLAN_WARNING,
        "format": "nnobf-plan",
        "version": 1,
        "seed": plan.seed,
        "config": {
            "seed": plan.config.seed,
            "n_shortcuts": plan.config.n_shortcuts,
            "n_extra_layers": plan.config.n_extra_layers,
            "shape_strategy": plan.config.shape_strategy.value,
            "strategies": [s.value for s in STRATEGY_ORDER
                           if s in plan.config.strategies],
        },
        "records": records,
        "injected_shortcuts": [list(p) for p in plan.injected_shortcuts],
        "injected_layers": [[i, list(s)] for i, s in plan.injected_layers],
    }
    return json.dumps(doc, indent=2)


def plan_from_json(text: str) -> ObfuscationPlan:
    doc = json.loads(text)
    if doc.get("format") != "nnobf-plan" or doc.get("version") != 1:
        raise InvariantViolation("not a version-1 nnobf plan file")
    cfg = doc["config"]
    config = ObfuscationConfig(
        seed=cfg["seed"],
        n_shortcuts=cfg["n_shortcuts"],
        n_extra_layers=cfg["n_extra_layers"],
        shape_strategy=ShapeStrategy(cfg["shape_strategy"]),
        strategies=frozenset(Strategy(s) for s in cfg["strategies"]))
    records: dict[str, BundleRecord] = {}
    for entry in doc["records"]:
        weights = tuple(
            np.frombuffer(base64.b64decode(w["data"]),
                          dtype=_NP_DTYPE[_NAME_DTYPE[w["dtype"]]])
            .reshape(w["shape"])
            for w in entry["weights"])
        records[entry["custom_name"]] = BundleRecord(
            entry["real_builtin_code"],
            bytes.fromhex(entry["real_options"]),
            tuple(entry["true_input_positions"]),
            weights)
    return ObfuscationPlan(
        seed=doc["seed"], config=config, records=records,
        injected_shortcuts=[tuple(p) for p in doc["injected_shortcuts"]],
        injected_layers=[(i, tuple(s)) for i, s in doc["injected_layers"]])
