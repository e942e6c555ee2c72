"""Obfuscate a model and compare what the public file reveals before/after.

Builds the LeNet-style fixture, applies all five transformations, and prints
side-by-side excerpts of the JSON dumps: operator codes, tensors, operators.
The obfuscated file shows only random six-letter names, decoy shapes, and
opaque option bytes; every weight buffer is gone.
"""

import json

from nnobf import (
    ObfuscationConfig,
    build_fixture,
    dump_json,
    obfuscate,
    serialize_model,
)

graph = build_fixture("lenet", seed=7)
public, bundle, plan = obfuscate(
    graph, ObfuscationConfig(seed=1, n_shortcuts=2, n_extra_layers=2))

before = json.loads(dump_json(graph))
after = json.loads(dump_json(public))

print("=== operator codes ===")
print("original:  ",
      f"{len(before['operator_codes'])} entries (layer types shared),",
      "e.g.", before["operator_codes"][0])
print("obfuscated:",
      f"{len(after['operator_codes'])} entries (one per operator),",
      "e.g.", after["operator_codes"][0])

print("\n=== tensors ===")
print("original:  ", len(before["tensors"]), "entries; first:",
      before["tensors"][0], "... last (a weight):", before["tensors"][-1])
print("obfuscated:", len(after["tensors"]),
      "entries, activations only; first:", after["tensors"][0])

print("\n=== operators ===")
print("original first op: ", {k: before["operators"][0][k]
                              for k in ("inputs", "outputs", "op_type")})
print("  builtin_options:", before["operators"][0]["builtin_options"])
print("obfuscated first op:", {k: after["operators"][0][k]
                               for k in ("inputs", "outputs", "op_type")})
print("  custom_options:", after["operators"][0]["custom_options"])

print("\n=== file sizes ===")
print("original model:  ", len(serialize_model(graph)), "bytes")
print("obfuscated model:", len(serialize_model(public)),
      "bytes (weights now live in the kernel bundle)")
print("plan records:    ", len(plan.records),
      "(private; ships nowhere)")
