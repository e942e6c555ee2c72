"""Command-line front end.

Subcommands: obfuscate, run, compare, dump, similarity, attack, bench,
build-fixture.  Exit codes: 0 success, 1 operational error, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import bench as run_bench, compare_outputs, records_to_csv
from .bundle import load_bundle
from .errors import NnobfError
from .extractor import attack_matrix, build_default_zoo
from .fixtures import FIXTURE_NAMES, build_fixture
from .model_format import dump_json, parse_model, serialize_model
from .obfuscator import (
    ALL_STRATEGIES,
    ObfuscationConfig,
    ShapeStrategy,
    Strategy,
    emit_bundle,
    obfuscate,
    plan_to_json,
)
from .similarity import PKConfig, similarity_matrix, to_labeled_graph
from .tensor_io import read_tensor, write_tensor

_SHAPE_CHOICES = {"random": ShapeStrategy.RANDOM,
                  "align": ShapeStrategy.ALIGN_TO_LARGEST}


def _parse_strategies(text: str) -> frozenset[Strategy]:
    if text == "all":
        return ALL_STRATEGIES
    if text in ("none", ""):
        return frozenset()
    return frozenset(Strategy(part) for part in text.split(","))


def _load_model(path: str):
    return parse_model(Path(path).read_bytes())


def _cmd_obfuscate(args) -> int:
    graph = _load_model(args.model)
    config = ObfuscationConfig(seed=args.seed, n_shortcuts=args.n1,
                               n_extra_layers=args.n2,
                               shape_strategy=_SHAPE_CHOICES[args.shape],
                               strategies=_parse_strategies(args.strategies))
    public, _bundle, plan = obfuscate(graph, config)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "model.nnm1").write_bytes(serialize_model(public))
    (out / "bundle.obfb").write_bytes(emit_bundle(plan))
    (out / "plan.json").write_text(plan_to_json(plan))
    print(f"wrote {out / 'model.nnm1'}")
    print(f"wrote {out / 'bundle.obfb'}")
    print(f"wrote {out / 'plan.json'}  (PRIVATE: do not ship)")
    return 0


def _cmd_run(args) -> int:
    graph = _load_model(args.model)
    bundle = load_bundle(Path(args.bundle).read_bytes()) if args.bundle else None
    inputs = [read_tensor(p) for p in args.input]
    from .interpreter import run
    outputs, _trace = run(graph, bundle, inputs)
    if len(outputs) != 1 and args.output:
        print(f"error: model has {len(outputs)} outputs; -o expects exactly 1",
              file=sys.stderr)
        return 1
    if args.output:
        write_tensor(args.output, outputs[0])
        print(f"wrote {args.output}")
    else:
        for i, o in enumerate(outputs):
            print(f"output[{i}] shape={tuple(o.shape)} "
                  f"values={o.ravel()[:8].tolist()}")
    return 0


def _cmd_compare(args) -> int:
    err = compare_outputs(args.original, args.obfuscated, args.bundle,
                          n=args.n, seed=args.seed)
    print(f"max_l2_error {err}")
    return 0 if err == 0.0 else 1


def _cmd_dump(args) -> int:
    print(dump_json(_load_model(args.model)))
    return 0


def _cmd_similarity(args) -> int:
    paths = [Path(p) for p in args.models]
    graphs = [to_labeled_graph(_load_model(p)) for p in paths]
    ids = [p.stem for p in paths]
    cfg = PKConfig(seed=args.seed)
    matrix = similarity_matrix(graphs, cfg)
    print("model," + ",".join(ids))
    for name, row in zip(ids, matrix):
        print(name + "," + ",".join(f"{v:.2f}" for v in row))
    return 0


def _cmd_attack(args) -> int:
    models = [(Path(p).stem, _load_model(p)) for p in args.models]
    if args.zoo:
        zoo_paths = sorted(Path(args.zoo).glob("*.nnm1"))
        if not zoo_paths:
            print(f"error: no .nnm1 files in {args.zoo}", file=sys.stderr)
            return 1
        zoo = [(p.stem, _load_model(p)) for p in zoo_paths]
    else:
        zoo = build_default_zoo()
    rows = attack_matrix(models, zoo, seed=args.seed)
    print("strategies,convert,buffer_parse,surrogate,models")
    for r in rows:
        print(f"{r.label},{r.convert_successes},{r.buffer_successes},"
              f"{r.surrogate_successes},{r.total}")
    return 0


def _cmd_bench(args) -> int:
    configs = []
    for pair in args.configs:
        n1, n2 = pair.split(",")
        configs.append((int(n1), int(n2)))
    records = run_bench(args.model, args.bundle, configs, n=args.n,
                        seed=args.seed,
                        shape_strategy=_SHAPE_CHOICES[args.shape],
                        include_original=args.original, reps=args.reps)
    csv = records_to_csv(records)
    if args.output:
        Path(args.output).write_text(csv)
        print(f"wrote {args.output}")
    else:
        print(csv, end="")
    return 0


def _cmd_build_fixture(args) -> int:
    graph = build_fixture(args.name, args.seed)
    Path(args.output).write_bytes(serialize_model(graph))
    print(f"wrote {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nnobf",
        description="Obfuscate serialized neural-network models and run, "
                    "compare, analyze, and benchmark the results.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("obfuscate", help="obfuscate a model into a directory")
    p.add_argument("model")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n1", type=int, default=0, help="shortcut count")
    p.add_argument("--n2", type=int, default=0, help="extra layer count")
    p.add_argument("--shape", choices=sorted(_SHAPE_CHOICES), default="align")
    p.add_argument("--strategies", default="all",
                   help="comma list of rename,encapsulate,shape,shortcut,"
                        "extra_layer, or 'all'/'none'")
    p.set_defaults(func=_cmd_obfuscate)

    p = sub.add_parser("run", help="execute a model on NNT1 tensor files")
    p.add_argument("model")
    p.add_argument("--bundle", help="kernel bundle for obfuscated models")
    p.add_argument("--input", action="append", required=True,
                   help="NNT1 input file (repeat per graph input)")
    p.add_argument("-o", "--output", help="NNT1 output path")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="max L2 output distance on random inputs")
    p.add_argument("original")
    p.add_argument("obfuscated")
    p.add_argument("--bundle")
    p.add_argument("-n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("dump", help="print the JSON view of a model")
    p.add_argument("model")
    p.set_defaults(func=_cmd_dump)

    p = sub.add_parser("similarity", help="pairwise structure-similarity CSV")
    p.add_argument("models", nargs="+")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_similarity)

    p = sub.add_parser("attack", help="replay parsing attacks per strategy subset")
    p.add_argument("models", nargs="+")
    p.add_argument("--zoo", help="directory of candidate original .nnm1 files")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("bench", help="latency/memory/size sweep as CSV")
    p.add_argument("model")
    p.add_argument("--bundle")
    p.add_argument("--configs", nargs="*", default=[],
                   help="obfuscation settings as 'n1,n2' pairs")
    p.add_argument("--original", action="store_true",
                   help="include an un-obfuscated baseline row")
    p.add_argument("-n", type=int, default=1000, help="inferences per timing run")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shape", choices=sorted(_SHAPE_CHOICES), default="align")
    p.add_argument("-o", "--output", help="CSV path (default stdout)")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("build-fixture", help="write a built-in fixture model")
    p.add_argument("name", choices=FIXTURE_NAMES)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_build_fixture)

    return parser


def cli_dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        code = e.code if e.code is not None else 0
        return code if isinstance(code, int) else 2
    try:
        return args.func(args)
    except NnobfError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
