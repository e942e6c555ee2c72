"""How fast does structural similarity decay as injections grow?

For each fixture, the propagation kernel compares the original operator
graph against obfuscations with n shortcuts and n extra layers.  More
injections push similarity down, burying the original structure inside the
natural spread of model-to-model similarity.
"""

from nnobf import (
    FIXTURE_NAMES,
    ObfuscationConfig,
    build_fixture,
    obfuscate,
    propagation_kernel,
    to_labeled_graph,
)

SEEDS = (1, 2, 3)
LEVELS = (10, 20, 30)

header = f"{'(n1, n2)':10s}" + "".join(f"{n:>15s}" for n in FIXTURE_NAMES) \
    + f"{'average':>10s}"
print(header)
for n in LEVELS:
    cols = []
    for name in FIXTURE_NAMES:
        graph = build_fixture(name, seed=7)
        base = to_labeled_graph(graph)
        sims = []
        for seed in SEEDS:
            public, _, _ = obfuscate(graph, ObfuscationConfig(
                seed=seed, n_shortcuts=n, n_extra_layers=n))
            sims.append(propagation_kernel(base, to_labeled_graph(public)))
        cols.append(sum(sims) / len(sims))
    avg = sum(cols) / len(cols)
    row = f"({n:2d}, {n:2d})  " + "".join(f"{c:15.2f}" for c in cols)
    print(row + f"{avg:10.2f}")

print("\ncross-similarity between distinct originals, for scale:")
graphs = [(n, to_labeled_graph(build_fixture(n, 7))) for n in FIXTURE_NAMES]
for i, (a, ga) in enumerate(graphs):
    for b, gb in graphs[i + 1:]:
        print(f"  {a} vs {b}: {propagation_kernel(ga, gb):.2f}")
