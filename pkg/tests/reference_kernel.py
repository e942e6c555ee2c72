"""Brute-force propagation-kernel reference.

Distributions live in plain dicts of python floats; propagation, binning,
and counting are all explicit loops.  Shares only the quantization-offset
function (grid configuration) with the production implementation.
"""

import math

from nnobf.similarity import PKConfig, quantization_offset


def _neighborhood(g, v):
    ns = {v}
    for a, b in g.edges:
        if a == v:
            ns.add(b)
        if b == v:
            ns.add(a)
    return sorted(ns)


def _raw(g1, g2, cfg):
    labels = sorted(set(g1.labels) | set(g2.labels))

    def init(g):
        return [{lab: (1.0 if g.labels[v] == lab else 0.0) for lab in labels}
                for v in range(g.n)]

    def propagate(g, dists):
        new = []
        for v in range(g.n):
            ns = _neighborhood(g, v)
            w = 1.0 / len(ns)
            acc = {lab: 0.0 for lab in labels}
            for u in ns:
                for lab in labels:
                    acc[lab] = acc[lab] + w * dists[u][lab]
            new.append(acc)
        return new

    def bins(dists, t):
        counts = {}
        for d in dists:
            key = tuple(
                math.floor((d[lab] + quantization_offset(cfg.seed, t, lab)
                            * cfg.bin_width) / cfg.bin_width)
                for lab in labels)
            counts[key] = counts.get(key, 0) + 1
        return counts

    d1, d2 = init(g1), init(g2)
    total = 0
    for t in range(cfg.t_max + 1):
        c1, c2 = bins(d1, t), bins(d2, t)
        for key, cnt in c1.items():
            total += cnt * c2.get(key, 0)
        if t < cfg.t_max:
            d1, d2 = propagate(g1, d1), propagate(g2, d2)
    return total


def reference_propagation_kernel(g1, g2, cfg=PKConfig()):
    k12 = _raw(g1, g2, cfg)
    k11 = _raw(g1, g1, cfg)
    k22 = _raw(g2, g2, cfg)
    return k12 / math.sqrt(k11 * k22)
