"""Random pairwise models for property tests."""

from __future__ import annotations

import itertools

import numpy as np

from spbp.factor_graph import Edge, Graph, MessageStore, NodeSpec, PairFn, Variant, build_graph
from spbp.gaussian import GaussianBelief, IndexRange
from spbp.selftest import random_psd


def nonlinear_pair_fn(rng: np.random.Generator, dk: int, dl: int, m: int) -> PairFn:
    """Oriented smooth nonlinearity of both shared substates."""
    A = rng.standard_normal((m, dk)) / np.sqrt(dk)
    B = rng.standard_normal((m, dl)) / np.sqrt(dl)

    def g(a, b):
        u, v = a @ A.T, b @ B.T
        return np.tanh(u) + 0.5 * np.sin(v) + 0.1 * u * v

    return PairFn(g, out_dim=m, symmetric=False, vectorized=True)


def random_belief(rng: np.random.Generator, d: int) -> GaussianBelief:
    return GaussianBelief(rng.normal(0, 1, d), random_psd(rng, d, 0.2) / d)


def random_loopy_graph(
    rng: np.random.Generator, num_nodes: tuple[int, int] = (3, 5), dims: tuple[int, int] = (1, 4)
) -> Graph:
    """Connected graph (spanning tree plus random extra edges) with nonlinear observations."""
    K = int(rng.integers(num_nodes[0], num_nodes[1] + 1))
    nodes = []
    for _ in range(K):
        J = int(rng.integers(dims[0], dims[1] + 1))
        s = int(rng.integers(1, J + 1))
        shared = IndexRange(int(rng.integers(0, J - s + 1)), s)
        nodes.append(NodeSpec(J, shared, random_belief(rng, J)))
    pairs = {(int(rng.integers(1, c)), c) for c in range(2, K + 1)}
    for pair in itertools.combinations(range(1, K + 1), 2):
        if rng.random() < 0.4:
            pairs.add(pair)
    edges = []
    for a, b in sorted(pairs):
        k, l = (a, b) if rng.random() < 0.5 else (b, a)
        m = int(rng.integers(1, 3))
        fn = nonlinear_pair_fn(rng, nodes[k - 1].shared.length, nodes[l - 1].shared.length, m)
        edges.append(Edge(k, l, random_psd(rng, m, 0.5), rng.normal(0, 1, m), pair_fn=fn))
    return build_graph(nodes, edges)


def random_store(rng: np.random.Generator, graph: Graph, variant: Variant = Variant.STANDARD_BP) -> MessageStore:
    """Arbitrary (not necessarily consistent) messages over every directed edge."""
    beliefs = {k: graph.node(k).prior for k in graph.ids}
    messages = {
        (l, k): random_belief(rng, graph.node(l).shared.length) for (l, k) in graph.directed_pairs()
    }
    return MessageStore(iteration=0, variant=variant, beliefs=beliefs, messages=messages)
