"""Built-in consistency checks, plus random model generators shared with the tests."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .engine import run
from .factor_graph import Edge, Graph, NodeSpec, PairFn, Schedule, Variant, build_graph
from .gaussian import GaussianBelief, IndexRange
from .localization import ScenarioConfig, ScenarioLog, payload_size, run_scenario
from .oracles import LinearPairModel, LinearTerm, exact_gaussian_marginals
from .sigma_points import generate, sp_measurement_update


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Frobenius distance of ``a`` from reference ``b``, relative to max(1, |b|)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b)))


def random_psd(rng: np.random.Generator, d: int, floor: float = 0.0) -> np.ndarray:
    A = rng.standard_normal((d, d))
    return A @ A.T + floor * np.eye(d)


def linear_pair_fn(A_k: np.ndarray, A_l: np.ndarray) -> PairFn:
    """Oriented linear pair function a -> A_k a + A_l b; works on stacked rows too."""
    return PairFn(lambda a, b: a @ A_k.T + b @ A_l.T, out_dim=A_k.shape[0], symmetric=False, vectorized=True)


@dataclass
class LinearTree:
    graph: Graph
    model: LinearPairModel
    observations: dict[tuple[int, int], np.ndarray]
    diameter: int


def diameter(graph: Graph) -> int:
    def farthest(src: int) -> tuple[int, int]:
        dist = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in graph.neighbors[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        node = max(dist, key=lambda n: (dist[n], n))
        return node, dist[node]

    far, _ = farthest(1)
    return farthest(far)[1]


def random_linear_tree(
    rng: np.random.Generator, num_nodes: tuple[int, int] = (3, 5), dims: tuple[int, int] = (1, 4)
) -> LinearTree:
    """Random tree with linear-Gaussian pairwise observations on shared substates."""
    K = int(rng.integers(num_nodes[0], num_nodes[1] + 1))
    nodes, priors = [], []
    for _ in range(K):
        J = int(rng.integers(dims[0], dims[1] + 1))
        s = int(rng.integers(1, J + 1))
        shared = IndexRange(int(rng.integers(0, J - s + 1)), s)
        prior = GaussianBelief(rng.normal(0, 2, J), random_psd(rng, J, 0.1))
        nodes.append(NodeSpec(J, shared, prior))
        priors.append(prior)

    model = LinearPairModel(priors)
    edges, observations = [], {}
    for child in range(2, K + 1):
        parent = int(rng.integers(1, child))
        k, l = (child, parent) if rng.random() < 0.5 else (parent, child)
        sk, sl = nodes[k - 1].shared, nodes[l - 1].shared
        m = int(rng.integers(1, 3))
        A_k = rng.standard_normal((m, sk.length))
        A_l = rng.standard_normal((m, sl.length))
        noise = random_psd(rng, m, 0.1)
        z = rng.normal(0, 2, m)
        edges.append(Edge(k, l, noise, z, pair_fn=linear_pair_fn(A_k, A_l)))

        full_k = np.zeros((m, nodes[k - 1].dim))
        full_k[:, sk.slice] = A_k
        full_l = np.zeros((m, nodes[l - 1].dim))
        full_l[:, sl.slice] = A_l
        model.terms[(k, l)] = LinearTerm(full_k, full_l, noise)
        observations[(k, l)] = z

    graph = build_graph(nodes, edges)
    return LinearTree(graph, model, observations, diameter(graph))


# --- checks -----------------------------------------------------------------


def _check_reconstruction(fault: bool) -> tuple[bool, str]:
    rng = np.random.default_rng(11)
    worst = 0.0
    for J in range(1, 13):
        for _ in range(20):
            mu, C = rng.normal(0, 3, J), random_psd(rng, J)
            s = generate(mu, C)
            mean = s.mean() + (1e-3 if fault else 0.0)
            worst = max(worst, rel_err(mean, mu), rel_err(s.cov(), C))
    return worst <= 1e-10, f"max relative error {worst:.2e}"


def _check_linear_update(fault: bool) -> tuple[bool, str]:
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(50):
        J, m = int(rng.integers(1, 8)), int(rng.integers(1, 4))
        prior = GaussianBelief(rng.normal(0, 2, J), random_psd(rng, J, 0.1))
        Hm = rng.standard_normal((m, J))
        Cn = random_psd(rng, m, 0.1)
        z = rng.normal(0, 2, m)
        post = sp_measurement_update(prior, lambda x: Hm @ x, Cn, z)
        model = LinearPairModel([prior, GaussianBelief(np.zeros(1), np.zeros((1, 1)))])
        model.terms[(1, 2)] = LinearTerm(Hm, np.zeros((m, 1)), Cn)
        exact = exact_gaussian_marginals(model, {(1, 2): z})[0]
        worst = max(worst, rel_err(post.mean, exact.mean), rel_err(post.cov, exact.cov))
    return worst <= 1e-8, f"max relative error {worst:.2e}"


def _check_tree_exactness(fault: bool) -> tuple[bool, str]:
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(20):
        tree = random_linear_tree(rng)
        store = run(tree.graph, Schedule(Variant.STANDARD_BP, max(1, tree.diameter)))
        exact = exact_gaussian_marginals(tree.model, tree.observations)
        for k in tree.graph.ids:
            b = store.beliefs[k]
            worst = max(worst, rel_err(b.mean, exact[k - 1].mean), rel_err(b.cov, exact[k - 1].cov))
    return worst <= 1e-8, f"max relative error {worst:.2e}"


@lru_cache(maxsize=1)
def _scenario_counts() -> ScenarioLog:
    return run_scenario(ScenarioConfig(runs=1, T=2))


def _check_sigma_point_count(fault: bool) -> tuple[bool, str]:
    counts = np.unique(_scenario_counts().sigma_points)
    return counts.tolist() == [25], f"sigma points per mobile update: {counts.tolist()}"


def _check_broadcast_reals(fault: bool) -> tuple[bool, str]:
    log = _scenario_counts()
    M = log.config.num_mobile
    counts = np.unique(log.ledger.reals[..., :M])
    return counts.tolist() == [5], f"reals per mobile broadcast: {counts.tolist()}"


def _check_payload_formula(fault: bool) -> tuple[bool, str]:
    sizes = [payload_size(d) for d in range(1, 7)]
    direct = [d + d * (d + 1) // 2 for d in range(1, 7)]
    return sizes == direct, f"d(d+3)/2 for d=1..6: {sizes}"


CHECKS: dict[str, Callable[[bool], tuple[bool, str]]] = {
    "sigma_point_reconstruction": _check_reconstruction,
    "linear_update_matches_exact": _check_linear_update,
    "tree_standard_bp_exact": _check_tree_exactness,
    "sigma_points_per_update_25": _check_sigma_point_count,
    "reals_per_broadcast_5": _check_broadcast_reals,
    "payload_formula": _check_payload_formula,
}


def run_checks(inject_fault: bool = False) -> list[tuple[str, bool, str]]:
    results = []
    for name, check in CHECKS.items():
        try:
            ok, detail = check(inject_fault)
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
    return results
