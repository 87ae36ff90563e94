"""Pairwise factor graphs and the message stores passed between iterations.

Node ids are 1-based positions in the node list passed to `build_graph`.
Each edge is stored once under its sorted id pair but keeps the orientation it
was declared with; the pair function is always evaluated in that orientation,
so the same likelihood is used from both endpoints.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    AsymmetricPairFnError,
    DimensionMismatchError,
    DuplicateEdgeError,
    SelfLoopError,
    UnknownNodeError,
)
from .gaussian import GaussianBelief, IndexRange, block_diag, extract_marginal

SYMMETRY_CHECKS = 10


class Variant(str, enum.Enum):
    STANDARD_BP = "standard_bp"
    SPAWN = "spawn"


class SymmetrizeMode(str, enum.Enum):
    AVERAGE = "average"
    STACK = "stack"


@dataclass(frozen=True)
class Schedule:
    variant: Variant = Variant.SPAWN
    iterations: int = 1

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.iterations < 1:
            raise ValueError(f"iterations must be at least 1, got {self.iterations}")


@dataclass(frozen=True)
class PairFn:
    """Pairwise measurement function G(own shared substate, neighbor shared substate).

    ``symmetric=True`` declares G(a, b) == G(b, a); this is spot-checked when
    a graph is built. Oriented (asymmetric) functions are allowed with
    ``symmetric=False`` since edges remember their orientation.
    ``vectorized=True`` promises that ``evaluate`` also maps stacked inputs of
    shape (N, d) to N outputs, which lets sigma points be evaluated in one call.
    """

    evaluate: Callable[[np.ndarray, np.ndarray], np.ndarray]
    out_dim: int
    symmetric: bool = True
    vectorized: bool = False

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.evaluate(a, b), dtype=float)).reshape(-1)

    def batch(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Evaluate row by row on (N, d) inputs; returns (N, out_dim)."""
        if self.vectorized:
            return np.asarray(self.evaluate(A, B), dtype=float).reshape(A.shape[0], -1)
        return np.vstack([self(a, b) for a, b in zip(A, B)])

    def check_symmetry(self, dim: int, rng: np.random.Generator, tol: float = 1e-12) -> None:
        for _ in range(SYMMETRY_CHECKS):
            a, b = rng.standard_normal(dim), rng.standard_normal(dim)
            ab, ba = self(a, b), self(b, a)
            if ab.size != self.out_dim:
                raise DimensionMismatchError(
                    f"pair function returned {ab.size} values, declared out_dim={self.out_dim}"
                )
            if np.max(np.abs(ab - ba)) > tol * max(1.0, float(np.max(np.abs(ab)))):
                raise AsymmetricPairFnError(f"G(a, b) != G(b, a) for a={a}, b={b}")


@dataclass(frozen=True, eq=False)
class NodeSpec:
    dim: int
    shared: IndexRange
    prior: GaussianBelief
    is_anchor: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"node dimension must be positive, got {self.dim}")
        if self.prior.dim != self.dim:
            raise DimensionMismatchError(f"prior has dimension {self.prior.dim}, node has {self.dim}")
        if self.shared.stop > self.dim:
            raise DimensionMismatchError(f"shared range {self.shared} exceeds node dimension {self.dim}")
        if self.is_anchor and np.any(self.prior.cov[self.shared.slice, self.shared.slice] != 0):
            raise ValueError("anchor nodes need zero prior covariance on their shared substate")

    def shared_prior(self) -> GaussianBelief:
        return extract_marginal(self.prior, self.shared)


@dataclass(frozen=True, eq=False)
class Edge:
    """Observation z = G(x_k, x_l) + n between nodes k and l.

    ``pair_fn`` overrides the graph-wide function for this edge. When the
    observation is longer than the function's output (stacked observations),
    G is repeated to match.
    """

    k: int
    l: int
    noise_cov: np.ndarray
    obs: np.ndarray
    pair_fn: PairFn | None = None

    def __post_init__(self):
        obs = np.atleast_1d(np.asarray(self.obs, dtype=float)).reshape(-1)
        cov = np.atleast_2d(np.asarray(self.noise_cov, dtype=float))
        if cov.shape != (obs.size, obs.size):
            raise DimensionMismatchError(
                f"noise covariance shape {cov.shape} does not match observation length {obs.size}"
            )
        object.__setattr__(self, "obs", obs)
        object.__setattr__(self, "noise_cov", 0.5 * (cov + cov.T))

    @property
    def key(self) -> tuple[int, int]:
        return (min(self.k, self.l), max(self.k, self.l))

    def other(self, node: int) -> int:
        return self.l if node == self.k else self.k


@dataclass(frozen=True, eq=False)
class Graph:
    nodes: tuple[NodeSpec, ...]
    edges: Mapping[tuple[int, int], Edge]
    neighbors: Mapping[int, tuple[int, ...]]
    pair_fn: PairFn | None

    @property
    def ids(self) -> range:
        return range(1, len(self.nodes) + 1)

    def node(self, k: int) -> NodeSpec:
        if not 1 <= k <= len(self.nodes):
            raise UnknownNodeError(k)
        return self.nodes[k - 1]

    def edge(self, k: int, l: int) -> Edge:
        try:
            return self.edges[(min(k, l), max(k, l))]
        except KeyError:
            raise UnknownNodeError(f"no edge between {k} and {l}") from None

    def pair_fn_for(self, edge: Edge) -> PairFn:
        fn = edge.pair_fn or self.pair_fn
        if fn is None:
            raise ValueError(f"edge {edge.key} has no pair function and the graph has no default")
        return fn

    def directed_pairs(self) -> list[tuple[int, int]]:
        """All (sender, receiver) pairs, sorted."""
        return sorted((l, k) for k in self.ids for l in self.neighbors[k])


def build_graph(
    nodes: Sequence[NodeSpec],
    edges: Sequence[Edge],
    g: PairFn | None = None,
    *,
    seed: int = 0,
) -> Graph:
    K = len(nodes)
    table: dict[tuple[int, int], Edge] = {}
    adj: dict[int, set[int]] = {k: set() for k in range(1, K + 1)}
    for e in edges:
        for end in (e.k, e.l):
            if not 1 <= end <= K:
                raise UnknownNodeError(f"edge ({e.k}, {e.l}) references unknown node {end}")
        if e.k == e.l:
            raise SelfLoopError(f"self-loop on node {e.k}")
        if e.key in table:
            raise DuplicateEdgeError(f"duplicate edge {e.key}")
        fn = e.pair_fn or g
        if fn is None:
            raise ValueError(f"edge {e.key} has no pair function and no graph default was given")
        if e.obs.size % fn.out_dim:
            raise DimensionMismatchError(
                f"edge {e.key}: observation length {e.obs.size} is not a multiple of out_dim {fn.out_dim}"
            )
        table[e.key] = e
        adj[e.k].add(e.l)
        adj[e.l].add(e.k)

    rng = np.random.default_rng(seed)
    checked: set[tuple[int, int]] = set()
    for e in table.values():
        fn = e.pair_fn or g
        dk, dl = nodes[e.k - 1].shared.length, nodes[e.l - 1].shared.length
        if fn.symmetric and dk == dl and (id(fn), dk) not in checked:
            fn.check_symmetry(dk, rng)
            checked.add((id(fn), dk))

    neighbors = {k: tuple(sorted(v)) for k, v in adj.items()}
    return Graph(
        nodes=tuple(nodes),
        edges=MappingProxyType(dict(sorted(table.items()))),
        neighbors=MappingProxyType(neighbors),
        pair_fn=g,
    )


def symmetrize_observation(
    z_kl: np.ndarray, z_lk: np.ndarray, mode: SymmetrizeMode | str = SymmetrizeMode.AVERAGE
) -> tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]]:
    """Combine the two directed measurements of one edge into a single observation.

    Returns the observation and the rule mapping the per-direction noise
    covariance to the combined one (noise in the two directions is assumed
    independent and identically distributed).
    """
    mode = SymmetrizeMode(mode)
    a = np.atleast_1d(np.asarray(z_kl, dtype=float)).reshape(-1)
    b = np.atleast_1d(np.asarray(z_lk, dtype=float)).reshape(-1)
    if mode is SymmetrizeMode.AVERAGE:
        if a.size != b.size:
            raise DimensionMismatchError(f"cannot average observations of lengths {a.size} and {b.size}")
        return 0.5 * (a + b), lambda C: 0.5 * np.atleast_2d(np.asarray(C, dtype=float))
    return np.concatenate([a, b]), lambda C: block_diag([C, C])


@dataclass(eq=False)
class MessageStore:
    """Beliefs and directed messages of one message-passing iteration.

    ``messages[(l, k)]`` is the Gaussian over node l's shared substate sent to
    node k. Under SPAWN all messages from one sender are the same object: the
    shared-substate marginal of its current belief.
    """

    iteration: int
    variant: Variant
    beliefs: dict[int, GaussianBelief]
    messages: dict[tuple[int, int], GaussianBelief] = field(default_factory=dict)
    sigma_point_counts: dict[int, int] = field(default_factory=dict)

    def message(self, sender: int, receiver: int) -> GaussianBelief:
        return self.messages[(sender, receiver)]


def broadcast_messages(g: Graph, beliefs: Mapping[int, GaussianBelief]) -> dict[tuple[int, int], GaussianBelief]:
    """SPAWN messages: every neighbor receives the sender's shared-substate belief."""
    shared = {k: extract_marginal(beliefs[k], g.node(k).shared) for k in g.ids if g.neighbors[k]}
    return {(l, k): shared[l] for (l, k) in g.directed_pairs()}


def init_messages(g: Graph, variant: Variant | str = Variant.SPAWN) -> MessageStore:
    variant = Variant(variant)
    beliefs = {k: g.node(k).prior for k in g.ids}
    if variant is Variant.SPAWN:
        messages = broadcast_messages(g, beliefs)
    else:
        messages = {(l, k): g.node(l).shared_prior() for (l, k) in g.directed_pairs()}
    return MessageStore(iteration=0, variant=variant, beliefs=beliefs, messages=messages)
